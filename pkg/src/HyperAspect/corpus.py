"""
Embedding tables, seed lexicons and segment corpora.

File formats:

* embeddings: ``word v1 ... vd`` per line, optional ``V d`` header line
* seed lexicon: ``aspect_name<TAB>seed1,seed2,...`` per line
* corpus: one segment per line, optionally ``label<TAB>text``
* stopwords: one word per line
"""

from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
from gensim.models import KeyedVectors
from loguru import logger

from .exceptions import DataError
from .utils import format_float, make_rng

GENERAL_ASPECT = "general"


class Vocabulary:
    """Bidirectional word <-> dense index table."""

    def __init__(self, words):
        self.words = list(words)
        self._index = {}
        for i, word in enumerate(self.words):
            if word in self._index:
                raise DataError(f"Duplicate vocabulary word '{word}'")
            self._index[word] = i

    def __len__(self):
        return len(self.words)

    def __contains__(self, word):
        return word in self._index

    def __iter__(self):
        return iter(self.words)

    def index(self, word):
        try:
            return self._index[word]
        except KeyError:
            raise DataError(f"'{word}' is not in the vocabulary") from None

    def get(self, word, default=None):
        return self._index.get(word, default)

    def word(self, i):
        return self.words[i]


@dataclass
class EmbeddingTable:
    vectors: np.ndarray

    def __post_init__(self):
        self.vectors = np.asarray(self.vectors, dtype=np.float64)
        if self.vectors.ndim != 2:
            raise DataError(
                f"Embedding table must be 2-D, got shape {self.vectors.shape}"
            )
        if not np.all(np.isfinite(self.vectors)):
            raise DataError("Embedding table contains non-finite values")

    def __len__(self):
        return self.vectors.shape[0]

    @property
    def dim(self):
        return self.vectors.shape[1]


@dataclass(frozen=True)
class Segment:
    """Word indices of one review segment, with an optional gold aspect."""

    indices: tuple
    label: int | None = None
    text: str = ""

    def __post_init__(self):
        if len(self.indices) == 0:
            raise DataError("A segment needs at least one in-vocabulary token")

    def __len__(self):
        return len(self.indices)


@dataclass
class SeedLexicon:
    """
    K aspects with their seed words.

    ``seeds[i]`` holds the vocabulary indices of aspect ``i`` and
    ``seed_words[i]`` the matching words. Aspects may have different seed
    counts; :meth:`seed_matrix` pads them to a rectangle with a mask.
    """

    aspect_names: list
    seeds: list
    seed_words: list
    general_index: int

    def __post_init__(self):
        if len(self.aspect_names) < 2:
            raise DataError(
                f"A seed lexicon needs at least 2 aspects, got {len(self.aspect_names)}"
            )
        if not (len(self.seeds) == len(self.seed_words) == len(self.aspect_names)):
            raise DataError("Seed lists do not match the aspect names")
        for name, seeds in zip(self.aspect_names, self.seeds):
            if len(seeds) == 0:
                raise DataError(f"Aspect '{name}' has no in-vocabulary seed words")
        if not 0 <= self.general_index < len(self.aspect_names):
            raise DataError(f"General aspect index {self.general_index} out of range")

    @property
    def n_aspects(self):
        return len(self.aspect_names)

    @property
    def max_seeds(self):
        return max(len(s) for s in self.seeds)

    def seed_matrix(self):
        """
        Returns:
            tuple: (index array (K, N) of int, mask array (K, N) of bool);
                padded slots hold index 0 and mask False
        """
        k, n = self.n_aspects, self.max_seeds
        index = np.zeros((k, n), dtype=np.int64)
        mask = np.zeros((k, n), dtype=bool)
        for i, seeds in enumerate(self.seeds):
            index[i, : len(seeds)] = seeds
            mask[i, : len(seeds)] = True
        return index, mask

    def truncated(self, max_seeds):
        """Keep only the first ``max_seeds`` seeds of every aspect (0 keeps all)."""
        if max_seeds <= 0:
            return self
        return SeedLexicon(
            aspect_names=list(self.aspect_names),
            seeds=[list(s[:max_seeds]) for s in self.seeds],
            seed_words=[list(w[:max_seeds]) for w in self.seed_words],
            general_index=self.general_index,
        )

    def aspect_index(self, label):
        """
        Resolve a label given as an aspect name (case-insensitive) or an index.

        Raises:
            DataError: If the label matches no aspect
        """
        lowered = label.strip().lower()
        for i, name in enumerate(self.aspect_names):
            if name.lower() == lowered:
                return i
        try:
            i = int(lowered)
        except ValueError:
            raise DataError(f"Unknown aspect label '{label}'") from None
        if not 0 <= i < self.n_aspects:
            raise DataError(f"Aspect index {i} out of range 0..{self.n_aspects - 1}")
        return i


@dataclass
class Dataset:
    train: list
    valid: list = field(default_factory=list)
    test: list = field(default_factory=list)


# --- loading ---


def _read_lines(path):
    path = Path(path)
    try:
        return path.read_text(encoding="utf-8").splitlines()
    except OSError as e:
        raise DataError(f"Cannot read {path}: {e}") from e


def load_embeddings(path):
    """
    Load a word2vec text embedding file through gensim's ``KeyedVectors``.

    Args:
        path (str | Path): File with ``word v1 ... vd`` rows, single-space
            separated, and an optional ``V d`` header

    Returns:
        tuple: (Vocabulary, EmbeddingTable)

    Raises:
        DataError: On an unreadable or empty file, a blank line, a header whose
            count disagrees with the rows, a ragged or unparsable row, or
            non-finite values
    """
    lines = _read_lines(path)
    header = bool(lines) and _is_header(lines[0].split())
    body = lines[1:] if header else lines
    width = None
    for lineno, line in enumerate(body, start=2 if header else 1):
        parts = line.rstrip().split(" ")
        if not line.strip():
            raise DataError(f"{path}:{lineno}: blank line")
        if width is None:
            width = len(parts)
            if width < 2:
                raise DataError(f"{path}:{lineno}: word '{parts[0]}' has no vector")
        elif len(parts) != width:
            raise DataError(f"{path}:{lineno}: expected {width - 1} values, got {len(parts) - 1}")
    rows = len(body)
    if rows == 0:
        raise DataError(f"{path}: no embeddings found")
    if header:
        count, dim = (int(p) for p in lines[0].split())
        if (count, dim) != (rows, width - 1):
            raise DataError(
                f"{path}: header announces {count} rows of dimension {dim}, "
                f"found {rows} of dimension {width - 1}"
            )

    try:
        kv = KeyedVectors.load_word2vec_format(
            str(path), binary=False, no_header=not header, datatype=np.float64
        )
    except (ValueError, EOFError, UnicodeDecodeError) as e:
        raise DataError(f"{path}: {e}") from e
    # skipped duplicates leave unfilled slots at the end
    words = [w for w in kv.index_to_key if w is not None]
    vectors = np.asarray(kv.vectors[: len(words)], dtype=np.float64)
    if not np.all(np.isfinite(vectors)):
        raise DataError(f"{path}: non-finite value")
    if len(words) < rows:
        logger.warning(
            f"{path}: {rows - len(words)} duplicate word(s), keeping the first of each"
        )
    logger.debug(f"Loaded {len(words)} embeddings of dimension {kv.vector_size} from {path}")
    return Vocabulary(words), EmbeddingTable(vectors)


def _is_header(parts):
    return len(parts) == 2 and all(p.isdigit() for p in parts)


def save_embeddings(path, vocab, table):
    """Write ``vocab``/``table`` as a text embedding file with a ``V d`` header."""
    if len(vocab) != len(table):
        raise DataError(
            f"Vocabulary has {len(vocab)} words but the table {len(table)} rows"
        )
    lines = [f"{len(vocab)} {table.dim}"]
    for word, vector in zip(vocab, table.vectors):
        lines.append(" ".join([word] + [format_float(v) for v in vector]))
    Path(path).write_text("\n".join(lines) + "\n", encoding="utf-8")


def load_stopwords(path):
    return frozenset(
        line.strip().lower() for line in _read_lines(path) if line.strip()
    )


def tokenize(text, stopwords=None):
    tokens = text.lower().split()
    if stopwords:
        tokens = [t for t in tokens if t not in stopwords]
    return tokens


def encode_segment(text, vocab, stopwords=None, label=None):
    """
    Lowercase, split on whitespace, drop stopwords and OOV tokens.

    Raises:
        DataError: If no token survives
    """
    indices = tuple(
        vocab.get(t) for t in tokenize(text, stopwords) if t in vocab
    )
    if not indices:
        raise DataError(f"No in-vocabulary token in segment '{text.strip()}'")
    return Segment(indices=indices, label=label, text=text.strip())


def load_seed_lexicon(path, vocab, max_seeds=0):
    """
    Load ``aspect_name<TAB>seed1,seed2,...`` lines.

    Seeds are lowercased and deduplicated; out-of-vocabulary seeds are
    skipped with a warning. The aspect named "general" (any case) is the
    general aspect; without one, the last aspect takes that role.

    Raises:
        DataError: On a malformed line, a repeated aspect, an aspect without
            in-vocabulary seeds, or fewer than two aspects
    """
    names, seeds, seed_words = [], [], []
    for lineno, line in enumerate(_read_lines(path), start=1):
        if not line.strip() or line.lstrip().startswith("#"):
            continue
        if "\t" not in line:
            raise DataError(f"{path}:{lineno}: expected 'aspect<TAB>seeds'")
        name, raw_seeds = line.split("\t", 1)
        name = name.strip()
        if not name:
            raise DataError(f"{path}:{lineno}: empty aspect name")
        if name.lower() in (n.lower() for n in names):
            raise DataError(f"{path}:{lineno}: aspect '{name}' listed twice")

        kept_words, kept = [], []
        for word in raw_seeds.split(","):
            word = word.strip().lower()
            if not word or word in kept_words:
                continue
            if word not in vocab:
                logger.warning(f"Seed word '{word}' of aspect '{name}' is not in the vocabulary")
                continue
            kept_words.append(word)
            kept.append(vocab.index(word))
        if not kept:
            raise DataError(f"{path}:{lineno}: aspect '{name}' has no in-vocabulary seed words")
        names.append(name)
        seeds.append(kept)
        seed_words.append(kept_words)

    if len(names) < 2:
        raise DataError(f"{path}: a seed lexicon needs at least 2 aspects, got {len(names)}")

    general = [i for i, n in enumerate(names) if n.lower() == GENERAL_ASPECT]
    if general:
        general_index = general[0]
    else:
        general_index = len(names) - 1
        logger.warning(
            f"No aspect named '{GENERAL_ASPECT}'; using '{names[-1]}' as the general aspect"
        )
    lexicon = SeedLexicon(names, seeds, seed_words, general_index)
    return lexicon.truncated(max_seeds)


def split_labeled_line(line):
    """Split ``label<TAB>text`` into (label, text); label is None without a tab."""
    if "\t" in line:
        label, text = line.split("\t", 1)
        return label.strip(), text
    return None, line


def load_corpus(path, vocab, lexicon=None, stopwords=None):
    """
    Load one segment per line.

    Labels (``label<TAB>text``) are resolved against ``lexicon``; without a
    lexicon they are ignored. Lines without in-vocabulary tokens are skipped
    with a warning.

    Raises:
        DataError: On an unknown label or a corpus with no usable segment
    """
    segments = []
    skipped = 0
    for lineno, line in enumerate(_read_lines(path), start=1):
        if not line.strip():
            continue
        label, text = split_labeled_line(line)
        label_index = None
        if label is not None and lexicon is not None:
            try:
                label_index = lexicon.aspect_index(label)
            except DataError as e:
                raise DataError(f"{path}:{lineno}: {e}") from e
        try:
            segments.append(encode_segment(text, vocab, stopwords, label_index))
        except DataError:
            skipped += 1
    if skipped:
        logger.warning(f"{path}: skipped {skipped} segment(s) with no in-vocabulary token")
    if not segments:
        raise DataError(f"{path}: no usable segments")
    logger.debug(f"Loaded {len(segments)} segments from {path}")
    return segments


def pad_segments(segments):
    """
    Lay out segments as a padded batch.

    Returns:
        tuple: (index array (B, T) of int, mask array (B, T) of bool) where T
            is the longest segment; padded slots hold index 0
    """
    if not segments:
        raise DataError("Cannot pad an empty batch")
    width = max(len(s) for s in segments)
    index = np.zeros((len(segments), width), dtype=np.int64)
    mask = np.zeros((len(segments), width), dtype=bool)
    for row, segment in enumerate(segments):
        index[row, : len(segment)] = segment.indices
        mask[row, : len(segment)] = True
    return index, mask


# --- negative sampling ---


def sample_negative_indices(pool_size, current, k_n, rng):
    """
    Draw ``k_n`` distinct positions of ``range(pool_size)`` other than ``current``.

    Raises:
        DataError: If fewer than ``k_n`` other positions exist
    """
    if pool_size - 1 < k_n:
        raise DataError(
            f"Need at least {k_n + 1} training segments for {k_n} negatives, got {pool_size}"
        )
    picks = rng.choice(pool_size - 1, size=k_n, replace=False)
    return picks + (picks >= current)


def sample_negatives(segments, current, k_n, rng):
    """Negative segments for the anchor at position ``current`` of ``segments``."""
    return [segments[i] for i in sample_negative_indices(len(segments), current, k_n, rng)]


# --- synthetic corpora ---


def generate_synthetic_corpus(spec, rng):
    """
    Build a clustered toy corpus for end-to-end checks.

    Every aspect owns a disjoint word pool whose embeddings scatter around a
    random centroid; a shared pool of noise words sits near the origin. The
    last aspect is named "general". Seeds are the first
    ``spec.seeds_per_aspect`` words of each pool.

    Args:
        spec (SyntheticSpec): Generator parameters
        rng (int | numpy.random.Generator): Seed or generator

    Returns:
        tuple: (Vocabulary, EmbeddingTable, SeedLexicon, Dataset)
    """
    rng = make_rng(rng)
    k = spec.n_aspects
    names = [f"aspect{i}" for i in range(k - 1)] + [GENERAL_ASPECT]

    pools, words, vectors = [], [], []
    centroids = rng.normal(size=(k, spec.dim)) * spec.centroid_scale
    for i in range(k):
        noise = rng.normal(size=(spec.vocab_per_aspect, spec.dim)) * spec.sigma_emb
        start = len(words)
        words.extend(f"{names[i]}_w{j}" for j in range(spec.vocab_per_aspect))
        vectors.append(centroids[i] + noise)
        pools.append(np.arange(start, len(words)))
    start = len(words)
    words.extend(f"shared_w{j}" for j in range(spec.shared_vocab))
    vectors.append(rng.normal(size=(spec.shared_vocab, spec.dim)) * spec.sigma_emb)
    shared = np.arange(start, len(words))

    vocab = Vocabulary(words)
    table = EmbeddingTable(np.concatenate(vectors, axis=0))
    lexicon = SeedLexicon(
        aspect_names=names,
        seeds=[list(map(int, pool[: spec.seeds_per_aspect])) for pool in pools],
        seed_words=[[words[j] for j in pool[: spec.seeds_per_aspect]] for pool in pools],
        general_index=k - 1,
    )

    segments = []
    for _ in range(spec.segments):
        label = int(rng.integers(k))
        length = int(rng.integers(spec.min_len, spec.max_len + 1))
        n_topic = max(1, int(np.rint((1.0 - spec.noise_rate) * length)))
        tokens = np.concatenate(
            [
                rng.choice(pools[label], size=n_topic),
                rng.choice(shared, size=length - n_topic) if length > n_topic else [],
            ]
        ).astype(np.int64)
        tokens = rng.permutation(tokens)
        segments.append(
            Segment(
                indices=tuple(int(t) for t in tokens),
                label=label,
                text=" ".join(words[t] for t in tokens),
            )
        )

    n_test = int(round(spec.segments * spec.test_fraction))
    n_valid = int(round(spec.segments * spec.valid_fraction))
    n_train = spec.segments - n_valid - n_test
    dataset = Dataset(
        train=segments[:n_train],
        valid=segments[n_train : n_train + n_valid],
        test=segments[n_train + n_valid :],
    )
    return vocab, table, lexicon, dataset


def write_corpus(path, segments, lexicon=None):
    """Write segments one per line, as ``label<TAB>text`` when labelled."""
    lines = []
    for segment in segments:
        if segment.label is not None and lexicon is not None:
            lines.append(f"{lexicon.aspect_names[segment.label]}\t{segment.text}")
        else:
            lines.append(segment.text)
    Path(path).write_text("".join(line + "\n" for line in lines), encoding="utf-8")


def write_seed_lexicon(path, lexicon):
    lines = [
        f"{name}\t{','.join(words)}"
        for name, words in zip(lexicon.aspect_names, lexicon.seed_words)
    ]
    Path(path).write_text("\n".join(lines) + "\n", encoding="utf-8")


def write_synthetic_corpus(out_dir, vocab, table, lexicon, dataset):
    """
    Write a generated corpus as embeddings.txt, seeds.tsv, train.txt,
    valid.txt and test.txt under ``out_dir``.

    Returns:
        dict: file role -> written path
    """
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    paths = {
        "embeddings": out_dir / "embeddings.txt",
        "seeds": out_dir / "seeds.tsv",
        "train": out_dir / "train.txt",
        "valid": out_dir / "valid.txt",
        "test": out_dir / "test.txt",
    }
    save_embeddings(paths["embeddings"], vocab, table)
    write_seed_lexicon(paths["seeds"], lexicon)
    write_corpus(paths["train"], dataset.train, lexicon)
    write_corpus(paths["valid"], dataset.valid, lexicon)
    write_corpus(paths["test"], dataset.test, lexicon)
    return paths
