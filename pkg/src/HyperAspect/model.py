"""
Forward computations of the hyperbolic disentangled aspect extractor.

The per-step functions (encoder, seed weights, aspect matrix, classifier
heads, reconstruction) broadcast over leading axes and accept arrays or
graph nodes. :class:`AspectModel` ties them together for padded batches.
"""

import copy
from dataclasses import dataclass

import numpy as np

from . import diffgraph as dg
from .corpus import pad_segments
from .diffgraph import value_of
from .exceptions import DataError, DomainError
from .geometry import (
    BALL_EPS,
    dist_exp,
    einstein_midpoint,
    klein_to_poincare,
    log_map_0,
    poincare_distance,
    poincare_to_klein,
    project_to_ball,
    to_ball,
)
from .utils import make_rng

PREDICT_BATCH = 256


# --- encoder ---


def encode_batch(embeddings, attention_matrix, index, mask):
    """
    Attention-weighted segment vectors for a padded batch.

    Args:
        embeddings: (V, d) word vectors
        attention_matrix: (d, d) matrix M
        index (numpy.ndarray): (B, T) word indices
        mask (numpy.ndarray): (B, T) True on real tokens

    Returns:
        tuple: (v_s of shape (B, d), attention weights of shape (B, T))
    """
    words = dg.index(embeddings, index)
    weights = mask.astype(np.float64)
    mean = dg.sum_(words * weights[..., None], axis=1) / weights.sum(axis=1, keepdims=True)
    u = dg.dot(words, dg.expand_dims(dg.matvec(attention_matrix, mean), 1))
    attention = dg.softmax(u, axis=-1, mask=mask)
    return dg.sum_(dg.expand_dims(attention, -1) * words, axis=1), attention


def encode_segment_vector(segment, embeddings, attention_matrix):
    """v_s (d,) and attention weights (T,) of a single segment."""
    index, mask = pad_segments([segment])
    v_s, attention = encode_batch(embeddings, attention_matrix, index, mask)
    return v_s[0], attention[0]


# --- aspect representations ---


def seed_attention_weights(v_s, seeds, mask=None, uniform=False):
    """
    Per-segment weights z over the seeds of each aspect.

    Args:
        v_s: (..., d) segment vectors
        seeds: (..., N, d) seed vectors
        mask (numpy.ndarray, optional): (..., N) True on real seeds
        uniform (bool): Use 1/N instead of the softmax of dot products

    Returns:
        (..., N) weights summing to one over real seeds
    """
    if uniform:
        shape = np.broadcast_shapes(
            value_of(v_s).shape[:-1] + (1,), value_of(seeds).shape[:-1]
        )
        real = np.ones(shape[-1:]) if mask is None else mask.astype(np.float64)
        return np.broadcast_to(real / real.sum(axis=-1, keepdims=True), shape)
    return dg.softmax(dg.dot(seeds, dg.expand_dims(v_s, -2)), axis=-1, mask=mask)


def build_aspect_matrix(seeds, z):
    """a_i = sum_j z_ij s_ij, stacked over aspects: (..., K, N, d) -> (..., K, d)."""
    return dg.sum_(dg.expand_dims(z, -1) * seeds, axis=-2)


def disentangle_init(base, n_components, sigma, rng):
    """
    Components s_ijk = s_ij + Normal(0, sigma^2 I).

    Args:
        base (numpy.ndarray): (..., d) base seed vectors
        n_components (int): Components per seed
        sigma (float): Noise scale
        rng: Seed or numpy Generator

    Returns:
        numpy.ndarray: (..., n_components, d)
    """
    if n_components < 1:
        raise DomainError("n_components must be at least 1")
    if sigma < 0:
        raise DomainError("sigma must be nonnegative")
    base = np.asarray(base, dtype=np.float64)
    noise = make_rng(rng).normal(
        0.0, sigma, size=base.shape[:-1] + (n_components, base.shape[-1])
    )
    return base[..., None, :] + noise


def refine_seed(v_s, components, tau, *, distance="exp", noise=None, eps=BALL_EPS):
    """
    Soft selection among the components of a seed word.

    Args:
        v_s: (..., d) segment vectors
        components: (..., I, d) seed components
        tau (float): Softmax temperature
        distance (str): "exp" measures between exponential-map images,
            "raw" measures the raw vectors pulled into the ball
        noise (numpy.ndarray, optional): Gumbel noise added to the logits

    Returns:
        tuple: (refined seeds (..., d), component weights g (..., I))
    """
    if tau <= 0:
        raise DomainError("tau must be positive")
    point = dg.expand_dims(v_s, -2)
    if distance == "exp":
        d = dist_exp(point, components, eps)
    else:
        d = poincare_distance(project_to_ball(point, eps), project_to_ball(components, eps))
    logits = d * (-1.0 / tau)
    if noise is not None:
        logits = logits + noise
    g = dg.softmax(logits, axis=-1)
    return dg.sum_(dg.expand_dims(g, -1) * components, axis=-2), g


# --- classifier heads ---


def euclidean_logits(v_s, weight, bias):
    return dg.matvec(weight, v_s) + bias


def euclidean_classify(v_s, weight, bias):
    return dg.softmax(euclidean_logits(v_s, weight, bias), axis=-1)


def hyperbolic_scores(v_s, aspects, b_v, b_a, eps=BALL_EPS):
    """p_i = -dist_exp(v_s, a_i)^2 + b_v + b_a[i]; aspects are (..., K, d)."""
    d = dist_exp(dg.expand_dims(v_s, -2), aspects, eps)
    return -(d**2) + b_v + b_a


def score_softmax(scores):
    return dg.softmax(scores, axis=-1)


def hyperbolic_reconstruct(scores, aspects, beta, c=0.0, eps=BALL_EPS):
    """
    Einstein midpoint of the aspect points weighted by exp(beta * p - c),
    mapped back to the tangent space at the origin.

    The largest logit is subtracted before exponentiation; the midpoint is
    invariant to that shift just as it is to ``c``.
    """
    if beta <= 0:
        raise DomainError("beta must be positive")
    logits = beta * scores - c
    weights = dg.exp(logits - np.max(value_of(logits), axis=-1, keepdims=True))
    klein = poincare_to_klein(to_ball(aspects, eps))
    return log_map_0(klein_to_poincare(einstein_midpoint(klein, weights)))


def euclidean_reconstruct(probs, aspects):
    """r_s = A^T p."""
    return dg.sum_(dg.expand_dims(probs, -1) * aspects, axis=-2)


# --- bag-of-words teacher ---


@dataclass
class TeacherState:
    """Per-seed quality weights q (K, N); padded slots hold 0."""

    quality: np.ndarray

    @classmethod
    def uniform(cls, lexicon):
        _, mask = lexicon.seed_matrix()
        return cls(mask.astype(np.float64))


def _seed_lookup(lexicon):
    lookup = {}
    for i, seeds in enumerate(lexicon.seeds):
        for j, word in enumerate(seeds):
            lookup.setdefault(word, []).append((i, j))
    return lookup


def _teacher_row(indices, lookup, quality, general_index):
    scores = np.zeros(quality.shape[0])
    for token in indices:
        for i, j in lookup.get(token, ()):
            scores[i] += quality[i, j]
    total = scores.sum()
    if total <= 0:
        scores[general_index] = 1.0
        return scores
    return scores / total


def teacher_predict(segment, lexicon, teacher):
    """
    Bag-of-words seed classifier.

    Every token equal to a seed adds that seed's quality to its aspect; the
    scores are normalised to a distribution. A segment without any seed word
    is assigned to the general aspect.
    """
    return _teacher_row(
        segment.indices, _seed_lookup(lexicon), teacher.quality, lexicon.general_index
    )


def teacher_distribution(segments, lexicon, teacher):
    """:func:`teacher_predict` for a list of segments, as a (B, K) array."""
    lookup = _seed_lookup(lexicon)
    return np.stack(
        [
            _teacher_row(s.indices, lookup, teacher.quality, lexicon.general_index)
            for s in segments
        ]
    )


# --- the model ---


@dataclass
class ForwardResult:
    segment_vectors: object
    attention: object
    seed_weights: object
    aspects: object
    scores: object
    probs: object
    reconstruction: object
    refine_weights: object = None


@dataclass
class AspectModel:
    """
    Every parameter of the extractor plus what is needed to use it.

    ``params`` maps names to arrays: ``embeddings`` (V, d), ``M`` (d, d),
    then ``W``/``b`` for the Euclidean head or ``b_v``/``b_a`` for the
    hyperbolic head, and ``seeds`` (K, N, d) or, in disentangled mode,
    ``components`` (K, N, I, d).

    ``stopwords`` are the words dropped from the training segments; they are
    dropped again when the model reads new text.
    """

    config: object
    vocab: object
    lexicon: object
    params: dict
    teacher: TeacherState
    stopwords: frozenset = frozenset()

    @classmethod
    def initialize(cls, config, vocab, table, lexicon, rng=None):
        """
        Fresh parameters: M = identity, W ~ Normal(0, 1/d), zero biases, seeds
        copied from their word vectors and, in disentangled mode, perturbed
        into ``config.n_components`` components.
        """
        if len(vocab) != len(table):
            raise DataError(
                f"Vocabulary has {len(vocab)} words but the table {len(table)} rows"
            )
        rng = make_rng(config.seed if rng is None else rng)
        dim, n_aspects = table.dim, lexicon.n_aspects
        seed_index, seed_mask = lexicon.seed_matrix()
        base = table.vectors[seed_index] * seed_mask[..., None]

        params = {"embeddings": table.vectors.copy(), "M": np.eye(dim)}
        if config.mode == "euclidean":
            params["W"] = rng.normal(0.0, np.sqrt(1.0 / dim), size=(n_aspects, dim))
            params["b"] = np.zeros(n_aspects)
        else:
            params["b_v"] = np.zeros(())
            params["b_a"] = np.zeros(n_aspects)
        if config.mode == "disentangled":
            params["components"] = disentangle_init(
                base, config.n_components, config.sigma, rng
            )
        else:
            params["seeds"] = base
        return cls(config, vocab, lexicon, params, TeacherState.uniform(lexicon))

    @property
    def mode(self):
        return self.config.mode

    @property
    def hyperbolic(self):
        return self.config.mode != "euclidean"

    @property
    def dim(self):
        return self.params["M"].shape[0]

    @property
    def seed_mask(self):
        return self.lexicon.seed_matrix()[1]

    def trainable_names(self):
        names = sorted(self.params)
        if self.config.freeze_embeddings:
            names.remove("embeddings")
        return names

    def copy(self):
        return copy.deepcopy(self)

    def forward(self, index, mask, params=None, *, noise_rng=None):
        """
        Run the model on a padded batch.

        Args:
            index, mask: Output of :func:`HyperAspect.corpus.pad_segments`
            params (dict, optional): Parameter values or graph nodes to use
                instead of ``self.params``
            noise_rng (numpy.random.Generator, optional): Source of Gumbel
                noise for the component selection, used only when the
                config enables it

        Returns:
            ForwardResult
        """
        p = self.params if params is None else params
        cfg = self.config
        eps = cfg.ball_eps
        seed_mask = self.seed_mask
        batch = index.shape[0]

        v_s, attention = encode_batch(p["embeddings"], p["M"], index, mask)
        refine_weights = None
        if cfg.mode == "disentangled":
            components = p["components"]
            noise = None
            if cfg.gumbel_noise and noise_rng is not None:
                noise = noise_rng.gumbel(size=(batch,) + value_of(components).shape[:-1])
            seeds, refine_weights = refine_seed(
                dg.reshape(v_s, (batch, 1, 1, self.dim)),
                components,
                cfg.tau,
                distance=cfg.refine_distance,
                noise=noise,
                eps=eps,
            )
        else:
            seeds = p["seeds"]

        z = seed_attention_weights(
            dg.reshape(v_s, (batch, 1, self.dim)),
            seeds,
            seed_mask,
            uniform=cfg.seed_weighting == "uniform",
        )
        aspects = build_aspect_matrix(seeds, z)

        if cfg.mode == "euclidean":
            scores = euclidean_logits(v_s, p["W"], p["b"])
            probs = score_softmax(scores)
            reconstruction = euclidean_reconstruct(probs, aspects)
        else:
            scores = hyperbolic_scores(v_s, aspects, p["b_v"], p["b_a"], eps)
            probs = score_softmax(scores)
            reconstruction = hyperbolic_reconstruct(scores, aspects, cfg.beta, cfg.c, eps)

        return ForwardResult(
            segment_vectors=v_s,
            attention=attention,
            seed_weights=z,
            aspects=aspects,
            scores=scores,
            probs=probs,
            reconstruction=reconstruction,
            refine_weights=refine_weights,
        )

    def predict(self, segments, batch_size=PREDICT_BATCH):
        """
        Returns:
            tuple: (predicted aspect indices (n,), probabilities (n, K));
                ties go to the lowest aspect index
        """
        if not segments:
            return np.zeros(0, dtype=np.int64), np.zeros((0, self.lexicon.n_aspects))
        probs = []
        for start in range(0, len(segments), batch_size):
            index, mask = pad_segments(segments[start : start + batch_size])
            probs.append(value_of(self.forward(index, mask).probs))
        probs = np.concatenate(probs, axis=0)
        return np.argmax(probs, axis=-1), probs

    def component_choices(self, segments, batch_size=PREDICT_BATCH):
        """
        Component each seed word resolves to for each segment.

        Returns:
            numpy.ndarray | None: (n, K, N) argmax of the component weights,
                -1 on padded seed slots; None unless the model is disentangled
        """
        if self.config.mode != "disentangled":
            return None
        n_aspects, n_seeds = self.seed_mask.shape
        if not segments:
            return np.zeros((0, n_aspects, n_seeds), dtype=np.int64)
        choices = []
        for start in range(0, len(segments), batch_size):
            index, mask = pad_segments(segments[start : start + batch_size])
            weights = value_of(self.forward(index, mask).refine_weights)
            choices.append(np.argmax(weights, axis=-1))
        choices = np.concatenate(choices, axis=0)
        return np.where(self.seed_mask, choices, -1)

    def segment_vectors(self, segments, batch_size=PREDICT_BATCH):
        """Raw v_s for every segment, shape (n, d)."""
        vectors = []
        for start in range(0, len(segments), batch_size):
            index, mask = pad_segments(segments[start : start + batch_size])
            p = self.params
            vectors.append(value_of(encode_batch(p["embeddings"], p["M"], index, mask)[0]))
        return np.concatenate(vectors, axis=0)


def predict_aspect(model, segment):
    """Aspect index and probability vector for one segment."""
    labels, probs = model.predict([segment])
    return int(labels[0]), probs[0]
