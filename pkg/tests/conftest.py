import numpy as np
import pytest

from HyperAspect.corpus import (
    Dataset,
    EmbeddingTable,
    SeedLexicon,
    Vocabulary,
    encode_segment,
)

# Three well separated aspects in three dimensions plus one filler word.
TOY_VECTORS = {
    "price": (1.0, 0.0, 0.0),
    "cheap": (0.9, 0.1, 0.0),
    "cost": (0.95, 0.0, 0.05),
    "color": (0.0, 1.0, 0.0),
    "red": (0.1, 0.9, 0.0),
    "blue": (0.0, 0.95, 0.05),
    "good": (0.0, 0.0, 1.0),
    "okay": (0.1, 0.0, 0.9),
    "nice": (0.0, 0.05, 0.95),
    "the": (0.05, 0.05, 0.05),
}
TOY_SEEDS = {
    "price": ["price", "cheap"],
    "color": ["color", "red"],
    "general": ["good", "okay"],
}
TOY_SEGMENTS = [
    ("price", "cheap price"),
    ("price", "the cost"),
    ("price", "price cost cheap"),
    ("price", "cost"),
    ("price", "the price"),
    ("color", "red color"),
    ("color", "the blue"),
    ("color", "blue red"),
    ("color", "color"),
    ("color", "the red blue"),
    ("general", "good"),
    ("general", "okay nice"),
    ("general", "the nice"),
    ("general", "good okay"),
    ("general", "nice"),
]


class Toy:
    def __init__(self):
        self.vocab = Vocabulary(TOY_VECTORS)
        self.table = EmbeddingTable(np.array(list(TOY_VECTORS.values())))
        names = list(TOY_SEEDS)
        self.lexicon = SeedLexicon(
            aspect_names=names,
            seeds=[[self.vocab.index(w) for w in TOY_SEEDS[n]] for n in names],
            seed_words=[list(TOY_SEEDS[n]) for n in names],
            general_index=names.index("general"),
        )
        self.segments = [
            encode_segment(text, self.vocab, label=names.index(label))
            for label, text in TOY_SEGMENTS
        ]
        self.dataset = Dataset(train=self.segments, valid=self.segments)

    def write(self, folder):
        """Write embeddings.txt, seeds.tsv and corpus.txt; returns their paths."""
        embeddings = folder / "embeddings.txt"
        embeddings.write_text(
            "".join(
                f"{w} {' '.join(str(x) for x in v)}\n" for w, v in TOY_VECTORS.items()
            )
        )
        seeds = folder / "seeds.tsv"
        seeds.write_text("".join(f"{n}\t{','.join(w)}\n" for n, w in TOY_SEEDS.items()))
        corpus = folder / "corpus.txt"
        corpus.write_text("".join(f"{label}\t{text}\n" for label, text in TOY_SEGMENTS))
        return embeddings, seeds, corpus


@pytest.fixture
def toy():
    return Toy()
