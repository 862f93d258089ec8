"""
Metrics, prediction records, vector export and the ablation study.
"""

import csv
import json
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
from loguru import logger
from sklearn.metrics import confusion_matrix, f1_score, precision_recall_fscore_support

from . import geometry
from .corpus import encode_segment, generate_synthetic_corpus, split_labeled_line
from .exceptions import DataError
from .model import TeacherState, teacher_distribution
from .training import train
from .utils import format_float

ABLATION_VARIANTS = {
    "full": {},
    "lam0": {"lam": 0.0},
    "hyperbolic": {"mode": "hyperbolic"},
    "euclidean_regularizer": {"regularizer_distance": "euclidean"},
    "euclidean": {"mode": "euclidean"},
}


def _check_lengths(preds, golds):
    if len(preds) != len(golds):
        raise DataError(f"{len(preds)} predictions but {len(golds)} gold labels")
    if len(preds) == 0:
        raise DataError("Cannot score an empty prediction list")


def micro_f1(preds, golds, labels=None):
    """
    Micro-averaged F1. Over all classes of single-label predictions this is
    the fraction of correct predictions.

    Args:
        preds, golds: Aspect indices of equal length
        labels (list, optional): Restrict the pooled counts to these classes

    Raises:
        DataError: On a length mismatch or empty input
    """
    _check_lengths(preds, golds)
    return float(f1_score(golds, preds, labels=labels, average="micro", zero_division=0))


def per_aspect_f1(preds, golds, n_aspects):
    """F1 of every aspect; 0 for an aspect never predicted and never gold."""
    _check_lengths(preds, golds)
    _, _, f1, _ = precision_recall_fscore_support(
        golds, preds, labels=list(range(n_aspects)), zero_division=0
    )
    return f1


@dataclass
class MetricsReport:
    aspect_names: list
    micro_f1: float
    precision: np.ndarray
    recall: np.ndarray
    f1: np.ndarray
    support: np.ndarray
    confusion: np.ndarray

    def lines(self, per_aspect=False):
        """Metrics as ``name value`` lines."""
        out = [f"micro_f1 {self.micro_f1:.4f}"]
        if per_aspect:
            for i, name in enumerate(self.aspect_names):
                out.append(f"precision[{name}] {self.precision[i]:.4f}")
                out.append(f"recall[{name}] {self.recall[i]:.4f}")
                out.append(f"f1[{name}] {self.f1[i]:.4f}")
                out.append(f"support[{name}] {int(self.support[i])}")
        return out

    def write_confusion(self, path):
        """Confusion matrix CSV; rows are gold aspects, columns predictions."""
        with open(path, "w", newline="", encoding="utf-8") as f:
            writer = csv.writer(f)
            writer.writerow(["gold"] + list(self.aspect_names))
            for name, row in zip(self.aspect_names, self.confusion):
                writer.writerow([name] + [int(v) for v in row])


def evaluate(preds, golds, aspect_names, exclude=None):
    """
    Build a :class:`MetricsReport`.

    Args:
        preds, golds: Aspect indices
        aspect_names (list): Names of the K aspects
        exclude (int, optional): Aspect left out of the micro-F1 pool
    """
    _check_lengths(preds, golds)
    k = len(aspect_names)
    labels = list(range(k))
    pooled = [i for i in labels if i != exclude] if exclude is not None else None
    precision, recall, f1, support = precision_recall_fscore_support(
        golds, preds, labels=labels, zero_division=0
    )
    return MetricsReport(
        aspect_names=list(aspect_names),
        micro_f1=micro_f1(preds, golds, pooled),
        precision=precision,
        recall=recall,
        f1=f1,
        support=support,
        confusion=confusion_matrix(golds, preds, labels=labels),
    )


def evaluate_model(model, segments, exclude_general=False):
    """Score ``model`` on labelled segments."""
    labelled = [s for s in segments if s.label is not None]
    if not labelled:
        raise DataError("No labelled segments to evaluate")
    preds, _ = model.predict(labelled)
    exclude = model.lexicon.general_index if exclude_general else None
    return evaluate(
        preds, [s.label for s in labelled], model.lexicon.aspect_names, exclude
    )


def teacher_labels(segments, lexicon, teacher):
    """Argmax of the bag-of-words teacher for every segment."""
    return np.argmax(teacher_distribution(segments, lexicon, teacher), axis=-1)


# --- predictions ---


@dataclass
class PredictionRecord:
    segment_id: int
    aspect_index: int
    aspect_name: str
    probabilities: np.ndarray
    gold: str | None = None
    # aspect name -> {seed word: chosen component}, disentangled models only
    components: dict | None = None

    def to_json(self, aspect_names):
        record = {
            "segment_id": self.segment_id,
            "aspect": self.aspect_name,
            "aspect_index": self.aspect_index,
            "probabilities": {
                name: float(p) for name, p in zip(aspect_names, self.probabilities)
            },
        }
        if self.gold is not None:
            record["gold"] = self.gold
        if self.components is not None:
            record["components"] = self.components
        return json.dumps(record)

    def to_row(self):
        return [str(self.segment_id), self.aspect_name] + [
            format_float(p) for p in self.probabilities
        ] + [self.gold or ""]


def _component_map(lexicon, choices):
    return {
        name: {word: int(c) for word, c in zip(words, row)}
        for name, words, row in zip(lexicon.aspect_names, lexicon.seed_words, choices)
    }


def predict_lines(model, lines, stopwords=None):
    """
    One :class:`PredictionRecord` per non-empty input line.

    Lines may carry a gold label as ``label<TAB>text``. A line without any
    in-vocabulary token gets a one-hot prediction of the general aspect.
    ``stopwords`` defaults to the ones the model was trained with. Records of
    a disentangled model also name the component every seed word chose.
    """
    if stopwords is None:
        stopwords = model.stopwords
    names = model.lexicon.aspect_names
    general = model.lexicon.general_index
    entries = []
    for line in lines:
        if not line.strip():
            continue
        gold, text = split_labeled_line(line)
        try:
            segment = encode_segment(text, model.vocab, stopwords)
        except DataError:
            logger.warning(
                f"Segment {len(entries)} has no in-vocabulary token; "
                f"predicting '{names[general]}'"
            )
            segment = None
        entries.append((gold, segment))

    known = [segment for _, segment in entries if segment is not None]
    _, probs = model.predict(known)
    choices = model.component_choices(known)
    rows = iter(probs)
    choice_rows = iter(choices) if choices is not None else None
    records = []
    for segment_id, (gold, segment) in enumerate(entries):
        components = None
        if segment is None:
            p = np.zeros(len(names))
            p[general] = 1.0
        else:
            p = next(rows)
            if choice_rows is not None:
                components = _component_map(model.lexicon, next(choice_rows))
        index = int(np.argmax(p))
        records.append(
            PredictionRecord(segment_id, index, names[index], p, gold, components)
        )
    return records


def write_predictions(records, aspect_names, stream, fmt="csv"):
    """Write records to a text stream as CSV or JSON lines, in input order."""
    if fmt == "jsonl":
        for record in records:
            stream.write(record.to_json(aspect_names) + "\n")
        return
    writer = csv.writer(stream, lineterminator="\n")
    writer.writerow(
        ["segment_id", "aspect"] + [f"p_{name}" for name in aspect_names] + ["gold"]
    )
    for record in records:
        writer.writerow(record.to_row())


# --- vectors ---


def export_vectors(model, segments, path):
    """
    Write ``segment_id,label,v_1..v_d`` rows: the exponential-map image of
    every segment vector for hyperbolic models, the raw vector otherwise.
    """
    vectors = model.segment_vectors(segments)
    if model.hyperbolic:
        vectors = geometry.to_ball(vectors, model.config.ball_eps)
    names = model.lexicon.aspect_names
    with open(Path(path), "w", newline="", encoding="utf-8") as f:
        writer = csv.writer(f, lineterminator="\n")
        writer.writerow(
            ["segment_id", "label"] + [f"v_{i + 1}" for i in range(vectors.shape[1])]
        )
        for n, (segment, vector) in enumerate(zip(segments, vectors)):
            label = names[segment.label] if segment.label is not None else ""
            writer.writerow([n, label] + [format_float(v) for v in vector])
    logger.debug(f"Exported {len(segments)} vectors to {path}")


# --- ablation ---


@dataclass
class AblationResult:
    scores: dict = field(default_factory=dict)

    def means(self):
        return {name: float(np.mean(values)) for name, values in self.scores.items()}

    def wins(self, variant, reference="full"):
        """Seeds on which ``reference`` scores at least as high as ``variant``."""
        return sum(
            a >= b for a, b in zip(self.scores[reference], self.scores[variant])
        )


def run_ablation(spec, config, seeds, variants=None, progress=None):
    """
    Train every variant on one synthetic corpus per seed and collect test
    micro-F1, together with the bag-of-words teacher.

    Args:
        spec (SyntheticSpec): Corpus generator parameters
        config (TrainConfig): Base configuration of the full model
        seeds (iterable): Corpus and training seeds
        variants (dict, optional): name -> config overrides; defaults to
            full model, lam=0, hyperbolic only, Euclidean regulariser
            distance and the Euclidean baseline
        progress (callable, optional): Called with a status string

    Returns:
        AblationResult
    """
    variants = ABLATION_VARIANTS if variants is None else variants
    result = AblationResult({name: [] for name in list(variants) + ["teacher"]})
    for seed in seeds:
        vocab, table, lexicon, dataset = generate_synthetic_corpus(spec, seed)
        golds = [s.label for s in dataset.test]
        for name, overrides in variants.items():
            trained = train(config.replace(seed=seed, **overrides), dataset, lexicon, vocab, table)
            preds, _ = trained.model.predict(dataset.test)
            result.scores[name].append(micro_f1(preds, golds))
            if progress is not None:
                progress(f"seed {seed} {name}: micro_f1 {result.scores[name][-1]:.4f}")
        teacher = teacher_labels(dataset.test, lexicon, TeacherState.uniform(lexicon))
        result.scores["teacher"].append(micro_f1(teacher, golds))
    return result
