"""
Losses, the combined objective, Adam and the training loop.
"""

import functools
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
from loguru import logger
from sklearn.metrics import f1_score

from . import diffgraph as dg
from .corpus import pad_segments, sample_negative_indices
from .diffgraph import Graph, value_of
from .exceptions import DataError, TrainingError
from .geometry import dist_exp, euclidean_distance, project_to_ball
from .model import AspectModel, encode_batch, teacher_distribution
from .utils import format_float, make_rng

LOSS_TERMS = ("J_r", "J_d", "J_d1", "J_d2", "J_d3")
QUALITY_FLOOR = 1e-3


# --- loss terms ---


def loss_reconstruction(reconstruction, v_s, negatives):
    """
    Max-margin reconstruction loss, summed over negatives.

    Args:
        reconstruction: (..., d) r_s
        v_s: (..., d) segment vectors
        negatives: (..., k_n, d) negative segment vectors

    Returns:
        (...,) per-segment loss
    """
    positive = dg.expand_dims(dg.dot(reconstruction, v_s), -1)
    negative = dg.dot(dg.expand_dims(reconstruction, -2), negatives)
    return dg.sum_(dg.hinge(1.0 - positive + negative), axis=-1)


def pairwise_min_semantic_distance(first, second, distance=dist_exp):
    """
    Smallest distance between any component of one word and any component
    of another: (..., I, d) x (..., I, d) -> (...,).
    """
    d = distance(dg.expand_dims(first, -2), dg.expand_dims(second, -3))
    shape = value_of(d).shape
    return dg.amin(dg.reshape(d, shape[:-2] + (shape[-2] * shape[-1],)), axis=-1)


def loss_seed_dependence(components, d1, mask=None, distance=dist_exp):
    """Hinge on the closest-component distance of every seed pair of an aspect."""
    n_seeds = value_of(components).shape[1]
    if n_seeds < 2:
        return 0.0
    first, second = np.triu_indices(n_seeds, k=1)
    closest = pairwise_min_semantic_distance(
        components[:, first], components[:, second], distance
    )
    terms = dg.hinge(closest - d1)
    if mask is not None:
        terms = terms * (mask[:, first] & mask[:, second])
    return dg.sum_(terms)


def loss_semantic_independence(components, d2, mask=None, distance=dist_exp):
    """Hinge pushing the components of each seed at least ``d2`` apart."""
    n_components = value_of(components).shape[2]
    if n_components < 2:
        return 0.0
    first, second = np.triu_indices(n_components, k=1)
    terms = dg.hinge(d2 - distance(components[:, :, first], components[:, :, second]))
    if mask is not None:
        terms = terms * mask[..., None]
    return dg.sum_(terms)


def loss_aspect_scope(components, aspects, d3, mask=None, distance=dist_exp):
    """Hinge keeping every component within ``d3`` of its aspect vector (K, d)."""
    n_aspects, dim = value_of(aspects).shape
    centre = dg.reshape(aspects, (n_aspects, 1, 1, dim))
    terms = dg.hinge(distance(components, centre) - d3)
    if mask is not None:
        terms = terms * mask[..., None]
    return dg.sum_(terms)


def loss_distillation(student, teacher):
    """Cross-entropy of student probabilities against teacher soft labels, batch mean."""
    return dg.mean(-dg.sum_(teacher * dg.log(student + 1e-12), axis=-1))


@dataclass
class LossReport:
    epoch: int
    J_r: float
    J_d: float
    J_d1: float
    J_d2: float
    J_d3: float
    total: float

    def parts(self):
        return {name: getattr(self, name) for name in LOSS_TERMS}

    def row(self):
        return [str(self.epoch)] + [
            format_float(getattr(self, name)) for name in LOSS_TERMS + ("total",)
        ]


def total_loss(parts, config):
    """J_r + lam J_d + r1 J_d1 + r2 J_d2 + r3 J_d3."""
    return (
        parts["J_r"]
        + config.lam * parts["J_d"]
        + config.ratio_d1 * parts["J_d1"]
        + config.ratio_d2 * parts["J_d2"]
        + config.ratio_d3 * parts["J_d3"]
    )


def regularizer_distance(config):
    if config.regularizer_distance == "euclidean":
        return euclidean_distance
    return functools.partial(dist_exp, eps=config.ball_eps)


def batch_objective(model, params, batch, negatives, teacher_probs, *, noise_rng=None):
    """
    Loss parts and total for one mini-batch.

    Args:
        model (AspectModel): Supplies config, lexicon and shapes
        params (dict): Parameter arrays or graph nodes
        batch (tuple): (index, mask) of the anchor segments, B rows
        negatives (tuple): (index, mask) of B * k_n negative segments, grouped
            by anchor
        teacher_probs (numpy.ndarray): (B, K) teacher distributions

    Returns:
        tuple: (total, dict of the five parts)
    """
    cfg = model.config
    index, mask = batch
    out = model.forward(index, mask, params, noise_rng=noise_rng)
    n_batch = index.shape[0]

    neg_vectors, _ = encode_batch(params["embeddings"], params["M"], *negatives)
    neg_vectors = dg.reshape(neg_vectors, (n_batch, -1, model.dim))
    parts = {
        "J_r": dg.mean(
            loss_reconstruction(out.reconstruction, out.segment_vectors, neg_vectors)
        ),
        "J_d": loss_distillation(out.probs, teacher_probs),
        "J_d1": 0.0,
        "J_d2": 0.0,
        "J_d3": 0.0,
    }
    if cfg.mode == "disentangled":
        components = params["components"]
        seed_mask = model.seed_mask
        distance = regularizer_distance(cfg)
        parts["J_d1"] = loss_seed_dependence(components, cfg.d1, seed_mask, distance)
        parts["J_d2"] = loss_semantic_independence(components, cfg.d2, seed_mask, distance)
        parts["J_d3"] = loss_aspect_scope(
            components, dg.mean(out.aspects, axis=0), cfg.d3, seed_mask, distance
        )
    return total_loss(parts, cfg), parts


# --- optimizer ---


@dataclass
class OptimizerState:
    m: dict
    v: dict
    t: int = 0

    @classmethod
    def zeros_like(cls, params, names):
        return cls(
            m={name: np.zeros_like(params[name]) for name in names},
            v={name: np.zeros_like(params[name]) for name in names},
        )


def adam_step(params, grads, state, lr, beta1=0.9, beta2=0.999, eps=1e-8, ball_params=()):
    """
    One bias-corrected Adam update, applied in place.

    Args:
        params (dict): name -> array, updated in place
        grads (dict): name -> gradient for every name in ``state``
        state (OptimizerState): Moment accumulators, updated in place
        lr (float): Learning rate
        ball_params (iterable): Names whose values are ball coordinates and
            are projected back into the ball after the update

    Returns:
        tuple: (params, state)
    """
    state.t += 1
    for name in state.m:
        g = grads[name]
        state.m[name] = beta1 * state.m[name] + (1 - beta1) * g
        state.v[name] = beta2 * state.v[name] + (1 - beta2) * (g * g)
        m_hat = state.m[name] / (1 - beta1**state.t)
        v_hat = state.v[name] / (1 - beta2**state.t)
        params[name] -= lr * m_hat / (np.sqrt(v_hat) + eps)
        if name in ball_params:
            params[name][...] = project_to_ball(params[name])
    return params, state


# --- teacher ---


def update_teacher_quality(teacher, model, segments, predicted=None):
    """
    Re-estimate each seed's quality as the fraction of the segments
    containing it that the student assigns to the seed's aspect.

    Seeds that never occur keep their previous value; estimates are floored
    at 1e-3 so every aspect keeps a positive weight.

    Args:
        teacher (TeacherState): Current weights
        model (AspectModel): The student
        segments (list): Segments to count over
        predicted (numpy.ndarray, optional): Student predictions for
            ``segments``; computed with ``model.predict`` when omitted

    Returns:
        TeacherState: New weights
    """
    if predicted is None:
        predicted, _ = model.predict(segments)
    lexicon = model.lexicon
    quality = teacher.quality.copy()
    token_sets = [set(s.indices) for s in segments]
    for i, seeds in enumerate(lexicon.seeds):
        for j, word in enumerate(seeds):
            containing = [n for n, tokens in enumerate(token_sets) if word in tokens]
            if not containing:
                continue
            agree = sum(1 for n in containing if predicted[n] == i)
            quality[i, j] = max(agree / len(containing), QUALITY_FLOOR)
    return type(teacher)(quality)


# --- training loop ---


@dataclass
class TrainResult:
    model: AspectModel
    reports: list = field(default_factory=list)
    validation: list = field(default_factory=list)
    best_epoch: int | None = None
    cancelled: bool = False


def _check_finite(parts, epoch, batch_no):
    for name in LOSS_TERMS:
        if not np.isfinite(value_of(parts[name])):
            raise TrainingError(
                f"{name} became non-finite at epoch {epoch}, batch {batch_no}"
            )


def _validation_f1(model, segments):
    labelled = [s for s in segments if s.label is not None]
    if not labelled:
        return None
    predicted, _ = model.predict(labelled)
    golds = [s.label for s in labelled]
    return float(f1_score(golds, predicted, average="micro"))


def train(
    config, dataset, lexicon, vocab, table, *, stopwords=None, progress=None, should_stop=None
):
    """
    Train a model from scratch.

    Every epoch shuffles the training segments and, per mini-batch, encodes
    the anchors and their ``k_n`` negatives, computes the teacher
    distributions and every loss part, back-propagates the total and applies
    one Adam step. After each epoch the teacher's seed qualities are
    re-estimated from the student's predictions (``update_teacher``).

    Args:
        config (TrainConfig): Hyper-parameters; ``config.seed`` fixes every
            random choice
        dataset (Dataset): ``train`` segments (labels ignored) and optional
            labelled ``valid`` segments
        lexicon (SeedLexicon): Seed words
        vocab (Vocabulary): Vocabulary of ``table``
        table (EmbeddingTable): Word vectors
        stopwords (Iterable[str], optional): Words already removed from the
            segments; stored on the model
        progress (callable, optional): Called with each epoch's LossReport
        should_stop (callable, optional): Polled before every mini-batch; a
            true result ends training early

    Returns:
        TrainResult

    Raises:
        DataError: If there are not more training segments than ``k_n``
        TrainingError: If a loss term becomes non-finite
    """
    segments = dataset.train
    if len(segments) <= config.k_n:
        raise DataError(
            f"Need more than k_n={config.k_n} training segments, got {len(segments)}"
        )
    rng = make_rng(config.seed)
    lexicon = lexicon.truncated(config.max_seeds)
    model = AspectModel.initialize(config, vocab, table, lexicon, rng)
    model.stopwords = frozenset(stopwords or ())
    names = model.trainable_names()
    state = OptimizerState.zeros_like(model.params, names)
    result = TrainResult(model=model)
    best_f1, best_params = -1.0, None

    logger.info(
        f"Training {config.mode} model: {len(segments)} segments, "
        f"{lexicon.n_aspects} aspects, {config.epochs} epochs"
    )
    for epoch in range(1, config.epochs + 1):
        order = rng.permutation(len(segments))
        sums = dict.fromkeys(LOSS_TERMS, 0.0)
        n_batches = 0
        for start in range(0, len(segments), config.batch_size):
            if should_stop is not None and should_stop():
                result.cancelled = True
                break
            rows = order[start : start + config.batch_size]
            anchors = [segments[i] for i in rows]
            negative_rows = [
                segments[j]
                for i in rows
                for j in sample_negative_indices(len(segments), i, config.k_n, rng)
            ]
            teacher_probs = teacher_distribution(anchors, lexicon, model.teacher)

            graph = Graph()
            params = dict(model.params)
            for name in names:
                params[name] = graph.parameter(name, model.params[name])
            total, parts = batch_objective(
                model,
                params,
                pad_segments(anchors),
                pad_segments(negative_rows),
                teacher_probs,
                noise_rng=rng,
            )
            _check_finite(parts, epoch, n_batches + 1)
            grads = graph.backward(total)
            adam_step(model.params, grads, state, config.learning_rate)

            for name in LOSS_TERMS:
                sums[name] += float(value_of(parts[name]))
            n_batches += 1

        if result.cancelled:
            logger.info(f"Training cancelled during epoch {epoch}")
            break

        means = {name: sums[name] / n_batches for name in LOSS_TERMS}
        report = LossReport(epoch=epoch, total=float(total_loss(means, config)), **means)
        result.reports.append(report)

        if config.update_teacher:
            model.teacher = update_teacher_quality(model.teacher, model, segments)

        f1 = _validation_f1(model, dataset.valid)
        result.validation.append(f1)
        message = " ".join(f"{k}={format_float(v)}" for k, v in report.parts().items())
        logger.info(f"Epoch {epoch}: {message} total={format_float(report.total)}")
        if f1 is not None:
            logger.info(f"Epoch {epoch}: validation micro_f1={f1:.4f}")
            if config.select_on_validation and f1 > best_f1:
                best_f1 = f1
                best_params = {k: v.copy() for k, v in model.params.items()}
                result.best_epoch = epoch
        if progress is not None:
            progress(report)

    if config.select_on_validation and best_params is not None:
        logger.info(f"Keeping parameters of epoch {result.best_epoch} (micro_f1={best_f1:.4f})")
        model.params = best_params
    return result


def write_loss_log(path, reports):
    """Write ``epoch,J_r,J_d,J_d1,J_d2,J_d3,total`` CSV rows."""
    lines = [",".join(("epoch",) + LOSS_TERMS + ("total",))]
    lines.extend(",".join(report.row()) for report in reports)
    Path(path).write_text("\n".join(lines) + "\n", encoding="utf-8")
