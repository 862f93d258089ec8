import numpy as np
import pytest

from HyperAspect import diffgraph as dg
from HyperAspect.config import SyntheticSpec, TrainConfig
from HyperAspect.corpus import (
    EmbeddingTable,
    Segment,
    SeedLexicon,
    Vocabulary,
    generate_synthetic_corpus,
    pad_segments,
)
from HyperAspect.evaluation import micro_f1, run_ablation, teacher_labels
from HyperAspect.exceptions import DataError, TrainingError
from HyperAspect.geometry import dist_exp
from HyperAspect.model import AspectModel, TeacherState, teacher_distribution
from HyperAspect.training import (
    LOSS_TERMS,
    LossReport,
    OptimizerState,
    _check_finite,
    adam_step,
    batch_objective,
    loss_aspect_scope,
    loss_distillation,
    loss_reconstruction,
    loss_seed_dependence,
    loss_semantic_independence,
    pairwise_min_semantic_distance,
    total_loss,
    train,
    update_teacher_quality,
    write_loss_log,
)


def test_reconstruction_loss_examples():
    r = np.array([1.0, 0.0])
    assert loss_reconstruction(r, np.array([1.0, 0.0]), np.array([[0.0, 1.0], [0.0, 1.0]])) == 0.0
    assert loss_reconstruction(r, np.array([0.0, 1.0]), np.array([[0.0, 1.0], [0.0, 2.0]])) == 2.0
    value = loss_reconstruction(r, np.array([0.5, 0.0]), np.array([[0.2, 0.0], [-0.1, 0.0]]))
    assert value == pytest.approx(1.1)


def test_pairwise_min_semantic_distance():
    shared = np.array([0.2, -0.1])
    first = np.array([shared, [0.5, 0.5]])
    second = np.array([[-0.4, 0.1], shared])
    assert pairwise_min_semantic_distance(first, second) == 0.0

    a, b = np.array([[0.3, 0.0]]), np.array([[0.0, -0.2]])
    assert pairwise_min_semantic_distance(a, b) == pytest.approx(dist_exp(a[0], b[0]))

    rng = np.random.default_rng(0)
    first, second = rng.normal(size=(2, 2, 3)) * 0.5
    brute = min(dist_exp(x, y) for x in first for y in second)
    assert pairwise_min_semantic_distance(first, second) == pytest.approx(brute, abs=1e-12)


def test_seed_dependence_examples():
    # One aspect, two seeds with one component each; distance 2 * 0.5 = 1.0.
    components = np.array([[[[0.0, 0.0]], [[0.5, 0.0]]]])
    assert loss_seed_dependence(components, 0.5) == pytest.approx(0.5, abs=1e-12)
    assert loss_seed_dependence(components, 2.0) == 0.0
    assert loss_seed_dependence(components[:, :1], 0.1) == 0.0
    mask = np.array([[True, False]])
    assert loss_seed_dependence(components, 0.5, mask) == 0.0


def test_semantic_independence_examples():
    point = [0.1, 0.2]
    assert loss_semantic_independence(np.array([[[point, point]]]), 3.0) == pytest.approx(3.0)
    assert loss_semantic_independence(np.array([[[point, point, point]]]), 3.0) == pytest.approx(9.0)
    far = np.array([[[[1.0, 0.0], [-1.0, 0.0]]]])
    assert loss_semantic_independence(far, 0.1) == 0.0
    assert loss_semantic_independence(far[:, :, :1], 5.0) == 0.0


def test_aspect_scope_examples():
    aspects = np.zeros((1, 2))
    components = np.array([[[[1.0, 0.0]]]])
    assert loss_aspect_scope(components, aspects, 1.0) == pytest.approx(1.0, abs=1e-12)
    assert loss_aspect_scope(components, aspects, 5.0) == 0.0


def test_regularizers_respond_monotonically():
    rng = np.random.default_rng(1)
    components = rng.normal(size=(2, 3, 2, 3)) * 0.4
    aspects = rng.normal(size=(2, 3)) * 0.4
    d1_values = [loss_seed_dependence(components, d) for d in (0.01, 0.1, 0.3)]
    assert d1_values[0] >= d1_values[1] >= d1_values[2]
    d2_values = [loss_semantic_independence(components, d) for d in (0.5, 1.0, 2.0)]
    assert d2_values[0] <= d2_values[1] <= d2_values[2]
    d3_values = [loss_aspect_scope(components, aspects, d) for d in (0.01, 0.1, 0.3)]
    assert d3_values[0] >= d3_values[1] >= d3_values[2]


def test_distillation_examples():
    uniform = np.full((1, 4), 0.25)
    assert loss_distillation(uniform, uniform) == pytest.approx(np.log(4.0))
    one_hot = np.array([[0.0, 1.0]])
    assert loss_distillation(one_hot, one_hot) == pytest.approx(0.0, abs=1e-9)
    assert loss_distillation(np.array([[1.0, 0.0]]), one_hot) > 20


def test_total_loss_weighting():
    parts = dict.fromkeys(LOSS_TERMS, 1.0)
    assert total_loss(parts, TrainConfig(lam=5.0)) == 9.0
    assert total_loss(parts, TrainConfig(lam=0.0)) == 4.0
    assert total_loss(parts, TrainConfig(lam=0.0, ratio_d2=0.0)) == 3.0


def test_loss_gradients_match_finite_differences():
    rng = np.random.default_rng(2)
    for _ in range(10):
        r, v = rng.normal(size=(2, 3, 4)) * 0.3
        negatives = rng.normal(size=(3, 2, 4)) * 0.3
        components = rng.normal(size=(2, 3, 2, 3)) * 0.3
        aspects = rng.normal(size=(2, 3)) * 0.3
        teacher = rng.dirichlet(np.ones(4), size=3)
        logits = rng.normal(size=(3, 4))
        assert dg.gradient_check(lambda x: dg.sum_(loss_reconstruction(x, v, negatives)), r) < 1e-4
        assert dg.gradient_check(lambda x: loss_seed_dependence(x, 0.01), components) < 1e-4
        assert dg.gradient_check(lambda x: loss_semantic_independence(x, 5.0), components) < 1e-4
        assert dg.gradient_check(lambda x: loss_aspect_scope(x, aspects, 0.01), components) < 1e-4
        assert dg.gradient_check(lambda x: loss_aspect_scope(components, x, 0.01), aspects) < 1e-4
        assert dg.gradient_check(
            lambda x: loss_distillation(dg.softmax(x), teacher), logits
        ) < 1e-4


def make_micro_batch(seed, mode="disentangled"):
    rng = np.random.default_rng(seed)
    vocab = Vocabulary([f"w{i}" for i in range(12)])
    table = EmbeddingTable(rng.normal(size=(12, 4)) * 0.3)
    lexicon = SeedLexicon(
        ["a", "b", "general"],
        [[0, 1], [2, 3], [4, 5]],
        [["w0", "w1"], ["w2", "w3"], ["w4", "w5"]],
        2,
    )
    config = TrainConfig(
        sigma=0.3, d1=0.05, d2=3.0, d3=0.01, tau=0.5, beta=0.5, k_n=2, n_components=2,
        seed=seed, mode=mode,
    )
    model = AspectModel.initialize(config, vocab, table, lexicon)
    segments = [Segment(tuple(rng.integers(0, 12, size=3).tolist())) for _ in range(9)]
    anchors, negatives = segments[:3], segments[3:]
    teacher = teacher_distribution(anchors, lexicon, model.teacher)
    return model, pad_segments(anchors), pad_segments(negatives), teacher


@pytest.mark.parametrize("mode", ["euclidean", "hyperbolic", "disentangled"])
def test_objective_gradient_matches_finite_differences(mode):
    for seed in range(10):
        model, batch, negatives, teacher = make_micro_batch(seed, mode)

        def objective(name):
            def f(x):
                params = dict(model.params)
                params[name] = x
                return batch_objective(model, params, batch, negatives, teacher)[0]

            return f

        # b_v shifts every score equally, so the objective does not depend on it
        names = [n for n in model.trainable_names() if n != "b_v"]
        assert {"M", "seeds" if mode != "disentangled" else "components"} <= set(names)
        for name in names:
            assert dg.gradient_check(objective(name), model.params[name]) < 1e-4, name
        if mode != "euclidean":
            graph = dg.Graph()
            params = dict(model.params)
            params["b_v"] = graph.parameter("b_v", model.params["b_v"])
            graph.backward(batch_objective(model, params, batch, negatives, teacher)[0])
            assert abs(float(params["b_v"].grad)) < 1e-9


def test_objective_is_invariant_to_reconstruction_offset():
    model, batch, negatives, teacher = make_micro_batch(4)
    base, _ = batch_objective(model, model.params, batch, negatives, teacher)
    model.config = model.config.replace(c=5.0)
    shifted, _ = batch_objective(model, model.params, batch, negatives, teacher)
    assert shifted == pytest.approx(base, abs=1e-9)


def test_adam_zero_gradient_leaves_params():
    params = {"w": np.array([1.0, -2.0])}
    state = OptimizerState.zeros_like(params, ["w"])
    adam_step(params, {"w": np.zeros(2)}, state, 0.1)
    np.testing.assert_array_equal(params["w"], [1.0, -2.0])
    assert state.t == 1


def test_adam_first_step_has_learning_rate_size():
    params = {"w": np.array([1.0, -2.0, 0.5])}
    state = OptimizerState.zeros_like(params, ["w"])
    adam_step(params, {"w": np.array([3.0, -0.2, 40.0])}, state, 0.01)
    np.testing.assert_allclose(params["w"], [0.99, -1.99, 0.49], atol=1e-9)


def test_adam_is_deterministic_and_projects_ball_params():
    grads = {"w": np.array([0.3, -0.1]), "x": np.array([-5.0, 0.0])}

    def run():
        params = {"w": np.array([0.2, 0.2]), "x": np.array([0.999999, 0.0])}
        state = OptimizerState.zeros_like(params, ["w", "x"])
        for _ in range(3):
            adam_step(params, grads, state, 0.01, ball_params=("x",))
        return params

    first, second = run(), run()
    assert np.array_equal(first["w"], second["w"])
    assert np.linalg.norm(first["x"]) < 1.0


def test_update_teacher_quality(toy):
    model = AspectModel.initialize(TrainConfig(mode="hyperbolic"), toy.vocab, toy.table, toy.lexicon)
    golds = np.array([s.label for s in toy.segments])
    teacher = update_teacher_quality(model.teacher, model, toy.segments, golds)
    np.testing.assert_array_equal(teacher.quality, np.ones((3, 2)))

    start = TeacherState(np.full((3, 2), 0.7))
    without_okay = [s for s in toy.segments if toy.vocab.index("okay") not in s.indices]
    kept = update_teacher_quality(start, model, without_okay, [s.label for s in without_okay])
    assert kept.quality[2, 1] == 0.7
    assert kept.quality[0, 0] == 1.0

    price = toy.vocab.index("price")
    four = [Segment((price,)), Segment((price, 1)), Segment((price, 2)), Segment((price, 3))]
    half = update_teacher_quality(start, model, four, np.array([0, 0, 1, 2]))
    assert half.quality[0, 0] == 0.5

    never = update_teacher_quality(start, model, four, np.array([1, 1, 1, 1]))
    assert never.quality[0, 0] == pytest.approx(1e-3)


def small_config(**changes):
    values = dict(epochs=2, batch_size=5, k_n=3, seed=3)
    values.update(changes)
    return TrainConfig(**values)


@pytest.mark.parametrize("mode", ["euclidean", "hyperbolic", "disentangled"])
def test_train_runs_in_every_mode(toy, mode):
    result = train(small_config(mode=mode), toy.dataset, toy.lexicon, toy.vocab, toy.table)
    assert len(result.reports) == 2
    for report in result.reports:
        assert all(np.isfinite(v) for v in report.parts().values())
        assert report.total == pytest.approx(total_loss(report.parts(), result.model.config))
        if mode != "disentangled":
            assert report.J_d1 == report.J_d2 == report.J_d3 == 0.0
    assert len(result.validation) == 2
    assert not result.cancelled


def test_train_is_deterministic(toy):
    first = train(small_config(), toy.dataset, toy.lexicon, toy.vocab, toy.table)
    second = train(small_config(), toy.dataset, toy.lexicon, toy.vocab, toy.table)
    assert first.reports == second.reports
    for name, value in first.model.params.items():
        assert np.array_equal(value, second.model.params[name])


def test_train_is_insensitive_to_reconstruction_offset(toy):
    first = train(small_config(), toy.dataset, toy.lexicon, toy.vocab, toy.table)
    second = train(small_config(c=5.0), toy.dataset, toy.lexicon, toy.vocab, toy.table)
    for a, b in zip(first.reports, second.reports):
        assert a.total == pytest.approx(b.total, rel=1e-6)


def test_train_without_distillation(toy):
    result = train(small_config(lam=0.0), toy.dataset, toy.lexicon, toy.vocab, toy.table)
    assert all(np.isfinite(r.total) for r in result.reports)


def test_train_reduces_independence_loss(toy):
    config = small_config(epochs=4, learning_rate=0.01)
    result = train(config, toy.dataset, toy.lexicon, toy.vocab, toy.table)
    assert result.reports[-1].J_d2 < result.reports[0].J_d2
    assert result.reports[-1].total < result.reports[0].total


def test_train_needs_more_segments_than_negatives(toy):
    with pytest.raises(DataError):
        train(small_config(k_n=15), toy.dataset, toy.lexicon, toy.vocab, toy.table)


def test_train_can_be_cancelled(toy):
    calls = []

    def should_stop():
        calls.append(1)
        return len(calls) > 4

    result = train(
        small_config(epochs=3), toy.dataset, toy.lexicon, toy.vocab, toy.table,
        should_stop=should_stop,
    )
    assert result.cancelled
    assert len(result.reports) == 1


def test_train_reports_progress_and_selects_on_validation(toy):
    seen = []
    result = train(
        small_config(epochs=3, mode="hyperbolic", select_on_validation=True),
        toy.dataset, toy.lexicon, toy.vocab, toy.table,
        progress=seen.append,
    )
    assert [r.epoch for r in seen] == [1, 2, 3]
    assert result.best_epoch in (1, 2, 3)
    assert all(0.0 <= f <= 1.0 for f in result.validation)


def test_non_finite_loss_is_fatal():
    parts = dict.fromkeys(LOSS_TERMS, 0.0)
    parts["J_d2"] = np.nan
    with pytest.raises(TrainingError, match="J_d2"):
        _check_finite(parts, 1, 1)


def test_write_loss_log(tmp_path):
    reports = [LossReport(1, 1.0, 0.5, 0.0, 2.0, 0.0, 5.5), LossReport(2, 0.9, 0.4, 0.0, 1.5, 0.0, 4.4)]
    path = tmp_path / "losses.csv"
    write_loss_log(path, reports)
    lines = path.read_text().splitlines()
    assert lines[0] == "epoch,J_r,J_d,J_d1,J_d2,J_d3,total"
    assert lines[1] == "1,1,0.5,0,2,0,5.5"
    assert len(lines) == 3


@pytest.mark.slow
def test_training_on_synthetic_corpus_beats_the_teacher():
    spec = SyntheticSpec(n_aspects=5, segments=2000, noise_rate=0.2)
    vocab, table, lexicon, dataset = generate_synthetic_corpus(spec, 7)
    result = train(TrainConfig(seed=7), dataset, lexicon, vocab, table)
    assert len(result.reports) == 10
    assert result.reports[-1].total < result.reports[0].total

    golds = [s.label for s in dataset.test]
    preds, _ = result.model.predict(dataset.test)
    student = micro_f1(preds, golds)
    teacher = micro_f1(
        teacher_labels(dataset.test, lexicon, TeacherState.uniform(lexicon)), golds
    )
    assert student >= 0.85
    assert student > teacher


@pytest.mark.slow
def test_full_model_holds_up_against_ablations_across_seeds():
    spec = SyntheticSpec(n_aspects=5, segments=2000, noise_rate=0.2)
    variants = {"full": {}, "lam0": {"lam": 0.0}, "euclidean": {"mode": "euclidean"}}
    result = run_ablation(spec, TrainConfig(), range(7, 12), variants)
    assert result.wins("lam0") >= 4
    assert result.wins("euclidean") >= 4
    means = result.means()
    assert means["full"] >= 0.85
