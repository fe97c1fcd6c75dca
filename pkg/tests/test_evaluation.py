import json

import numpy as np
import pytest
from hypothesis import given, strategies as st
from hypothesis.extra import numpy as hnp

from vibdiag.evaluation import (ConfusionMatrix, EvalReport, aggregate, confusion, format_table,
                                latency_bench, macro_metrics, mean_confusion,
                                metrics_from_predictions, throughput_bench)
from vibdiag.model import ModelConfig, build

from oracles import brute_force_metrics, tiny_config


def test_confusion_examples(rng):
    labels = np.repeat(np.arange(4), 3)
    np.testing.assert_array_equal(confusion(labels, labels).counts, 3 * np.eye(4))
    cm = confusion(np.zeros(12, dtype=int), labels).counts
    assert np.all(cm[:, 1:] == 0) and np.all(cm[:, 0] == 3)
    pred = rng.integers(0, 4, 500)
    true = rng.integers(0, 4, 500)
    cm = confusion(pred, true).counts
    for t in range(4):
        for p in range(4):
            assert cm[t, p] == sum(1 for a, b in zip(true, pred) if a == t and b == p)
    with pytest.raises(ValueError):
        confusion([0, 1], [0])


def test_perfect_scores():
    m = macro_metrics(ConfusionMatrix(np.diag([3, 4, 5, 6])))
    assert (m.accuracy, m.precision, m.recall, m.f1) == (1.0, 1.0, 1.0, 1.0)
    assert m.flags == []


def test_two_active_classes_embedded():
    counts = np.zeros((4, 4), dtype=int)
    counts[:2, :2] = [[5, 0], [1, 4]]
    m = macro_metrics(ConfusionMatrix(counts))
    assert m.accuracy == pytest.approx(0.95, abs=1e-12)
    assert m.precision == pytest.approx((5 / 6 + 1) / 4, abs=1e-12)
    assert m.precision == pytest.approx(0.458333, abs=1e-6)
    assert m.recall == pytest.approx(0.45, abs=1e-12)
    assert m.f1 == pytest.approx((10 / 11 + 8 / 9) / 4, abs=1e-12)
    assert "precision_undefined:2" in m.flags and "recall_undefined:3" in m.flags
    ref = brute_force_metrics(counts)
    for k, v in ref.items():
        assert getattr(m, k) == pytest.approx(v, abs=1e-12)


def test_uniform_random_predictions(rng):
    labels = np.repeat(np.arange(4), 50_000)
    m = metrics_from_predictions(rng.integers(0, 4, labels.size), labels)
    assert m.accuracy == pytest.approx(0.625, abs=0.005)
    assert m.recall == pytest.approx(0.25, abs=0.005)


def test_off_diagonal_only_has_zero_recall():
    counts = np.ones((4, 4), dtype=int) - np.eye(4, dtype=int)
    m = macro_metrics(ConfusionMatrix(counts))
    assert m.recall == 0.0


def test_invalid_confusion():
    with pytest.raises(ValueError):
        ConfusionMatrix([[1, -1], [0, 0]])
    with pytest.raises(ValueError):
        macro_metrics(ConfusionMatrix(np.zeros((4, 4))))


@given(hnp.arrays(np.int64, (4, 4), elements=st.integers(0, 50)))
def test_metrics_in_unit_interval_and_match_oracle(counts):
    if counts.sum() == 0:
        return
    m = macro_metrics(ConfusionMatrix(counts))
    ref = brute_force_metrics(counts)
    for k in ("accuracy", "precision", "recall", "f1"):
        assert 0.0 <= getattr(m, k) <= 1.0
        assert getattr(m, k) == pytest.approx(ref[k], abs=1e-12)


@given(st.lists(st.tuples(st.integers(0, 3), st.integers(0, 3)), min_size=1, max_size=60))
def test_cm_route_equals_list_route(pairs):
    pred, true = map(np.array, zip(*pairs))
    a = metrics_from_predictions(pred, true)
    b = macro_metrics(confusion(pred, true))
    assert a.as_dict() == b.as_dict()


def test_aggregate_uses_population_std():
    reps = [EvalReport.from_predictions([0, 1, 2, 3], [0, 1, 2, 3]),
            EvalReport.from_predictions([0, 0, 0, 0], [0, 1, 2, 3])]
    summary = aggregate(reps)
    accs = [1.0, macro_metrics(confusion([0, 0, 0, 0], [0, 1, 2, 3])).accuracy]
    assert summary["accuracy"] == pytest.approx((np.mean(accs), np.std(accs)))
    np.testing.assert_allclose(mean_confusion(reps)[0], [1.0, 0.0, 0.0, 0.0])
    table = format_table({"clean": summary})
    assert table.splitlines()[0] == "| Metric | clean |"
    assert "F1-Score" in table and "±" in table


def test_report_files(tmp_path):
    rep = EvalReport.from_predictions([0, 1, 1, 3], [0, 1, 2, 3])
    rep.to_json(tmp_path / "r.json")
    data = json.loads((tmp_path / "r.json").read_text())
    assert data["confusion"][2][1] == 1 and data["latency"] is None
    rep.confusion.to_csv(tmp_path / "cm.csv")
    assert (tmp_path / "cm.csv").read_text().splitlines()[0] == "true\\pred,Normal,Outer,Inner,Ball"


def test_latency_single_repetition(rng):
    params, _ = build(tiny_config())
    stats = latency_bench(params, rng.standard_normal((5, 32, 2)), repetitions=1)
    assert stats.std_ms == 0.0 and stats.repetitions == 1 and stats.samples_per_repetition == 5
    assert stats.mean_ms > 0
    with pytest.raises(ValueError):
        latency_bench(params, rng.standard_normal((5, 32, 2)), repetitions=0)


def test_throughput_mode(rng):
    params, _ = build(tiny_config())
    stats = throughput_bench(params, rng.standard_normal((20, 32, 2)), repetitions=2)
    assert stats.mode == "batched-throughput" and len(stats.per_repetition_ms) == 2


def test_wider_model_is_slower(rng):
    x = rng.standard_normal((40, 2000, 2))
    narrow, _ = build(ModelConfig(filters_per_block=64))
    wide, _ = build(ModelConfig(filters_per_block=128))
    t_narrow = latency_bench(narrow, x, repetitions=3).mean_ms
    t_wide = latency_bench(wide, x, repetitions=3).mean_ms
    assert t_wide > t_narrow
