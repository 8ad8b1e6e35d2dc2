# tests/test_labeling.py
import itertools
import math

import numpy as np
import pytest

from fcmvc.errors import ConfigurationError, DataValidationError
from fcmvc.services.labeling import (
    Partition,
    acc,
    align_partitions,
    best_of_restarts,
    contingency,
    evaluate,
    fscore,
    kmeans,
    mean_report,
    nmi,
    purity,
    restart_reports,
    restart_seeds,
    unit_columns,
)


# ---------- brute-force references ----------
def _acc_bruteforce(t, p):
    labels = max(t.max(), p.max()) + 1
    return max(
        sum(perm[pi] == ti for ti, pi in zip(t, p)) for perm in itertools.permutations(range(labels))
    ) / len(t)


def _table(t, p):
    table = {}
    for ti, pi in zip(t, p):
        table[(ti, pi)] = table.get((ti, pi), 0) + 1
    return table


def _nmi_by_hand(t, p):
    n = len(t)
    table = _table(t, p)
    rows = {a: sum(c for (ti, _), c in table.items() if ti == a) for a in set(t)}
    cols = {b: sum(c for (_, pi), c in table.items() if pi == b) for b in set(p)}
    h_t = -sum(c / n * math.log(c / n) for c in rows.values())
    h_p = -sum(c / n * math.log(c / n) for c in cols.values())
    if h_t == 0 or h_p == 0:
        return 1.0 if h_t == h_p == 0 else 0.0
    mi = sum(c / n * math.log(c * n / (rows[a] * cols[b])) for (a, b), c in table.items())
    return mi / math.sqrt(h_t * h_p)


def _purity_by_hand(t, p):
    table = _table(t, p)
    return sum(max(c for (_, pi), c in table.items() if pi == b) for b in set(p)) / len(t)


def _fscore_by_pairs(t, p):
    tp = fp = fn = 0
    for i, j in itertools.combinations(range(len(t)), 2):
        same_t, same_p = t[i] == t[j], p[i] == p[j]
        tp += same_t and same_p
        fp += same_p and not same_t
        fn += same_t and not same_p
    if tp == 0:
        return 0.0
    precision, recall = tp / (tp + fp), tp / (tp + fn)
    return 2 * precision * recall / (precision + recall)


# ---------- kmeans ----------
def test_kmeans_separable_points():
    points = np.array([[0, 0], [0.1, 0], [10, 10], [10.1, 10]], dtype=float).T
    part = kmeans(points, 2, seed=0)
    assert part.labels[0] == part.labels[1]
    assert part.labels[2] == part.labels[3]
    assert part.labels[0] != part.labels[2]


def test_kmeans_single_cluster_and_k_equals_n():
    points = np.random.default_rng(0).standard_normal((3, 7))
    assert np.array_equal(kmeans(points, 1).labels, np.zeros(7))
    assert kmeans(points, 7).inertia == pytest.approx(0.0, abs=1e-12)
    with pytest.raises(ConfigurationError):
        kmeans(points, 8)


def test_kmeans_is_seeded():
    points = np.random.default_rng(1).standard_normal((2, 50))
    assert np.array_equal(kmeans(points, 4, seed=3).labels, kmeans(points, 4, seed=3).labels)


def test_restart_seeds_distinct_and_stable():
    seeds = restart_seeds(7, 50)
    assert len(set(seeds)) == 50
    assert seeds == restart_seeds(7, 50)


def test_best_of_restarts_has_lowest_inertia():
    points = np.random.default_rng(2).standard_normal((2, 60))
    best = best_of_restarts(points, 3, restarts=8, seed=1)
    assert best.inertia == pytest.approx(min(kmeans(points, 3, s).inertia for s in restart_seeds(1, 8)))


def test_unit_columns():
    points = np.array([[3.0, 0.0, 0.0, -2.0], [4.0, 0.0, 0.5, 0.0]])
    unit = unit_columns(points)
    assert np.allclose(unit, [[0.6, 0.0, 0.0, -1.0], [0.8, 0.0, 1.0, 0.0]])
    assert np.array_equal(unit[:, 1], [0.0, 0.0])
    assert np.allclose(np.linalg.norm(unit[:, [0, 2, 3]], axis=0), 1.0)


# ---------- metrics ----------
def test_acc_examples():
    assert acc([0, 0, 1, 1], [1, 1, 0, 0]) == 1.0
    assert acc([0, 1, 2], [0, 1, 2]) == 1.0
    assert acc([0, 0, 1, 1], [0, 1, 0, 1]) == 0.5


def test_nmi_examples():
    assert nmi([0, 0, 1, 1], [1, 1, 0, 0]) == pytest.approx(1.0)
    assert nmi([0, 0, 1, 1], [0, 0, 0, 0]) == 0.0
    assert nmi([0, 0, 1, 1], [0, 1, 1, 1]) == pytest.approx(_nmi_by_hand([0, 0, 1, 1], [0, 1, 1, 1]), abs=1e-12)
    assert np.array_equal(contingency([0, 0, 1, 1], [0, 1, 1, 1]), [[1, 1], [0, 2]])


def test_purity_examples():
    assert purity([0, 1, 1, 2], [0, 1, 1, 2]) == 1.0
    assert purity([0, 0, 1, 1], [0, 0, 0, 0]) == 0.5
    assert purity([0, 0, 1, 1], [0, 0, 0, 1]) == 0.75


def test_fscore_examples():
    assert fscore([0, 0, 1, 1], [0, 0, 1, 1]) == 1.0
    assert fscore([0, 0, 1, 1], [0, 1, 2, 3]) == 0.0
    assert fscore([0, 0, 1, 1], [0, 1, 0, 1]) == _fscore_by_pairs([0, 0, 1, 1], [0, 1, 0, 1]) == 0.0
    assert fscore([0, 0, 0, 1], [0, 0, 1, 1]) == pytest.approx(_fscore_by_pairs([0, 0, 0, 1], [0, 0, 1, 1]))


def test_metrics_match_bruteforce_references():
    rng = np.random.default_rng(5)
    for _ in range(200):
        k_t, k_p = int(rng.integers(1, 6)), int(rng.integers(1, 6))
        t = rng.integers(0, k_t, size=30)
        p = rng.integers(0, k_p, size=30)
        assert abs(acc(t, p) - _acc_bruteforce(t, p)) < 1e-10
        assert abs(nmi(t, p) - _nmi_by_hand(list(t), list(p))) < 1e-10
        assert abs(purity(t, p) - _purity_by_hand(list(t), list(p))) < 1e-10
        assert abs(fscore(t, p) - _fscore_by_pairs(t, p)) < 1e-10


def test_metric_properties():
    rng = np.random.default_rng(6)
    for _ in range(50):
        k = int(rng.integers(2, 6))
        t = rng.integers(0, k, size=40)
        p = rng.integers(0, k, size=40)
        report = evaluate(t, p)
        assert acc(t, p) >= 1 / k
        for value in report.model_dump().values():
            assert 0.0 <= value <= 1.0
        relabeled = rng.permutation(k)[p]
        assert evaluate(t, relabeled).model_dump() == pytest.approx(report.model_dump())


def test_metrics_reject_mismatched_lengths():
    with pytest.raises(DataValidationError):
        acc([0, 1], [0, 1, 1])
    with pytest.raises(DataValidationError):
        nmi([], [])


# ---------- partitions ----------
def test_partition_validation_and_compaction():
    with pytest.raises(DataValidationError):
        Partition(labels=[0, 2], k=2)
    part = Partition.from_labels([5, 5, 9, 7], ids=["a", "b", "c", "d"])
    assert part.k == 3
    assert list(part.labels) == [0, 0, 2, 1]


def test_align_partitions():
    truth = Partition.from_labels([0, 0, 1], ids=["a", "b", "c"])
    pred = Partition.from_labels([1, 0, 0], ids=["c", "b", "a"])
    aligned, _ = align_partitions(pred, truth)
    assert aligned.ids == ("a", "b", "c")
    assert list(aligned.labels) == [0, 0, 1]
    with pytest.raises(DataValidationError, match="only in labels"):
        align_partitions(Partition.from_labels([0, 1], ids=["a", "z"]), Partition.from_labels([0, 1], ids=["a", "b"]))


def test_restart_reports_mean_and_best():
    rng = np.random.default_rng(8)
    truth = np.repeat([0, 1, 2], 20)
    centers = np.array([[0, 0], [6, 0], [0, 6]], dtype=float)
    points = (centers[truth] + rng.standard_normal((60, 2))).T
    summary = restart_reports(points, truth, 3, restarts=6, seed=2)
    assert len(summary.reports) == 6
    assert summary.mean == mean_report(summary.reports)
    assert summary.best == evaluate(truth, summary.best_partition)
    assert summary.best_partition.inertia == min(kmeans(points, 3, s).inertia for s in restart_seeds(2, 6))
