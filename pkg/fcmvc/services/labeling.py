import warnings
from dataclasses import dataclass, replace
from typing import List

import numpy as np
from loguru import logger
from scipy.optimize import linear_sum_assignment
from sklearn.cluster import KMeans
from sklearn.exceptions import ConvergenceWarning
from sklearn.metrics import normalized_mutual_info_score
from sklearn.metrics.cluster import contingency_matrix, pair_confusion_matrix
from sklearn.preprocessing import normalize

from fcmvc.errors import ConfigurationError, DataValidationError
from fcmvc.models import MetricReport

KMEANS_MAX_ITER = 300


@dataclass(frozen=True)
class Partition:
    labels: np.ndarray
    k: int
    inertia: float | None = None
    ids: tuple | None = None

    def __post_init__(self):
        labels = np.asarray(self.labels, dtype=np.int64)
        if labels.ndim != 1:
            raise DataValidationError(f"labels must be 1-D, got shape {labels.shape}")
        if labels.size and (labels.min() < 0 or labels.max() >= self.k):
            raise DataValidationError(f"labels must lie in [0, {self.k}), got [{labels.min()}, {labels.max()}]")
        if self.ids is not None and len(self.ids) != labels.size:
            raise DataValidationError(f"{len(self.ids)} ids for {labels.size} labels")
        object.__setattr__(self, "labels", labels)

    def __len__(self) -> int:
        return self.labels.size

    def with_ids(self, ids) -> "Partition":
        return replace(self, ids=tuple(ids))

    def reorder(self, ids) -> "Partition":
        """Labels rearranged to follow `ids` (which must be a permutation of self.ids)."""
        if self.ids is None:
            raise DataValidationError("partition has no ids to reorder by")
        where = {sid: i for i, sid in enumerate(self.ids)}
        try:
            idx = [where[sid] for sid in ids]
        except KeyError as e:
            raise DataValidationError(f"id {e.args[0]!r} is not in the partition") from None
        if len(idx) != len(self):
            raise DataValidationError(f"expected {len(self)} ids, got {len(idx)}")
        return replace(self, labels=self.labels[idx], ids=tuple(ids))

    @classmethod
    def from_labels(cls, labels, ids=None) -> "Partition":
        """Partition from arbitrary integer labels, compacted to 0..k-1."""
        uniq, compact = np.unique(np.asarray(labels), return_inverse=True)
        return cls(labels=compact, k=max(1, len(uniq)), ids=None if ids is None else tuple(ids))


def kmeans(points: np.ndarray, k: int, seed: int = 0) -> Partition:
    """
    Lloyd's k-means on the columns of `points` (dim x n), seeded with greedy
    k-means++, run to an assignment fixpoint or KMEANS_MAX_ITER iterations.
    """
    points = np.asarray(points, dtype=np.float64)
    n = points.shape[1]
    if k < 1 or k > n:
        raise ConfigurationError(f"k={k} must be between 1 and the {n} points")
    model = KMeans(
        n_clusters=k,
        init="k-means++",
        n_init=1,
        max_iter=KMEANS_MAX_ITER,
        tol=0.0,
        random_state=seed,
        algorithm="lloyd",
    )
    with warnings.catch_warnings(record=True) as caught:
        warnings.simplefilter("always", ConvergenceWarning)
        model.fit(points.T)
    if caught:
        logger.bind(k=k, n=n, seed=seed, warning=str(caught[0].message)).debug("kmeans warning")
    return Partition(labels=model.labels_, k=k, inertia=float(model.inertia_))


def restart_seeds(seed: int, restarts: int) -> List[int]:
    """Distinct, reproducible per-restart seeds."""
    children = np.random.SeedSequence(seed).spawn(restarts)
    return [int(c.generate_state(1)[0]) for c in children]


def unit_columns(points: np.ndarray) -> np.ndarray:
    """Columns scaled to unit length; all-zero columns stay zero."""
    return normalize(np.asarray(points, dtype=np.float64), norm="l2", axis=0)


def best_of_restarts(points: np.ndarray, k: int, restarts: int, seed: int = 0) -> Partition:
    best = None
    for s in restart_seeds(seed, restarts):
        p = kmeans(points, k, s)
        if best is None or p.inertia < best.inertia:
            best = p
    return best


def align_partitions(pred: Partition, truth: Partition) -> tuple[Partition, Partition]:
    """Put `pred` in the id order of `truth`; both must label exactly the same ids."""
    if pred.ids is None or truth.ids is None:
        raise DataValidationError("both partitions need sample ids to be joined")
    pred_ids, truth_ids = set(pred.ids), set(truth.ids)
    if pred_ids != truth_ids:
        only_pred = sorted(map(str, pred_ids - truth_ids))[:10]
        only_truth = sorted(map(str, truth_ids - pred_ids))[:10]
        raise DataValidationError(f"id mismatch: only in labels {only_pred}, only in truth {only_truth}")
    return pred.reorder(truth.ids), truth


def _pair(truth, pred) -> tuple[np.ndarray, np.ndarray]:
    t = truth.labels if isinstance(truth, Partition) else np.asarray(truth)
    p = pred.labels if isinstance(pred, Partition) else np.asarray(pred)
    if t.shape != p.shape:
        raise DataValidationError(f"partition lengths differ: {t.size} vs {p.size}")
    if t.size == 0:
        raise DataValidationError("cannot score empty partitions")
    return t, p


def contingency(truth, pred) -> np.ndarray:
    """Rows are truth classes, columns are predicted clusters."""
    t, p = _pair(truth, pred)
    return contingency_matrix(t, p)


def acc(truth, pred) -> float:
    c = contingency(truth, pred)
    rows, cols = linear_sum_assignment(c, maximize=True)
    return float(c[rows, cols].sum() / c.sum())


def nmi(truth, pred) -> float:
    t, p = _pair(truth, pred)
    # a single-cluster side has zero entropy
    single_t, single_p = np.unique(t).size == 1, np.unique(p).size == 1
    if single_t or single_p:
        return 1.0 if single_t and single_p else 0.0
    value = normalized_mutual_info_score(t, p, average_method="geometric")
    return float(min(1.0, max(0.0, value)))


def purity(truth, pred) -> float:
    c = contingency(truth, pred)
    return float(c.max(axis=0).sum() / c.sum())


def fscore(truth, pred) -> float:
    """Pairwise F1 over same-cluster sample pairs."""
    t, p = _pair(truth, pred)
    (_, fp), (fn, tp) = pair_confusion_matrix(t, p)
    if tp + fp == 0 or tp + fn == 0 or tp == 0:
        return 0.0
    precision = tp / (tp + fp)
    recall = tp / (tp + fn)
    return float(2 * precision * recall / (precision + recall))


def evaluate(truth, pred) -> MetricReport:
    return MetricReport(
        acc=acc(truth, pred),
        nmi=nmi(truth, pred),
        purity=purity(truth, pred),
        fscore=fscore(truth, pred),
    )


def mean_report(reports: List[MetricReport]) -> MetricReport:
    return MetricReport(**{f: float(np.mean([getattr(r, f) for r in reports])) for f in MetricReport.model_fields})


def std_report(reports: List[MetricReport]) -> MetricReport:
    return MetricReport(**{f: float(np.std([getattr(r, f) for r in reports])) for f in MetricReport.model_fields})


@dataclass(frozen=True)
class RestartSummary:
    reports: List[MetricReport]
    mean: MetricReport
    best: MetricReport
    best_partition: Partition


def restart_reports(points: np.ndarray, truth, k: int, restarts: int, seed: int = 0) -> RestartSummary:
    """
    Score every k-means restart against `truth`.

    `mean` averages the restarts (the reporting protocol); `best` is the
    restart with the lowest inertia, which is what `final_labels` returns.
    """
    reports, best, best_report = [], None, None
    for s in restart_seeds(seed, restarts):
        p = kmeans(points, k, s)
        r = evaluate(truth, p)
        reports.append(r)
        if best is None or p.inertia < best.inertia:
            best, best_report = p, r
    return RestartSummary(reports=reports, mean=mean_report(reports), best=best_report, best_partition=best)
