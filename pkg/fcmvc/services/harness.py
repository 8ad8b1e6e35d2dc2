"""
Synthetic streams, the incomplete-pattern protocol, fill baselines and the
experiment drivers behind `fcmvc bench`.
"""
import itertools
import math
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from typing import Callable, List, Sequence

import numpy as np
from loguru import logger

from fcmvc.errors import ConfigurationError, GenerationError, ProtocolError
from fcmvc.models import (
    ExperimentResult,
    ExperimentRow,
    MetricReport,
    MetricSummary,
    MissingPattern,
    ScalePoint,
    ScaleResult,
    SolveDiagnostics,
    SolverConfig,
    SyntheticSpec,
)
from fcmvc.services import config
from fcmvc.services.labeling import (
    Partition,
    RestartSummary,
    mean_report,
    restart_reports,
    std_report,
    unit_columns,
)
from fcmvc.services.registry import ViewBatch
from fcmvc.services.solver import (
    ConsensusState,
    final_labels,
    init_first_view,
    integrate_view,
    run_stream,
)

METHODS = ("fcmvc-iv", "zero-fill", "average-fill")
FILL_MODES = {"zero-fill": "zero", "average-fill": "average"}
DEFAULT_RATIOS = (0.1, 0.2, 0.3, 0.4, 0.5)
MAX_CENTER_DRAWS = 1000
MAX_RATIO = 0.5


def cell_seed(*keys: int) -> int:
    """Stable 32-bit seed derived from non-negative integer keys."""
    return int(np.random.SeedSequence([int(k) for k in keys]).generate_state(1)[0])


def _ratio_key(r: float) -> int:
    return int(round(r * 1_000_000))


def _draw_centers(rng: np.random.Generator, k: int, d: int, min_dist: float) -> np.ndarray:
    for _ in range(MAX_CENTER_DRAWS):
        centers = rng.normal(scale=min_dist, size=(k, d))
        if k == 1:
            return centers
        gaps = np.linalg.norm(centers[:, None, :] - centers[None, :, :], axis=-1)
        if gaps[np.triu_indices(k, 1)].min() >= min_dist:
            return centers
    raise GenerationError(
        f"could not place {k} centers {min_dist:g} apart in {d} dimensions "
        f"after {MAX_CENTER_DRAWS} draws"
    )


def generate_synthetic(spec: SyntheticSpec) -> tuple[List[ViewBatch], Partition]:
    """
    Planted Gaussian clusters observed through `spec.views` complete views.

    Every view gets its own k centers, at least separation * sigma apart; the
    label of a sample is shared by all views. Labels are balanced (n // k or
    n // k + 1 per cluster) and randomly permuted.

    Returns:
        The views (ids "s0000", ... in the same column order everywhere) and
        the ground-truth partition carrying those ids.
    """
    rng = np.random.default_rng(spec.seed)
    width = len(str(spec.n - 1))
    ids = tuple(f"s{i:0{width}d}" for i in range(spec.n))
    labels = rng.permutation(np.arange(spec.n) % spec.k)

    views = []
    for t, d in enumerate(spec.dims, start=1):
        centers = _draw_centers(rng, spec.k, d, spec.separation * spec.sigma)
        noise = rng.normal(scale=spec.sigma, size=(d, spec.n))
        views.append(ViewBatch(t, centers[labels].T + noise, ids, name=f"view_{t}"))

    logger.bind(n=spec.n, k=spec.k, dims=spec.dims, seed=spec.seed).debug("synthetic stream generated")
    return views, Partition(labels=labels, k=spec.k, ids=ids)


def _removal_count(n: int, r: float) -> int:
    # floor(n * r) with a guard against 0.1 * 30 = 2.9999999999999996
    return int(math.floor(n * r + 1e-9))


def apply_missing(views: Sequence[ViewBatch], r: float, seed: int) -> tuple[List[ViewBatch], MissingPattern]:
    """
    Remove floor(n * r) samples from every view.

    Views before the last drop uniformly at random. The last view drops only
    samples that an earlier view has kept, so every sample stays observed at
    least once. Surviving columns keep their original order.

    Raises:
        ConfigurationError: r outside [0, 0.5].
        ProtocolError: the views do not share one sample set, or the last
            view cannot drop enough samples without losing coverage.
    """
    if not 0.0 <= r <= MAX_RATIO:
        raise ConfigurationError(f"missing ratio must lie in [0, {MAX_RATIO}], got {r}")
    if not views:
        raise ConfigurationError("at least one view is required")
    ids = views[0].ids
    for v in views[1:]:
        if set(v.ids) != set(ids):
            raise ProtocolError(f"view {v.view_index} does not observe the same samples as view {views[0].view_index}")

    n = len(ids)
    drop = _removal_count(n, r)
    if drop == 0:
        pattern = MissingPattern(
            ratio=r, seed=seed, retained=[list(v.ids) for v in views], dropped=[[] for _ in views]
        )
        return list(views), pattern

    rng = np.random.default_rng(seed)
    dropped: list[set] = []
    covered: set = set()
    for v in views[:-1]:
        gone = {v.ids[i] for i in rng.choice(n, size=drop, replace=False)}
        dropped.append(gone)
        covered.update(sid for sid in v.ids if sid not in gone)

    last = views[-1]
    candidates = [sid for sid in last.ids if sid in covered]
    if len(candidates) < drop:
        raise ProtocolError(
            f"ratio {r} would leave samples unobserved: the last view must drop {drop} "
            f"but only {len(candidates)} appear in earlier views"
        )
    dropped.append({candidates[i] for i in rng.choice(len(candidates), size=drop, replace=False)})

    out, retained = [], []
    for v, gone in zip(views, dropped):
        keep = [sid for sid in v.ids if sid not in gone]
        out.append(v.select(keep))
        retained.append(keep)
    pattern = MissingPattern(
        ratio=r,
        seed=seed,
        retained=retained,
        dropped=[[sid for sid in v.ids if sid in gone] for v, gone in zip(views, dropped)],
    )
    logger.bind(ratio=r, seed=seed, views=len(views), dropped_per_view=drop).debug("missing pattern applied")
    return out, pattern


def union_ids(views: Sequence[ViewBatch]) -> tuple:
    """Every sample id in first-appearance order across the views."""
    seen = dict()
    for v in views:
        for sid in v.ids:
            seen.setdefault(sid, None)
    return tuple(seen)


def fill_views(views: Sequence[ViewBatch], mode: str) -> List[ViewBatch]:
    """Complete every view over the union of ids with zeros or per-feature observed means."""
    if mode not in ("zero", "average"):
        raise ConfigurationError(f"unknown fill mode {mode!r}, expected zero or average")
    ids = union_ids(views)
    column = {sid: c for c, sid in enumerate(ids)}
    out = []
    for v in views:
        if mode == "zero":
            full = np.zeros((v.n_features, len(ids)))
        else:
            full = np.repeat(v.data.mean(axis=1, keepdims=True), len(ids), axis=1)
        full[:, [column[sid] for sid in v.ids]] = v.data
        out.append(ViewBatch(v.view_index, full, ids, v.name))
    return out


def solve_filled(
    views: Sequence[ViewBatch],
    mode: str,
    k: int,
    cfg: SolverConfig | None = None,
    on_view: Callable[[SolveDiagnostics], None] | None = None,
) -> ConsensusState:
    """Fill every view over the union of ids, then fuse the completed views in order."""
    return run_stream(fill_views(views, mode), k, cfg, on_view=on_view)


def run_fill_baseline(
    views: Sequence[ViewBatch],
    mode: str,
    k: int,
    cfg: SolverConfig | None = None,
    restarts: int = 50,
    seed: int = 0,
) -> Partition:
    return final_labels(solve_filled(views, mode, k, cfg), k, restarts, seed)


def canonical_order(state: ConsensusState, ids: Sequence) -> np.ndarray:
    """Consensus columns rearranged to follow `ids`."""
    return state.z[:, state.registry.positions(list(ids))]


@dataclass(frozen=True)
class MethodRun:
    method: str
    state: ConsensusState
    summary: RestartSummary
    seconds: float


def run_method(
    views: Sequence[ViewBatch],
    method: str,
    k: int,
    truth: Partition,
    cfg: SolverConfig | None = None,
    restarts: int = 50,
    seed: int = 0,
) -> MethodRun:
    """
    Run one method end to end and score every k-means restart against `truth`.

    `seconds` covers first view arrival through the last fusion; k-means is
    not included.
    """
    if method not in METHODS:
        raise ConfigurationError(f"unknown method {method!r}, expected one of {METHODS}")
    if truth.ids is None:
        raise ConfigurationError("ground truth must carry sample ids")
    start = time.perf_counter()
    if method == "fcmvc-iv":
        state = run_stream(views, k, cfg)
    else:
        state = solve_filled(views, FILL_MODES[method], k, cfg)
    seconds = time.perf_counter() - start
    points = unit_columns(canonical_order(state, truth.ids))
    summary = restart_reports(points, truth.labels, k, restarts, seed)
    return MethodRun(method=method, state=state, summary=summary, seconds=seconds)


def _row(run: MethodRun, ratio: float, rep: int, order: str | None = None) -> ExperimentRow:
    return ExperimentRow(
        method=run.method,
        ratio=ratio,
        rep=rep,
        order=order,
        best_acc=run.summary.best.acc,
        seconds=run.seconds,
        **run.summary.mean.model_dump(),
    )


def _metrics(row: ExperimentRow) -> MetricReport:
    return MetricReport(acc=row.acc, nmi=row.nmi, purity=row.purity, fscore=row.fscore)


def summarize(rows: Sequence[ExperimentRow]) -> ExperimentResult:
    """Mean and std per (method, ratio), then per method across the per-ratio means."""
    groups: dict[tuple[str, float], list[MetricReport]] = {}
    for row in rows:
        groups.setdefault((row.method, row.ratio), []).append(_metrics(row))

    summary = [
        MetricSummary(method=method, ratio=ratio, runs=len(reports), mean=mean_report(reports), std=std_report(reports))
        for (method, ratio), reports in groups.items()
    ]
    per_method: dict[str, list[MetricReport]] = {}
    for s in summary:
        per_method.setdefault(s.method, []).append(s.mean)
    aggregate = {
        method: {"mean": mean_report(means), "std": std_report(means)} for method, means in per_method.items()
    }
    return ExperimentResult(rows=list(rows), summary=summary, aggregate=aggregate)


def _fan_out(fn, cells: list, workers: int | None) -> list:
    workers = workers or config.num_workers
    if workers <= 1 or len(cells) <= 1:
        return [fn(c) for c in cells]
    with ThreadPoolExecutor(max_workers=workers) as pool:
        return list(pool.map(fn, cells))


def ratio_sweep(
    spec: SyntheticSpec,
    ratios: Sequence[float] = DEFAULT_RATIOS,
    reps: int = 10,
    cfg: SolverConfig | None = None,
    methods: Sequence[str] = ("fcmvc-iv",),
    restarts: int = 50,
    workers: int | None = None,
) -> ExperimentResult:
    """
    For every (ratio, repetition) draw a fresh missing pattern and run each
    method on it. All methods of a cell share the pattern.
    """
    if reps < 1:
        raise ConfigurationError(f"reps must be at least 1, got {reps}")
    for r in ratios:
        if not 0.0 <= r <= MAX_RATIO:
            raise ConfigurationError(f"missing ratio must lie in [0, {MAX_RATIO}], got {r}")
    unknown = [m for m in methods if m not in METHODS]
    if unknown or not methods:
        raise ConfigurationError(f"unknown methods {unknown}, expected a subset of {METHODS}")

    views, truth = generate_synthetic(spec)

    def run_cell(cell: tuple[float, int]) -> list[ExperimentRow]:
        ratio, rep = cell
        incomplete, _ = apply_missing(views, ratio, cell_seed(spec.seed, rep, _ratio_key(ratio)))
        rows = []
        for method in methods:
            run = run_method(incomplete, method, spec.k, truth, cfg, restarts, seed=spec.seed)
            rows.append(_row(run, ratio, rep))
            logger.bind(method=method, ratio=ratio, rep=rep, acc=run.summary.mean.acc).info("cell finished")
        return rows

    cells = [(ratio, rep) for ratio in ratios for rep in range(reps)]
    rows = [row for cell_rows in _fan_out(run_cell, cells, workers) for row in cell_rows]
    return summarize(rows)


def sample_orders(m: int, permutations: int, seed: int) -> List[tuple[int, ...]]:
    """`permutations` distinct view orders drawn without replacement from the m! orders."""
    total = math.factorial(m)
    if permutations < 1 or permutations > total:
        raise ConfigurationError(f"permutations must lie in [1, {total}] for {m} views, got {permutations}")
    rng = np.random.default_rng(seed)
    if m <= 7:
        every = list(itertools.permutations(range(m)))
        return [every[i] for i in rng.choice(total, size=permutations, replace=False)]
    picked: dict[tuple[int, ...], None] = {}
    while len(picked) < permutations:
        picked.setdefault(tuple(int(i) for i in rng.permutation(m)), None)
    return list(picked)


def format_order(order: Sequence[int]) -> str:
    return "-".join(str(i + 1) for i in order)


def order_sweep(
    views: Sequence[ViewBatch],
    k: int,
    truth: Partition,
    cfg: SolverConfig | None = None,
    permutations: int = 10,
    seed: int = 0,
    ratio: float = 0.0,
    restarts: int = 50,
    workers: int | None = None,
) -> List[MetricReport]:
    """
    Metrics of the full stream under sampled fusing orders, one report per
    order (in `sample_orders` order). With `ratio` > 0 the missing pattern is
    drawn after reordering so that the last arriving view is the constrained one.
    """
    orders = sample_orders(len(views), permutations, seed)

    def run_order(order: tuple[int, ...]) -> MetricReport:
        stream = [views[i] for i in order]
        if ratio > 0:
            stream, _ = apply_missing(stream, ratio, seed)
        run = run_method(stream, "fcmvc-iv", k, truth, cfg, restarts, seed)
        logger.bind(order=format_order(order), acc=run.summary.mean.acc).info("order finished")
        return run.summary.mean

    return _fan_out(run_order, orders, workers)


def scale_sweep(
    sizes: Sequence[int] = (2000, 4000, 8000),
    k: int = 10,
    d: int = 64,
    repeats: int = 5,
    seed: int = 0,
    iters: int = 10,
) -> ScaleResult:
    """
    Per-iteration wall time of integrate_view as n grows.

    Each size fuses a second complete view into a first-view state; the
    fastest of `repeats` timings is kept. Runs sequentially.
    """
    if len(sizes) < 2:
        raise ConfigurationError("scale sweep needs at least two sizes")
    if repeats < 1 or iters < 1:
        raise ConfigurationError("repeats and iters must be at least 1")
    cfg = SolverConfig(max_iters=iters, epsilon=1e-300, seed=seed)
    points = []
    for n in sorted(sizes):
        views, _ = generate_synthetic(SyntheticSpec(n=n, k=k, views=2, dims=[d, d], seed=seed))
        state = init_first_view(views[0], k, cfg)
        best, best_iters = math.inf, 0
        for _ in range(repeats):
            start = time.perf_counter()
            diag = integrate_view(state, views[1], cfg).last_diag
            per_iter = (time.perf_counter() - start) / diag.iters
            if per_iter < best:
                best, best_iters = per_iter, diag.iters
        points.append(ScalePoint(n=n, seconds_per_iter=best, iters=best_iters))
        logger.bind(n=n, seconds_per_iter=best).info("scale point measured")

    ns = np.array([p.n for p in points], dtype=float)
    ts = np.array([p.seconds_per_iter for p in points])
    slope = float(np.polyfit(np.log(ns), np.log(ts), 1)[0])
    ratios = [float(b / a) for a, b in zip(ts[:-1], ts[1:])]
    return ScaleResult(k=k, d=d, points=points, ratios=ratios, slope=slope)
