"""
Continual consensus factorization over incomplete views.

For view t the solver minimizes

    1/2 ||X - H Z M1||_F^2 - Tr((Z M2)^T W Z_prev)
    s.t. Z Z^T = I_k,  H^T H = I_k,  W^T W = I_k

by alternating three trace maximizations (Z, then W, then H), each solved
with `solve_trace_max`. Only Z is carried from one view to the next.
"""
import base64
import binascii
import hashlib
import time
from dataclasses import dataclass
from typing import Callable, Sequence

import numpy as np
from loguru import logger

from fcmvc.errors import CheckpointError, ConfigurationError, DataValidationError
from fcmvc.models import (
    CHECKPOINT_FORMAT_VERSION,
    CheckpointDocument,
    SolveDiagnostics,
    SolverConfig,
)
from fcmvc.services.labeling import Partition, best_of_restarts, unit_columns
from fcmvc.services.registry import (
    DenseIndicatorPair,
    IndicatorPair,
    SampleRegistry,
    ViewBatch,
    register_view,
)
from fcmvc.utils.linalg import (
    orthonormality_error,
    random_orthonormal,
    solve_trace_max,
    thin_svd,
    trace_inner,
)

Indicators = IndicatorPair | DenseIndicatorPair

ORTHONORMAL_TOL = 1e-8


@dataclass(frozen=True)
class ConsensusState:
    z: np.ndarray
    registry: SampleRegistry
    k: int
    views_seen: int
    last_diag: SolveDiagnostics
    history: tuple = ()

    def __post_init__(self):
        z = np.ascontiguousarray(self.z, dtype=np.float64).copy()
        z.setflags(write=False)
        if z.shape != (self.k, len(self.registry)):
            raise DataValidationError(
                f"consensus matrix shape {z.shape} does not match k={self.k}, "
                f"registry size {len(self.registry)}"
            )
        if self.k > len(self.registry):
            raise ConfigurationError(f"k={self.k} exceeds the {len(self.registry)} registered samples")
        object.__setattr__(self, "z", z)

    @property
    def n_union(self) -> int:
        return len(self.registry)


def _check_shapes(x, h=None, w=None, z=None, z_prev=None, ind: Indicators | None = None):
    d, n_t = x.shape
    if ind is not None and ind.n_view != n_t:
        raise DataValidationError(f"view has {n_t} columns but M1 has {ind.n_view}")
    if h is not None and h.shape[0] != d:
        raise DataValidationError(f"H has {h.shape[0]} rows, view has {d} features")
    k = h.shape[1] if h is not None else (z.shape[0] if z is not None else None)
    if w is not None and w.shape != (k, k):
        raise DataValidationError(f"W must be {k} x {k}, got {w.shape}")
    if z_prev is not None:
        if z_prev.shape[0] != k:
            raise DataValidationError(f"Z_prev has {z_prev.shape[0]} rows, expected {k}")
        if ind is not None and z_prev.shape[1] != ind.n_prev:
            raise DataValidationError(f"Z_prev has {z_prev.shape[1]} columns but M2 has {ind.n_prev}")
    if z is not None:
        if z.shape[0] != k:
            raise DataValidationError(f"Z has {z.shape[0]} rows, expected {k}")
        if ind is not None and z.shape[1] != ind.n_union:
            raise DataValidationError(f"Z has {z.shape[1]} columns but the registry has {ind.n_union}")


def init_h(d_t: int, k: int) -> np.ndarray:
    """Base matrix with I_k in its first k rows and zeros below."""
    if k < 1 or d_t < k:
        raise ConfigurationError(f"a view with {d_t} features cannot carry k={k} clusters")
    return np.eye(d_t, k)


def lower_bound(n_prev: int, k: int) -> float:
    if n_prev < 0 or k < 1:
        raise ConfigurationError(f"invalid bound arguments n_prev={n_prev}, k={k}")
    return -float(np.sqrt(n_prev)) * k ** 1.5


def scale_view(x: np.ndarray, k: int, n_union: int) -> np.ndarray:
    """Rescale so that ||x||_F^2 = k * n_t / n_union (the column scale of a row-orthonormal Z)."""
    norm = np.linalg.norm(x)
    if norm == 0.0:
        return x
    return x * (np.sqrt(k * x.shape[1] / n_union) / norm)


def update_z(
    x: np.ndarray,
    h: np.ndarray,
    w: np.ndarray,
    z_prev: np.ndarray,
    ind: Indicators,
    z_current: np.ndarray | None = None,
) -> np.ndarray:
    """
    Maximize Tr(Z A), A = M1 X^T H + M2 Z_prev^T W^T, over row-orthonormal Z.

    When `z_current` is given, its columns for samples the view does not
    observe are added to A. That makes the step a majorize-minimize update of
    the full objective (whose 1/2||Z M1||^2 part is not constant for
    incomplete views) and is a no-op for complete views.
    """
    _check_shapes(x, h=h, w=w, z_prev=z_prev, ind=ind)
    k = h.shape[1]
    if ind.n_union < k:
        raise ConfigurationError(f"k={k} exceeds the {ind.n_union} registered samples")
    a = ind.lift_view(x.T @ h) + ind.lift_prev(z_prev.T @ w.T)
    if z_current is not None:
        _check_shapes(x, h=h, z=z_current, ind=ind)
        absent = ind.absent_mask()
        a[absent] += z_current.T[absent]
    return solve_trace_max(a).T


def update_w(z: np.ndarray, z_prev: np.ndarray, ind: Indicators) -> np.ndarray:
    """Rotation maximizing Tr(W^T B), B = Z M2 Z_prev^T."""
    if z.shape[1] != ind.n_union or z_prev.shape != (z.shape[0], ind.n_prev):
        raise DataValidationError(
            f"inconsistent shapes Z {z.shape}, Z_prev {z_prev.shape} for "
            f"n_union={ind.n_union}, n_prev={ind.n_prev}"
        )
    b = ind.restrict_prev(z) @ z_prev.T
    return solve_trace_max(b)


def update_h(x: np.ndarray, z: np.ndarray, ind: Indicators) -> np.ndarray:
    """Base matrix maximizing Tr(H^T C), C = X M1^T Z^T."""
    _check_shapes(x, z=z, ind=ind)
    if x.shape[0] < z.shape[0]:
        raise ConfigurationError(f"a view with {x.shape[0]} features cannot carry k={z.shape[0]} clusters")
    c = x @ ind.restrict_view(z).T
    return solve_trace_max(c)


def objective(x, h, z, w, z_prev, ind: Indicators) -> float:
    _check_shapes(x, h=h, w=w, z=z, z_prev=z_prev, ind=ind)
    residual = x - h @ ind.restrict_view(z)
    alignment = trace_inner(ind.restrict_prev(z), w @ z_prev)
    return 0.5 * float(np.einsum("ij,ij->", residual, residual)) - alignment


def _complete_orthonormal_rows(vt: np.ndarray, k: int, rng: np.random.Generator) -> np.ndarray:
    """Extend the r orthonormal rows of `vt` to k rows with a seeded complement."""
    r, n = vt.shape
    g = rng.standard_normal((n, k - r))
    for _ in range(2):
        g -= vt.T @ (vt @ g)
    q, _ = np.linalg.qr(g)
    return np.vstack([vt, q.T])


def init_first_view(batch: ViewBatch, k: int, cfg: SolverConfig | None = None) -> ConsensusState:
    """Z1 from the top-k right singular vectors of X1 (or a seeded random draw)."""
    cfg = cfg or SolverConfig()
    start = time.time()
    x = batch.data
    n = batch.n_samples
    if k < 1 or k > n:
        raise ConfigurationError(f"k={k} must be between 1 and the {n} samples of the first view")

    rng = np.random.default_rng(cfg.seed)
    if cfg.init == "random":
        z = random_orthonormal(n, k, rng).T
    else:
        svd = thin_svd(x)
        if len(svd.sigma) >= k:
            z = svd.vt[:k]
        else:
            logger.bind(d=batch.n_features, k=k).warning("first view has fewer features than k, completing Z1")
            z = _complete_orthonormal_rows(svd.vt, k, rng)

    if cfg.scaling == "sample":
        x = scale_view(x, k, n)
    h = solve_trace_max(x @ z.T) if x.shape[0] >= k else None
    trace = [] if h is None else [0.5 * float(np.linalg.norm(x - h @ z) ** 2)]

    diag = SolveDiagnostics(
        view_index=batch.view_index,
        objective_trace=trace,
        iters=0,
        converged=True,
        lower_bound=0.0,
        n_union=n,
        elapsed_seconds=time.time() - start,
    )
    logger.bind(view_index=batch.view_index, n=n, k=k, init=cfg.init).info("first view initialized")
    return ConsensusState(
        z=z,
        registry=SampleRegistry(batch.ids),
        k=k,
        views_seen=1,
        last_diag=diag,
        history=(diag,),
    )


def integrate_view(
    state: ConsensusState,
    batch: ViewBatch,
    cfg: SolverConfig | None = None,
    dense: bool = False,
) -> ConsensusState:
    """
    Fold one new view into the consensus matrix and return the next state.

    `dense` routes every M1/M2 product through explicit matrices; it is the
    reference path and costs O(n^2) memory.
    """
    cfg = cfg or SolverConfig()
    k = state.k
    if batch.view_index != state.views_seen + 1:
        raise ConfigurationError(
            f"expected view {state.views_seen + 1}, got view {batch.view_index}"
        )
    h = init_h(batch.n_features, k)
    start = time.time()

    registry, ind = register_view(state.registry, batch)
    if dense:
        ind = ind.to_dense()
    x = batch.data
    if cfg.scaling == "sample":
        x = scale_view(x, k, ind.n_union)
    z_prev = state.z
    w = np.eye(k)
    z = None

    context_logger = logger.bind(
        view_index=batch.view_index, n_view=batch.n_samples, n_union=ind.n_union, k=k
    )
    trace: list[float] = []
    converged = False
    for i in range(cfg.max_iters):
        z = update_z(x, h, w, z_prev, ind, z_current=z)
        w = update_w(z, z_prev, ind)
        h = update_h(x, z, ind)
        obj = objective(x, h, z, w, z_prev, ind)
        trace.append(obj)
        if len(trace) > 1:
            change = abs(trace[-2] - obj) / max(abs(obj), 1e-12)
            context_logger.bind(iteration=i + 1, objective=obj, change=change).debug("inner iteration")
            if change <= cfg.epsilon:
                converged = True
                break
        else:
            context_logger.bind(iteration=1, objective=obj).debug("inner iteration")

    diag = SolveDiagnostics(
        view_index=batch.view_index,
        objective_trace=trace,
        iters=len(trace),
        converged=converged,
        lower_bound=lower_bound(ind.n_prev, k),
        n_union=ind.n_union,
        elapsed_seconds=time.time() - start,
    )
    context_logger.bind(
        iters=diag.iters,
        converged=converged,
        objective=trace[-1],
        orthonormality=orthonormality_error(z, rows=True),
        elapsed=diag.elapsed_seconds,
    ).info("view integrated")
    return ConsensusState(
        z=z,
        registry=registry,
        k=k,
        views_seen=state.views_seen + 1,
        last_diag=diag,
        history=state.history + (diag,),
    )


def run_stream(
    batches: Sequence[ViewBatch],
    k: int,
    cfg: SolverConfig | None = None,
    dense: bool = False,
    on_view: Callable[[SolveDiagnostics], None] | None = None,
) -> ConsensusState:
    """
    Fuse views in arrival order, reassigning view indices 1..m.

    `on_view` receives each view's diagnostics as soon as that view is done.
    """
    if not batches:
        raise ConfigurationError("at least one view is required")
    batches = [b if b.view_index == t else b.with_index(t) for t, b in enumerate(batches, start=1)]
    state = init_first_view(batches[0], k, cfg)
    if on_view:
        on_view(state.last_diag)
    for batch in batches[1:]:
        state = integrate_view(state, batch, cfg, dense=dense)
        if on_view:
            on_view(state.last_diag)
    return state


def final_labels(state: ConsensusState, k: int, restarts: int = 50, seed: int = 0) -> Partition:
    """
    k-means on the unit-normalized columns of Z; the restart with the lowest
    inertia wins.

    Samples seen by different numbers of views end up with columns of
    different length along the same cluster direction, so only directions
    are clustered.
    """
    partition = best_of_restarts(unit_columns(state.z), k, restarts, seed)
    return partition.with_ids(state.registry.ids)


def state_to_document(state: ConsensusState) -> CheckpointDocument:
    payload = np.ascontiguousarray(state.z, dtype="<f8").tobytes()
    return CheckpointDocument(
        format_version=CHECKPOINT_FORMAT_VERSION,
        k=state.k,
        ids=list(state.registry.ids),
        z_shape=list(state.z.shape),
        z_b64=base64.b64encode(payload).decode("ascii"),
        z_sha256=hashlib.sha256(payload).hexdigest(),
        views_seen=state.views_seen,
        objective_trace=list(state.last_diag.objective_trace),
        last_diag=state.last_diag,
    )


def state_from_document(doc: CheckpointDocument) -> ConsensusState:
    try:
        payload = base64.b64decode(doc.z_b64, validate=True)
    except (binascii.Error, ValueError) as e:
        raise CheckpointError(f"checkpoint matrix payload is not valid base64: {e}") from None
    if hashlib.sha256(payload).hexdigest() != doc.z_sha256:
        raise CheckpointError("checkpoint matrix payload does not match its digest")
    k, n = doc.z_shape if len(doc.z_shape) == 2 else (None, None)
    if k != doc.k or n != len(doc.ids) or len(payload) != 8 * doc.k * len(doc.ids):
        raise CheckpointError(
            f"checkpoint shape {doc.z_shape} inconsistent with k={doc.k}, {len(doc.ids)} ids"
        )
    z = np.frombuffer(payload, dtype="<f8").reshape(k, n)
    if orthonormality_error(z, rows=True) > ORTHONORMAL_TOL:
        raise CheckpointError("checkpoint matrix rows are not orthonormal")
    try:
        registry = SampleRegistry(doc.ids)
    except DataValidationError as e:
        raise CheckpointError(f"checkpoint registry is invalid: {e}") from None

    diag = doc.last_diag or SolveDiagnostics(
        view_index=doc.views_seen,
        objective_trace=doc.objective_trace,
        iters=len(doc.objective_trace),
        n_union=n,
    )
    return ConsensusState(
        z=z,
        registry=registry,
        k=doc.k,
        views_seen=doc.views_seen,
        last_diag=diag,
        history=(diag,),
    )
