from dataclasses import dataclass, field
from typing import Iterable, Sequence

import numpy as np
from loguru import logger
from ordered_set import OrderedSet

from fcmvc.errors import DataValidationError
from fcmvc.models import SampleId
from fcmvc.utils.linalg import check_finite


@dataclass(frozen=True)
class ViewBatch:
    """
    One arriving view: a d_t x n_t feature matrix whose columns are samples,
    and the global id of every column.
    """

    view_index: int
    data: np.ndarray
    ids: tuple
    name: str | None = None

    def __post_init__(self):
        data = check_finite(self.data, f"view {self.view_index} data").copy()
        data.setflags(write=False)
        ids = tuple(i.item() if isinstance(i, np.generic) else i for i in self.ids)
        if any(i is None or i == "" for i in ids):
            raise DataValidationError(f"view {self.view_index} contains an empty sample id")
        if len(ids) != data.shape[1]:
            raise DataValidationError(
                f"view {self.view_index} has {data.shape[1]} columns but {len(ids)} ids"
            )
        if len(set(ids)) != len(ids):
            seen, dupes = set(), []
            for i in ids:
                if i in seen:
                    dupes.append(i)
                seen.add(i)
            raise DataValidationError(f"view {self.view_index} has duplicate ids: {dupes[:10]}")
        object.__setattr__(self, "data", data)
        object.__setattr__(self, "ids", ids)

    @property
    def n_samples(self) -> int:
        return self.data.shape[1]

    @property
    def n_features(self) -> int:
        return self.data.shape[0]

    def select(self, keep: Iterable[SampleId]) -> "ViewBatch":
        """Sub-view with the given ids, in the given order."""
        column = {sid: c for c, sid in enumerate(self.ids)}
        keep = list(keep)
        try:
            cols = [column[sid] for sid in keep]
        except KeyError as e:
            raise DataValidationError(f"id {e.args[0]!r} is not in view {self.view_index}") from None
        return ViewBatch(self.view_index, self.data[:, cols], tuple(keep), self.name)

    def with_index(self, view_index: int) -> "ViewBatch":
        return ViewBatch(view_index, self.data, self.ids, self.name)


class SampleRegistry:
    """
    Append-only ordered union of every sample id seen so far.

    Positions are consensus column indices and never move once assigned.
    Instances are snapshots: `extend` returns a new registry.
    """

    def __init__(self, ids: Iterable[SampleId] = ()):
        ids = list(ids)
        items = OrderedSet(ids)
        if len(items) != len(ids):
            raise DataValidationError("registry ids must be unique")
        self._items = items

    def __len__(self) -> int:
        return len(self._items)

    def __contains__(self, sid) -> bool:
        return sid in self._items

    def __iter__(self):
        return iter(self._items)

    def __eq__(self, other) -> bool:
        return isinstance(other, SampleRegistry) and list(self._items) == list(other._items)

    def __repr__(self) -> str:
        return f"SampleRegistry(n={len(self)})"

    @property
    def ids(self) -> tuple:
        return tuple(self._items)

    def position(self, sid: SampleId) -> int:
        try:
            return self._items.index(sid)
        except KeyError:
            raise DataValidationError(f"id {sid!r} is not registered") from None

    def positions(self, ids: Sequence[SampleId]) -> np.ndarray:
        return np.fromiter((self.position(sid) for sid in ids), dtype=np.intp, count=len(ids))

    def extend(self, ids: Iterable[SampleId]) -> "SampleRegistry":
        new = SampleRegistry.__new__(SampleRegistry)
        new._items = OrderedSet(self._items)
        for sid in ids:
            if sid not in new._items:
                new._items.add(sid)
        return new


class IndicatorPair:
    """
    The selection matrices M1 (n_union x n_t) and M2 (n_union x n_prev),
    stored as the registry row hit by each of their columns.

    Products are row scatters (M @ Y) and column gathers (Z @ M), so no
    n_union-sized dense matrix is ever formed.
    """

    def __init__(self, m1_rows: np.ndarray, m2_rows: np.ndarray, n_union: int):
        self.m1_rows = np.asarray(m1_rows, dtype=np.intp)
        self.m2_rows = np.asarray(m2_rows, dtype=np.intp)
        self.n_union = int(n_union)

    @property
    def n_view(self) -> int:
        return len(self.m1_rows)

    @property
    def n_prev(self) -> int:
        return len(self.m2_rows)

    def lift_view(self, y: np.ndarray) -> np.ndarray:
        """M1 @ y for y of shape (n_t, c)."""
        out = np.zeros((self.n_union, y.shape[1]))
        out[self.m1_rows] = y
        return out

    def lift_prev(self, y: np.ndarray) -> np.ndarray:
        """M2 @ y for y of shape (n_prev, c)."""
        out = np.zeros((self.n_union, y.shape[1]))
        out[self.m2_rows] = y
        return out

    def restrict_view(self, z: np.ndarray) -> np.ndarray:
        """z @ M1 for z of shape (k, n_union)."""
        return z[:, self.m1_rows]

    def restrict_prev(self, z: np.ndarray) -> np.ndarray:
        """z @ M2 for z of shape (k, n_union)."""
        return z[:, self.m2_rows]

    def absent_mask(self) -> np.ndarray:
        """Registry rows the current view does not observe."""
        mask = np.ones(self.n_union, dtype=bool)
        mask[self.m1_rows] = False
        return mask

    def to_dense(self) -> "DenseIndicatorPair":
        m1 = np.zeros((self.n_union, self.n_view))
        m1[self.m1_rows, np.arange(self.n_view)] = 1.0
        m2 = np.zeros((self.n_union, self.n_prev))
        m2[self.m2_rows, np.arange(self.n_prev)] = 1.0
        return DenseIndicatorPair(m1, m2)


@dataclass
class DenseIndicatorPair:
    """Explicit M1/M2 with the IndicatorPair product interface (reference path)."""

    m1: np.ndarray
    m2: np.ndarray
    n_union: int = field(init=False)

    def __post_init__(self):
        self.n_union = self.m1.shape[0]

    @property
    def n_view(self) -> int:
        return self.m1.shape[1]

    @property
    def n_prev(self) -> int:
        return self.m2.shape[1]

    def lift_view(self, y: np.ndarray) -> np.ndarray:
        return self.m1 @ y

    def lift_prev(self, y: np.ndarray) -> np.ndarray:
        return self.m2 @ y

    def restrict_view(self, z: np.ndarray) -> np.ndarray:
        return z @ self.m1

    def restrict_prev(self, z: np.ndarray) -> np.ndarray:
        return z @ self.m2

    def absent_mask(self) -> np.ndarray:
        return self.m1.sum(axis=1) == 0


def register_view(reg: SampleRegistry, batch: ViewBatch) -> tuple[SampleRegistry, IndicatorPair]:
    """
    Append the batch's unseen ids (in batch order) and build M1/M2 against
    the updated registry.
    """
    updated = reg.extend(batch.ids)
    pair = IndicatorPair(
        m1_rows=updated.positions(batch.ids),
        m2_rows=np.arange(len(reg), dtype=np.intp),
        n_union=len(updated),
    )
    logger.bind(
        view_index=batch.view_index,
        n_view=batch.n_samples,
        n_prev=len(reg),
        n_union=len(updated),
    ).debug("view registered")
    return updated, pair


@dataclass(frozen=True)
class CoverageReport:
    uncovered: tuple = ()

    @property
    def empty(self) -> bool:
        return not self.uncovered


def coverage_check(reg: SampleRegistry, views: Sequence[ViewBatch]) -> CoverageReport:
    """Registry ids observed by none of `views`."""
    seen = set()
    for v in views:
        seen.update(v.ids)
    return CoverageReport(uncovered=tuple(sid for sid in reg if sid not in seen))
