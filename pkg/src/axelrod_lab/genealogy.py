"""Ancestor tracing and descendant sets along a trajectory's arrow log.

The ancestor of (x, i) at time t is the unique vertex whose initial
feature-i state the cell carries: every active i-arrow into a vertex y
(whether or not it changed the state) resets y's ancestor to the source's
ancestor. Ancestor maps are therefore computed forward from the full
arrow log, which only the Harris engine provides; Gillespie logs contain
the effective arrows alone and induce a coarser map.

On the interval, active i-paths cannot cross, so the ancestor map is
monotone in the vertex and descendant sets are intervals. Those ordering
facts are asserted only on interval topology.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .engine import Trajectory
from .model import ModelParams


class GenealogyError(RuntimeError):
    """An ancestry invariant failed; indicates a construction bug."""


@dataclass(frozen=True)
class AncestorMap:
    """Per-vertex ancestor for one feature at one time."""

    feature: int  # 1-based
    time: float
    ancestors: np.ndarray  # (L,) int64

    def __getitem__(self, x: int) -> int:
        return int(self.ancestors[x])


@dataclass(frozen=True)
class DescendantSet:
    """Vertices whose feature-i ancestor at time t is the given vertex.

    On the interval the set is a contiguous (possibly empty) run,
    reported as [lo, hi] inclusive; lo > hi encodes the empty set.
    """

    vertex: int
    feature: int
    time: float
    lo: int
    hi: int

    @property
    def size(self) -> int:
        return max(0, self.hi - self.lo + 1)

    def members(self) -> range:
        return range(self.lo, self.hi + 1)


def _require_interval(params: ModelParams, what: str):
    if params.is_ring:
        raise ValueError(f"{what} requires interval topology")


def _ancestors_at(trajectory: Trajectory, i1: int, t: float) -> np.ndarray:
    """Forward pass over active i-arrows with time <= t."""
    p = trajectory.params
    if not 1 <= i1 <= p.F:
        raise ValueError(f"feature must lie in 1..{p.F}, got {i1}")
    if not 0 <= t <= max(trajectory.end_time, 0.0):
        raise ValueError(f"time {t} outside [0, {trajectory.end_time}]")
    anc = np.arange(p.L, dtype=np.int64)
    ev = trajectory.events
    sel = ev.active & (ev.feature == i1)
    times = ev.time[sel]
    src = ev.source[sel]
    dst = ev.target[sel]
    n = int(np.searchsorted(times, t, side="right"))
    for k in range(n):
        anc[dst[k]] = anc[src[k]]
    return anc


def ancestor(trajectory: Trajectory, x: int, i: int, t: float) -> int:
    """The unique origin vertex of the feature-i state at (x, t)."""
    return int(_ancestors_at(trajectory, i, t)[x])


def ancestry_profile(trajectory: Trajectory, i: int, t: float) -> AncestorMap:
    """Full ancestor map for feature i at time t, with invariants asserted:
    in-range entries, feature identity against the replayed state, and
    monotone non-crossing order (interval topology only)."""
    p = trajectory.params
    anc = _ancestors_at(trajectory, i, t)
    if anc.min() < 0 or anc.max() >= p.L:
        raise GenealogyError("ancestor out of vertex range")
    state_t = _feature_column_at(trajectory, i, t)
    initial = trajectory.initial.cultures[:, i - 1]
    if not np.array_equal(state_t, initial[anc]):
        raise GenealogyError("feature identity violated: state at t does not "
                             "equal the ancestor's initial state")
    if not p.is_ring and np.any(np.diff(anc) < 0):
        raise GenealogyError("ancestor map not monotone: active paths crossed")
    return AncestorMap(feature=i, time=t, ancestors=anc)


def _feature_column_at(trajectory: Trajectory, i1: int, t: float) -> np.ndarray:
    """Feature-i states of all vertices at time t (replayed column)."""
    col = trajectory.initial.cultures[:, i1 - 1].copy()
    ev = trajectory.events
    sel = ev.effective & (ev.feature == i1)
    times = ev.time[sel]
    src = ev.source[sel]
    dst = ev.target[sel]
    n = int(np.searchsorted(times, t, side="right"))
    for k in range(n):
        col[dst[k]] = col[src[k]]
    return col


def descendants(trajectory: Trajectory, x: int, i: int, t: float) -> DescendantSet:
    """Invert the ancestry profile at (i, t) for vertex x. Interval only."""
    _require_interval(trajectory.params, "descendants")
    profile = ancestry_profile(trajectory, i, t)
    where = np.flatnonzero(profile.ancestors == x)
    if len(where) == 0:
        return DescendantSet(vertex=x, feature=i, time=t, lo=0, hi=-1)
    lo, hi = int(where[0]), int(where[-1])
    if hi - lo + 1 != len(where):
        raise GenealogyError(f"descendant set of {x} is not an interval")
    return DescendantSet(vertex=x, feature=i, time=t, lo=lo, hi=hi)


def descendant_counts(trajectory: Trajectory, t: float) -> np.ndarray:
    """Counts M_t(x, i) for all vertices and features in one pass,
    shape (F, L); column sums over x equal L for every feature."""
    p = trajectory.params
    ev = trajectory.events
    anc = np.tile(np.arange(p.L, dtype=np.int64), (p.F, 1))
    n = int(np.searchsorted(ev.time, t, side="right"))
    active, feature = ev.active, ev.feature
    src, dst = ev.source, ev.target
    for k in range(n):
        if active[k]:
            i = feature[k] - 1
            anc[i, dst[k]] = anc[i, src[k]]
    out = np.zeros((p.F, p.L), np.int64)
    for i in range(p.F):
        out[i] = np.bincount(anc[i], minlength=p.L)
    return out


def first_hit_time(trajectory: Trajectory, z: int, i: int, target: int):
    """Earliest time at which z is the feature-i ancestor of ``target``,
    or None if that never happens within the trajectory. Interval only."""
    p = trajectory.params
    _require_interval(p, "first_hit_time")
    if z == target:
        return 0.0
    anc = np.arange(p.L, dtype=np.int64)
    ev = trajectory.events
    sel = ev.active & (ev.feature == i)
    times = ev.time[sel]
    src = ev.source[sel]
    dst = ev.target[sel]
    for k in range(len(times)):
        anc[dst[k]] = anc[src[k]]
        if dst[k] == target and anc[target] == z:
            return float(times[k])
    return None


def ancestor_path_range(trajectory: Trajectory, i: int, target: int) -> int:
    """Largest |a_s(target, i) - target| over all event times s; the radius
    the ancestry of ``target`` ever reaches within the trajectory."""
    p = trajectory.params
    anc = np.arange(p.L, dtype=np.int64)
    ev = trajectory.events
    sel = ev.active & (ev.feature == i)
    src = ev.source[sel]
    dst = ev.target[sel]
    radius = 0
    for k in range(len(src)):
        anc[dst[k]] = anc[src[k]]
        if dst[k] == target:
            r = abs(int(anc[target]) - target)
            if r > radius:
                radius = r
    return radius


def verify_genealogy(trajectory: Trajectory) -> dict:
    """Walk the whole log once, asserting after every active arrow that the
    updated vertex still satisfies feature identity and (on intervals)
    local monotonicity, and at the end that descendant sets partition the
    vertex set into intervals. Returns summary counts.

    Local monotonicity after each neighbour-copy update implies the global
    non-crossing order, so this is an exact exhaustive check.
    """
    p = trajectory.params
    L, F = p.L, p.F
    anc = np.tile(np.arange(L, dtype=np.int64), (F, 1))
    col = trajectory.initial.cultures.T.copy()  # (F, L) working state
    init = trajectory.initial.cultures.T
    ev = trajectory.events
    n_checked = 0
    for k in range(len(ev)):
        if not ev.active[k]:
            continue
        i = int(ev.feature[k]) - 1
        x = int(ev.source[k])
        y = int(ev.target[k])
        if ev.effective[k]:
            col[i, y] = col[i, x]
        anc[i, y] = anc[i, x]
        a = anc[i, y]
        if col[i, y] != init[i, a]:
            raise GenealogyError(f"event {k}: feature identity broken at vertex {y}")
        if not p.is_ring:
            if y > 0 and anc[i, y - 1] > a:
                raise GenealogyError(f"event {k}: crossing at vertices {y - 1},{y}")
            if y < L - 1 and anc[i, y + 1] < a:
                raise GenealogyError(f"event {k}: crossing at vertices {y},{y + 1}")
        n_checked += 1
    for i in range(F):
        counts = np.bincount(anc[i], minlength=L)
        if counts.sum() != L:
            raise GenealogyError("descendant counts do not sum to L")
        if not p.is_ring:
            # each nonempty descendant set must be one contiguous run
            owners = anc[i]
            runs = 1 + int(np.count_nonzero(np.diff(owners)))
            if runs != int(np.count_nonzero(counts)):
                raise GenealogyError(f"descendant sets of feature {i + 1} are not intervals")
    return {"arrows_checked": n_checked, "n_events": len(ev)}


def write_ancestry_csv(trajectory: Trajectory, times, path) -> None:
    """CSV export: ancestor of every vertex per feature at each snapshot
    time, then final descendant interval bounds and sizes per vertex."""
    import csv as _csv

    p = trajectory.params
    with open(path, "w", newline="") as fh:
        fh.write("# axelrod-lab ancestry v1\n")
        w = _csv.writer(fh)
        w.writerow(["snapshot_time", "feature", "vertex", "ancestor"])
        for t in times:
            for i in range(1, p.F + 1):
                profile = ancestry_profile(trajectory, i, float(t))
                for x in range(p.L):
                    w.writerow([repr(float(t)), i, x, profile[x]])
        w.writerow([])
        w.writerow(["feature", "vertex", "final_size", "interval_lo", "interval_hi"])
        tend = trajectory.end_time
        for i in range(1, p.F + 1):
            for x in range(p.L):
                d = descendants(trajectory, x, i, tend) if not p.is_ring else None
                if d is not None:
                    w.writerow([i, x, d.size, d.lo, d.hi])
