"""The coupled system of annihilating-coalescing random walks.

A particle sits at (edge u, level i) exactly when the two endpoint
vertices of u disagree on feature i; zeta(u) counts the particles on u.
An edge holding all F particles is a blockade: it is frozen (the vertices
share nothing, so they never interact) until a particle jumps onto it.
Each particle on an edge holding j particles jumps at rate 1/j - 1/F,
left or right with probability 1/2.

``track`` processes a trajectory's effective events in order, moving
particles incrementally and classifying every landing on an occupied cell
as a collision: annihilation when the destination cell is empty right
after the event, coalescence when it stays occupied. On the interval a
particle whose jump leaves the lattice simply exits (destination edge -1
in the move stream).
"""

from __future__ import annotations

import csv
from dataclasses import dataclass, field
from fractions import Fraction
from typing import NamedTuple

import numpy as np

from .engine import Trajectory
from .model import Configuration, ModelParams
from .stats import wilson_interval

ANNIHILATION = 0
COALESCENCE = 1
BLOCKADE_FORMED = 0
BLOCKADE_DESTROYED = 1

COLLISIONS_FORMAT_TAG = "axelrod-lab collisions v1"
SPACETIME_FORMAT_TAG = "axelrod-lab spacetime v1"


class CouplingError(RuntimeError):
    """Incremental particle field diverged from the one derived from the
    configuration; indicates an engine or tracker bug."""


class CollisionRecord(NamedTuple):
    time: float
    edge_from: int
    edge_to: int
    feature: int  # 1-based
    outcome: str  # "annihilation" or "coalescence"
    target_was_blockade: bool


class BlockadeEvent(NamedTuple):
    time: float
    edge: int
    kind: str  # "formed" or "destroyed"


@dataclass(frozen=True)
class ParticleField:
    """Occupancy xi[(edge, level)] in {0,1} and per-edge counts zeta."""

    xi: np.ndarray     # (E, F) uint8
    zeta: np.ndarray   # (E,) int64

    def __post_init__(self):
        if not np.array_equal(self.xi.sum(axis=1), self.zeta):
            raise CouplingError("zeta does not match per-level occupancy")

    @property
    def n_particles(self) -> int:
        return int(self.zeta.sum())

    def blockade_mask(self) -> np.ndarray:
        return self.zeta == self.xi.shape[1]

    def __eq__(self, other):
        return (isinstance(other, ParticleField)
                and np.array_equal(self.xi, other.xi)
                and np.array_equal(self.zeta, other.zeta))


def derive_particles(config: Configuration) -> ParticleField:
    """Particle field read off a configuration: a particle at (u, i) iff the
    endpoints of edge u disagree on feature i."""
    p = config.params
    c = config.cultures
    if p.is_ring:
        xi = (c != np.roll(c, -1, axis=0)).astype(np.uint8)
    else:
        xi = (c[:-1] != c[1:]).astype(np.uint8)
    return ParticleField(xi=xi, zeta=xi.sum(axis=1).astype(np.int64))


def jump_rate(j: int, F: int) -> Fraction:
    """Per-particle jump rate on an edge holding j of F possible particles:
    (1 - j/F) / j, exactly. Zero for a blockade (j = F)."""
    if not 1 <= j <= F:
        raise ValueError(f"particle count j must lie in 1..{F}, got {j}")
    return Fraction(F - j, j * F)


@dataclass
class WalkTrace:
    """Everything ``track`` extracts from one trajectory."""

    params: ModelParams
    initial_zeta: np.ndarray
    final_field: ParticleField
    # particle moves: (time, feature 1-based, source edge, dest edge or -1 for exits)
    move_time: np.ndarray = field(default_factory=lambda: np.empty(0))
    move_feature: np.ndarray = field(default_factory=lambda: np.empty(0, np.int16))
    move_from: np.ndarray = field(default_factory=lambda: np.empty(0, np.int32))
    move_to: np.ndarray = field(default_factory=lambda: np.empty(0, np.int32))
    # collisions
    col_time: np.ndarray = field(default_factory=lambda: np.empty(0))
    col_from: np.ndarray = field(default_factory=lambda: np.empty(0, np.int32))
    col_to: np.ndarray = field(default_factory=lambda: np.empty(0, np.int32))
    col_feature: np.ndarray = field(default_factory=lambda: np.empty(0, np.int16))
    col_outcome: np.ndarray = field(default_factory=lambda: np.empty(0, np.uint8))
    col_target_blockade: np.ndarray = field(default_factory=lambda: np.empty(0, np.bool_))
    # blockade formation/destruction
    blk_time: np.ndarray = field(default_factory=lambda: np.empty(0))
    blk_edge: np.ndarray = field(default_factory=lambda: np.empty(0, np.int32))
    blk_kind: np.ndarray = field(default_factory=lambda: np.empty(0, np.uint8))
    # zeta time series: one (time, edge, zeta_after) entry per changed edge
    zs_time: np.ndarray = field(default_factory=lambda: np.empty(0))
    zs_edge: np.ndarray = field(default_factory=lambda: np.empty(0, np.int32))
    zs_zeta: np.ndarray = field(default_factory=lambda: np.empty(0, np.int16))

    @property
    def n_collisions(self) -> int:
        return len(self.col_time)

    def collisions(self) -> list[CollisionRecord]:
        out = []
        for k in range(len(self.col_time)):
            out.append(CollisionRecord(
                float(self.col_time[k]), int(self.col_from[k]), int(self.col_to[k]),
                int(self.col_feature[k]),
                "annihilation" if self.col_outcome[k] == ANNIHILATION else "coalescence",
                bool(self.col_target_blockade[k]),
            ))
        return out

    def blockade_events(self) -> list[BlockadeEvent]:
        return [
            BlockadeEvent(float(self.blk_time[k]), int(self.blk_edge[k]),
                          "formed" if self.blk_kind[k] == BLOCKADE_FORMED else "destroyed")
            for k in range(len(self.blk_time))
        ]

    def count_deltas(self) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
        """Merged per-feature particle count changes as (times, features,
        deltas), time-ordered. Moves contribute 0 (dropped), exits -1,
        coalescences -1, annihilations -2; there is no other change."""
        exit_mask = self.move_to == -1
        t = np.concatenate([self.move_time[exit_mask], self.col_time])
        f = np.concatenate([self.move_feature[exit_mask], self.col_feature])
        d = np.concatenate([
            np.full(int(exit_mask.sum()), -1, np.int64),
            np.where(self.col_outcome == ANNIHILATION, -2, -1).astype(np.int64),
        ])
        order = np.argsort(t, kind="stable")
        return t[order], f[order], d[order]


def _other_neighbor(params: ModelParams, y: int, x: int):
    """Vertex on the far side of y coming from x, or None at an interval end."""
    y2 = y + (y - x)
    if params.is_ring:
        return y2 % params.L
    return y2 if 0 <= y2 < params.L else None


def track(trajectory: Trajectory, check_every: int = 10_000) -> WalkTrace:
    """Derive the particle dynamics from a trajectory.

    Processes effective events in order and cross-checks the incremental
    field against ``derive_particles`` of the replayed configuration every
    ``check_every`` events and at the end (CouplingError on divergence).
    """
    p = trajectory.params
    F, L = p.F, p.L
    ring = p.is_ring
    cfg = trajectory.initial.cultures.copy()
    fld = derive_particles(trajectory.initial)
    xi = fld.xi.copy()
    zeta = fld.zeta.copy()
    initial_zeta = zeta.copy()

    mv_t, mv_i, mv_from, mv_to = [], [], [], []
    co_t, co_from, co_to, co_i, co_out, co_blk = [], [], [], [], [], []
    bl_t, bl_e, bl_k = [], [], []
    zs_t, zs_e, zs_z = [], [], []

    ev = trajectory.events
    times, sources, targets = ev.time, ev.source, ev.target
    features, effectives = ev.feature, ev.effective
    n_since_check = 0
    for k in range(len(ev)):
        if not effectives[k]:
            continue
        t = float(times[k])
        x = int(sources[k])
        y = int(targets[k])
        i1 = int(features[k])
        i = i1 - 1
        u = p.edge_between(x, y)
        if xi[u, i] != 1:
            raise CouplingError(f"event {k}: effective copy across edge {u} "
                                f"level {i1} with no particle present")
        if zeta[u] == F:
            raise CouplingError(f"event {k}: effective copy out of a blockade edge {u}")
        old = cfg[y, i]
        new = cfg[x, i]
        if old == new:
            raise CouplingError(f"event {k}: effective flag but endpoints agree")
        cfg[y, i] = new
        xi[u, i] = 0
        zeta[u] -= 1
        zs_t.append(t); zs_e.append(u); zs_z.append(zeta[u])

        y2 = _other_neighbor(p, y, x)
        if y2 is None:
            mv_t.append(t); mv_i.append(i1); mv_from.append(u); mv_to.append(-1)
        else:
            v = p.edge_between(y, y2)
            occupied = xi[v, i] == 1
            if not occupied:
                xi[v, i] = 1
                zeta[v] += 1
                mv_t.append(t); mv_i.append(i1); mv_from.append(u); mv_to.append(v)
                zs_t.append(t); zs_e.append(v); zs_z.append(zeta[v])
                if zeta[v] == F:
                    bl_t.append(t); bl_e.append(v); bl_k.append(BLOCKADE_FORMED)
            else:
                was_blockade = zeta[v] == F
                still = new != cfg[y2, i]
                if still:
                    outcome = COALESCENCE
                else:
                    outcome = ANNIHILATION
                    xi[v, i] = 0
                    zeta[v] -= 1
                    zs_t.append(t); zs_e.append(v); zs_z.append(zeta[v])
                    if was_blockade:
                        bl_t.append(t); bl_e.append(v); bl_k.append(BLOCKADE_DESTROYED)
                co_t.append(t); co_from.append(u); co_to.append(v); co_i.append(i1)
                co_out.append(outcome); co_blk.append(was_blockade)

        n_since_check += 1
        if n_since_check >= check_every:
            n_since_check = 0
            _cross_check(p, cfg, xi, zeta, k)
    _cross_check(p, cfg, xi, zeta, len(ev))

    return WalkTrace(
        params=p,
        initial_zeta=initial_zeta,
        final_field=ParticleField(xi=xi, zeta=zeta),
        move_time=np.array(mv_t), move_feature=np.array(mv_i, np.int16),
        move_from=np.array(mv_from, np.int32), move_to=np.array(mv_to, np.int32),
        col_time=np.array(co_t), col_from=np.array(co_from, np.int32),
        col_to=np.array(co_to, np.int32), col_feature=np.array(co_i, np.int16),
        col_outcome=np.array(co_out, np.uint8),
        col_target_blockade=np.array(co_blk, np.bool_),
        blk_time=np.array(bl_t), blk_edge=np.array(bl_e, np.int32),
        blk_kind=np.array(bl_k, np.uint8),
        zs_time=np.array(zs_t), zs_edge=np.array(zs_e, np.int32),
        zs_zeta=np.array(zs_z, np.int16),
    )


def _cross_check(params, cfg, xi, zeta, at_event):
    derived = derive_particles(Configuration(params, cfg))
    if not (np.array_equal(xi, derived.xi) and np.array_equal(zeta, derived.zeta)):
        raise CouplingError(f"incremental field diverged from derived field at event {at_event}")


@dataclass(frozen=True)
class CollisionStats:
    n_collisions: int
    n_annihilation: int
    n_coalescence: int
    fraction_annihilation: float | None
    wilson_low: float | None
    wilson_high: float | None


def collision_stats(records, z: float = 1.96) -> CollisionStats:
    """Tally collision outcomes with a Wilson score interval for the
    annihilation fraction. ``records`` may be a WalkTrace, an iterable of
    WalkTraces, or a list of CollisionRecord."""
    n_a = n_c = 0
    if isinstance(records, WalkTrace):
        records = [records]
    for item in records:
        if isinstance(item, WalkTrace):
            n_a += int(np.count_nonzero(item.col_outcome == ANNIHILATION))
            n_c += int(np.count_nonzero(item.col_outcome == COALESCENCE))
        elif isinstance(item, CollisionRecord):
            if item.outcome == "annihilation":
                n_a += 1
            else:
                n_c += 1
        else:
            raise TypeError(f"cannot tally {type(item)!r}")
    n = n_a + n_c
    if n == 0:
        return CollisionStats(0, 0, 0, None, None, None)
    lo, hi = wilson_interval(n_a, n, z)
    return CollisionStats(n, n_a, n_c, n_a / n, lo, hi)


def write_collisions_csv(trace: WalkTrace, path) -> None:
    """CSV export of collision records with a versioned header."""
    with open(path, "w", newline="") as fh:
        fh.write(f"# {COLLISIONS_FORMAT_TAG}\n")
        w = csv.writer(fh)
        w.writerow(["time", "edge", "feature", "outcome", "target_was_blockade"])
        for r in trace.collisions():
            w.writerow([repr(r.time), r.edge_from, r.feature, r.outcome,
                        int(r.target_was_blockade)])


def write_spacetime_stream(trace: WalkTrace, path) -> None:
    """Space-time export: initial per-edge counts, then one
    (time, edge, zeta_after) line per change, enough to rebuild zeta(t)."""
    with open(path, "w") as fh:
        fh.write(f"# {SPACETIME_FORMAT_TAG}\n")
        fh.write("initial_zeta " + " ".join(str(int(z)) for z in trace.initial_zeta) + "\n")
        fh.write("time edge zeta_after\n")
        for k in range(len(trace.zs_time)):
            fh.write(f"{float(trace.zs_time[k])!r} {trace.zs_edge[k]} {trace.zs_zeta[k]}\n")


def zeta_snapshots(trajectory: Trajectory, times) -> np.ndarray:
    """Per-edge particle counts at the requested times, shape (len(times), E).

    Times beyond the trajectory's end are valid only if it absorbed (the
    state is then frozen); otherwise they raise ValueError.
    """
    p = trajectory.params
    times = np.asarray(times, dtype=float)
    if np.any(times[:-1] > times[1:]):
        raise ValueError("snapshot times must be nondecreasing")
    if not trajectory.absorbed and len(times) and times[-1] > trajectory.end_time:
        raise ValueError("snapshot beyond end_time of a non-absorbed trajectory")
    cfg = trajectory.initial.cultures.copy()
    zeta = derive_particles(trajectory.initial).zeta.copy()
    out = np.empty((len(times), p.n_edges), np.int16)
    ev = trajectory.events
    k = 0
    n = len(ev)
    for s, ts in enumerate(times):
        while k < n and ev.time[k] <= ts:
            if ev.effective[k]:
                _apply_zeta(p, cfg, zeta, int(ev.source[k]), int(ev.target[k]),
                            int(ev.feature[k]) - 1)
            k += 1
        out[s] = zeta
    return out


def _apply_zeta(p, cfg, zeta, x, y, i):
    old = cfg[y, i]
    cfg[y, i] = cfg[x, i]
    u = p.edge_between(x, y)
    zeta[u] -= 1
    y2 = _other_neighbor(p, y, x)
    if y2 is not None:
        v = p.edge_between(y, y2)
        was = old != cfg[y2, i]
        now = cfg[y, i] != cfg[y2, i]
        if was != now:
            zeta[v] += 1 if now else -1
