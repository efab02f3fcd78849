"""Two statistically equivalent continuous-time engines with replayable logs.

``run_harris`` realises the full percolation structure: independent rate-1
Poisson clocks per (vertex, feature), uniform arrow directions, uniform
thinning marks, every generated arrow logged whether or not it is active.
``run_gillespie`` samples only the effective transitions directly from the
aggregate rates. Both emit the same record shape and both are bit-for-bit
deterministic given (params, initial, horizon, seed).

"Run to absorption" is expressed as ``horizon=math.inf`` together with a
hard event cap (default 10**9); hitting the cap is reported as an explicit
non-absorbed, capped outcome. The Harris cap counts generated clock rings
(including boundary draws skipped on the interval), the Gillespie cap
counts transitions.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, replace
from typing import NamedTuple

import numpy as np

from . import _kernels
from .model import Configuration, ModelParams, edge_disagreement_counts
from .seeding import check_seed, rng_from_seed

DEFAULT_EVENT_CAP = 1_000_000_000

_CHUNK_SCHEDULE = (4096, 8192, 16384, 32768)
_CHUNK_MAX = 65536

LOG_FORMAT_TAG = "axelrod-lab-log v1"


class CorruptLogError(ValueError):
    """Raised by replay when an event's preconditions fail."""

    def __init__(self, index: int, message: str):
        super().__init__(f"event {index}: {message}")
        self.index = index


class ArrowRecord(NamedTuple):
    time: float
    source: int
    target: int
    feature: int  # 1-based
    mark: float
    active: bool
    effective: bool


@dataclass(frozen=True)
class EventLog:
    """Time-ordered arrow records as parallel arrays."""

    time: np.ndarray
    source: np.ndarray
    target: np.ndarray
    feature: np.ndarray  # 1-based
    mark: np.ndarray
    active: np.ndarray
    effective: np.ndarray

    @classmethod
    def empty(cls) -> "EventLog":
        return cls(
            time=np.empty(0, np.float64),
            source=np.empty(0, np.int32),
            target=np.empty(0, np.int32),
            feature=np.empty(0, np.int16),
            mark=np.empty(0, np.float64),
            active=np.empty(0, np.bool_),
            effective=np.empty(0, np.bool_),
        )

    def __len__(self) -> int:
        return self.time.shape[0]

    def __getitem__(self, k: int) -> ArrowRecord:
        return ArrowRecord(
            float(self.time[k]), int(self.source[k]), int(self.target[k]),
            int(self.feature[k]), float(self.mark[k]),
            bool(self.active[k]), bool(self.effective[k]),
        )

    def __iter__(self):
        for k in range(len(self)):
            yield self[k]

    def head(self, n: int) -> "EventLog":
        """Prefix of the first n events."""
        return EventLog(*(getattr(self, f)[:n] for f in
                          ("time", "source", "target", "feature", "mark", "active", "effective")))

    @property
    def n_effective(self) -> int:
        return int(np.count_nonzero(self.effective))

    def __eq__(self, other):
        if not isinstance(other, EventLog):
            return NotImplemented
        return all(
            np.array_equal(getattr(self, f), getattr(other, f))
            for f in ("time", "source", "target", "feature", "mark", "active", "effective")
        )


@dataclass(frozen=True)
class Trajectory:
    """One realised run: parameters, initial state, event log, final state.

    ``events_generated`` and ``n_effective`` count what the engine did and
    are filled in even for summary-only runs with an empty log.
    """

    params: ModelParams
    initial: Configuration
    events: EventLog
    final: Configuration
    end_time: float
    absorbed: bool
    capped: bool
    engine: str
    seed: int
    horizon: float
    event_cap: int
    events_generated: int = 0
    n_effective: int = 0

    @property
    def n_events(self) -> int:
        return len(self.events)


def _chunk_size(round_index: int) -> int:
    if round_index < len(_CHUNK_SCHEDULE):
        return _CHUNK_SCHEDULE[round_index]
    return _CHUNK_MAX


def _validate_run_args(params, initial, horizon):
    if initial.params != params:
        raise ValueError("initial configuration was built for different params")
    if not horizon > 0:
        raise ValueError(f"horizon must be positive, got {horizon}")


def _finish(params, initial, log_chunks, cfg, end_time, absorbed, capped,
            engine, seed, horizon, event_cap, events_generated=0, n_effective=0):
    if log_chunks:
        time = np.concatenate([c[0] for c in log_chunks])
        source = np.concatenate([c[1] for c in log_chunks]).astype(np.int32)
        target = np.concatenate([c[2] for c in log_chunks]).astype(np.int32)
        feature = (np.concatenate([c[3] for c in log_chunks]) + 1).astype(np.int16)
        mark = np.concatenate([c[4] for c in log_chunks])
        active = np.concatenate([c[5] for c in log_chunks]).astype(bool)
        effective = np.concatenate([c[6] for c in log_chunks]).astype(bool)
        events = EventLog(time, source, target, feature, mark, active, effective)
    else:
        events = EventLog.empty()
    final = Configuration(params, cfg)
    return Trajectory(
        params=params, initial=initial, events=events, final=final,
        end_time=float(end_time), absorbed=absorbed, capped=capped,
        engine=engine, seed=seed, horizon=float(horizon), event_cap=int(event_cap),
        events_generated=int(events_generated), n_effective=int(n_effective),
    )


def run_harris(params: ModelParams, initial: Configuration, horizon: float,
               seed: int, *, event_cap: int = DEFAULT_EVENT_CAP,
               log: bool = True) -> Trajectory:
    """Simulate via the graphical construction, logging every arrow.

    Pass ``log=False`` for summary-only runs (the trajectory then carries
    an empty event log; final state, times and flags are unaffected).
    """
    _validate_run_args(params, initial, horizon)
    seed = check_seed(seed)
    L, F = params.L, params.F
    cfg = initial.cultures.copy()
    zeta = edge_disagreement_counts(initial)
    n_unfrozen = int(np.count_nonzero((zeta > 0) & (zeta < F)))
    if n_unfrozen == 0:
        return _finish(params, initial, [], cfg, 0.0, True, False,
                       "harris", seed, horizon, event_cap)

    rng = rng_from_seed(seed)
    istate = np.zeros(4, np.int64)
    istate[2] = n_unfrozen
    fstate = np.zeros(2, np.float64)
    log_chunks = []
    round_index = 0
    while True:
        n = _chunk_size(round_index)
        round_index += 1
        exp_buf = rng.standard_exponential(n)
        own_buf = rng.integers(0, L * F, size=n, dtype=np.int64)
        dir_buf = rng.random(n)
        mark_buf = rng.random(n)
        if log:
            bufs = (np.empty(n, np.float64), np.empty(n, np.int32),
                    np.empty(n, np.int32), np.empty(n, np.int16),
                    np.empty(n, np.float64), np.empty(n, np.uint8),
                    np.empty(n, np.uint8))
        else:
            bufs = (np.empty(1, np.float64), np.empty(1, np.int32),
                    np.empty(1, np.int32), np.empty(1, np.int16),
                    np.empty(1, np.float64), np.empty(1, np.uint8),
                    np.empty(1, np.uint8))
        consumed, n_logged, status = _kernels.harris_chunk(
            cfg, zeta, params.is_ring, L, F, horizon, event_cap,
            exp_buf, own_buf, dir_buf, mark_buf,
            log, *bufs, istate, fstate)
        if log and n_logged:
            log_chunks.append(tuple(b[:n_logged].copy() for b in bufs))
        if status != _kernels.NEED_MORE:
            break
    absorbed = status == _kernels.ABSORBED
    capped = status == _kernels.CAPPED
    return _finish(params, initial, log_chunks, cfg, fstate[1], absorbed,
                   capped, "harris", seed, horizon, event_cap,
                   istate[0], istate[1])


def run_gillespie(params: ModelParams, initial: Configuration, horizon: float,
                  seed: int, *, event_cap: int = DEFAULT_EVENT_CAP,
                  log: bool = True) -> Trajectory:
    """Simulate by direct sampling of effective transitions."""
    _validate_run_args(params, initial, horizon)
    seed = check_seed(seed)
    L, F = params.L, params.F
    cfg = initial.cultures.copy()
    zeta = edge_disagreement_counts(initial)
    weights = np.where((zeta > 0) & (zeta < F), F - zeta, 0).astype(np.int64)
    W = int(weights.sum())
    if W == 0:
        return _finish(params, initial, [], cfg, 0.0, True, False,
                       "gillespie", seed, horizon, event_cap)
    tree = _kernels._fenwick_build(weights)
    msb = 1
    while msb * 2 <= params.n_edges:
        msb *= 2

    rng = rng_from_seed(seed)
    istate = np.zeros(4, np.int64)
    istate[3] = W
    fstate = np.zeros(2, np.float64)
    log_chunks = []
    round_index = 0
    while True:
        n = _chunk_size(round_index)
        round_index += 1
        exp_buf = rng.standard_exponential(n)
        uedge_buf = rng.random(n)
        ufeat_buf = rng.random(n)
        udir_buf = rng.random(n)
        if log:
            bufs = (np.empty(n, np.float64), np.empty(n, np.int32),
                    np.empty(n, np.int32), np.empty(n, np.int16),
                    np.empty(n, np.float64), np.empty(n, np.uint8),
                    np.empty(n, np.uint8))
        else:
            bufs = (np.empty(1, np.float64), np.empty(1, np.int32),
                    np.empty(1, np.int32), np.empty(1, np.int16),
                    np.empty(1, np.float64), np.empty(1, np.uint8),
                    np.empty(1, np.uint8))
        consumed, n_logged, status = _kernels.gillespie_chunk(
            cfg, zeta, tree, msb, params.is_ring, L, F, horizon, event_cap,
            exp_buf, uedge_buf, ufeat_buf, udir_buf,
            log, *bufs, istate, fstate)
        if log and n_logged:
            log_chunks.append(tuple(b[:n_logged].copy() for b in bufs))
        if status != _kernels.NEED_MORE:
            break
    absorbed = status == _kernels.ABSORBED
    capped = status == _kernels.CAPPED
    return _finish(params, initial, log_chunks, cfg, fstate[1], absorbed,
                   capped, "gillespie", seed, horizon, event_cap,
                   istate[0], istate[1])


def run(engine: str, params: ModelParams, initial: Configuration,
        horizon: float, seed: int, **kw) -> Trajectory:
    """Dispatch on engine name ("harris" or "gillespie")."""
    if engine == "harris":
        return run_harris(params, initial, horizon, seed, **kw)
    if engine == "gillespie":
        return run_gillespie(params, initial, horizon, seed, **kw)
    raise ValueError(f"unknown engine {engine!r}")


def replay(trajectory: Trajectory, upto: int | None = None,
           validate: bool = True) -> Configuration:
    """Re-derive the configuration from initial + events, deterministically.

    ``upto=k`` replays only the first k events and returns the state at
    time t_k. With ``validate=True`` every event's preconditions are
    checked (strictly increasing times, adjacency, flag consistency; for
    Harris logs the active flag is recomputed from the mark and the
    pre-event edge count) and the first violation raises CorruptLogError.
    """
    p = trajectory.params
    ev = trajectory.events if upto is None else trajectory.events.head(upto)
    cfg = trajectory.initial.cultures.copy()
    zeta = edge_disagreement_counts(trajectory.initial)
    L, F = p.L, p.F
    ring = p.is_ring
    is_harris = trajectory.engine == "harris"
    tprev = -math.inf
    time, source, target = ev.time, ev.source, ev.target
    feature, mark = ev.feature, ev.mark
    active, effective = ev.active, ev.effective
    for k in range(len(ev)):
        t = time[k]
        x = int(source[k])
        y = int(target[k])
        i = int(feature[k]) - 1
        if validate:
            if not t > tprev:
                raise CorruptLogError(k, f"time {t} not after {tprev}")
            if not p.are_adjacent(x, y):
                raise CorruptLogError(k, f"vertices {x},{y} not adjacent")
            if not 0 <= i < F:
                raise CorruptLogError(k, f"feature {i + 1} out of range")
        tprev = t
        edge = p.edge_between(x, y)
        z = int(zeta[edge])
        if validate:
            if is_harris:
                act = (z != 0) and (mark[k] < 1.0 / z - 1.0 / F)
                if act != bool(active[k]):
                    raise CorruptLogError(k, "active flag inconsistent with mark and edge count")
                eff = act and cfg[x, i] != cfg[y, i]
                if eff != bool(effective[k]):
                    raise CorruptLogError(k, "effective flag inconsistent with configuration")
            else:
                if not (active[k] and effective[k]):
                    raise CorruptLogError(k, "gillespie events must be active and effective")
                if not 1 <= z <= F - 1:
                    raise CorruptLogError(k, f"transition on frozen or inert edge (zeta={z})")
                if cfg[x, i] == cfg[y, i]:
                    raise CorruptLogError(k, "effective event but endpoints agree")
        if not effective[k]:
            continue
        old = cfg[y, i]
        cfg[y, i] = cfg[x, i]
        zeta[edge] = z - 1
        y2 = y + (y - x)
        if ring:
            y2 %= L
            edge2 = y if y2 == (y + 1) % L else y2
        elif 0 <= y2 < L:
            edge2 = min(y, y2)
        else:
            continue
        was = old != cfg[y2, i]
        now = cfg[y, i] != cfg[y2, i]
        if was != now:
            zeta[edge2] += 1 if now else -1
    result = Configuration(p, cfg)
    if validate and upto is None and result != trajectory.final:
        raise CorruptLogError(len(ev), "replayed final state differs from recorded final")
    return result


def write_trajectory_log(trajectory: Trajectory, path) -> None:
    """Serialize a trajectory to the versioned line-based text format."""
    t = trajectory
    with open(path, "w") as fh:
        fh.write(LOG_FORMAT_TAG + "\n")
        fh.write(
            f"engine={t.engine} seed={t.seed} horizon={t.horizon!r} "
            f"event_cap={t.event_cap} end_time={t.end_time!r} "
            f"absorbed={int(t.absorbed)} capped={int(t.capped)} "
            f"n_events={t.n_events} events_generated={t.events_generated} "
            f"n_effective={t.n_effective}\n"
        )
        fh.write(t.initial.to_text())
        fh.write("time source target feature mark active effective\n")
        ev = t.events
        for k in range(len(ev)):
            fh.write(
                f"{float(ev.time[k])!r} {ev.source[k]} {ev.target[k]} "
                f"{ev.feature[k]} {float(ev.mark[k])!r} "
                f"{int(ev.active[k])} {int(ev.effective[k])}\n"
            )


def read_trajectory_log(path) -> Trajectory:
    """Load a trajectory written by write_trajectory_log. The final state is
    re-derived by replay, so a loaded log is verified on the way in."""
    with open(path) as fh:
        lines = fh.read().splitlines()
    if not lines or lines[0] != LOG_FORMAT_TAG:
        raise ValueError(f"not a {LOG_FORMAT_TAG} file: {path}")
    meta = dict(part.split("=", 1) for part in lines[1].split())
    config_lines = lines[2:]
    config_header = dict(part.split("=", 1) for part in config_lines[0].split())
    n_vertices = int(config_header["L"])
    initial = Configuration.from_text("\n".join(config_lines[: n_vertices + 1]))
    p = initial.params
    body = config_lines[p.L + 1:]
    if not body or not body[0].startswith("time "):
        raise ValueError("missing event header line")
    n_events = int(meta["n_events"])
    rows = body[1: 1 + n_events]
    if len(rows) != n_events:
        raise ValueError(f"expected {n_events} event lines, found {len(rows)}")
    time = np.empty(n_events, np.float64)
    source = np.empty(n_events, np.int32)
    target = np.empty(n_events, np.int32)
    feature = np.empty(n_events, np.int16)
    mark = np.empty(n_events, np.float64)
    active = np.empty(n_events, np.bool_)
    effective = np.empty(n_events, np.bool_)
    for k, row in enumerate(rows):
        parts = row.split()
        time[k] = float(parts[0])
        source[k] = int(parts[1])
        target[k] = int(parts[2])
        feature[k] = int(parts[3])
        mark[k] = float(parts[4])
        active[k] = parts[5] == "1"
        effective[k] = parts[6] == "1"
    events = EventLog(time, source, target, feature, mark, active, effective)
    shell = Trajectory(
        params=p, initial=initial, events=events, final=initial,
        end_time=float(meta["end_time"]), absorbed=meta["absorbed"] == "1",
        capped=meta["capped"] == "1", engine=meta["engine"],
        seed=int(meta["seed"]), horizon=float(meta["horizon"]),
        event_cap=int(meta["event_cap"]),
        events_generated=int(meta.get("events_generated", n_events)),
        n_effective=int(meta.get("n_effective", events.n_effective)),
    )
    final = replay(shell, validate=False)
    return replace(shell, final=final)
