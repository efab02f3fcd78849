"""Composite statistics-producing experiments.

Each experiment derives one independent seed per replica from the base
seed (see seeding.derive_seed), so results are identical whether replicas
run serially or across a process pool, and aggregates are always
recomputable from the per-replica records kept in the report.

The default engine is the direct one (no rejected arrows); runs that need
the full arrow log (genealogy, engine comparisons) use the graphical
construction explicitly.
"""

from __future__ import annotations

import csv
import math
import os
import time
import warnings
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field

import numpy as np

from . import genealogy, walks
from .engine import DEFAULT_EVENT_CAP, run
from .model import Configuration, ModelParams, edge_disagreement_counts, sample_pi0
from .seeding import derive_seed, rng_from_seed
from .stats import mean_se, wilson_interval

SWEEP_FORMAT_TAG = "axelrod-lab sweep v1"


@dataclass
class ExperimentReport:
    """Per-replica records plus aggregates recomputable from them."""

    name: str
    params: dict
    replicas: int
    seed: int
    records: list[dict]
    aggregates: dict
    runtime_s: float = 0.0

    def __post_init__(self):
        if len(self.records) != self.replicas:
            raise ValueError("one record per replica required")


@dataclass
class DensityCurve:
    times: np.ndarray
    particle_density: np.ndarray   # mean zeta / F per edge
    blockade_density: np.ndarray   # mean fraction of edges with zeta = F
    agreement: np.ndarray          # neighbour agreement estimate, 1 - particle density
    n_contributing: np.ndarray     # replicas contributing per snapshot
    replicas: int
    seed: int


def count_domains(config: Configuration) -> int:
    """Number of cultural domains: maximal runs of identical culture vectors."""
    c = config.cultures
    if config.params.is_ring:
        walls = int((c != np.roll(c, -1, axis=0)).any(axis=1).sum())
        return walls if walls > 0 else 1
    return int((c[:-1] != c[1:]).any(axis=1).sum()) + 1


def _map_records(worker, argses, parallel: int) -> list:
    if parallel <= 1:
        return [worker(a) for a in argses]
    with ProcessPoolExecutor(max_workers=parallel) as ex:
        return list(ex.map(worker, argses, chunksize=1))


# ---------------------------------------------------------------- fixation

def _fixation_replica(args) -> dict:
    params, horizon, event_cap, engine, base_seed, r, initial = args
    if initial is None:
        initial = sample_pi0(params, derive_seed(base_seed, r, 0))
    tr = run(engine, params, initial, horizon, derive_seed(base_seed, r, 1),
             event_cap=event_cap, log=False)
    zeta = edge_disagreement_counts(tr.final)
    F = params.F
    return {
        "replica": r,
        "absorbed": tr.absorbed,
        "censored": not tr.absorbed,
        "capped": tr.capped,
        "end_time": tr.end_time,
        "absorption_time": tr.end_time if tr.absorbed else None,
        "blockade_density": float(np.mean(zeta == F)),
        "particle_density": float(np.mean(zeta / F)),
        "domains": count_domains(tr.final),
        "effective_events": tr.n_effective,
        "events_generated": tr.events_generated,
    }


def aggregate_fixation(records: list[dict]) -> dict:
    absorbed = [r for r in records if r["absorbed"]]
    out = {
        "n": len(records),
        "n_absorbed": len(absorbed),
        "n_censored": len(records) - len(absorbed),
    }
    for key in ("blockade_density", "particle_density", "domains"):
        m, se = mean_se([r[key] for r in records])
        out[f"mean_{key}"], out[f"se_{key}"] = m, se
    if absorbed:
        m, se = mean_se([r["absorption_time"] for r in absorbed])
        out["mean_absorption_time"], out["se_absorption_time"] = m, se
    else:
        out["mean_absorption_time"] = out["se_absorption_time"] = None
    return out


def fixation_run(params: ModelParams, horizon: float, replicas: int, seed: int,
                 *, engine: str = "gillespie", event_cap: int = DEFAULT_EVENT_CAP,
                 parallel: int = 1, initial: Configuration | None = None) -> ExperimentReport:
    """Absorption statistics over replicas started from the product measure
    (or from a fixed ``initial`` configuration for every replica).

    Censored replicas (horizon or event cap hit before absorption) are
    reported explicitly; absorption-time aggregates use only absorbed
    replicas, with the censored count listed alongside (no imputation).
    """
    t0 = time.perf_counter()
    argses = [(params, horizon, event_cap, engine, seed, r, initial)
              for r in range(replicas)]
    records = _map_records(_fixation_replica, argses, parallel)
    return ExperimentReport(
        name="fixation_run",
        params={"F": params.F, "q": params.q, "L": params.L,
                "topology": params.topology, "horizon": horizon,
                "engine": engine, "event_cap": event_cap},
        replicas=replicas, seed=seed, records=records,
        aggregates=aggregate_fixation(records),
        runtime_s=time.perf_counter() - t0,
    )


# ------------------------------------------------------------- density

def density_curve(params: ModelParams, horizon: float, snapshots, replicas: int,
                  seed: int, *, engine: str = "gillespie",
                  event_cap: int = DEFAULT_EVENT_CAP) -> DensityCurve:
    """Mean particle and blockade densities on a snapshot grid."""
    times = np.asarray(snapshots, dtype=float)
    if len(times) == 0 or times.min() < 0 or times.max() > horizon:
        raise ValueError("snapshot grid must be nonempty and within [0, horizon]")
    E = params.n_edges
    F = params.F
    sum_particle = np.zeros(len(times))
    sum_blockade = np.zeros(len(times))
    n_contrib = np.zeros(len(times), dtype=int)
    for r in range(replicas):
        config = sample_pi0(params, derive_seed(seed, r, 0))
        tr = run(engine, params, config, horizon, derive_seed(seed, r, 1),
                 event_cap=event_cap, log=True)
        if tr.absorbed:
            valid = np.ones(len(times), dtype=bool)
        else:
            valid = times <= tr.end_time
        zgrid = walks.zeta_snapshots(tr, times[valid])
        sum_particle[valid] += (zgrid / F).mean(axis=1)
        sum_blockade[valid] += (zgrid == F).mean(axis=1)
        n_contrib += valid
    with np.errstate(invalid="ignore", divide="ignore"):
        particle = sum_particle / n_contrib
        blockade = sum_blockade / n_contrib
    return DensityCurve(
        times=times, particle_density=particle, blockade_density=blockade,
        agreement=1.0 - particle, n_contributing=n_contrib,
        replicas=replicas, seed=seed,
    )


# ------------------------------------------------------------ collisions

def aggregate_collisions(records: list[dict]) -> dict:
    n_a = sum(r["n_annihilation"] for r in records)
    n_c = sum(r["n_coalescence"] for r in records)
    n = n_a + n_c
    table = np.array([
        [sum(r["n_annihilation_blockade"] for r in records),
         sum(r["n_annihilation_active"] for r in records)],
        [sum(r["n_coalescence_blockade"] for r in records),
         sum(r["n_coalescence_active"] for r in records)],
    ])
    out = {
        "n_collisions": n, "n_annihilation": n_a, "n_coalescence": n_c,
        "fraction_annihilation": n_a / n if n else None,
        "contingency": table.tolist(),
        "chi2_p": None,
    }
    if n:
        out["wilson_low"], out["wilson_high"] = wilson_interval(n_a, n)
        out["wilson3_low"], out["wilson3_high"] = wilson_interval(n_a, n, z=3.0)
    if table.sum(axis=1).min() > 0 and table.sum(axis=0).min() > 0:
        from scipy.stats import chi2_contingency

        chi2, p, dof, _ = chi2_contingency(table, correction=False)
        out["chi2_p"] = float(p)
        out["chi2_stat"] = float(chi2)
    return out


def collision_outcome_experiment(params: ModelParams, min_collisions: int,
                                 seed: int, *, horizon: float = 40.0,
                                 max_replicas: int = 10_000,
                                 engine: str = "gillespie",
                                 event_cap: int = DEFAULT_EVENT_CAP) -> ExperimentReport:
    """Accumulate collisions until ``min_collisions`` are on record, then
    report the annihilation fraction with a Wilson interval and a
    chi-square independence test against the target's blockade status.

    A shortfall (replica budget exhausted first) is flagged in the
    aggregates rather than raising.
    """
    t0 = time.perf_counter()
    records = []
    total = 0
    r = 0
    while total < min_collisions and r < max_replicas:
        config = sample_pi0(params, derive_seed(seed, r, 0))
        tr = run(engine, params, config, horizon, derive_seed(seed, r, 1),
                 event_cap=event_cap, log=True)
        w = walks.track(tr)
        blk = w.col_target_blockade
        ann = w.col_outcome == walks.ANNIHILATION
        rec = {
            "replica": r,
            "n_collisions": int(w.n_collisions),
            "n_annihilation": int(ann.sum()),
            "n_coalescence": int((~ann).sum()),
            "n_annihilation_blockade": int((ann & blk).sum()),
            "n_annihilation_active": int((ann & ~blk).sum()),
            "n_coalescence_blockade": int((~ann & blk).sum()),
            "n_coalescence_active": int((~ann & ~blk).sum()),
        }
        records.append(rec)
        total += rec["n_collisions"]
        r += 1
    agg = aggregate_collisions(records)
    agg["target_collisions"] = min_collisions
    agg["shortfall"] = total < min_collisions
    return ExperimentReport(
        name="collision_outcome",
        params={"F": params.F, "q": params.q, "L": params.L,
                "topology": params.topology, "horizon": horizon, "engine": engine},
        replicas=len(records), seed=seed, records=records, aggregates=agg,
        runtime_s=time.perf_counter() - t0,
    )


# ------------------------------------------------------------ martingale

def aggregate_martingale(records: list[dict]) -> dict:
    per_feature = np.array([r["M"] for r in records], dtype=float)  # (R, F)
    out = {"n": len(records)}
    means, ses = [], []
    for i in range(per_feature.shape[1]):
        m, se = mean_se(per_feature[:, i])
        means.append(m)
        ses.append(se)
    out["mean_per_feature"] = means
    out["se_per_feature"] = ses
    m, se = mean_se(per_feature.mean(axis=1))
    out["mean_pooled"], out["se_pooled"] = m, se
    return out


def martingale_experiment(params: ModelParams, t: float, site: int,
                          replicas: int, seed: int) -> ExperimentReport:
    """Sample the descendant count of an interior site at time t.

    The count per (site, feature) has expectation one at all times; this
    runs the graphical construction (ancestry needs the full arrow log)
    and reports the sample mean with its standard error per feature.
    """
    t0 = time.perf_counter()
    if not 0 <= site < params.L:
        raise ValueError("site out of range")
    spread = 4.0 * math.sqrt(t) + 2.0
    if min(site, params.L - 1 - site) < spread:
        warnings.warn(
            f"site {site} is within {spread:.1f} of the boundary at t={t}; "
            "the unit-mean property is exact in the bulk but boundary "
            "genealogies are asymmetric", stacklevel=2)
    records = []
    for r in range(replicas):
        config = sample_pi0(params, derive_seed(seed, r, 0))
        tr = run("harris", params, config, t, derive_seed(seed, r, 1), log=True)
        M = genealogy.descendant_counts(tr, t)
        records.append({"replica": r, "M": [int(v) for v in M[:, site]]})
    return ExperimentReport(
        name="martingale",
        params={"F": params.F, "q": params.q, "L": params.L,
                "topology": params.topology, "t": t, "site": site},
        replicas=replicas, seed=seed, records=records,
        aggregates=aggregate_martingale(records),
        runtime_s=time.perf_counter() - t0,
    )


# -------------------------------------------------------- six-arrow race

def aggregate_race(records: list[dict]) -> dict:
    n = len(records)
    inner = [r for r in records if r["inner_first"]]
    n_inner = len(inner)
    ok = sum(1 for r in inner if r["outcome"] in ("annihilation", "coalescence", "blockade"))
    lo, hi = wilson_interval(n_inner, n) if n else (None, None)
    by_outcome = {}
    for r in inner:
        by_outcome[r["outcome"]] = by_outcome.get(r["outcome"], 0) + 1
    return {
        "n": n,
        "n_inner_first": n_inner,
        "inner_first_fraction": n_inner / n if n else None,
        "wilson_low": lo, "wilson_high": hi,
        "collide_or_blockade_given_inner": ok / n_inner if n_inner else None,
        "outcomes_given_inner": by_outcome,
    }


def six_arrow_race(q: int, replicas: int, seed: int) -> ExperimentReport:
    """Race of the six arrows that can affect a good pair (two-feature model).

    Start from two adjacent edges each holding exactly one particle. In
    the two-feature graphical representation each of the six arrows that
    can touch the pair rides an independent rate-1/4 Poisson clock, so
    the two inner arrows (the ones pointing at the shared vertex) fire
    first with probability 1/3; when they do, the two particles collide
    or form a blockade, never anything else.
    """
    t0 = time.perf_counter()
    if q < 3:
        raise ValueError("the race needs q >= 3 (two-feature fixation regime)")
    rng = rng_from_seed(seed)
    R = replicas
    center = rng.integers(1, q + 1, size=(R, 2))
    # neighbours disagreeing with the centre on exactly one uniform feature
    iA = rng.integers(0, 2, R)
    iC = rng.integers(0, 2, R)
    offA = rng.integers(1, q, R)
    offC = rng.integers(1, q, R)
    A = center.copy()
    C = center.copy()
    rows = np.arange(R)
    A[rows, iA] = 1 + (A[rows, iA] - 1 + offA) % q
    C[rows, iC] = 1 + (C[rows, iC] - 1 + offC) % q
    # outer vertices complete the five-vertex local condition
    _outer = rng.integers(1, q + 1, size=(R, 2, 2))
    clocks = rng.exponential(scale=4.0, size=(R, 6))
    first = clocks.argmin(axis=1)
    inner = first < 2
    # either inner arrow replaces the centre culture, leaving A facing C
    d_ac = (A != C).sum(axis=1)
    same_level = iA == iC
    if np.any(inner & ~same_level & (d_ac != 2)):
        raise AssertionError("distinct-level good pair must form a blockade")
    if np.any(inner & same_level & (d_ac > 1)):
        raise AssertionError("same-level good pair must collide")
    records = []
    for r in range(R):
        if inner[r]:
            if not same_level[r]:
                outcome = "blockade"
            elif d_ac[r] == 0:
                outcome = "annihilation"
            else:
                outcome = "coalescence"
        else:
            outcome = None
        records.append({"replica": r, "first_arrow": int(first[r]),
                        "inner_first": bool(inner[r]), "outcome": outcome})
    return ExperimentReport(
        name="six_arrow_race",
        params={"F": 2, "q": q},
        replicas=R, seed=seed, records=records,
        aggregates=aggregate_race(records),
        runtime_s=time.perf_counter() - t0,
    )


# --------------------------------------------------------------- sweep

_SWEEP_FIELDS = ["row", "F", "q", "L", "topology", "replica", "absorbed",
                 "censored", "end_time", "blockade_density", "particle_density",
                 "domains", "effective_events", "error"]


def _sweep_cell_key(params: ModelParams) -> tuple:
    return (params.F, params.q, params.L, params.topology)


def _completed_cells(path) -> set:
    done = set()
    if not os.path.exists(path):
        return done
    with open(path) as fh:
        for line in fh:
            if line.startswith("#") or line.startswith("row,"):
                continue
            parts = line.rstrip("\n").split(",")
            if parts and parts[0] == "aggregate":
                done.add((int(parts[1]), int(parts[2]), int(parts[3]), parts[4]))
    return done


def sweep(cells, replicas: int, seed: int, out_csv, *, horizon: float = math.inf,
          event_cap: int = DEFAULT_EVENT_CAP, engine: str = "gillespie",
          parallel: int = 1) -> list[dict]:
    """Run fixation statistics per (q, F, L, topology) cell into one CSV.

    One row per (cell, replica) plus one aggregate row per cell, written
    and flushed as each cell finishes, so an interrupted sweep keeps its
    completed cells and a rerun with the same output path resumes (cells
    with an aggregate row are skipped). Per-cell failures become an error
    row and never abort the sweep. Replica seeds depend on the cell, not
    on execution order, so serial and parallel runs emit identical rows.
    """
    cells = [c if isinstance(c, ModelParams) else ModelParams(*c) for c in cells]
    done = _completed_cells(out_csv)
    fresh = not os.path.exists(out_csv)
    aggregates = []
    with open(out_csv, "a", newline="") as fh:
        if fresh:
            fh.write(f"# {SWEEP_FORMAT_TAG} seed={seed} replicas={replicas}\n")
            fh.write(",".join(_SWEEP_FIELDS) + "\n")
            fh.flush()
        w = csv.writer(fh)
        for cell_index, params in enumerate(cells):
            key = _sweep_cell_key(params)
            if key in done:
                continue
            cell_seed = derive_seed(seed, params.F, params.q, params.L,
                                    0 if params.topology == "interval" else 1)
            try:
                report = fixation_run(params, horizon, replicas, cell_seed,
                                      engine=engine, event_cap=event_cap,
                                      parallel=parallel)
            except Exception as exc:  # isolate the failing cell
                w.writerow(["error", params.F, params.q, params.L,
                            params.topology, "", "", "", "", "", "", "", "",
                            repr(exc)])
                fh.flush()
                continue
            for rec in report.records:
                w.writerow([
                    "replica", params.F, params.q, params.L, params.topology,
                    rec["replica"], int(rec["absorbed"]), int(rec["censored"]),
                    repr(rec["end_time"]), repr(rec["blockade_density"]),
                    repr(rec["particle_density"]), rec["domains"],
                    rec["effective_events"], "",
                ])
            agg = report.aggregates
            w.writerow([
                "aggregate", params.F, params.q, params.L, params.topology,
                report.replicas, agg["n_absorbed"], agg["n_censored"],
                repr(agg["mean_absorption_time"]) if agg["mean_absorption_time"] is not None else "",
                repr(agg["mean_blockade_density"]),
                repr(agg["mean_particle_density"]),
                repr(agg["mean_domains"]), "", "",
            ])
            fh.flush()
            aggregates.append({"params": params, **agg})
    return aggregates


# ----------------------------------------------------------- space-time

def spacetime_export(params: ModelParams, horizon: float, seed: int, out_dir,
                     *, snapshots: int = 400, image: bool = True,
                     engine: str = "gillespie",
                     event_cap: int = DEFAULT_EVENT_CAP) -> dict:
    """Run one trajectory and export its per-edge count field.

    Writes the (time, edge, zeta_after) stream plus the initial counts,
    and optionally a grayscale raster (one row per snapshot, one column
    per edge, 0 particles white through F particles black).
    """
    os.makedirs(out_dir, exist_ok=True)
    config = sample_pi0(params, derive_seed(seed, 0, 0))
    tr = run(engine, params, config, horizon, derive_seed(seed, 0, 1),
             event_cap=event_cap, log=True)
    trace = walks.track(tr)
    stream_path = os.path.join(out_dir, "spacetime.txt")
    walks.write_spacetime_stream(trace, stream_path)
    out = {"stream": stream_path, "end_time": tr.end_time, "absorbed": tr.absorbed}
    if image:
        t_end = tr.end_time if tr.end_time > 0 else 1.0
        times = np.linspace(0.0, t_end, snapshots)
        zgrid = walks.zeta_snapshots(tr, times)
        img = np.round(255.0 * (1.0 - zgrid.astype(float) / params.F)).astype(np.uint8)
        from PIL import Image

        png_path = os.path.join(out_dir, "spacetime.png")
        Image.fromarray(img, mode="L").save(png_path)
        out["image"] = png_path
    return out
