"""Command-line entry point.

Subcommands: simulate, phase, verify, sweep, trace. Every run is fully
determined by its flags (or an equivalent JSON config file; flags
override file values), and each command writes a config echo next to its
outputs that reproduces the run exactly.

Exit codes: 0 success, 2 invalid usage or configuration, 1 runtime or
verification failure.
"""

from __future__ import annotations

import argparse
import json
import math
import os
import sys
from dataclasses import asdict, dataclass, field
from fractions import Fraction

import numpy as np

OUT_ENV_VAR = "AXELROD_LAB_OUT"


@dataclass
class RunConfig:
    """Serializable record of everything a subcommand needs."""

    subcommand: str
    F: list[int] = field(default_factory=lambda: [2])
    q: list[int] = field(default_factory=lambda: [3])
    L: int = 100
    topology: str = "interval"
    engine: str = "gillespie"
    horizon: float = math.inf
    event_cap: int = 1_000_000_000
    replicas: int = 1
    seed: int = 0
    snapshots: int = 400
    out: str = "axelrod-lab-out"
    parallel: int = 1
    suite: str | None = None
    q_max: int = 100
    F_max: int = 100
    render: bool = False
    min_collisions: int = 20_000

    def to_json(self) -> str:
        d = asdict(self)
        d["horizon"] = "inf" if math.isinf(self.horizon) else self.horizon
        return json.dumps(d, indent=2, sort_keys=True)

    @classmethod
    def from_json(cls, text: str) -> "RunConfig":
        d = json.loads(text)
        if d.get("horizon") == "inf":
            d["horizon"] = math.inf
        return cls(**d)


def _int_ge2(name):
    def parse(value):
        try:
            v = int(value)
        except ValueError:
            raise argparse.ArgumentTypeError(f"{name} must be an integer, got {value!r}")
        if v < 2:
            raise argparse.ArgumentTypeError(f"{name} must be >= 2, got {v}")
        return v
    return parse


def _int_list_ge2(name):
    """Parse "3", "2,3,4" or "2:5" (inclusive range) into a list of ints >= 2."""
    single = _int_ge2(name)

    def parse(value):
        if ":" in value:
            lo, hi = value.split(":", 1)
            lo, hi = single(lo), single(hi)
            if hi < lo:
                raise argparse.ArgumentTypeError(f"empty range {value!r} for {name}")
            return list(range(lo, hi + 1))
        return [single(part) for part in value.split(",")]
    return parse


def _positive_float(value):
    if value == "inf":
        return math.inf
    v = float(value)
    if not v > 0:
        raise argparse.ArgumentTypeError(f"expected a positive value, got {value}")
    return v


def _build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="axelrod-lab",
        description="Simulate the one-dimensional Axelrod model, its coupled "
                    "random walks, and the exact fixation-criterion machinery.",
    )
    parser.add_argument("--config", help="JSON config file; flags override its values")
    sub = parser.add_subparsers(dest="subcommand", required=True)

    def add_common(p, multi_qf=False):
        qf = _int_list_ge2 if multi_qf else None
        p.add_argument("--F", type=qf("F") if multi_qf else _int_ge2("F"),
                       default=[2] if multi_qf else 2,
                       help="number of cultural features (>= 2)")
        p.add_argument("--q", type=qf("q") if multi_qf else _int_ge2("q"),
                       default=[3] if multi_qf else 3,
                       help="states per feature (>= 2)")
        p.add_argument("--L", type=_int_ge2("L"), default=100, help="number of vertices")
        p.add_argument("--topology", choices=("interval", "ring"), default="interval")
        p.add_argument("--ring", dest="topology", action="store_const", const="ring",
                       help="shorthand for --topology ring")
        p.add_argument("--engine", choices=("gillespie", "harris"), default="gillespie")
        p.add_argument("--horizon", type=_positive_float, default=math.inf,
                       help='time horizon, or "inf" to run to absorption under the event cap')
        p.add_argument("--event-cap", type=int, default=1_000_000_000)
        p.add_argument("--replicas", type=int, default=1)
        p.add_argument("--seed", type=int, default=0)
        p.add_argument("--snapshots", type=int, default=400)
        p.add_argument("--out", default=None,
                       help=f"output directory (default ${OUT_ENV_VAR} or ./axelrod-lab-out)")
        p.add_argument("--parallel", type=int, default=1)

    p_sim = sub.add_parser("simulate", help="run trajectories and write logs + summary")
    add_common(p_sim)

    p_phase = sub.add_parser("phase", help="exact phase diagram CSV (and optional plot)")
    p_phase.add_argument("--q-max", type=_int_ge2("q-max"), default=100)
    p_phase.add_argument("--F-max", type=_int_ge2("F-max"), default=100)
    p_phase.add_argument("--render", action="store_true", help="also write phase.png")
    p_phase.add_argument("--out", default=None)
    p_phase.add_argument("--seed", type=int, default=0)

    p_verify = sub.add_parser("verify", help="run a named verification suite")
    p_verify.add_argument("suite", nargs="?", default=None,
                          help="one of: " + ", ".join(sorted(_SUITES)))
    p_verify.add_argument("--q", type=_int_ge2("q"), default=3)
    p_verify.add_argument("--F", type=_int_ge2("F"), default=2)
    p_verify.add_argument("--L", type=_int_ge2("L"), default=100)
    p_verify.add_argument("--seed", type=int, default=0)
    p_verify.add_argument("--replicas", type=int, default=400)
    p_verify.add_argument("--min-collisions", type=int, default=20_000)

    p_sweep = sub.add_parser("sweep", help="fixation statistics over a (q, F) grid")
    add_common(p_sweep, multi_qf=True)

    p_trace = sub.add_parser("trace", help="space-time export of one trajectory")
    add_common(p_trace)
    p_trace.add_argument("--no-image", dest="render", action="store_false", default=True)

    return parser


def _resolve_out(ns) -> str:
    out = getattr(ns, "out", None)
    if out is None:
        out = os.environ.get(OUT_ENV_VAR, "axelrod-lab-out")
    os.makedirs(out, exist_ok=True)
    return out


def _echo_config(ns, out_dir):
    cfg = RunConfig(
        subcommand=ns.subcommand,
        F=ns.F if isinstance(getattr(ns, "F", 2), list) else [getattr(ns, "F", 2)],
        q=ns.q if isinstance(getattr(ns, "q", 3), list) else [getattr(ns, "q", 3)],
        L=getattr(ns, "L", 100),
        topology=getattr(ns, "topology", "interval"),
        engine=getattr(ns, "engine", "gillespie"),
        horizon=getattr(ns, "horizon", math.inf),
        event_cap=getattr(ns, "event_cap", 1_000_000_000),
        replicas=getattr(ns, "replicas", 1),
        seed=getattr(ns, "seed", 0),
        snapshots=getattr(ns, "snapshots", 400),
        out=out_dir,
        parallel=getattr(ns, "parallel", 1),
        suite=getattr(ns, "suite", None),
        q_max=getattr(ns, "q_max", 100),
        F_max=getattr(ns, "F_max", 100),
        render=getattr(ns, "render", False),
        min_collisions=getattr(ns, "min_collisions", 20_000),
    )
    with open(os.path.join(out_dir, "config.json"), "w") as fh:
        fh.write(cfg.to_json() + "\n")
    return cfg


# ------------------------------------------------------------- commands

def cmd_simulate(ns) -> int:
    from .engine import run, write_trajectory_log
    from .model import ModelParams, edge_disagreement_counts, sample_pi0
    from .seeding import derive_seed

    out = _resolve_out(ns)
    _echo_config(ns, out)
    params = ModelParams(F=ns.F, q=ns.q, L=ns.L, topology=ns.topology)
    summary = []
    for r in range(ns.replicas):
        config = sample_pi0(params, derive_seed(ns.seed, r, 0))
        tr = run(ns.engine, params, config, ns.horizon, derive_seed(ns.seed, r, 1),
                 event_cap=ns.event_cap, log=True)
        path = os.path.join(out, f"trajectory_{r:04d}.log")
        write_trajectory_log(tr, path)
        zeta = edge_disagreement_counts(tr.final)
        summary.append({
            "replica": r, "log": os.path.basename(path),
            "absorbed": tr.absorbed, "capped": tr.capped,
            "end_time": tr.end_time, "n_events": tr.n_events,
            "n_effective": tr.n_effective,
            "blockade_density": float(np.mean(zeta == params.F)),
        })
    with open(os.path.join(out, "summary.json"), "w") as fh:
        json.dump(summary, fh, indent=2, sort_keys=True)
        fh.write("\n")
    print(f"wrote {ns.replicas} trajectory log(s) and summary.json to {out}")
    return 0


def cmd_phase(ns) -> int:
    from . import theory

    out = _resolve_out(ns)
    ns.subcommand = "phase"
    _echo_config(ns, out)
    grid = theory.phase_grid(ns.q_max, ns.F_max)
    csv_path = os.path.join(out, "phase.csv")
    theory.write_phase_csv(grid, csv_path)
    print(f"phase grid {ns.q_max}x{ns.F_max} written to {csv_path} "
          f"(c = {grid.c:.6f})")
    if ns.render:
        import matplotlib

        matplotlib.use("Agg")
        import matplotlib.pyplot as plt

        pos = grid.positive_cells()
        fig, ax = plt.subplots(figsize=(7, 5))
        ax.scatter([c.q for c in pos], [c.F for c in pos], marker="x", s=14,
                   label="fixation criterion > 0")
        qs = np.linspace(2, ns.q_max, 200)
        ax.plot(qs, grid.c * qs, "--", label=f"F = {grid.c:.3f} q")
        ax.set_xlabel("q (states per feature)")
        ax.set_ylabel("F (features)")
        ax.set_xlim(0, ns.q_max + 1)
        ax.set_ylim(0, ns.F_max + 1)
        ax.legend()
        png = os.path.join(out, "phase.png")
        fig.savefig(png, dpi=150, bbox_inches="tight")
        print(f"rendered {png}")
    return 0


def cmd_sweep(ns) -> int:
    from .experiments import sweep
    from .model import ModelParams

    out = _resolve_out(ns)
    _echo_config(ns, out)
    cells = [ModelParams(F=F, q=q, L=ns.L, topology=ns.topology)
             for q in ns.q for F in ns.F]
    path = os.path.join(out, "sweep.csv")
    aggs = sweep(cells, ns.replicas, ns.seed, path, horizon=ns.horizon,
                 event_cap=ns.event_cap, engine=ns.engine, parallel=ns.parallel)
    print(f"swept {len(cells)} cell(s) x {ns.replicas} replicas into {path}")
    for a in aggs:
        p = a["params"]
        print(f"  (q={p.q}, F={p.F}, L={p.L}): blockade density "
              f"{a['mean_blockade_density']:.4f} +- {a['se_blockade_density']:.4f}, "
              f"absorbed {a['n_absorbed']}/{a['n']}")
    return 0


def cmd_trace(ns) -> int:
    from .experiments import spacetime_export
    from .model import ModelParams

    out = _resolve_out(ns)
    _echo_config(ns, out)
    params = ModelParams(F=ns.F, q=ns.q, L=ns.L, topology=ns.topology)
    result = spacetime_export(params, ns.horizon, ns.seed, out,
                              snapshots=ns.snapshots, image=ns.render,
                              engine=ns.engine, event_cap=ns.event_cap)
    print(f"space-time stream: {result['stream']} "
          f"(end time {result['end_time']:.2f}, absorbed={result['absorbed']})")
    if "image" in result:
        print(f"raster: {result['image']}")
    return 0


# ---------------------------------------------------------- verify suites

class _Check:
    def __init__(self):
        self.rows = []

    def add(self, name, ok, detail=""):
        self.rows.append((name, bool(ok), detail))

    def report(self) -> int:
        n_fail = 0
        for name, ok, detail in self.rows:
            tag = "ok  " if ok else "FAIL"
            print(f"[{tag}] {name}" + (f": {detail}" if detail else ""))
            n_fail += not ok
        print(f"{len(self.rows) - n_fail}/{len(self.rows)} checks passed")
        return 1 if n_fail else 0


def _suite_lemma1(ns) -> int:
    from .experiments import collision_outcome_experiment
    from .model import ModelParams

    chk = _Check()
    q = ns.q
    params = ModelParams(F=max(ns.F, 3) if q == 2 else 3, q=q, L=400)
    rep = collision_outcome_experiment(params, ns.min_collisions, ns.seed, horizon=60.0)
    a = rep.aggregates
    chk.add("collisions accumulated", not a["shortfall"],
            f"{a['n_collisions']} >= {ns.min_collisions}")
    if q == 2:
        chk.add("q=2 purity: zero coalescences", a["n_coalescence"] == 0,
                f"{a['n_coalescence']} coalescences in {a['n_collisions']} collisions")
    else:
        target = 1.0 / (q - 1)
        ok = a["wilson3_low"] <= target <= a["wilson3_high"]
        chk.add(f"annihilation fraction ~ 1/(q-1) = {target:.4f}", ok,
                f"observed {a['fraction_annihilation']:.4f} "
                f"(3-sigma Wilson [{a['wilson3_low']:.4f}, {a['wilson3_high']:.4f}])")
        chk.add("outcome independent of target blockade status",
                a["chi2_p"] is not None and a["chi2_p"] > 0.001,
                f"chi-square p = {a['chi2_p']:.4f}")
    return chk.report()


def _suite_engines(ns) -> int:
    from .engine import run
    from .model import ModelParams, edge_disagreement_counts, sample_pi0
    from .seeding import derive_seed
    from .stats import combined_se, mean_se

    chk = _Check()
    params = ModelParams(F=ns.F, q=ns.q, L=ns.L)
    R = ns.replicas

    def collect(engine):
        at, bd, ne = [], [], []
        for r in range(R):
            config = sample_pi0(params, derive_seed(ns.seed, r, 0))
            tr = run(engine, params, config, math.inf, derive_seed(ns.seed, r, 1),
                     log=False)
            at.append(tr.end_time)
            ne.append(tr.n_effective)
            zeta = edge_disagreement_counts(tr.final)
            bd.append(float(np.mean(zeta == params.F)))
        return at, bd, ne

    hs = collect("harris")
    gs = collect("gillespie")
    for name, h, g in zip(("absorption time", "blockade density", "effective events"),
                          hs, gs):
        mh, sh = mean_se(h)
        mg, sg = mean_se(g)
        tol = 3 * combined_se(sh, sg)
        chk.add(f"{name} mean agreement", abs(mh - mg) <= tol,
                f"harris {mh:.4f} vs gillespie {mg:.4f} (3 combined SE {tol:.4f})")
    return chk.report()


def _suite_genealogy(ns) -> int:
    from . import genealogy
    from .engine import run_harris
    from .experiments import martingale_experiment
    from .model import ModelParams, sample_pi0
    from .seeding import derive_seed

    chk = _Check()
    ok = True
    detail = ""
    mixes = [(2, 2, 40), (2, 3, 60), (3, 3, 50), (4, 2, 40), (2, 5, 50)]
    count = 0
    for F, q, L in mixes:
        for r in range(3):
            params = ModelParams(F=F, q=q, L=L)
            config = sample_pi0(params, derive_seed(ns.seed, count, 0))
            tr = run_harris(params, config, 12.0, derive_seed(ns.seed, count, 1))
            try:
                genealogy.verify_genealogy(tr)
            except genealogy.GenealogyError as exc:
                ok = False
                detail = f"(F={F}, q={q}, L={L}) rep {r}: {exc}"
            count += 1
    chk.add(f"ancestry invariants on {count} trajectories", ok, detail)
    rep = martingale_experiment(ModelParams(F=2, q=3, L=201), 10.0, 100,
                                ns.replicas, ns.seed)
    a = rep.aggregates
    within = abs(a["mean_pooled"] - 1.0) <= 3 * a["se_pooled"]
    chk.add("descendant count mean = 1 (3 SE)", within,
            f"{a['mean_pooled']:.4f} +- {a['se_pooled']:.4f}")
    return chk.report()


def _suite_tails(ns) -> int:
    from fractions import Fraction

    from . import theory

    chk = _Check()
    p1 = theory.exact_tail_le_zero(3, 2, 1)
    chk.add("closed form at N=1 (q=3, F=2)", p1 == Fraction(7, 9), f"{p1}")
    q, F = ns.q, ns.F
    if theory.omega(q, F) <= 0:
        q, F = 10, 3
    vals = [theory.exact_tail_le_zero(q, F, N) for N in range(5, 31)]
    logs = [theory.log_fraction(v) for v in vals]
    mono = all(b < a for a, b in zip(logs, logs[1:]))
    chk.add(f"log tail strictly decreasing, N=5..30 at (q={q}, F={F})", mono,
            f"P(5)={float(vals[0]):.3e} -> P(30)={float(vals[-1]):.3e}")
    est = theory.mc_tail(q, F, 10, 200_000, ns.seed)
    exact = float(theory.exact_tail_le_zero(q, F, 10))
    chk.add("Monte Carlo agrees with exact DP at N=10",
            est.ci_low <= exact <= est.ci_high,
            f"mc {est.estimate:.5f} vs exact {exact:.5f}")
    gl = [theory.log_fraction(theory.geometric_tail(Fraction(1, 2), K, Fraction(1, 2)))
          for K in range(10, 201, 10)]
    chk.add("geometric sum tail log-linear decay", all(b < a for a, b in zip(gl, gl[1:])),
            f"log P: {gl[0]:.2f} -> {gl[-1]:.2f}")
    return chk.report()


def _suite_refined(ns) -> int:
    from . import theory

    chk = _Check()
    r = theory.refined_margin(3)
    chk.add("margin(3) = 4/243 exactly", r.margin == Fraction(4, 243), f"{r.margin}")
    chk.add("nu values at q=3",
            (r.nu0, r.nu1, r.nu2) == (Fraction(16, 81), Fraction(20, 81), Fraction(4, 9)),
            f"nu0={r.nu0} nu1={r.nu1} nu2={r.nu2}")
    chk.add("margin positive for q=3..1000",
            all(theory.refined_margin(q).margin > 0 for q in range(3, 1001)))
    return chk.report()


def _suite_race(ns) -> int:
    from .experiments import six_arrow_race

    chk = _Check()
    rep = six_arrow_race(max(ns.q, 3), max(ns.replicas, 20_000), ns.seed)
    a = rep.aggregates
    chk.add("inner arrows first with probability 1/3",
            abs(a["inner_first_fraction"] - 1 / 3) <= 0.01,
            f"{a['inner_first_fraction']:.4f}")
    chk.add("inner-first implies collision or blockade",
            a["collide_or_blockade_given_inner"] == 1.0,
            f"{a['outcomes_given_inner']}")
    return chk.report()


_SUITES = {
    "lemma1": _suite_lemma1,
    "engines": _suite_engines,
    "genealogy": _suite_genealogy,
    "tails": _suite_tails,
    "refined": _suite_refined,
    "race": _suite_race,
}


def cmd_verify(ns) -> int:
    if ns.suite not in _SUITES:
        known = ", ".join(sorted(_SUITES))
        print(f"unknown suite {ns.suite!r}; available suites: {known}", file=sys.stderr)
        return 2
    return _SUITES[ns.suite](ns)


def main(argv=None) -> int:
    parser = _build_parser()
    # a config file provides defaults; explicit flags override them
    pre, _ = parser.parse_known_args(argv) if argv is not None else parser.parse_known_args()
    if pre.config:
        with open(pre.config) as fh:
            data = json.load(fh)
        if data.get("horizon") == "inf":
            data["horizon"] = math.inf
        known = {a.dest for a in parser._actions}
        for sp in parser._subparsers._group_actions[0].choices.values():
            known |= {a.dest for a in sp._actions}
        bad = set(data) - known
        if bad:
            print(f"unknown config keys: {sorted(bad)}", file=sys.stderr)
            return 2
        for sp in parser._subparsers._group_actions[0].choices.values():
            sp.set_defaults(**{k: v for k, v in data.items()
                               if k in {a.dest for a in sp._actions}})
    ns = parser.parse_args(argv)
    try:
        handler = {
            "simulate": cmd_simulate,
            "phase": cmd_phase,
            "verify": cmd_verify,
            "sweep": cmd_sweep,
            "trace": cmd_trace,
        }[ns.subcommand]
        return handler(ns)
    except (ValueError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


def entry():
    sys.exit(main())


if __name__ == "__main__":
    entry()
