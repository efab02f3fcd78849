"""Closed-form and exact-numeric side of the laboratory.

Central object: the fixation criterion value

    omega(q, F) = q (1 - 1/q)**F - F (1 - 1/q),

computed in exact rational arithmetic (its zero at (q, F) = (3, 2) is a
boundary case that float rounding could misclassify). Positivity of
omega is the sufficient fixation condition; the asymptotic boundary in
the (q, F) plane is the line F = c q with e**(-c) = c.

The comparison-weight law attaches to every edge an independent weight:
-i when the edge initially holds i < F particles, and psi - (F - 1) for
an initial blockade, where psi is geometric with mean q - 1 (the number
of collisions needed to break the blockade). Its mean is exactly
omega(q, F), and P(sum over an interval <= 0) decays exponentially in the
interval length whenever omega > 0; ``exact_tail_le_zero`` evaluates that
probability exactly by dynamic programming.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from fractions import Fraction

import numpy as np

from .seeding import rng_from_seed
from .stats import wilson_interval

PHASE_FORMAT_TAG = "axelrod-lab phase-grid v1"
TAIL_FORMAT_TAG = "axelrod-lab tail-table v1"


def _check_qF(q: int, F: int):
    if q < 2 or F < 2:
        raise ValueError(f"q and F must both be >= 2, got q={q}, F={F}")


def omega(q: int, F: int) -> Fraction:
    """Exact value of q(1 - 1/q)**F - F(1 - 1/q)."""
    _check_qF(q, F)
    s = Fraction(q - 1, q)
    return q * s**F - F * s


def critical_slope(method: str = "bisection", tol: float = 1e-14) -> float:
    """The unique root c of exp(-c) = c (approximately 0.567143).

    Two independent solvers are provided: interval bisection on
    [0.5, 0.6] and damped-free fixed-point iteration c <- exp(-c), which
    converges since |d/dc exp(-c)| < 1 near the root.
    """
    if method == "bisection":
        lo, hi = 0.5, 0.6
        while hi - lo > tol:
            mid = 0.5 * (lo + hi)
            if math.exp(-mid) - mid > 0:
                lo = mid
            else:
                hi = mid
        return 0.5 * (lo + hi)
    if method == "fixed-point":
        c = 0.5
        for _ in range(200):
            nxt = math.exp(-c)
            if abs(nxt - c) < tol:
                return nxt
            c = nxt
        return c
    raise ValueError(f"unknown method {method!r}")


@dataclass(frozen=True)
class PhaseCell:
    q: int
    F: int
    omega: Fraction
    sign: int              # -1, 0, +1
    below_c_line: bool     # F <= c*q


@dataclass(frozen=True)
class PhaseGrid:
    """Sign of omega over the integer rectangle 2..q_max x 2..F_max."""

    q_max: int
    F_max: int
    c: float
    cells: tuple[PhaseCell, ...]

    def cell(self, q: int, F: int) -> PhaseCell:
        return self.cells[(q - 2) * (self.F_max - 1) + (F - 2)]

    def positive_cells(self) -> list[PhaseCell]:
        return [c for c in self.cells if c.sign > 0]


def phase_grid(q_max: int = 100, F_max: int = 100) -> PhaseGrid:
    """Exact signs of omega over the grid, with the F = c*q reference line."""
    if q_max < 2 or F_max < 2:
        raise ValueError("grid bounds must be >= 2")
    c = critical_slope()
    cells = []
    for q in range(2, q_max + 1):
        s = Fraction(q - 1, q)
        pw = s * s
        for F in range(2, F_max + 1):
            # pw = s**F maintained incrementally
            w = q * pw - F * s
            sign = (w > 0) - (w < 0)
            cells.append(PhaseCell(q=q, F=F, omega=w, sign=sign,
                                   below_c_line=F <= c * q))
            pw *= s
    return PhaseGrid(q_max=q_max, F_max=F_max, c=c, cells=tuple(cells))


def write_phase_csv(grid: PhaseGrid, path) -> None:
    import csv

    with open(path, "w", newline="") as fh:
        fh.write(f"# {PHASE_FORMAT_TAG} c={grid.c:.6f}\n")
        w = csv.writer(fh)
        w.writerow(["q", "F", "omega_numerator", "omega_denominator", "sign",
                    "below_c_line"])
        for cell in grid.cells:
            w.writerow([cell.q, cell.F, cell.omega.numerator,
                        cell.omega.denominator, cell.sign,
                        int(cell.below_c_line)])


def _binomial_pmf(F: int, p: Fraction) -> list[Fraction]:
    """Exact pmf of Binomial(F, p) as a list indexed by the count."""
    out = []
    for i in range(F + 1):
        out.append(math.comb(F, i) * p**i * (1 - p) ** (F - i))
    return out


@dataclass(frozen=True)
class WeightDistribution:
    """Exact law of the per-edge comparison weight.

    mu[i] is the chance the edge starts with i particles
    (Binomial(F, 1 - 1/q)); weight -i for i < F. A blockade (prob mu[F])
    carries psi - (F - 1) with psi geometric on {1, 2, ...}, success
    probability p = 1/(q - 1), mean q - 1.
    """

    q: int
    F: int
    mu: tuple[Fraction, ...]
    p: Fraction

    @property
    def mean(self) -> Fraction:
        """Exact mean, assembled from the law's two parts."""
        active = sum(-i * self.mu[i] for i in range(self.F))
        blockade = self.mu[self.F] * ((self.q - 1) - (self.F - 1))
        return active + blockade

    def geometric_pmf(self, k: int) -> Fraction:
        if k < 1:
            return Fraction(0)
        return (1 - self.p) ** (k - 1) * self.p

    def pmf(self, value: int) -> Fraction:
        """Exact point mass at an integer weight value."""
        total = Fraction(0)
        if -(self.F - 1) <= value <= 0:
            total += self.mu[-value]
        k = value + (self.F - 1)
        if k >= 1:
            total += self.mu[self.F] * self.geometric_pmf(k)
        return total

    def geometric_tail_mass(self, k_max: int) -> Fraction:
        """Blockade mass with psi > k_max."""
        return self.mu[self.F] * (1 - self.p) ** k_max

    def sample_sums(self, rng: np.random.Generator, n_sites: int,
                    replicas: int) -> np.ndarray:
        """iid samples of the weight summed over n_sites edges."""
        zeta = rng.binomial(self.F, 1.0 - 1.0 / self.q, size=(replicas, n_sites))
        phi = -zeta.astype(np.int64)
        blockades = zeta == self.F
        n_blk = int(blockades.sum())
        if n_blk:
            psi = rng.geometric(float(self.p), size=n_blk)
            phi[blockades] = psi - (self.F - 1)
        return phi.sum(axis=1)


def phi_distribution(q: int, F: int) -> WeightDistribution:
    """Exact comparison-weight law for the given parameters."""
    _check_qF(q, F)
    mu = tuple(_binomial_pmf(F, Fraction(q - 1, q)))
    return WeightDistribution(q=q, F=F, mu=mu, p=Fraction(1, q - 1))


def exact_tail_le_zero(q: int, F: int, N: int, max_states: int = 2_000_000) -> Fraction:
    """Exact P(sum of N iid comparison weights <= 0), by integer-scaled DP.

    The weight is bounded below by -(F - 1), so a partial sum that exceeds
    (remaining sites) * (F - 1) can never return to <= 0; such mass is
    folded into an absorbing "safe" bucket. The folding is lossless for
    the <= 0 query, and all arithmetic is integer over a global power
    denominator, so the result is an exact rational.
    """
    _check_qF(q, F)
    if N < 1:
        raise ValueError(f"N must be >= 1, got {N}")
    span = N * (F - 1)
    if 2 * span + 1 > max_states:
        raise ValueError(f"N={N} needs {2 * span + 1} DP states, above the "
                         f"configured bound {max_states}")
    k_max = span + (F - 1)  # largest psi whose weight can still matter
    g = max(0, k_max - F)
    # per-step denominator and integer numerators of the weight pmf
    denom = q**F * (q - 1) ** g
    mu_num = [math.comb(F, i) * (q - 1) ** (i + g) for i in range(F + 1)]
    # combined pmf numerators over the contiguous value range
    # [-(F-1), k_max-(F-1)]: active part -i plus blockade part k-(F-1)
    v_min = -(F - 1)
    width = k_max - (F - 1) - v_min + 1
    num_by_v = [0] * width
    for i in range(F):
        num_by_v[-i - v_min] += mu_num[i]
    for k in range(1, k_max + 1):
        num_by_v[k - (F - 1) - v_min] += (q - 2) ** (k - 1) * (q - 1) ** (F - k + g)
    tail_safe_num = (q - 2) ** k_max * (q - 1) ** (F - k_max + g)
    # suffix[j] = mass of all values with index >= j, plus the psi > k_max tail
    suffix = [tail_safe_num] * (width + 1)
    for j in range(width - 1, -1, -1):
        suffix[j] = suffix[j + 1] + num_by_v[j]

    dp = {0: 1}
    safe = 0
    for m in range(1, N + 1):
        cap = (N - m) * (F - 1)  # partial sums above cap can never matter
        new: dict[int, int] = {}
        new_safe = safe * denom
        for s, mass in dp.items():
            j_hi = min(cap - s - v_min, width - 1)
            new_safe += mass * suffix[j_hi + 1]
            for j in range(j_hi + 1):
                num = num_by_v[j]
                if num:
                    sv = s + v_min + j
                    new[sv] = new.get(sv, 0) + mass * num
        dp = new
        safe = new_safe
    total_le0 = sum(mass for s, mass in dp.items() if s <= 0)
    scale = denom**N
    # conservation audit: every unit of mass is in dp or safe
    if safe + sum(dp.values()) != scale:
        raise AssertionError("DP mass not conserved")
    return Fraction(total_le0, scale)


@dataclass(frozen=True)
class McTailEstimate:
    estimate: float
    ci_low: float
    ci_high: float
    replicas: int
    hits: int


def mc_tail(q: int, F: int, N: int, replicas: int, seed: int) -> McTailEstimate:
    """Monte Carlo estimate of P(sum of N weights <= 0), Wilson 95% CI."""
    if replicas < 1:
        raise ValueError("replicas must be >= 1")
    dist = phi_distribution(q, F)
    rng = rng_from_seed(seed)
    sums = dist.sample_sums(rng, N, replicas)
    hits = int(np.count_nonzero(sums <= 0))
    lo, hi = wilson_interval(hits, replicas)
    return McTailEstimate(estimate=hits / replicas, ci_low=lo, ci_high=hi,
                          replicas=replicas, hits=hits)


def geometric_tail(p, K: int, epsilon) -> Fraction:
    """Exact P(X_1 + ... + X_K <= (1/p - epsilon) K) for iid geometric X_i
    on {1, 2, ...}, via the negative binomial distribution function."""
    p = Fraction(p)
    epsilon = Fraction(epsilon)
    if not 0 < p < 1:
        raise ValueError(f"p must lie strictly between 0 and 1, got {p}")
    if epsilon >= 1 / p:
        raise ValueError("epsilon must be smaller than the mean 1/p")
    if K < 1:
        raise ValueError("K must be >= 1")
    threshold = (1 / p - epsilon) * K
    m = math.floor(threshold)
    if m < K:
        return Fraction(0)
    total = Fraction(0)
    for n in range(K, m + 1):
        total += math.comb(n - 1, K - 1) * p**K * (1 - p) ** (n - K)
    return total


@dataclass(frozen=True)
class RefinedWeights:
    """Two-feature refined weight constants as exact rationals.

    For F = 2 the half-integer lattice is split into adjacent pairs; a
    lone particle whose pair partner also holds a lone particle is
    "good". nu0 is the chance a pair carries two good particles, nu1 the
    chance a site carries a bad lone particle, nu2 the chance of an
    initial blockade. The refined weights give a blockade psi - 1, an
    empty site 0, a lone particle -1/2 when its fate is another active
    particle (collision or blockade formation) and -1 when it hits a
    blockade; fixation needs margin = (q-2) nu2 - nu1 - 11 nu0 / 12 > 0.
    """

    q: int
    nu0: Fraction
    nu1: Fraction
    nu2: Fraction
    margin: Fraction

    #: refined weight by initial-site case; the -1/2 vs -1 split depends on
    #: the particle's dynamical fate, not on the initial state alone
    WEIGHT_TABLE = {
        "blockade": "psi - 1 (psi geometric, mean q - 1)",
        "empty": Fraction(0),
        "lone_collides_or_forms_blockade": Fraction(-1, 2),
        "lone_hits_blockade": Fraction(-1),
    }


def refined_margin(q: int) -> RefinedWeights:
    """Exact refined constants for the two-feature model, q >= 3."""
    if q < 3:
        raise ValueError(f"refined weights require q >= 3, got {q}")
    mu = _binomial_pmf(2, Fraction(q - 1, q))
    p1, p2 = mu[1], mu[2]
    nu0 = p1 * p1
    nu1 = p1 * (1 - p1)
    nu2 = p2
    margin = (q - 2) * nu2 - nu1 - Fraction(11, 12) * nu0
    return RefinedWeights(q=q, nu0=nu0, nu1=nu1, nu2=nu2, margin=margin)


def log_fraction(x: Fraction) -> float:
    """Natural log of a positive rational, safe for huge numerators."""
    if x <= 0:
        raise ValueError("log of nonpositive value")
    return math.log(x.numerator) - math.log(x.denominator)


def write_tail_table_csv(rows, path) -> None:
    """rows: iterable of dicts with keys N, exact_P, mc (McTailEstimate or
    None). Writes the versioned tail-table CSV."""
    import csv

    with open(path, "w", newline="") as fh:
        fh.write(f"# {TAIL_FORMAT_TAG}\n")
        w = csv.writer(fh)
        w.writerow(["N", "exact_P", "mc_P", "mc_ci_low", "mc_ci_high"])
        for row in rows:
            mc = row.get("mc")
            w.writerow([
                row["N"], repr(float(row["exact_P"])),
                repr(mc.estimate) if mc else "",
                repr(mc.ci_low) if mc else "",
                repr(mc.ci_high) if mc else "",
            ])
