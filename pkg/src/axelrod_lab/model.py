"""Static definitions of the one-dimensional Axelrod model.

Vertices 0..L-1 each hold a culture vector of F features, every feature in
a state from {1..q}. Neighbours interact at a rate equal to the fraction
of features they share and copy one disagreeing feature. Two topologies
are supported: "interval" (free boundaries, L-1 edges) and "ring"
(periodic, L edges); edge e joins vertices e and e+1 (mod L on the ring).

Conventions used across the package: vertices and edges are 0-based,
features are numbered 1..F in all public interfaces, states are 1..q.
"""

from __future__ import annotations

from dataclasses import dataclass
from fractions import Fraction

import numpy as np

from .seeding import check_seed, rng_from_seed

TOPOLOGIES = ("interval", "ring")


@dataclass(frozen=True)
class ModelParams:
    """Model parameters: F features, q states per feature, L vertices."""

    F: int
    q: int
    L: int
    topology: str = "interval"

    def __post_init__(self):
        if self.F < 2:
            raise ValueError(f"F must be >= 2, got {self.F}")
        if self.q < 2:
            raise ValueError(f"q must be >= 2, got {self.q}")
        if self.L < 2:
            raise ValueError(f"L must be >= 2, got {self.L}")
        if self.topology not in TOPOLOGIES:
            raise ValueError(f"topology must be one of {TOPOLOGIES}, got {self.topology!r}")
        if self.topology == "ring" and self.L < 3:
            # L=2 ring would be a two-edge multigraph; not supported.
            raise ValueError("ring topology requires L >= 3")

    @property
    def is_ring(self) -> bool:
        return self.topology == "ring"

    @property
    def n_edges(self) -> int:
        return self.L if self.is_ring else self.L - 1

    def neighbors(self, x: int) -> tuple[int, ...]:
        if self.is_ring:
            return ((x - 1) % self.L, (x + 1) % self.L)
        out = []
        if x > 0:
            out.append(x - 1)
        if x < self.L - 1:
            out.append(x + 1)
        return tuple(out)

    def edge_endpoints(self, e: int) -> tuple[int, int]:
        if not 0 <= e < self.n_edges:
            raise ValueError(f"edge {e} out of range 0..{self.n_edges - 1}")
        return (e, (e + 1) % self.L)

    def edge_between(self, x: int, y: int) -> int:
        """Edge index joining adjacent vertices x and y; raises if not adjacent."""
        if not self.are_adjacent(x, y):
            raise ValueError(f"vertices {x} and {y} are not adjacent")
        if self.is_ring:
            return x if (x + 1) % self.L == y else y
        return min(x, y)

    def are_adjacent(self, x: int, y: int) -> bool:
        if not (0 <= x < self.L and 0 <= y < self.L):
            return False
        if self.is_ring:
            return (x - y) % self.L in (1, self.L - 1) and x != y
        return abs(x - y) == 1


class Configuration:
    """An immutable culture field: an (L, F) array of states in 1..q."""

    __slots__ = ("params", "cultures")

    def __init__(self, params: ModelParams, cultures):
        # always copy so freezing the array can never leak to the caller
        arr = np.array(cultures, dtype=np.int64, order="C", copy=True)
        if arr.shape != (params.L, params.F):
            raise ValueError(f"cultures must have shape ({params.L}, {params.F}), got {arr.shape}")
        if arr.min() < 1 or arr.max() > params.q:
            raise ValueError(f"states must lie in 1..{params.q}")
        arr.setflags(write=False)
        object.__setattr__(self, "params", params)
        object.__setattr__(self, "cultures", arr)

    def __setattr__(self, name, value):
        raise AttributeError("Configuration is immutable")

    def __eq__(self, other):
        return (
            isinstance(other, Configuration)
            and self.params == other.params
            and np.array_equal(self.cultures, other.cultures)
        )

    def __repr__(self):
        p = self.params
        return f"Configuration(F={p.F}, q={p.q}, L={p.L}, {p.topology})"

    def culture(self, x: int) -> tuple[int, ...]:
        return tuple(int(v) for v in self.cultures[x])

    def state(self, x: int, i: int) -> int:
        """State of feature i (1-based) at vertex x."""
        return int(self.cultures[x, i - 1])

    def to_text(self) -> str:
        """Plain text form: a header line, then one comma-separated line per vertex."""
        p = self.params
        lines = [f"F={p.F} q={p.q} L={p.L} topology={p.topology}"]
        lines.extend(",".join(str(int(v)) for v in row) for row in self.cultures)
        return "\n".join(lines) + "\n"

    @classmethod
    def from_text(cls, text: str) -> "Configuration":
        lines = [ln for ln in text.splitlines() if ln.strip()]
        if not lines:
            raise ValueError("empty configuration text")
        fields = dict(part.split("=", 1) for part in lines[0].split())
        params = ModelParams(
            F=int(fields["F"]), q=int(fields["q"]), L=int(fields["L"]),
            topology=fields["topology"],
        )
        if len(lines) - 1 != params.L:
            raise ValueError(f"expected {params.L} vertex lines, got {len(lines) - 1}")
        rows = [[int(v) for v in ln.split(",")] for ln in lines[1:]]
        return cls(params, rows)


def sample_pi0(params: ModelParams, seed: int) -> Configuration:
    """Draw the product initial condition: every (vertex, feature) state
    independent and uniform on 1..q. Deterministic given the seed."""
    rng = rng_from_seed(check_seed(seed))
    cultures = rng.integers(1, params.q + 1, size=(params.L, params.F), dtype=np.int64)
    return Configuration(params, cultures)


def overlap(config: Configuration, x: int, y: int) -> Fraction:
    """Fraction of features the adjacent vertices x and y share, exact in
    multiples of 1/F."""
    p = config.params
    if not p.are_adjacent(x, y):
        raise ValueError(f"overlap requires adjacent vertices, got {x}, {y}")
    shared = int(np.count_nonzero(config.cultures[x] == config.cultures[y]))
    return Fraction(shared, p.F)


def apply_update(config: Configuration, x: int, y: int, i: int) -> Configuration:
    """Set feature i (1-based) of vertex x equal to feature i of the adjacent
    vertex y; every other cell is unchanged."""
    p = config.params
    if not p.are_adjacent(x, y):
        raise ValueError(f"update requires adjacent vertices, got {x}, {y}")
    if not 1 <= i <= p.F:
        raise ValueError(f"feature must lie in 1..{p.F}, got {i}")
    cultures = config.cultures.copy()
    cultures[x, i - 1] = cultures[y, i - 1]
    return Configuration(p, cultures)


def edge_disagreement_counts(config: Configuration) -> np.ndarray:
    """Per-edge count of disagreeing features, an int array of length n_edges.

    Entry e is F * (1 - overlap) across edge e; edges with count F are
    frozen (no interaction), edges with count 0 are inert.
    """
    p = config.params
    c = config.cultures
    if p.is_ring:
        other = np.roll(c, -1, axis=0)
    else:
        other = c[1:]
        c = c[:-1]
    return np.count_nonzero(c != other, axis=1).astype(np.int64)


def is_absorbed(config: Configuration) -> bool:
    """True iff every adjacent pair has overlap 0 or 1, i.e. every transition
    rate is zero and the configuration can never change again."""
    zeta = edge_disagreement_counts(config)
    F = config.params.F
    return bool(np.all((zeta == 0) | (zeta == F)))
