import math
from fractions import Fraction

import numpy as np
import pytest
from hypothesis import given, strategies as st

from _oracles import brute_tail_le_zero
from axelrod_lab import theory as th


def test_omega_anchor_values():
    assert th.omega(3, 2) == 0
    assert th.omega(2, 2) == Fraction(-1, 2)
    assert th.omega(10, 3) == Fraction(459, 100)


def test_omega_rejects_small_parameters():
    for q, F in [(1, 2), (2, 1), (0, 5), (3, 0)]:
        with pytest.raises(ValueError):
            th.omega(q, F)


@given(st.integers(2, 20), st.integers(2, 20))
def test_weight_mean_equals_omega_exactly(q, F):
    assert th.phi_distribution(q, F).mean == th.omega(q, F)


@given(st.integers(2, 12), st.integers(2, 8))
def test_weight_law_sums_to_one_exactly(q, F):
    d = th.phi_distribution(q, F)
    k_cut = 60
    total = sum(d.mu[i] for i in range(F))
    total += sum(d.mu[F] * d.geometric_pmf(k) for k in range(1, k_cut + 1))
    total += d.geometric_tail_mass(k_cut)
    assert total == 1


def test_weight_pmf_values_at_q3_F2():
    d = th.phi_distribution(3, 2)
    assert d.mu == (Fraction(1, 9), Fraction(4, 9), Fraction(4, 9))
    assert d.p == Fraction(1, 2)
    # blockade part: psi has mean q - 1 = 2
    mean_psi = sum(k * d.geometric_pmf(k) for k in range(1, 400))
    assert abs(float(mean_psi) - 2.0) < 1e-9
    # overlapping support: value 0 collects mu_0 and the blockade psi = 1 mass
    assert d.pmf(0) == d.mu[0] + d.mu[2] * d.geometric_pmf(1) == Fraction(1, 3)
    # value -1 is purely the one-particle case (blockade weights are >= 0 here)
    assert d.pmf(-1) == d.mu[1] == Fraction(4, 9)
    assert d.pmf(3) == d.mu[2] * d.geometric_pmf(4)


def test_weight_law_q2_degenerate_geometric():
    d = th.phi_distribution(2, 3)
    assert d.p == 1
    assert d.geometric_pmf(1) == 1 and d.geometric_pmf(2) == 0
    assert d.mean == th.omega(2, 3)


def test_critical_slope():
    c = th.critical_slope()
    assert abs(math.exp(-c) - c) < 1e-12
    assert round(c, 3) == 0.567
    c_fp = th.critical_slope("fixed-point")
    assert abs(c - c_fp) < 1e-9
    with pytest.raises(ValueError):
        th.critical_slope("newton")


def test_phase_grid_anchors_and_monotonicity():
    grid = th.phase_grid(40, 30)
    assert grid.cell(3, 2).sign == 0
    assert grid.cell(4, 2).sign == 1
    assert grid.cell(2, 2).sign == -1
    for q in range(2, 41):
        signs = [grid.cell(q, F).sign for F in range(2, 31)]
        positives = [F for F, s in zip(range(2, 31), signs) if s > 0]
        if positives:  # downward closed from F = 2 upward
            assert positives == list(range(2, max(positives) + 1))


def test_phase_grid_cq_line_is_positive():
    grid = th.phase_grid(100, 60)
    for cell in grid.cells:
        if cell.below_c_line:
            assert cell.sign > 0, (cell.q, cell.F)


def test_phase_grid_csv(tmp_path):
    grid = th.phase_grid(10, 8)
    path = tmp_path / "phase.csv"
    th.write_phase_csv(grid, path)
    lines = path.read_text().splitlines()
    assert lines[0].startswith(f"# {th.PHASE_FORMAT_TAG}")
    assert f"c={grid.c:.6f}" in lines[0]
    assert len(lines) == 2 + 9 * 7  # header rows + all cells
    row32 = [ln for ln in lines if ln.startswith("3,2,")][0]
    assert row32.split(",")[2:5] == ["0", "1", "0"]  # omega 0/1, sign 0


def test_exact_tail_closed_form_N1():
    assert th.exact_tail_le_zero(3, 2, 1) == Fraction(7, 9)
    # generic N=1 closed form: 1 - mu_F * P(psi >= F)
    for q, F in [(5, 3), (4, 2), (10, 3)]:
        d = th.phi_distribution(q, F)
        expected = 1 - d.mu[F] * (1 - d.p) ** (F - 1)
        assert th.exact_tail_le_zero(q, F, 1) == expected


@pytest.mark.parametrize("q,F,n_max", [(3, 2, 6), (5, 3, 6), (2, 2, 6), (10, 3, 3)])
def test_exact_tail_matches_brute_enumeration(q, F, n_max):
    for N in range(1, n_max + 1):
        exact = th.exact_tail_le_zero(q, F, N)
        low, err = brute_tail_le_zero(q, F, N)
        assert err < Fraction(1, 10**12)
        assert low <= exact <= low + err
        assert abs(float(exact) - float(low)) < 1e-10


def test_exact_tail_decreasing_when_omega_positive():
    vals = [th.exact_tail_le_zero(10, 3, N) for N in range(5, 26)]
    logs = [th.log_fraction(v) for v in vals]
    assert all(b < a for a, b in zip(logs, logs[1:]))


def test_exact_tail_input_validation():
    with pytest.raises(ValueError):
        th.exact_tail_le_zero(3, 2, 0)
    with pytest.raises(ValueError):
        th.exact_tail_le_zero(3, 2, 10**9)  # DP state bound
    with pytest.raises(ValueError):
        th.exact_tail_le_zero(1, 2, 3)


def test_mc_tail_agrees_with_exact():
    est = th.mc_tail(3, 2, 1, 100_000, seed=5)
    assert 0.0 <= est.ci_low <= est.estimate <= est.ci_high <= 1.0
    exact = 7 / 9
    se = math.sqrt(exact * (1 - exact) / est.replicas)
    assert abs(est.estimate - exact) <= 3 * se
    est10 = th.mc_tail(10, 3, 10, 100_000, seed=6)
    exact10 = float(th.exact_tail_le_zero(10, 3, 10))
    se10 = math.sqrt(exact10 * (1 - exact10) / est10.replicas)
    assert abs(est10.estimate - exact10) <= 3 * se10


def test_mc_tail_validation():
    with pytest.raises(ValueError):
        th.mc_tail(3, 2, 1, 0, seed=1)


def test_geometric_tail_values():
    # threshold below the minimum possible sum: probability zero
    assert th.geometric_tail(Fraction(1, 2), 1, Fraction(3, 2)) == 0
    # P(X <= 1) for one geometric(1/2) is 1/2
    assert th.geometric_tail(Fraction(1, 2), 1, Fraction(1, 2)) == Fraction(1, 2)
    # monotone in epsilon (larger epsilon, smaller threshold)
    a = th.geometric_tail(Fraction(1, 2), 20, Fraction(1, 4))
    b = th.geometric_tail(Fraction(1, 2), 20, Fraction(1, 2))
    c = th.geometric_tail(Fraction(1, 2), 20, Fraction(3, 4))
    assert a >= b >= c
    with pytest.raises(ValueError):
        th.geometric_tail(Fraction(3, 2), 5, Fraction(1, 2))
    with pytest.raises(ValueError):
        th.geometric_tail(Fraction(1, 2), 0, Fraction(1, 2))
    with pytest.raises(ValueError):
        th.geometric_tail(Fraction(1, 2), 5, Fraction(5, 2))


def test_geometric_tail_log_linear_decay():
    Ks = list(range(10, 201, 10))
    logs = np.array([th.log_fraction(th.geometric_tail(Fraction(1, 2), K, Fraction(1, 2)))
                     for K in Ks])
    assert np.all(np.diff(logs) < 0)
    A = np.vstack([Ks, np.ones(len(Ks))]).T
    coef, *_ = np.linalg.lstsq(A, logs, rcond=None)
    pred = A @ coef
    r2 = 1 - ((logs - pred) ** 2).sum() / ((logs - logs.mean()) ** 2).sum()
    assert coef[0] < 0 and r2 > 0.995


def test_refined_margin_values():
    r = th.refined_margin(3)
    assert r.margin == Fraction(4, 243)
    assert (r.nu0, r.nu1, r.nu2) == (Fraction(16, 81), Fraction(20, 81), Fraction(4, 9))
    with pytest.raises(ValueError):
        th.refined_margin(2)


def test_refined_margin_positive_and_minimised_at_q3():
    margins = {q: th.refined_margin(q).margin for q in range(3, 201)}
    assert all(m > 0 for m in margins.values())
    assert min(margins.values()) == margins[3] == Fraction(4, 243)


def test_weight_table_shape():
    table = th.RefinedWeights.WEIGHT_TABLE
    assert table["empty"] == 0
    assert table["lone_collides_or_forms_blockade"] == Fraction(-1, 2)
    assert table["lone_hits_blockade"] == -1
    assert "psi" in table["blockade"]


def test_tail_table_csv(tmp_path):
    rows = [{"N": n, "exact_P": th.exact_tail_le_zero(10, 3, n),
             "mc": th.mc_tail(10, 3, n, 10_000, seed=n)} for n in (2, 4)]
    path = tmp_path / "tails.csv"
    th.write_tail_table_csv(rows, path)
    lines = path.read_text().splitlines()
    assert lines[0].startswith(f"# {th.TAIL_FORMAT_TAG}")
    assert len(lines) == 4


def test_log_fraction():
    assert abs(th.log_fraction(Fraction(1, 2)) + math.log(2)) < 1e-15
    big = Fraction(10**500, 3**1000)
    assert abs(th.log_fraction(big) - (500 * math.log(10) - 1000 * math.log(3))) < 1e-9
    with pytest.raises(ValueError):
        th.log_fraction(Fraction(0))
