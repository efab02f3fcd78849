import math

import numpy as np
import pytest
from conftest import make_trajectory

from axelrod_lab import genealogy as gen
from axelrod_lab.engine import run_harris
from axelrod_lab.model import Configuration, ModelParams, sample_pi0
from axelrod_lab.seeding import derive_seed
from axelrod_lab.stats import mean_se


def test_ancestor_identity_at_time_zero():
    p = ModelParams(F=2, q=3, L=30)
    tr = run_harris(p, sample_pi0(p, 1), 5.0, seed=2)
    prof = gen.ancestry_profile(tr, 1, 0.0)
    assert np.array_equal(prof.ancestors, np.arange(30))
    assert gen.ancestor(tr, 17, 2, 0.0) == 17


def test_single_arrow_path():
    # one effective arrow 1 -> 0 on feature 1; afterwards 0's ancestor is 1,
    # everything else untouched, and the moved particle exits the interval
    p = ModelParams(F=2, q=3, L=3)
    c0 = Configuration(p, [[1, 1], [2, 1], [2, 1]])
    tr = make_trajectory(p, c0, [(0.5, 1, 0, 1, 0.1, True, True)])
    assert gen.ancestor(tr, 0, 1, 0.4) == 0
    assert gen.ancestor(tr, 0, 1, 0.5) == 1
    assert gen.ancestor(tr, 0, 1, tr.end_time) == 1
    assert gen.ancestor(tr, 2, 1, tr.end_time) == 2
    assert gen.ancestor(tr, 0, 2, tr.end_time) == 0


def test_noop_active_arrow_still_switches_ancestry():
    # endpoints agree on feature 1, the arrow is active but not effective;
    # ancestry follows every active arrow, so vertex 1 adopts 0's ancestor
    p = ModelParams(F=2, q=3, L=3)
    c0 = Configuration(p, [[1, 2], [1, 3], [2, 3]])
    tr = make_trajectory(p, c0, [(0.7, 0, 1, 1, 0.3, True, False)], end_time=1.0)
    assert tr.final == tr.initial
    assert gen.ancestor(tr, 1, 1, 1.0) == 0
    prof = gen.ancestry_profile(tr, 1, 1.0)  # feature identity still holds
    assert prof[1] == 0


def test_vertex_never_targeted_keeps_itself():
    p = ModelParams(F=2, q=3, L=40)
    tr = run_harris(p, sample_pi0(p, 3), 8.0, seed=4)
    ev = tr.events
    for x in range(p.L):
        targeted = np.any((ev.target == x) & ev.active & (ev.feature == 1))
        if not targeted:
            assert gen.ancestor(tr, x, 1, tr.end_time) == x
            break
    else:
        pytest.skip("every vertex was targeted")


def test_profile_monotone_and_consistent_with_pointwise():
    p = ModelParams(F=2, q=3, L=60)
    tr = run_harris(p, sample_pi0(p, 5), 12.0, seed=6)
    for i in (1, 2):
        prof = gen.ancestry_profile(tr, i, 9.0)
        assert np.all(np.diff(prof.ancestors) >= 0)
        for x in (0, 13, 59):
            assert gen.ancestor(tr, x, i, 9.0) == prof[x]


def test_descendants_partition_into_intervals():
    p = ModelParams(F=2, q=3, L=50)
    tr = run_harris(p, sample_pi0(p, 7), 10.0, seed=8)
    d0 = gen.descendants(tr, 20, 1, 0.0)
    assert (d0.lo, d0.hi, d0.size) == (20, 20, 1)
    total = 0
    for x in range(p.L):
        d = gen.descendants(tr, x, 1, 10.0)
        total += d.size
        if d.size:
            assert list(d.members()) == list(range(d.lo, d.hi + 1))
    assert total == p.L


def test_descendant_counts_bulk_matches_pointwise():
    p = ModelParams(F=2, q=3, L=40)
    tr = run_harris(p, sample_pi0(p, 9), 8.0, seed=10)
    M = gen.descendant_counts(tr, 8.0)
    assert M.shape == (2, 40)
    assert (M.sum(axis=1) == p.L).all()
    for i in (1, 2):
        for x in (0, 17, 39):
            assert M[i - 1, x] == gen.descendants(tr, x, i, 8.0).size


def test_martingale_mean_one_interior():
    p = ModelParams(F=2, q=3, L=121)
    vals = []
    for r in range(500):
        tr = run_harris(p, sample_pi0(p, derive_seed(33, r, 0)), 8.0,
                        seed=derive_seed(33, r, 1))
        M = gen.descendant_counts(tr, 8.0)
        vals.append(M[:, 60].mean())
    m, se = mean_se(vals)
    assert abs(m - 1.0) <= 3 * se


def test_first_hit_time_semantics():
    p = ModelParams(F=2, q=3, L=30)
    tr = run_harris(p, sample_pi0(p, 11), 10.0, seed=12)
    assert gen.first_hit_time(tr, 7, 1, 7) == 0.0
    t = gen.first_hit_time(tr, 14, 1, 15)
    if t is not None:
        assert gen.ancestor(tr, 15, 1, t) == 14
    # a far-away vertex is never the ancestor in so short a run
    assert gen.first_hit_time(tr, 0, 1, 29) is None


def test_distant_origin_fraction_decreases_with_distance():
    # fixation-regime probe: the chance the ancestry of a site ever reaches
    # beyond distance N shrinks as N grows
    p = ModelParams(F=2, q=3, L=81)
    radii = []
    for r in range(300):
        tr = run_harris(p, sample_pi0(p, derive_seed(55, r, 0)), 12.0,
                        seed=derive_seed(55, r, 1))
        radii.append(max(gen.ancestor_path_range(tr, i, 40) for i in (1, 2)))
    radii = np.array(radii)
    frac = [(radii > N).mean() for N in (1, 4, 8)]
    assert frac[0] > frac[1] > frac[2] >= 0.0


def test_interval_only_operations_reject_ring():
    p = ModelParams(F=2, q=3, L=30, topology="ring")
    tr = run_harris(p, sample_pi0(p, 13), 5.0, seed=14)
    with pytest.raises(ValueError):
        gen.descendants(tr, 5, 1, 2.0)
    with pytest.raises(ValueError):
        gen.first_hit_time(tr, 5, 1, 6)
    # pointwise ancestor is still defined on the ring
    assert isinstance(gen.ancestor(tr, 5, 1, 2.0), int)


def test_verify_genealogy_mixed_parameters():
    cases = [(2, 2, 40, "interval"), (2, 3, 50, "interval"),
             (3, 3, 40, "interval"), (4, 2, 30, "interval"),
             (2, 3, 40, "ring")]
    for n, (F, q, L, topo) in enumerate(cases):
        p = ModelParams(F=F, q=q, L=L, topology=topo)
        tr = run_harris(p, sample_pi0(p, derive_seed(77, n, 0)), 10.0,
                        seed=derive_seed(77, n, 1))
        out = gen.verify_genealogy(tr)
        assert out["arrows_checked"] >= 0


def test_profile_time_bounds_checked():
    p = ModelParams(F=2, q=3, L=30)
    tr = run_harris(p, sample_pi0(p, 15), 5.0, seed=16)
    with pytest.raises(ValueError):
        gen.ancestor(tr, 0, 1, -1.0)
    with pytest.raises(ValueError):
        gen.ancestor(tr, 0, 1, tr.end_time + 1.0)
    with pytest.raises(ValueError):
        gen.ancestor(tr, 0, 3, 1.0)


def test_ancestry_csv_export(tmp_path):
    p = ModelParams(F=2, q=3, L=20)
    tr = run_harris(p, sample_pi0(p, 17), 4.0, seed=18)
    path = tmp_path / "ancestry.csv"
    gen.write_ancestry_csv(tr, [0.0, 2.0], path)
    text = path.read_text().splitlines()
    assert text[0].startswith("# axelrod-lab ancestry")
    assert len([ln for ln in text if ln and not ln.startswith("#")]) > 2 * 2 * 20
