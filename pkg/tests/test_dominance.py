import numpy as np
import pytest

from conftest import make_dataset, random_dataset
from ltbracket.dominance import EcdfCurve, Verdict, classify, dominance_report, ecdf, ks_tolerance
from ltbracket.errors import EstimationError


def mirrored(d):
    return d.replace(y1=-d.y1, y2=-d.y2)


def interleaved():
    rows = [("O", 0, 0, 1), ("O", 0, 3, 2), ("O", 1, 1, 1), ("E", 0, 1, None), ("E", 0, 2, None), ("E", 1, 0, None)]
    return make_dataset(rows)


def test_two_point_ecdf():
    c = EcdfCurve.from_sample([3, 1])
    assert c(0.5) == 0 and c(1) == 0.5 and c(3) == 1 and c(2.9) == 0.5


def test_point_mass():
    c = EcdfCurve.from_sample([2.0, 2.0, 2.0])
    assert c(2.0) == 1 and c(np.nextafter(2.0, -np.inf)) == 0


def test_ecdf_order_invariant_and_duplicates():
    a = EcdfCurve.from_sample([3, 1, 2])
    b = EcdfCurve.from_sample([1, 2, 3])
    assert np.array_equal(a.cdf, b.cdf) and np.array_equal(a.support, b.support)
    dup = EcdfCurve.from_sample([1, 2, 3, 2])
    assert dup.n == 4 and np.array_equal(dup.support, a.support)
    assert dup.cdf.tolist() == [0.25, 0.75, 1.0]


def test_ecdf_invariants():
    c = EcdfCurve.from_sample(np.random.default_rng(0).normal(size=50))
    assert np.all(np.diff(c.cdf) >= 0) and c.cdf[-1] == 1.0


def test_empty_cell_errors():
    d = make_dataset([("O", 0, 1, 2), ("O", 1, 1, 2), ("E", 1, 1, None)])
    with pytest.raises(EstimationError):
        ecdf(d, 0, "E")


def test_d2_cells_ordered(d2):
    f_o, f_e = ecdf(d2, 0, "O"), ecdf(d2, 0, "E")
    ys = np.linspace(-1, 4, 101)
    assert np.all(f_o(ys) <= f_e(ys))


def test_d2_dominance_i(d2):
    r = dominance_report(d2)
    assert r.verdict is Verdict.DOMINANCE_I and not r.tie and r.max_violation == 0
    assert r.grid.tolist() == [0, 1, 2, 3]


def test_mirrored_d2_dominance_ii(d2):
    assert dominance_report(mirrored(d2)).verdict is Verdict.DOMINANCE_II


def test_identical_samples_tie(d0):
    r = dominance_report(d0)
    assert r.verdict is Verdict.DOMINANCE_I and r.tie and r.max_violation == 0


def test_interleaved_inconclusive():
    r = dominance_report(interleaved())
    assert r.verdict is Verdict.INCONCLUSIVE
    # brute force over the grid
    f_o, f_e = r.F_O, r.F_E
    assert np.any(f_o > f_e) and np.any(f_e > f_o)


def test_band_formula(d2):
    r = dominance_report(d2, alpha=0.05)
    f = r.F_O
    assert np.allclose(r.band_O, 1.959963984540054 * np.sqrt(f * (1 - f) / 2))


def test_evenly_spaced_grid(d2):
    r = dominance_report(d2, grid_size=7)
    assert r.grid[0] == 0 and r.grid[-1] == 3 and r.grid.size == 7
    assert r.verdict is Verdict.DOMINANCE_I


def test_tolerance_flips_verdict():
    assert classify(np.array([0.2]), np.array([0.1]), 0.0)[0] is Verdict.DOMINANCE_II
    assert classify(np.array([0.2, 0.0]), np.array([0.1, 0.3]), 0.0)[0] is Verdict.INCONCLUSIVE
    assert classify(np.array([0.2, 0.0]), np.array([0.1, 0.3]), 0.15)[0] is Verdict.DOMINANCE_I


def test_mirror_swaps_direction_on_random_data():
    rng = np.random.default_rng(1)
    for _ in range(30):
        d = random_dataset(rng)
        v = dominance_report(d).verdict
        vm = dominance_report(mirrored(d)).verdict
        swap = {Verdict.DOMINANCE_I: Verdict.DOMINANCE_II, Verdict.DOMINANCE_II: Verdict.DOMINANCE_I}
        if v is Verdict.INCONCLUSIVE:
            assert vm is Verdict.INCONCLUSIVE
        elif not dominance_report(d).tie:
            assert vm is swap[v]


def test_monotone_transform_invariance_random():
    rng = np.random.default_rng(2)
    for _ in range(20):
        d = random_dataset(rng)
        v = dominance_report(d).verdict
        t = d.replace(y1=np.exp(d.y1 / 5.0) + d.y1 ** 3)
        assert dominance_report(t).verdict is v


def test_ks_tolerance():
    assert ks_tolerance(100, 100, 0.05) == pytest.approx(np.sqrt(np.log(40) / 2 * 200 / 10000))
    assert ks_tolerance(10**6, 10**6) < ks_tolerance(100, 100)
