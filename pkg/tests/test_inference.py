import math
import warnings

import numpy as np
import pytest

from conftest import make_dataset, random_dataset
from ltbracket.data import CELLS
from ltbracket.errors import EstimationError, InferenceError
from ltbracket.inference import (
    BootstrapDistribution,
    BootstrapSpec,
    LowReplicateWarning,
    bootstrap,
    lalonde_tests,
    replicate_dataset,
    replicate_index,
    standard_errors,
    two_sided_p,
    wald_difference_test,
)


def d2_with_experimental(d2, e_y2):
    """D2 with y2 filled in for the E rows (E1, E1, E0, E0 order)."""
    y2 = d2.y2.copy()
    y2[d2.group == "E"] = e_y2
    return d2.replace(y2=y2)


@pytest.fixture
def rich():
    return random_dataset(np.random.default_rng(5), n_min=20, n_max=40, with_exp_y2=True)


def test_spec_validation():
    with pytest.raises(ValueError):
        BootstrapSpec(replicates=1)
    with pytest.raises(ValueError):
        BootstrapSpec(level=1.0)
    with pytest.raises(ValueError):
        BootstrapSpec(seed=-1)
    assert BootstrapSpec().replicates == 1000
    assert BootstrapSpec().z == pytest.approx(1.959964, abs=1e-6)


def test_replicates_preserve_cell_sizes(rich):
    spec = BootstrapSpec(20, seed=1)
    for b in range(20):
        rd = replicate_dataset(rich, spec, b)
        for g, w in CELLS:
            assert rd.cell(g, w).sum() == rich.cell(g, w).sum()


def test_replicate_draws_stay_inside_cells(rich):
    idx = replicate_index(rich, BootstrapSpec(5, seed=2), 3)
    rd = rich.take(idx)
    assert np.array_equal(rd.group, rich.group[idx])
    for g, w in CELLS:
        src = set(np.flatnonzero(rich.cell(g, w)))
        assert set(idx[rd.cell(g, w)]) <= src


def test_same_seed_identical_replicates(d2):
    spec = BootstrapSpec(200, seed=42)
    with warnings.catch_warnings():
        warnings.simplefilter("ignore")
        a = bootstrap(d2, spec, strict=False)
        b = bootstrap(d2, spec, strict=False)
    for k in a.values:
        assert a.values[k].tobytes() == b.values[k].tobytes()


def test_thread_count_does_not_change_results(rich):
    a = bootstrap(rich, BootstrapSpec(120, seed=9, threads=1))
    b = bootstrap(rich, BootstrapSpec(120, seed=9, threads=8))
    for k in a.values:
        assert a.values[k].tobytes() == b.values[k].tobytes()


def test_joint_resampling(rich):
    """Every estimand of replicate b is evaluated on the same resampled rows."""
    from ltbracket.estimands import estimate_all

    spec = BootstrapSpec(60, seed=4)
    dist = bootstrap(rich, spec)
    for b in (0, 17, 59):
        r = estimate_all(replicate_dataset(rich, spec, b))
        assert dist.values["lu"][b] == r.theta_lu
        assert dist.values["ecb"][b] == r.theta_ecb
        assert dist.values["experimental"][b] == r.theta_experimental


def test_constant_cells_give_zero_se():
    rows = [(g, w, float(w + (g == "O")), 3.0 + w) for g in "EO" for w in (0, 1) for _ in range(3)]
    rows += [("O", 0, 5.0, 3.0)]  # distinct y1 for the control fit, same y2
    d = make_dataset(rows)
    dist = bootstrap(d, BootstrapSpec(50, seed=0), strict=False)
    assert np.all(dist.values["naive"] == dist.values["naive"][0])
    assert standard_errors(dist)["naive"].se == 0.0


def test_standard_error_examples():
    dist = BootstrapDistribution.from_lists({"a": [1, 1, 1, 1], "b": [0, 2]})
    se = standard_errors(dist)
    assert se["a"].se == 0 and se["a"].ci_low == se["a"].ci_high == 1
    assert se["b"].se == pytest.approx(math.sqrt(2), abs=1e-15)


def test_standard_errors_need_two_replicates():
    dist = BootstrapDistribution.from_lists({"a": [1.0, float("nan")]})
    with pytest.raises(InferenceError):
        standard_errors(dist)


def test_d2_naive_se_near_analytic(d2):
    with warnings.catch_warnings():
        warnings.simplefilter("ignore")
        dist = bootstrap(d2, BootstrapSpec(1000, seed=11), strict=False)
    se = standard_errors(dist)["naive"].se
    treated = d2.y2[d2.cell("O", 1)]
    control = d2.y2[d2.cell("O", 0)]
    analytic = math.sqrt(treated.var(ddof=1) / treated.size + control.var(ddof=1) / control.size)
    assert analytic / 3 <= se <= analytic * 3


def test_failures_recorded_and_strict_abort(d2):
    # the two-row control cell collapses to one y1 value in about half of the replicates
    with pytest.raises(InferenceError, match="undefined on"):
        bootstrap(d2, BootstrapSpec(200, seed=1))
    dist = bootstrap(d2, BootstrapSpec(200, seed=1), strict=False)
    assert 50 < dist.failures["lu"] < 150
    assert dist.failures["naive"] == 0
    assert "lu" in dist.aborted
    assert dist.replicates("lu").size == 200 - dist.failures["lu"]
    assert "lu" not in standard_errors(dist)


def test_low_replicate_warning(rich):
    with pytest.warns(LowReplicateWarning):
        dist = bootstrap(rich, BootstrapSpec(2, seed=0))
    tests = lalonde_tests(rich, None, dist)
    assert all("low_replicates" in t.flags for t in tests)


def test_wald_same_estimand_is_degenerate(rich):
    dist = bootstrap(rich, BootstrapSpec(60, seed=0))
    with pytest.raises(InferenceError, match="degenerate difference distribution"):
        wald_difference_test(dist, "lu", "lu", 1.0, 1.0)


def test_wald_statistic_and_p():
    dist = BootstrapDistribution.from_lists({"a": [0.0, 1.0, 2.0], "b": [0.0, 0.0, 0.0]})
    t = wald_difference_test(dist, "a", "b", 3.0, 1.0)
    assert t.statistic == pytest.approx(2.0)
    assert t.p_value == pytest.approx(2 * (1 - 0.9772498680518208), abs=1e-12)
    assert t.method == "normal-approx bootstrap Wald"
    assert two_sided_p(0.0) == 1.0


def test_lalonde_numerator_zero_when_experimental_matches_lu(d2):
    # E rows are (w=1, w=1, w=0, w=0): means 3 and 0.5 give an experimental estimate of 2.5
    d = d2_with_experimental(d2, [2.0, 4.0, 0.0, 1.0])
    from ltbracket.estimands import estimate_experimental

    assert estimate_experimental(d) == 2.5
    with warnings.catch_warnings():
        warnings.simplefilter("ignore")
        dist = bootstrap(d, BootstrapSpec(400, seed=3), strict=False)
    dist.aborted.clear()  # evaluate the test on the successful replicates
    t_lu, t_ecb = lalonde_tests(d, None, dist)
    assert t_lu.statistic == 0.0 and t_lu.p_value == 1.0
    assert t_lu.null == "H0: theta_lu = theta_experimental"
    assert t_ecb.null == "H0: theta_ecb = theta_experimental"


def test_lalonde_requires_experimental_y2(d2):
    with pytest.raises(EstimationError):
        lalonde_tests(d2, BootstrapSpec(10))


def test_p_values_in_unit_interval(rich):
    for t in lalonde_tests(rich, BootstrapSpec(80, seed=6)):
        assert 0.0 <= t.p_value <= 1.0
