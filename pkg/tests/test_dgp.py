import json
import math

import numpy as np
import pytest

from ltbracket.data import validate
from ltbracket.dgp import (
    PRESETS,
    DgpSpec,
    NoiseSpec,
    generate,
    latent_delta,
    load_spec,
    preset,
    to_observed,
    true_att,
)
from ltbracket.errors import EstimationError, SpecError
from ltbracket.estimands import estimate_experimental

SMALL = dict(n_experimental=2000, n_observational=2000)


def small(name, **params):
    spec = preset(name).with_sizes(2000)
    return spec.with_params(**params) if params else spec


@pytest.mark.parametrize("name", PRESETS)
def test_presets_load_and_have_overlap(name):
    spec = preset(name)
    assert spec.n_experimental == spec.n_observational == 50_000
    p = generate(spec.with_sizes(4000), 0)
    p1 = p.w[p.group == "O"].mean()
    assert 0.2 <= p1 <= 0.8
    assert validate(to_observed(p)).overlap_ok


def test_unknown_preset():
    with pytest.raises(SpecError, match="unknown preset"):
        preset("nope")


@pytest.mark.parametrize(
    "cfg",
    [
        {"family": "Ashenfelter", "params": {"beta": 1.5}},
        {"family": "Ashenfelter", "params": {"beta": -0.1}},
        {"family": "SubMartingale", "params": {"rho_bar": 0.0}},
        {"family": "SubMartingale", "params": {"rho_bar": 1.2}},
        {"family": "Ldv", "params": {"sigma1": -1}},
        {"family": "Ldv", "params": {"bogus": 1}},
        {"family": "Roy", "params": {"a1_delta_corr": 2}},
        {"family": "ImperfectForesight", "params": {"f2": "index"}},
        {"family": "Martian"},
        {"family": "Ldv", "n_experimental": 2},
        {"family": "Ldv", "noise": {"alpha": {"dist": "cauchy"}}},
        {"family": "Ldv", "noise": {"alpha": {"dist": "student_t", "df": 2}}},
        {"family": "Ldv", "effects": {"mean": [0.1, 0.2], "sd": [-1, 0]}},
        {"family": "Ldv", "surprise": 1},
    ],
)
def test_invalid_specs_rejected_before_sampling(cfg):
    with pytest.raises(SpecError):
        DgpSpec.from_dict(cfg)


def test_family_names_case_insensitive():
    assert DgpSpec.from_dict({"family": "submartingale"}).family == "SubMartingale"
    assert DgpSpec.from_dict({"family": "imperfect_foresight"}).family == "ImperfectForesight"


def test_deterministic_given_seed():
    spec = small("ldv_lu_true")
    a, b = generate(spec, 123), generate(spec, 123)
    assert a.y1.tobytes() == b.y1.tobytes() and a.y2.tobytes() == b.y2.tobytes()
    assert generate(spec, 124).y1.tobytes() != a.y1.tobytes()


def test_realized_outcomes_follow_treatment():
    p = generate(small("roy_twfe_invariant"), 1)
    assert np.array_equal(p.y1, (1 - p.w) * p.y1_0 + p.w * p.y1_1)
    assert np.array_equal(p.y2, (1 - p.w) * p.y2_0 + p.w * p.y2_1)


def test_experimental_randomization_balanced_and_independent():
    p = generate(small("ldv_lu_true"), 5)
    e = p.group == "E"
    assert p.w[e].sum() == 1000
    # assignment in E ignores the latent factor driving selection in O
    a = p.shocks["alpha"][e]
    diff = a[p.w[e] == 1].mean() - a[p.w[e] == 0].mean()
    assert abs(diff) < 4 * math.sqrt(2 / 1000)


def test_groups_fixed_by_size():
    p = generate(DgpSpec.from_dict({"family": "Ldv", "n_experimental": 30, "n_observational": 70}), 0)
    assert (p.group == "E").sum() == 30 and (p.group == "O").sum() == 70
    assert len(p) == 100


def test_ashenfelter_beta0_selection_is_a_threshold_on_y1():
    p = generate(small("ashenfelter_beta0"), 2)
    o = p.group == "O"
    assert np.array_equal(p.w[o] == 1, p.y1_0[o] <= 0.0)


def test_ashenfelter_minus_infinity_threshold_fails_overlap():
    spec = DgpSpec.from_dict({"family": "Ashenfelter", "params": {"beta": 0.0, "c": "-inf"}, **SMALL})
    p = generate(spec, 0)
    assert p.w[p.group == "O"].sum() == 0
    assert not validate(to_observed(p)).overlap_ok
    with pytest.raises(EstimationError, match="no treated"):
        true_att(p)


def test_true_att_constant_effect():
    spec = DgpSpec.from_dict({"family": "Ldv", "effects": {"mean": [0.0, 0.3]}, **SMALL})
    p = generate(spec, 1)
    assert true_att(p) == pytest.approx(0.3, abs=1e-12)
    null = DgpSpec.from_dict({"family": "Ldv", "effects": {"mean": [0.0, 0.0]}, **SMALL})
    assert true_att(generate(null, 1)) == 0.0


def test_true_att_brute_force():
    p = generate(small("roy_twfe_invariant"), 3)
    total, count = 0.0, 0
    for g, w, a, b in zip(p.group, p.w, p.y2_1, p.y2_0):
        if g == "O" and w == 1:
            total += a - b
            count += 1
    assert true_att(p) == pytest.approx(total / count, rel=1e-12)


def test_to_observed_masking():
    p = generate(small("ldv_lu_true"), 4)
    masked = to_observed(p, True)
    r = validate(masked)
    assert r.missing_y2_in_O == 0
    assert np.isnan(masked.y2[masked.group == "E"]).all()
    with pytest.raises(EstimationError):
        estimate_experimental(masked)
    full = to_observed(p, False)
    assert len(full) == len(p)
    assert full.y1.tobytes() == p.y1.tobytes() and full.y2.tobytes() == p.y2.tobytes()
    e = p.group == "E"
    oracle = p.y2[e & (p.w == 1)].mean() - p.y2[e & (p.w == 0)].mean()
    assert estimate_experimental(full) == pytest.approx(oracle, abs=1e-12)


def test_submartingale_rho1_cell_growth_equalizes():
    spec = preset("submartingale_ecb_true").with_sizes(1000, 100_000)
    p = generate(spec, 7)
    o = p.group == "O"
    growth = (p.y2_0 - p.y2_0[o].mean()) - (p.y1_0 - p.y1_0[o].mean())
    g1, g0 = growth[o & (p.w == 1)], growth[o & (p.w == 0)]
    se = math.sqrt(g1.var(ddof=1) / g1.size + g0.var(ddof=1) / g0.size)
    assert abs(g1.mean() - g0.mean()) < 3 * se


def test_latent_delta_matches_cell_growth_difference():
    p = generate(small("submartingale_rho08"), 1)
    o = p.group == "O"
    gap = p.y2_0 - p.y1_0
    direct = gap[o & (p.w == 1)].mean() - gap[o & (p.w == 0)].mean()
    assert latent_delta(p) == pytest.approx(direct, abs=1e-12)


def test_noninvertible_construction():
    p = generate(small("if_noninvertible"), 0)
    o = p.group == "O"
    assert np.array_equal(p.y1_0, np.abs(p.shocks["alpha"]))
    assert np.array_equal(p.w[o] == 1, p.shocks["alpha"][o] >= 0)


def test_roy_selection_on_gains():
    p = generate(small("roy_twfe_invariant"), 0)
    o = p.group == "O"
    gains = p.extra["delta1"] + p.extra["delta2"]
    assert np.array_equal(p.w[o] == 1, gains[o] > 0.3)


@pytest.mark.parametrize("dist", ["normal", "uniform", "laplace", "student_t"])
def test_noise_families_have_unit_variance(dist):
    spec = NoiseSpec(dist, 2.0, df=8 if dist == "student_t" else None)
    x = spec.draw(np.random.default_rng(0), 200_000)
    assert x.std() == pytest.approx(2.0, rel=0.03)


def test_spec_json_round_trip(tmp_path):
    spec = preset("if_invertible")
    path = tmp_path / "cfg.json"
    path.write_text(json.dumps(spec.to_dict()))
    assert load_spec(path) == spec
    assert load_spec("if_invertible") == spec


def test_invalid_json_config(tmp_path):
    path = tmp_path / "bad.json"
    path.write_text("{nope")
    with pytest.raises(SpecError):
        load_spec(path)
