"""Selection-model simulator with latent potential outcomes kept for ground truth.

Every family draws the same shock vector per unit (alpha, eps1, eps2, nu, eta1,
eta2, xi1, xi2, aux) in a fixed order, builds untreated potential outcomes
Y1(0), Y2(0), adds treatment effects ``delta_t = mean_t + sd_t * xi_t`` for the
treated potential outcomes, and assigns treatment:

* experimental units: complete randomization, independent of every latent;
* observational units: the family's selection rule.

Group membership is fixed by the requested sizes, so it is independent of the
latents by construction.

Families
--------
Ldv
    Y1(0) = mu1 + sigma1*alpha,  Y2(0) = a + rho*Y1(0) + sigma_e*eps2,
    W = 1{Y1(0) + nu_scale*nu <= c}.
Ashenfelter
    Same outcome model with W = 1{Y1(0) + beta*Y2(0) <= c}, beta in [0, 1].
SubMartingale
    D1 = sigma_alpha*alpha + sigma_eps1*eps1,  Y1(0) = mu1 + D1,
    Y2(0) = mu2 + rho_bar*D1 + sigma_eps2*eps2,
    W = 1{g_alpha*alpha + g_eps1*eps1 + nu_scale*nu + eta_scale*eta1 <= c}.
    The selection never looks at (eps2, eta2).
ImperfectForesight
    Y1(0) = f1(alpha) with f1 = mu1 + sigma1*alpha (invertible) or |alpha|
    (not invertible: alpha < 0 and alpha >= 0 give the same Y1(0));
    Y2(0) = a2 + b2*alpha + sigma2*eps2 ("linear") or 1{alpha < 0} + sigma2*eps2
    ("adversarial"); W = index rule as in SubMartingale ("index") or
    1{alpha >= 0} ("adversarial").
Roy
    Y_t(0) = alpha0 + lambda0t + alpha1*lambda1t + sigma_eps*eps_t,
    W = 1{w1*delta1 + w2*delta2 > kappa}, alpha1 correlated with delta1.
"""

from __future__ import annotations

import json
import math
from dataclasses import asdict, dataclass, field
from importlib import resources
from pathlib import Path
from typing import Mapping

import numpy as np

from .data import CombinedDataset
from .errors import EstimationError, SpecError

FAMILIES = ("Ashenfelter", "Roy", "ImperfectForesight", "Ldv", "SubMartingale")
SHOCKS = ("alpha", "eps1", "eps2", "nu", "eta1", "eta2", "xi1", "xi2", "aux")
NOISE_DISTS = ("normal", "uniform", "laplace", "student_t")

FAMILY_DEFAULTS = {
    "Ldv": dict(mu1=0.0, sigma1=1.0, a=0.0, rho=0.7, sigma_e=1.0, nu_scale=1.0, c=0.0),
    "Ashenfelter": dict(beta=0.0, c=0.0, mu1=0.0, sigma1=1.0, a=0.0, rho=0.8, sigma_e=1.0),
    "SubMartingale": dict(
        mu1=0.0, mu2=0.0, sigma_alpha=1.0, sigma_eps1=0.5, sigma_eps2=0.5, rho_bar=1.0,
        g_alpha=1.0, g_eps1=0.0, nu_scale=1.0, eta_scale=0.0, c=0.0,
    ),
    "ImperfectForesight": dict(
        invertible=True, f2="linear", g="index", mu1=0.0, sigma1=1.0, a2=0.0, b2=0.8,
        sigma2=1.0, g_alpha=1.0, g_eps1=0.5, nu_scale=1.0, eta_scale=0.5, c=0.0,
    ),
    "Roy": dict(
        lambda01=0.0, lambda02=0.3, lambda11=1.0, lambda12=1.0, sigma_a0=1.0,
        a1_mean=0.0, a1_sd=1.0, a1_delta_corr=-0.6, sigma_eps=1.0, w1=1.0, w2=1.0, kappa=0.3,
    ),
}

_NONNEGATIVE = {
    "sigma1", "sigma_e", "nu_scale", "sigma_alpha", "sigma_eps1", "sigma_eps2",
    "eta_scale", "sigma2", "sigma_a0", "a1_sd", "sigma_eps",
}


@dataclass(frozen=True)
class NoiseSpec:
    """Unit-variance noise family times ``scale``."""

    dist: str = "normal"
    scale: float = 1.0
    df: float | None = None

    def __post_init__(self):
        if self.dist not in NOISE_DISTS:
            raise SpecError(f"unknown noise distribution {self.dist!r}")
        if not self.scale >= 0:
            raise SpecError("noise scale must be >= 0")
        if self.dist == "student_t" and (self.df is None or self.df <= 2):
            raise SpecError("student_t noise needs df > 2")

    def draw(self, rng: np.random.Generator, n: int) -> np.ndarray:
        if self.dist == "normal":
            x = rng.standard_normal(n)
        elif self.dist == "uniform":
            x = rng.uniform(-math.sqrt(3.0), math.sqrt(3.0), n)
        elif self.dist == "laplace":
            x = rng.laplace(0.0, 1.0 / math.sqrt(2.0), n)
        else:
            x = rng.standard_t(self.df, n) * math.sqrt((self.df - 2.0) / self.df)
        return self.scale * x


@dataclass(frozen=True)
class TreatmentEffects:
    mean: tuple[float, float] = (0.1, 0.2)
    sd: tuple[float, float] = (0.0, 0.0)

    def __post_init__(self):
        if len(self.mean) != 2 or len(self.sd) != 2:
            raise SpecError("treatment effects need (t=1, t=2) pairs")
        if min(self.sd) < 0:
            raise SpecError("treatment effect sd must be >= 0")


@dataclass(frozen=True)
class DgpSpec:
    family: str
    params: Mapping = field(default_factory=dict)
    n_experimental: int = 50_000
    n_observational: int = 50_000
    effects: TreatmentEffects = field(default_factory=TreatmentEffects)
    noise: Mapping[str, NoiseSpec] = field(default_factory=dict)
    experimental_treat_share: float = 0.5
    name: str = ""
    description: str = field(default="", compare=False)

    def __post_init__(self):
        family = _canonical_family(self.family)
        object.__setattr__(self, "family", family)
        defaults = FAMILY_DEFAULTS[family]
        unknown = set(self.params) - set(defaults)
        if unknown:
            raise SpecError(f"unknown {family} parameters: {sorted(unknown)}")
        merged = {**defaults, **self.params}
        object.__setattr__(self, "params", merged)
        bad_noise = set(self.noise) - set(SHOCKS)
        if bad_noise:
            raise SpecError(f"unknown shocks in noise config: {sorted(bad_noise)}")
        if self.n_experimental < 4 or self.n_observational < 4:
            raise SpecError("each group needs at least 4 units")
        if not 0.0 < self.experimental_treat_share < 1.0:
            raise SpecError("experimental_treat_share must be in (0, 1)")
        _check_params(family, merged)

    def noise_for(self, shock: str) -> NoiseSpec:
        return self.noise.get(shock, NoiseSpec())

    def to_dict(self) -> dict:
        return {
            "name": self.name,
            "family": self.family,
            "params": dict(self.params),
            "n_experimental": self.n_experimental,
            "n_observational": self.n_observational,
            "effects": {"mean": list(self.effects.mean), "sd": list(self.effects.sd)},
            "noise": {k: asdict(v) for k, v in self.noise.items()},
            "experimental_treat_share": self.experimental_treat_share,
            "description": self.description,
        }

    @classmethod
    def from_dict(cls, cfg: Mapping) -> "DgpSpec":
        cfg = dict(cfg)
        known = {"name", "description", "family", "params", "n_experimental", "n_observational", "effects", "noise", "experimental_treat_share"}
        unknown = set(cfg) - known
        if unknown:
            raise SpecError(f"unknown DGP config keys: {sorted(unknown)}")
        if "family" not in cfg:
            raise SpecError("DGP config needs a 'family'")
        eff = cfg.get("effects") or {}
        try:
            effects = TreatmentEffects(
                tuple(float(x) for x in eff.get("mean", (0.1, 0.2))),
                tuple(float(x) for x in eff.get("sd", (0.0, 0.0))),
            )
            noise = {k: NoiseSpec(**v) for k, v in (cfg.get("noise") or {}).items()}
        except TypeError as exc:
            raise SpecError(f"bad DGP config: {exc}") from None
        params = {k: _coerce(v) for k, v in (cfg.get("params") or {}).items()}
        return cls(
            family=cfg["family"],
            params=params,
            n_experimental=int(cfg.get("n_experimental", 50_000)),
            n_observational=int(cfg.get("n_observational", 50_000)),
            effects=effects,
            noise=noise,
            experimental_treat_share=float(cfg.get("experimental_treat_share", 0.5)),
            name=str(cfg.get("name", "")),
            description=str(cfg.get("description", "")),
        )

    def with_sizes(self, n_experimental: int, n_observational: int | None = None) -> "DgpSpec":
        cfg = self.to_dict()
        cfg["n_experimental"] = n_experimental
        cfg["n_observational"] = n_experimental if n_observational is None else n_observational
        return DgpSpec.from_dict(cfg)

    def with_params(self, **params) -> "DgpSpec":
        cfg = self.to_dict()
        cfg["params"] = {**cfg["params"], **params}
        return DgpSpec.from_dict(cfg)


def _coerce(v):
    # JSON has no infinity literal; accept the usual spellings for thresholds
    if isinstance(v, str) and v.lower() in ("-inf", "inf", "+inf", "-infinity", "infinity"):
        return float(v)
    return v


def _canonical_family(name: str) -> str:
    for fam in FAMILIES:
        if fam.lower() == str(name).lower().replace("_", ""):
            return fam
    raise SpecError(f"unknown DGP family {name!r}; expected one of {FAMILIES}")


def _check_params(family: str, p: Mapping) -> None:
    for key, value in p.items():
        if key in ("invertible",):
            if not isinstance(value, bool):
                raise SpecError(f"{key} must be true/false")
            continue
        if key in ("f2", "g"):
            if value not in ("linear", "adversarial", "index"):
                raise SpecError(f"unknown {key} option {value!r}")
            continue
        if isinstance(value, bool) or not isinstance(value, (int, float)):
            raise SpecError(f"parameter {key} must be numeric, got {value!r}")
        if math.isnan(value):
            raise SpecError(f"parameter {key} is NaN")
        if key != "c" and not math.isfinite(value):
            raise SpecError(f"parameter {key} must be finite")
        if key in _NONNEGATIVE and value < 0:
            raise SpecError(f"parameter {key} must be >= 0")
    if family == "Ashenfelter" and not 0.0 <= p["beta"] <= 1.0:
        raise SpecError("Ashenfelter discount beta must lie in [0, 1]")
    if family == "SubMartingale" and not 0.0 < p["rho_bar"] <= 1.0:
        raise SpecError("SubMartingale rho_bar must lie in (0, 1]")
    if family == "ImperfectForesight":
        if p["f2"] not in ("linear", "adversarial"):
            raise SpecError("f2 must be 'linear' or 'adversarial'")
        if p["g"] not in ("index", "adversarial"):
            raise SpecError("g must be 'index' or 'adversarial'")
    if family == "Roy" and not -1.0 <= p["a1_delta_corr"] <= 1.0:
        raise SpecError("a1_delta_corr must lie in [-1, 1]")


@dataclass(frozen=True)
class SimulatedPanel:
    group: np.ndarray
    w: np.ndarray
    y1_0: np.ndarray
    y1_1: np.ndarray
    y2_0: np.ndarray
    y2_1: np.ndarray
    y1: np.ndarray
    y2: np.ndarray
    shocks: Mapping[str, np.ndarray]
    extra: Mapping[str, np.ndarray]
    spec: DgpSpec
    seed: int

    def __len__(self) -> int:
        return self.group.shape[0]


def _index_rule(p, s) -> np.ndarray:
    score = p["g_alpha"] * s["alpha"] + p["g_eps1"] * s["eps1"] + p["nu_scale"] * s["nu"] + p["eta_scale"] * s["eta1"]
    return score <= p["c"]


def _potential_outcomes(spec: DgpSpec, s: Mapping[str, np.ndarray]):
    """Untreated potential outcomes, O-selection indicator, and extra latents."""
    p, fam = spec.params, spec.family
    extra = {}
    if fam in ("Ldv", "Ashenfelter"):
        y1_0 = p["mu1"] + p["sigma1"] * s["alpha"]
        y2_0 = p["a"] + p["rho"] * y1_0 + p["sigma_e"] * s["eps2"]
        if fam == "Ldv":
            sel = y1_0 + p["nu_scale"] * s["nu"] <= p["c"]
        else:
            sel = y1_0 + p["beta"] * y2_0 <= p["c"]
    elif fam == "SubMartingale":
        d1 = p["sigma_alpha"] * s["alpha"] + p["sigma_eps1"] * s["eps1"]
        y1_0 = p["mu1"] + d1
        y2_0 = p["mu2"] + p["rho_bar"] * d1 + p["sigma_eps2"] * s["eps2"]
        sel = _index_rule(p, s)
    elif fam == "ImperfectForesight":
        a = s["alpha"]
        y1_0 = p["mu1"] + p["sigma1"] * a if p["invertible"] else np.abs(a)
        if p["f2"] == "linear":
            y2_0 = p["a2"] + p["b2"] * a + p["sigma2"] * s["eps2"]
        else:
            y2_0 = (a < 0).astype(float) + p["sigma2"] * s["eps2"]
        sel = _index_rule(p, s) if p["g"] == "index" else a >= 0
    else:  # Roy
        r = p["a1_delta_corr"]
        alpha0 = p["sigma_a0"] * s["alpha"]
        alpha1 = p["a1_mean"] + p["a1_sd"] * (r * s["xi1"] + math.sqrt(1.0 - r * r) * s["aux"])
        y1_0 = alpha0 + p["lambda01"] + alpha1 * p["lambda11"] + p["sigma_eps"] * s["eps1"]
        y2_0 = alpha0 + p["lambda02"] + alpha1 * p["lambda12"] + p["sigma_eps"] * s["eps2"]
        extra = {"alpha0": alpha0, "alpha1": alpha1}
        sel = None  # needs the treatment effects
    return y1_0, y2_0, sel, extra


def generate(spec: DgpSpec, seed: int) -> SimulatedPanel:
    """Draw one panel; deterministic in (spec, seed)."""
    rng = np.random.default_rng(np.random.SeedSequence(int(seed)))
    n_e, n_o = spec.n_experimental, spec.n_observational
    n = n_e + n_o
    shocks = {name: spec.noise_for(name).draw(rng, n) for name in SHOCKS}
    treat_e = np.zeros(n_e, dtype=np.int8)
    treat_e[rng.permutation(n_e)[: int(round(spec.experimental_treat_share * n_e))]] = 1

    eff = spec.effects
    delta1 = eff.mean[0] + eff.sd[0] * shocks["xi1"]
    delta2 = eff.mean[1] + eff.sd[1] * shocks["xi2"]
    y1_0, y2_0, sel, extra = _potential_outcomes(spec, shocks)
    if spec.family == "Roy":
        p = spec.params
        sel = p["w1"] * delta1 + p["w2"] * delta2 > p["kappa"]
    extra = {**extra, "delta1": delta1, "delta2": delta2}

    group = np.array(["E"] * n_e + ["O"] * n_o, dtype="<U1")
    w = np.concatenate([treat_e, sel[n_e:].astype(np.int8)])
    y1_1 = y1_0 + delta1
    y2_1 = y2_0 + delta2
    y1 = np.where(w == 1, y1_1, y1_0)
    y2 = np.where(w == 1, y2_1, y2_0)
    return SimulatedPanel(group, w, y1_0, y1_1, y2_0, y2_1, y1, y2, shocks, extra, spec, int(seed))


def true_att(p: SimulatedPanel) -> float:
    """Sample ATT: mean of Y2(1) - Y2(0) over treated observational units."""
    mask = (p.group == "O") & (p.w == 1)
    if not mask.any():
        raise EstimationError("no treated observational units")
    return float(np.mean(p.y2_1[mask] - p.y2_0[mask]))


def latent_delta(p: SimulatedPanel) -> float:
    """ECB bias computed from latent untreated outcomes of the observational group.

    E[W (D2 - D1) | O] / P(W=1|O) - E[(1-W)(D2 - D1) | O] / P(W=0|O) with
    Dt = Yt(0) - mean(Yt(0) | O).
    """
    o = p.group == "O"
    w = p.w[o].astype(float)
    d1 = p.y1_0[o] - p.y1_0[o].mean()
    d2 = p.y2_0[o] - p.y2_0[o].mean()
    gap = d2 - d1
    p1 = w.mean()
    if p1 in (0.0, 1.0):
        raise EstimationError("latent delta needs both treated and untreated observational units")
    return float(np.mean(w * gap) / p1 - np.mean((1.0 - w) * gap) / (1.0 - p1))


def to_observed(p: SimulatedPanel, mask_experimental_y2: bool = True) -> CombinedDataset:
    """Drop latents; optionally hide the experimental long-term outcome."""
    y2 = p.y2.copy()
    if mask_experimental_y2:
        y2[p.group == "E"] = np.nan
    name = p.spec.name or p.spec.family
    return CombinedDataset(p.group, p.w, p.y1, y2, provenance=f"simulated:{name}:seed={p.seed}")


PRESETS = (
    "ldv_lu_true",
    "submartingale_ecb_true",
    "submartingale_rho08",
    "ashenfelter_beta0",
    "ashenfelter_beta05",
    "roy_twfe_invariant",
    "if_invertible",
    "if_noninvertible",
)


def preset(name: str) -> DgpSpec:
    if name not in PRESETS:
        raise SpecError(f"unknown preset {name!r}; available: {', '.join(PRESETS)}")
    text = (resources.files("ltbracket") / "presets" / f"{name}.json").read_text("utf-8")
    return DgpSpec.from_dict(json.loads(text))


def load_spec(source: str | Path) -> DgpSpec:
    """DgpSpec from a JSON file path or a preset name."""
    path = Path(source)
    if path.is_file():
        try:
            cfg = json.loads(path.read_text("utf-8"))
        except json.JSONDecodeError as exc:
            raise SpecError(f"{path}: invalid JSON ({exc})") from None
        return DgpSpec.from_dict(cfg)
    return preset(str(source))
