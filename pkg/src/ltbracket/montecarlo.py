"""Monte Carlo harness: repeat generate -> estimate -> compare with the oracle ATT."""

from __future__ import annotations

import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field, replace

import numpy as np

from .bracketing import DominanceConfig, bracket_report
from .data import validate
from .dgp import DgpSpec, generate, latent_delta, to_observed, true_att
from .dominance import Verdict, ks_tolerance
from .errors import DataError, EstimationError
from .estimands import PSI_TOL, compute_moments, _experimental
from .inference import BootstrapSpec, bootstrap, lalonde_tests, standard_errors
from .sensitivity import PhiSpec, delta

ESTIMATES = ("naive", "lu", "ecb", "experimental", "adjusted_ecb")
MAX_FAILURE_RATE = 0.10
BRACKET_SES = 3.0


@dataclass(frozen=True)
class McConfig:
    psi_tol: float = PSI_TOL
    dominance_alpha: float = 0.05
    # None: allow ks_tolerance(n_O0, n_E0, alpha) of sampling noise in the verdict
    dominance_tol: float | None = None
    # deviation parameter for the adjusted ECB estimate; None uses the
    # generating rho_bar for SubMartingale specs and skips the adjustment otherwise
    rho: float | None = None
    bootstrap: BootstrapSpec | None = None
    lalonde: bool = False  # keep experimental y2 and run the two benchmark tests
    test_level: float = 0.05
    threads: int = 1
    max_failure_rate: float = MAX_FAILURE_RATE

    def __post_init__(self):
        if self.threads < 1:
            raise ValueError("threads must be >= 1")
        if self.lalonde and self.bootstrap is None:
            raise ValueError("benchmark tests need a bootstrap spec")

    def rho_for(self, spec: DgpSpec) -> float | None:
        if self.rho is not None:
            return self.rho
        if spec.family == "SubMartingale":
            return float(spec.params["rho_bar"])
        return None


def rep_seed(master_seed: int, r: int) -> int:
    ss = np.random.SeedSequence(int(master_seed), spawn_key=(int(r),))
    return int(ss.generate_state(1, np.uint64)[0])


def run_rep(spec: DgpSpec, seed: int, config: McConfig) -> dict:
    """One replication; raises DataError/EstimationError when the draw is unusable."""
    panel = generate(spec, seed)
    d = to_observed(panel, mask_experimental_y2=not config.lalonde)
    check = validate(d)
    if not check.overlap_ok:
        raise DataError("; ".join(check.messages) or "overlap check failed")
    full = d if config.lalonde else to_observed(panel, mask_experimental_y2=False)

    tol = config.dominance_tol
    if tol is None:
        tol = ks_tolerance(int(d.cell("O", 0).sum()), int(d.cell("E", 0).sum()), config.dominance_alpha)
    dist = None
    if config.bootstrap is not None:
        dist = bootstrap(d, replace(config.bootstrap, seed=rep_seed(seed, 0), threads=1))
    br = bracket_report(d, dist, DominanceConfig(None, config.dominance_alpha, tol), config.psi_tol)
    est = br.estimates
    att = true_att(panel)
    rec = {
        "seed": seed,
        "att": att,
        "naive": est.theta_naive,
        "lu": est.theta_lu,
        "ecb": est.theta_ecb,
        "experimental": _experimental(compute_moments(full)),
        "verdict": br.dominance.verdict.value,
        "tie": br.dominance.tie,
        "lu_le_ecb": bool(est.theta_lu <= est.theta_ecb),
        "psi_slope": est.psi.psi_slope,
        "identity_residual": br.identity_residual,
        "latent_delta": latent_delta(panel),
    }
    rho = config.rho_for(spec)
    if rho is not None:
        phi = PhiSpec.linear()
        rec["rho"] = rho
        rec["delta_hat"] = delta(d, phi, rho)
        rec["delta_hat_at_1"] = delta(d, phi, 1.0)
        rec["adjusted_ecb"] = est.theta_ecb - rec["delta_hat"]
    if dist is not None:
        ses = standard_errors(dist)
        for name, s in ses.items():
            rec[f"se_{name}"] = s.se
            rec[f"covers_{name}"] = bool(s.ci_low <= att <= s.ci_high)
        rec["se_lu_minus_ecb"] = br.se_difference
        rec["bracket_held_se"] = bool(est.theta_lu <= est.theta_ecb + BRACKET_SES * br.se_difference)
    if config.lalonde:
        t_lu, t_ecb = lalonde_tests(d, config.bootstrap, dist)
        rec["p_lu_vs_experimental"] = t_lu.p_value
        rec["p_ecb_vs_experimental"] = t_ecb.p_value
    return rec


def _summary(est: np.ndarray, att: np.ndarray) -> dict:
    err = est - att
    r = est.size
    return {
        "mean": float(est.mean()),
        "bias": float(err.mean()),
        "sd": float(est.std(ddof=1)),
        "rmse": float(math.sqrt(np.mean(err * err))),
        "mc_se": float(err.std(ddof=1) / math.sqrt(r)),
    }


@dataclass
class McReport:
    spec: DgpSpec
    reps: int
    master_seed: int
    records: list[dict]
    failures: list[dict] = field(default_factory=list)
    config: McConfig = field(default_factory=McConfig)

    @property
    def completed(self) -> int:
        return len(self.records)

    def column(self, key: str) -> np.ndarray:
        return np.array([rec[key] for rec in self.records], dtype=float)

    def estimand_summary(self) -> dict[str, dict]:
        att = self.column("att")
        out = {}
        for name in ESTIMATES:
            if self.records and name in self.records[0]:
                row = _summary(self.column(name), att)
                if f"covers_{name}" in self.records[0]:
                    row["coverage"] = float(self.column(f"covers_{name}").mean())
                out[name] = row
        return out

    def fraction(self, key: str) -> float:
        return float(self.column(key).mean())

    def verdict_fractions(self) -> dict[str, float]:
        verdicts = [rec["verdict"] for rec in self.records]
        return {v.value: verdicts.count(v.value) / len(verdicts) for v in Verdict}

    def delta_agreement(self) -> dict | None:
        """Observed-form delta minus the latent-form oracle, across reps."""
        if not self.records or "delta_hat" not in self.records[0]:
            return None
        diff = self.column("delta_hat") - self.column("latent_delta")
        return {
            "mean_difference": float(diff.mean()),
            "mc_se": float(diff.std(ddof=1) / math.sqrt(diff.size)),
            "max_abs_delta_at_1": float(np.max(np.abs(self.column("delta_hat_at_1")))),
        }

    def rejection_rates(self) -> dict[str, float] | None:
        if not self.records or "p_lu_vs_experimental" not in self.records[0]:
            return None
        lvl = self.config.test_level
        return {
            "lu_vs_experimental": float(np.mean(self.column("p_lu_vs_experimental") < lvl)),
            "ecb_vs_experimental": float(np.mean(self.column("p_ecb_vs_experimental") < lvl)),
        }

    def to_dict(self, records: bool = True) -> dict:
        out = {
            "spec": self.spec.to_dict(),
            "reps": self.reps,
            "completed": self.completed,
            "master_seed": self.master_seed,
            "failures": self.failures,
            "oracle_att_mean": float(self.column("att").mean()),
            "estimands": self.estimand_summary(),
            "bracketing_held_fraction": self.fraction("lu_le_ecb"),
            "dominance_fractions": self.verdict_fractions(),
        }
        if self.records and "bracket_held_se" in self.records[0]:
            out["bracketing_held_within_se_fraction"] = self.fraction("bracket_held_se")
        agreement = self.delta_agreement()
        if agreement is not None:
            out["delta_agreement"] = agreement
        rates = self.rejection_rates()
        if rates is not None:
            out["rejection_rates"] = rates
            out["test_level"] = self.config.test_level
        if records:
            out["records"] = self.records
        return out

    def summary_rows(self) -> list[dict]:
        rows = []
        for name, s in self.estimand_summary().items():
            rows.append({"estimand": name, **s})
        return rows


def monte_carlo(spec: DgpSpec, reps: int, seed: int = 0, config: McConfig | None = None) -> McReport:
    """Run ``reps`` independent replications with seeds derived from ``seed``.

    Replications run on up to ``config.threads`` workers; results are gathered
    in replication order, so the report does not depend on the worker count.
    """
    config = config or McConfig()
    if reps < 2:
        raise ValueError("monte carlo needs reps >= 2")
    seeds = [rep_seed(seed, r) for r in range(reps)]

    def one(r):
        try:
            return r, run_rep(spec, seeds[r], config), None
        except (DataError, EstimationError) as exc:
            return r, None, str(exc)

    if config.threads == 1:
        results = [one(r) for r in range(reps)]
    else:
        with ThreadPoolExecutor(max_workers=config.threads) as pool:
            results = list(pool.map(one, range(reps)))

    records, failures = [], []
    for r, rec, err in results:
        if rec is None:
            failures.append({"rep": r, "seed": seeds[r], "reason": err})
        else:
            records.append({"rep": r, **rec})
    if len(failures) > config.max_failure_rate * reps or len(records) < 2:
        raise EstimationError(f"monte carlo: {len(failures)}/{reps} replications failed; first: {failures[0]['reason']}")
    return McReport(spec, reps, int(seed), records, failures, config)
