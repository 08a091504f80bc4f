"""Order the LU and ECB estimates into bounds using the dominance direction.

Under direction I (F_O <= F_E) and a non-increasing psi, LU <= ATT <= ECB
whenever either identifying condition holds; direction II flips the order.
The psi check and the dominance verdict are reported, never enforced.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass

import numpy as np

from .data import CombinedDataset
from .dominance import DominanceReport, Verdict, dominance_report
from .estimands import PSI_TOL, EstimateReport, estimate_all, identity_residual
from .inference import BootstrapDistribution, BootstrapSpec, bootstrap

CONTRADICTION_SES = 10.0


@dataclass(frozen=True)
class DominanceConfig:
    grid_size: int | None = None
    alpha: float = 0.05
    tol: float = 0.0


@dataclass(frozen=True)
class BracketReport:
    lower: float | None
    upper: float | None
    direction: str | None  # "I", "II", or None when dominance is inconclusive
    estimates: EstimateReport
    dominance: DominanceReport
    psi_ok: bool
    identity_residual: float
    flags: tuple[str, ...] = ()
    se_difference: float | None = None

    def to_dict(self) -> dict:
        return {
            "lower": self.lower,
            "upper": self.upper,
            "direction": self.direction,
            "psi_ok": self.psi_ok,
            "identity_residual": self.identity_residual,
            "flags": list(self.flags),
        }


def bracket_report(
    d: CombinedDataset,
    bootstrap_spec: BootstrapSpec | BootstrapDistribution | None = None,
    dominance: DominanceConfig | None = None,
    psi_tol: float = PSI_TOL,
) -> BracketReport:
    """Assemble estimates, dominance verdict, psi gate and the ordered bracket.

    ``bootstrap_spec`` may be a spec (a bootstrap is run), an existing
    distribution, or None (no standard-error based consistency check).
    """
    dominance = dominance or DominanceConfig()
    est = estimate_all(d, psi_tol)
    dom = dominance_report(d, dominance.grid_size, dominance.alpha, dominance.tol)
    residual = identity_residual(est)
    lu, ecb = est.theta_lu, est.theta_ecb
    flags = []
    if not est.psi.non_increasing:
        flags.append("psi_increasing")

    se_diff = None
    if isinstance(bootstrap_spec, BootstrapSpec):
        bootstrap_spec = bootstrap(d, bootstrap_spec, est)
    if isinstance(bootstrap_spec, BootstrapDistribution) and not {"lu", "ecb"} & set(bootstrap_spec.aborted):
        diff = bootstrap_spec.values["lu"] - bootstrap_spec.values["ecb"]
        diff = diff[~np.isnan(diff)]
        if diff.size >= 2:
            se_diff = float(np.std(diff, ddof=1))

    if dom.verdict is Verdict.INCONCLUSIVE:
        flags.append("dominance_inconclusive")
        warnings.warn("dominance verdict inconclusive: estimates reported unordered", stacklevel=2)
        return BracketReport(None, None, None, est, dom, est.psi.non_increasing, residual, tuple(flags), se_diff)

    if dom.tie:
        flags.append("dominance_tie")
    if dom.verdict is Verdict.DOMINANCE_I:
        direction, lower, upper = "I", lu, ecb
    else:
        direction, lower, upper = "II", ecb, lu
    if lower > upper:
        flags.append("ordering_contradicts_dominance")
        if se_diff is not None and lower - upper > CONTRADICTION_SES * se_diff:
            flags.append("dominance_estimate_inconsistency")
    return BracketReport(lower, upper, direction, est, dom, est.psi.non_increasing, residual, tuple(flags), se_diff)
