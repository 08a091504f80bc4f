"""Plug-in estimators for the long-term ATT from combined data.

All estimators work on a dataset without covariates (or one already restricted
to a discrete subgroup).  Notation: ``mean(Yt | w, g)`` is the sample mean of
outcome t in cell (W=w, G=g), ``p1 = P(W=1 | G=O)`` and ``p0 = 1 - p1``.

    naive  = mean(Y2|1,O) - mean(Y2|0,O)
    LU     = mean(Y2|1,O) + p0/p1 * mean(Y2|0,O) - mean(m(Y1)|0,E) / p1
    ECB    = mean(Y2|1,O) + (mean(Y1|0,O) - mean(Y1|0,E)) / p1 - mean(Y2|0,O)
    exp.   = mean(Y2|1,E) - mean(Y2|0,E)

where m is the OLS fit of Y2 on Y1 (with intercept) in the (G=O, W=0) cell.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .data import CELLS, CombinedDataset
from .errors import EstimationError

PSI_TOL = 1e-9


@dataclass(frozen=True)
class Moments:
    cond_mean: dict  # (outcome, w, g) -> float
    treat_prob: dict  # g -> P(W=1 | G=g)
    cell_n: dict  # (w, g) -> count

    def mean(self, outcome: str, w: int, g: str) -> float:
        try:
            return self.cond_mean[(outcome, w, g)]
        except KeyError:
            raise EstimationError(f"mean of {outcome} in cell (W={w}, G={g}) unavailable") from None


@dataclass(frozen=True)
class LinearFit:
    intercept: float
    slope: float
    n: int
    residual_mean: float

    def __call__(self, y):
        return self.intercept + self.slope * np.asarray(y, dtype=float)


@dataclass(frozen=True)
class PsiDiagnostic:
    psi_intercept: float
    psi_slope: float
    non_increasing: bool
    tolerance: float


@dataclass(frozen=True)
class EstimateReport:
    theta_naive: float
    theta_lu: float
    theta_ecb: float
    theta_experimental: float | None
    moments: Moments
    control_fit: LinearFit
    psi: PsiDiagnostic

    def points(self) -> dict[str, float]:
        out = {"naive": self.theta_naive, "lu": self.theta_lu, "ecb": self.theta_ecb}
        if self.theta_experimental is not None:
            out["experimental"] = self.theta_experimental
        return out


def compute_moments(d: CombinedDataset) -> Moments:
    cond_mean, cell_n = {}, {}
    for g, w in CELLS:
        mask = d.cell(g, w)
        n = int(mask.sum())
        if n == 0:
            raise EstimationError(f"empty cell (G={g}, W={w})")
        cell_n[(w, g)] = n
        cond_mean[("y1", w, g)] = float(d.y1[mask].mean())
        y2 = d.y2[mask]
        if not np.isnan(y2).any():
            cond_mean[("y2", w, g)] = float(y2.mean())
        elif g == "O":
            raise EstimationError(f"y2 missing in observational cell (W={w})")
    treat_prob = {g: cell_n[(1, g)] / (cell_n[(0, g)] + cell_n[(1, g)]) for g in ("E", "O")}
    return Moments(cond_mean, treat_prob, cell_n)


def fit_control_regression(d: CombinedDataset) -> LinearFit:
    """OLS of y2 on y1 (with intercept) over the (G=O, W=0) cell."""
    mask = d.cell("O", 0)
    x, y = d.y1[mask], d.y2[mask]
    if x.size < 2 or np.all(x == x[0]):
        raise EstimationError("control regression ill-posed: fewer than 2 distinct y1 values in (G=O, W=0)")
    if np.isnan(y).any():
        raise EstimationError("y2 missing in observational cell (W=0)")
    xbar, ybar = x.mean(), y.mean()
    xc = x - xbar
    slope = float(np.dot(xc, y - ybar) / np.dot(xc, xc))
    intercept = float(ybar - slope * xbar)
    resid = y - (intercept + slope * x)
    return LinearFit(intercept, slope, int(x.size), float(resid.mean()))


def _lu(m: Moments, fit: LinearFit) -> float:
    p1 = m.treat_prob["O"]
    p0 = 1.0 - p1
    # mean of a linear fit over the E-untreated cell is the fit at the cell mean
    m_e = fit.intercept + fit.slope * m.mean("y1", 0, "E")
    return m.mean("y2", 1, "O") + p0 * m.mean("y2", 0, "O") / p1 - m_e / p1


def _ecb(m: Moments) -> float:
    p1 = m.treat_prob["O"]
    return (
        m.mean("y2", 1, "O")
        + m.mean("y1", 0, "O") / p1
        - m.mean("y1", 0, "E") / p1
        - m.mean("y2", 0, "O")
    )


def _naive(m: Moments) -> float:
    return m.mean("y2", 1, "O") - m.mean("y2", 0, "O")


def _experimental(m: Moments) -> float:
    if ("y2", 1, "E") not in m.cond_mean or ("y2", 0, "E") not in m.cond_mean:
        raise EstimationError("experimental long-term outcome unavailable")
    return m.cond_mean[("y2", 1, "E")] - m.cond_mean[("y2", 0, "E")]


def estimate_lu(d: CombinedDataset) -> float:
    return _lu(compute_moments(d), fit_control_regression(d))


def estimate_ecb(d: CombinedDataset) -> float:
    return _ecb(compute_moments(d))


def estimate_naive(d: CombinedDataset) -> float:
    return _naive(compute_moments(d))


def estimate_experimental(d: CombinedDataset) -> float:
    return _experimental(compute_moments(d))


def _psi(fit: LinearFit, tol: float) -> PsiDiagnostic:
    psi_slope = fit.slope - 1.0
    return PsiDiagnostic(fit.intercept, psi_slope, bool(psi_slope <= tol), tol)


def estimate_psi(d: CombinedDataset, tol: float = PSI_TOL) -> PsiDiagnostic:
    """Linear estimate of E[Y2 - Y1 | Y1 = y, W=0, G=O] = m(y) - y and its monotonicity."""
    return _psi(fit_control_regression(d), tol)


def estimate_all(d: CombinedDataset, tol: float = PSI_TOL) -> EstimateReport:
    try:
        m = compute_moments(d)
        fit = fit_control_regression(d)
    except EstimationError as exc:
        raise EstimationError(f"estimation failed on {d.provenance or 'dataset'}: {exc}") from None
    has_exp = ("y2", 1, "E") in m.cond_mean and ("y2", 0, "E") in m.cond_mean
    return EstimateReport(
        theta_naive=_naive(m),
        theta_lu=_lu(m, fit),
        theta_ecb=_ecb(m),
        theta_experimental=_experimental(m) if has_exp else None,
        moments=m,
        control_fit=fit,
        psi=_psi(fit, tol),
    )


def signed_difference(report: EstimateReport) -> tuple[float, float]:
    """Both sides of the LU-vs-ECB signed-difference identity.

    Returns ``(lhs, rhs)`` with
    ``lhs = p1 * (LU - ECB)`` and
    ``rhs = mean(Y2 - Y1 | 0,O) - mean(m(Y1) - Y1 | 0,E)``.
    """
    m, fit = report.moments, report.control_fit
    p1 = m.treat_prob["O"]
    lhs = p1 * (report.theta_lu - report.theta_ecb)
    y1_e = m.mean("y1", 0, "E")
    rhs = (m.mean("y2", 0, "O") - m.mean("y1", 0, "O")) - (fit.intercept + fit.slope * y1_e - y1_e)
    return lhs, rhs


def identity_residual(report: EstimateReport) -> float:
    lhs, rhs = signed_difference(report)
    return abs(lhs - rhs)
