"""Sensitivity of the ECB estimate to departures from a martingale outcome process.

The untreated long-term outcome is allowed to follow
``E[centered Y2(0) | first-period state] = phi(centered Y1(0); rho)``; ``rho = 1``
with the linear ``phi(y; rho) = rho * y`` is the martingale case under which the
ECB estimand is unbiased.  For other values the ECB estimand is off by

    delta(rho) = ( mean(phi(C) - C | W=0, E) - mean(phi(C) - C | W=0, O) ) / P(W=1 | O)

with ``C = Y1 - mean(Y1 | W=0, E)``.  Both terms share the denominator
P(W=1 | O).
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable

import numpy as np
from scipy import optimize

from .data import CombinedDataset
from .errors import EstimationError
from .estimands import compute_moments, estimate_ecb

ROOT_TOL = 1e-10
DEFAULT_RHO_RANGE = (0.5, 1.0)


@dataclass(frozen=True)
class PhiSpec:
    """Deviation map ``phi(y; rho)``: the linear family or a user supplied map."""

    family: str = "linear"
    func: Callable[[np.ndarray, float], np.ndarray] | None = field(default=None, compare=False)

    def __post_init__(self):
        if self.family not in ("linear", "custom"):
            raise ValueError(f"unknown phi family {self.family!r}")
        if self.family == "custom" and self.func is None:
            raise ValueError("custom phi family needs a function")

    @classmethod
    def linear(cls) -> "PhiSpec":
        return cls("linear")

    @classmethod
    def custom(cls, func) -> "PhiSpec":
        return cls("custom", func)

    @classmethod
    def tabulated(cls, knots, rhos, table) -> "PhiSpec":
        """Custom phi from a table ``table[i, j] = phi(knots[j]; rhos[i])``.

        Linear interpolation in both arguments; evaluating outside the tabulated
        ranges raises.
        """
        knots = np.asarray(knots, dtype=float)
        rhos = np.asarray(rhos, dtype=float)
        table = np.asarray(table, dtype=float)
        if table.shape != (rhos.size, knots.size):
            raise ValueError("table must have shape (len(rhos), len(knots))")
        if np.any(np.diff(knots) <= 0) or np.any(np.diff(rhos) <= 0):
            raise ValueError("knots and rhos must be strictly increasing")

        def phi(y, rho):
            y = np.asarray(y, dtype=float)
            if y.size and (y.min() < knots[0] or y.max() > knots[-1]):
                raise EstimationError("phi evaluated outside its tabulated range")
            if not rhos[0] <= rho <= rhos[-1]:
                raise EstimationError(f"rho={rho} outside tabulated range")
            rows = [np.interp(y, knots, row) for row in table]
            if rhos.size == 1:
                return rows[0]
            i = min(int(np.searchsorted(rhos, rho, side="right")) - 1, rhos.size - 2)
            t = (rho - rhos[i]) / (rhos[i + 1] - rhos[i])
            return (1.0 - t) * rows[i] + t * rows[i + 1]

        return cls("custom", phi)

    def __call__(self, y, rho: float) -> np.ndarray:
        y = np.asarray(y, dtype=float)
        if self.family == "linear":
            return rho * y
        return np.asarray(self.func(y, rho), dtype=float)


def _anchor(d: CombinedDataset) -> float:
    ref = d.y1[d.cell("E", 0)]
    if ref.size == 0:
        raise EstimationError("empty anchor cell (G=E, W=0)")
    return float(ref.mean())


def centered_y1(d: CombinedDataset) -> np.ndarray:
    """y1 minus the mean of y1 in the (G=E, W=0) cell, for every row."""
    return d.y1 - _anchor(d)


def delta(d: CombinedDataset, phi: PhiSpec, rho: float) -> float:
    c = centered_y1(d)
    p1 = compute_moments(d).treat_prob["O"]
    c_e, c_o = c[d.cell("E", 0)], c[d.cell("O", 0)]
    term_e = np.mean(phi(c_e, rho) - c_e)
    term_o = np.mean(phi(c_o, rho) - c_o)
    return float(term_e / p1 - term_o / p1)


def _linear_slope(d: CombinedDataset) -> float:
    """K such that delta(rho) = (rho - 1) * K for the linear family."""
    c = centered_y1(d)
    p1 = compute_moments(d).treat_prob["O"]
    return float((c[d.cell("E", 0)].mean() - c[d.cell("O", 0)].mean()) / p1)


def delta_linear_closed_form(d: CombinedDataset, rho: float) -> float:
    """(rho - 1) * (mean(C | 0,E) - mean(C | 0,O)) / P(W=1 | O)."""
    return (rho - 1.0) * _linear_slope(d)


def adjusted_ecb(d: CombinedDataset, phi: PhiSpec, rho: float) -> float:
    return estimate_ecb(d) - delta(d, phi, rho)


@dataclass(frozen=True)
class SensitivityCurve:
    rho: np.ndarray
    delta: np.ndarray
    adjusted: np.ndarray
    baseline: float
    target: float | None = None
    rho_star: float | None = None

    def table(self) -> list[tuple[float, float, float]]:
        return list(zip(self.rho.tolist(), self.delta.tolist(), self.adjusted.tolist()))

    def to_dict(self) -> dict:
        return {
            "baseline_ecb": self.baseline,
            "rho_min": float(self.rho[0]),
            "rho_max": float(self.rho[-1]),
            "steps": int(self.rho.size),
            "target": self.target,
            "rho_star": self.rho_star,
        }


def sensitivity_curve(
    d: CombinedDataset,
    phi: PhiSpec | None = None,
    rho_min: float = DEFAULT_RHO_RANGE[0],
    rho_max: float = DEFAULT_RHO_RANGE[1],
    steps: int = 51,
    target: float | None = None,
) -> SensitivityCurve:
    phi = phi or PhiSpec.linear()
    if not rho_min < rho_max:
        raise ValueError(f"rho_min must be < rho_max, got [{rho_min}, {rho_max}]")
    if steps < 2:
        raise ValueError("steps must be >= 2")
    rho = np.linspace(rho_min, rho_max, steps)
    base = estimate_ecb(d)
    deltas = np.array([delta(d, phi, r) for r in rho])
    rho_star = None
    if target is not None:
        rho_star = solve_rho_star(d, phi, target, (rho_min, rho_max))
    return SensitivityCurve(rho, deltas, base - deltas, base, target, rho_star)


def solve_rho_star(
    d: CombinedDataset, phi: PhiSpec, target: float, bracket: tuple[float, float] = DEFAULT_RHO_RANGE
) -> float:
    """rho at which the adjusted ECB estimate equals ``target``.

    Closed form for the linear family (the bracket is not needed); otherwise a
    bracketing root search on [lo, hi].
    """
    base = estimate_ecb(d)
    if phi.family == "linear":
        k = _linear_slope(d)
        if k == 0.0:
            if base == target:
                return 1.0
            raise EstimationError("target not attainable: adjusted estimate is constant in rho")
        return 1.0 + (base - target) / k

    lo, hi = bracket

    def gap(r):
        return base - delta(d, phi, r) - target

    f_lo, f_hi = gap(lo), gap(hi)
    if f_lo == 0.0:
        return float(lo)
    if f_hi == 0.0:
        return float(hi)
    if np.sign(f_lo) == np.sign(f_hi):
        raise EstimationError("target not bracketed")
    root = optimize.brentq(gap, lo, hi, xtol=1e-14, rtol=4 * np.finfo(float).eps, maxiter=500)
    if abs(gap(root)) > ROOT_TOL:
        raise EstimationError(f"root search did not reach |gap| <= {ROOT_TOL}")
    return float(root)
