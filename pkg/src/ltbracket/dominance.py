"""Empirical CDF comparison of untreated short-term outcomes across sources.

Compares F_O = F(Y1 | W=0, G=O) with F_E = F(Y1 | W=0, G=E).  Direction I means
F_O <= F_E everywhere (untreated observational units have stochastically larger
Y1), direction II the reverse.  The verdict is descriptive: a grid check with a
tolerance, not a formal test.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from enum import Enum

import numpy as np
from scipy import stats

from .data import CombinedDataset
from .errors import EstimationError


class Verdict(str, Enum):
    DOMINANCE_I = "DominanceI"
    DOMINANCE_II = "DominanceII"
    INCONCLUSIVE = "Inconclusive"


@dataclass(frozen=True)
class EcdfCurve:
    support: np.ndarray  # sorted distinct values
    cdf: np.ndarray  # F at each support point (right-continuous)
    n: int

    @classmethod
    def from_sample(cls, values) -> "EcdfCurve":
        values = np.sort(np.asarray(values, dtype=float))
        if values.size == 0:
            raise EstimationError("ECDF of an empty sample")
        support, counts = np.unique(values, return_counts=True)
        return cls(support, np.cumsum(counts) / values.size, int(values.size))

    def __call__(self, y):
        y = np.asarray(y, dtype=float)
        k = np.searchsorted(self.support, y, side="right")
        return np.where(k > 0, self.cdf[np.maximum(k - 1, 0)], 0.0)

    def band(self, y, alpha: float = 0.05):
        """Pointwise normal-approximation half-width z * sqrt(F(1-F)/n)."""
        f = self(y)
        z = stats.norm.ppf(1.0 - alpha / 2.0)
        return z * np.sqrt(f * (1.0 - f) / self.n)


def ecdf(d: CombinedDataset, w: int, g: str) -> EcdfCurve:
    values = d.y1[d.cell(g, w)]
    if values.size == 0:
        raise EstimationError(f"empty cell (G={g}, W={w})")
    return EcdfCurve.from_sample(values)


def ks_tolerance(n_o: int, n_e: int, alpha: float = 0.05) -> float:
    """Two-sample DKW-type allowance for sampling noise in sup |F_O - F_E|.

    Meant for large simulated samples where exact ties in the extreme tails
    would otherwise flip a tol=0 verdict by chance.
    """
    return math.sqrt(math.log(2.0 / alpha) / 2.0 * (n_o + n_e) / (n_o * n_e))


@dataclass(frozen=True)
class DominanceReport:
    curve_O: EcdfCurve
    curve_E: EcdfCurve
    grid: np.ndarray
    band_O: np.ndarray
    band_E: np.ndarray
    verdict: Verdict
    max_violation: float
    violation_I: float  # max(F_O - F_E) over the grid, floored at 0
    violation_II: float  # max(F_E - F_O) over the grid, floored at 0
    tie: bool
    alpha: float
    tol: float

    @property
    def F_O(self) -> np.ndarray:
        return self.curve_O(self.grid)

    @property
    def F_E(self) -> np.ndarray:
        return self.curve_E(self.grid)

    def table(self) -> list[tuple[float, float, float, float, float]]:
        """Rows of (grid point, F_O, F_E, band_O, band_E)."""
        return list(
            zip(
                self.grid.tolist(),
                self.F_O.tolist(),
                self.F_E.tolist(),
                self.band_O.tolist(),
                self.band_E.tolist(),
            )
        )

    def to_dict(self) -> dict:
        return {
            "verdict": self.verdict.value,
            "max_violation": self.max_violation,
            "violation_I": self.violation_I,
            "violation_II": self.violation_II,
            "tie": self.tie,
            "alpha": self.alpha,
            "tol": self.tol,
            "n_O": self.curve_O.n,
            "n_E": self.curve_E.n,
            "grid_size": int(self.grid.size),
        }


def classify(f_o: np.ndarray, f_e: np.ndarray, tol: float = 0.0) -> tuple[Verdict, float, float, float, bool]:
    viol_i = max(0.0, float(np.max(f_o - f_e)))
    viol_ii = max(0.0, float(np.max(f_e - f_o)))
    ok_i, ok_ii = viol_i <= tol, viol_ii <= tol
    if ok_i:
        return Verdict.DOMINANCE_I, viol_i, viol_i, viol_ii, ok_ii
    if ok_ii:
        return Verdict.DOMINANCE_II, viol_ii, viol_i, viol_ii, False
    return Verdict.INCONCLUSIVE, min(viol_i, viol_ii), viol_i, viol_ii, False


def dominance_report(
    d: CombinedDataset, grid_size: int | None = None, alpha: float = 0.05, tol: float = 0.0
) -> DominanceReport:
    """ECDFs of untreated Y1 in O and E, pointwise bands, and a dominance verdict.

    With ``grid_size=None`` the grid is the union of both supports, which is
    exact for step functions; otherwise ``grid_size`` evenly spaced points over
    the pooled range.
    """
    if not 0.0 < alpha < 1.0:
        raise ValueError(f"alpha must be in (0, 1), got {alpha}")
    curve_o = ecdf(d, 0, "O")
    curve_e = ecdf(d, 0, "E")
    if grid_size is None:
        grid = np.union1d(curve_o.support, curve_e.support)
    else:
        if grid_size < 2:
            raise ValueError("grid_size must be >= 2")
        lo = min(curve_o.support[0], curve_e.support[0])
        hi = max(curve_o.support[-1], curve_e.support[-1])
        grid = np.linspace(lo, hi, grid_size)
    verdict, max_viol, viol_i, viol_ii, tie = classify(curve_o(grid), curve_e(grid), tol)
    return DominanceReport(
        curve_o,
        curve_e,
        grid,
        curve_o.band(grid, alpha),
        curve_e.band(grid, alpha),
        verdict,
        max_viol,
        viol_i,
        viol_ii,
        tie,
        alpha,
        tol,
    )
