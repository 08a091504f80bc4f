"""Stratified bootstrap standard errors and Wald tests against the experimental benchmark.

Rows are resampled with replacement independently inside each (G, W) cell, so
every replicate keeps the original cell sizes.  All estimands are recomputed on
the same replicate dataset, which keeps their cross-correlation intact for the
difference tests.  Replicate ``b`` draws from its own stream spawned from
``(seed, b)``; the result does not depend on the number of worker threads.
"""

from __future__ import annotations

import math
import warnings
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

import numpy as np
from scipy import stats

from .data import CELLS, CombinedDataset
from .errors import EstimationError, InferenceError
from .estimands import _ecb, _experimental, _lu, _naive, compute_moments, estimate_all, fit_control_regression

ESTIMANDS = ("naive", "lu", "ecb", "experimental")
LOW_REPLICATES = 50
WALD_METHOD = "normal-approx bootstrap Wald"


class LowReplicateWarning(UserWarning):
    pass


@dataclass(frozen=True)
class BootstrapSpec:
    replicates: int = 1000
    seed: int = 0
    level: float = 0.95
    threads: int = 1
    max_failure_rate: float = 0.05

    def __post_init__(self):
        if int(self.replicates) != self.replicates or self.replicates < 2:
            raise ValueError(f"bootstrap needs at least 2 replicates, got {self.replicates}")
        if not 0 <= int(self.seed) < 2**64:
            raise ValueError("seed must be a 64-bit unsigned integer")
        if not 0.0 < self.level < 1.0:
            raise ValueError(f"ci level must be in (0, 1), got {self.level}")
        if self.threads < 1:
            raise ValueError("threads must be >= 1")

    @property
    def z(self) -> float:
        return float(stats.norm.ppf(0.5 + self.level / 2.0))


def replicate_rng(seed: int, b: int) -> np.random.Generator:
    return np.random.default_rng(np.random.SeedSequence(int(seed), spawn_key=(int(b),)))


def replicate_index(d: CombinedDataset, spec: BootstrapSpec, b: int) -> np.ndarray:
    """Row indices of replicate ``b``: a with-replacement draw inside each cell."""
    rng = replicate_rng(spec.seed, b)
    parts = []
    for g, w in CELLS:
        idx = np.flatnonzero(d.cell(g, w))
        if idx.size:
            parts.append(idx[rng.integers(0, idx.size, idx.size)])
    return np.concatenate(parts)


def replicate_dataset(d: CombinedDataset, spec: BootstrapSpec, b: int) -> CombinedDataset:
    return d.take(replicate_index(d, spec, b), labels=False)


def replicate_estimates(rd: CombinedDataset, with_experimental: bool) -> dict[str, float]:
    """All estimands on one replicate; an undefined estimator yields NaN."""
    m = compute_moments(rd)
    out = {"naive": _naive(m), "ecb": _ecb(m)}
    try:
        out["lu"] = _lu(m, fit_control_regression(rd))
    except EstimationError:
        out["lu"] = math.nan
    if with_experimental:
        out["experimental"] = _experimental(m)
    return out


@dataclass
class BootstrapDistribution:
    point: dict[str, float]
    values: dict[str, np.ndarray]  # length B per estimand, NaN marks a failed replicate
    spec: BootstrapSpec = field(default_factory=BootstrapSpec)
    # estimands whose failure count exceeded the tolerance -> diagnostic
    aborted: dict[str, str] = field(default_factory=dict)

    @classmethod
    def from_lists(cls, lists: dict, point: dict | None = None, spec: BootstrapSpec | None = None):
        values = {k: np.asarray(v, dtype=float) for k, v in lists.items()}
        if point is None:
            point = {k: float(np.nanmean(v)) for k, v in values.items()}
        if spec is None:
            spec = BootstrapSpec(replicates=max(2, max(len(v) for v in values.values())))
        return cls(dict(point), values, spec)

    @property
    def failures(self) -> dict[str, int]:
        return {k: int(np.isnan(v).sum()) for k, v in self.values.items()}

    @property
    def low_replicates(self) -> bool:
        return self.spec.replicates < LOW_REPLICATES

    def replicates(self, name: str) -> np.ndarray:
        v = self.values[name]
        return v[~np.isnan(v)]


def bootstrap(d: CombinedDataset, spec: BootstrapSpec, report=None, strict: bool = True) -> BootstrapDistribution:
    """Stratified joint bootstrap of every estimand computable on ``d``.

    An estimand undefined on more than ``spec.max_failure_rate`` of the
    replicates raises InferenceError; with ``strict=False`` it is marked in
    ``aborted`` instead and gets no standard error, while the others proceed.
    """
    report = report or estimate_all(d)
    with_exp = report.theta_experimental is not None
    names = [k for k in ESTIMANDS if k != "experimental" or with_exp]

    def one(b):
        return replicate_estimates(replicate_dataset(d, spec, b), with_exp)

    if spec.threads == 1:
        results = [one(b) for b in range(spec.replicates)]
    else:
        with ThreadPoolExecutor(max_workers=spec.threads) as pool:
            results = list(pool.map(one, range(spec.replicates)))

    values = {k: np.array([r[k] for r in results], dtype=float) for k in names}
    dist = BootstrapDistribution(report.points(), values, spec)
    for name, n_fail in dist.failures.items():
        if n_fail > spec.max_failure_rate * spec.replicates:
            msg = f"bootstrap: estimator {name!r} undefined on {n_fail}/{spec.replicates} replicates"
            if strict:
                raise InferenceError(msg)
            dist.aborted[name] = msg
    if dist.low_replicates:
        warnings.warn(
            f"only {spec.replicates} bootstrap replicates; standard errors are unreliable",
            LowReplicateWarning,
            stacklevel=2,
        )
    return dist


@dataclass(frozen=True)
class StandardError:
    point: float
    se: float
    ci_low: float
    ci_high: float

    def to_dict(self) -> dict:
        return {"point": self.point, "se": self.se, "ci_low": self.ci_low, "ci_high": self.ci_high}


def standard_errors(dist: BootstrapDistribution) -> dict[str, StandardError]:
    z = dist.spec.z
    out = {}
    for name in dist.values:
        if name in dist.aborted:
            continue
        reps = dist.replicates(name)
        if reps.size < 2:
            raise InferenceError(f"fewer than 2 successful replicates for {name!r}")
        se = float(np.std(reps, ddof=1))
        point = dist.point[name]
        out[name] = StandardError(point, se, point - z * se, point + z * se)
    return out


@dataclass(frozen=True)
class TestResult:
    null: str
    statistic: float
    p_value: float
    method: str = WALD_METHOD
    flags: tuple[str, ...] = ()

    def to_dict(self) -> dict:
        return {
            "null": self.null,
            "statistic": self.statistic,
            "p_value": self.p_value,
            "method": self.method,
            "flags": list(self.flags),
        }


def two_sided_p(statistic: float) -> float:
    return float(2.0 * stats.norm.sf(abs(statistic)))


def wald_difference_test(
    dist: BootstrapDistribution, a: str, b: str, point_a: float, point_b: float
) -> TestResult:
    """Test H0: a = b using the bootstrap sd of the paired replicate differences."""
    for name in (a, b):
        if name in dist.aborted:
            raise InferenceError(dist.aborted[name])
    diff = dist.values[a] - dist.values[b]
    diff = diff[~np.isnan(diff)]
    if diff.size < 2:
        raise InferenceError(f"fewer than 2 joint replicates for {a!r} and {b!r}")
    sd = float(np.std(diff, ddof=1))
    if not sd > 0.0:
        raise InferenceError("degenerate difference distribution")
    t = (point_a - point_b) / sd
    flags = ("low_replicates",) if dist.low_replicates else ()
    return TestResult(f"H0: theta_{a} = theta_{b}", t, two_sided_p(t), WALD_METHOD, flags)


def lalonde_tests(d: CombinedDataset, spec: BootstrapSpec, dist: BootstrapDistribution | None = None) -> list[TestResult]:
    """H0: LU = experimental and H0: ECB = experimental."""
    if not d.has_experimental_y2():
        raise EstimationError("experimental long-term outcome unavailable")
    report = estimate_all(d)
    if dist is None:
        dist = bootstrap(d, spec, report)
    exp = report.theta_experimental
    return [
        wald_difference_test(dist, "lu", "experimental", report.theta_lu, exp),
        wald_difference_test(dist, "ecb", "experimental", report.theta_ecb, exp),
    ]
