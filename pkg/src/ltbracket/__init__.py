"""Long-term ATT estimation from a short-term experiment combined with observational data.

Point estimates under latent unconfoundedness (LU) and equi-confounding (ECB),
their bracket, a stochastic-dominance diagnostic, bootstrap inference, a
martingale-deviation sensitivity analysis, and a selection-model simulator.
"""

__version__ = "0.1.0"

from .bracketing import BracketReport, DominanceConfig, bracket_report
from .data import (
    CombinedDataset,
    ObservationRow,
    Schema,
    ValidationReport,
    filter_subgroup,
    load_csv,
    parse_predicate,
    to_csv,
    validate,
)
from .dgp import DgpSpec, NoiseSpec, SimulatedPanel, TreatmentEffects, generate, latent_delta, load_spec, preset, to_observed, true_att
from .dominance import DominanceReport, EcdfCurve, Verdict, dominance_report, ks_tolerance
from .errors import DataError, EstimationError, InferenceError, LtBracketError, SpecError
from .estimands import (
    EstimateReport,
    compute_moments,
    estimate_all,
    estimate_ecb,
    estimate_experimental,
    estimate_lu,
    estimate_naive,
    estimate_psi,
    fit_control_regression,
    identity_residual,
    signed_difference,
)
from .inference import BootstrapDistribution, BootstrapSpec, TestResult, bootstrap, lalonde_tests, standard_errors, wald_difference_test
from .montecarlo import McConfig, McReport, monte_carlo
from .sensitivity import PhiSpec, SensitivityCurve, adjusted_ecb, delta, sensitivity_curve, solve_rho_star
