"""Omniscient risk estimates for random-feature and kernel ridge regression."""
from ._sums import BACKEND
from .errors import (ConfigError, ConvergenceError, DivergentSumError, InvalidArgumentError,
                     NoSolutionError, NumericalError, RfRiskError, SingularMatrixError,
                     ThresholdSingularityError)
from .spectrum import (PowerlawTail, PowerlawTask, TaskEigenstructure, make_powerlaw_structure,
                       total_power)
from .eigensolver import ImplicitConstants, solve_krr_kappa, solve_rf_constants, solve_ridgeless
from .risk import RiskReport, krr_risk, optimal_ridge, rf_risk
from .powerlaw import optimal_ratio, risk_of_ratio
from .limits import check_all_limits
from .simulator import SimConfig, simulate_krr, simulate_rf, synthetic_powerlaw_kernel
from .estimation import KernelDataset, kappa_proxy, measure_alpha, measure_beta

__version__ = "0.1.0"
