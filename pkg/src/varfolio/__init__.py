"""Scenario-based Value-at-Risk portfolio optimization.

Exact quantile-optimal portfolios via mixed-integer programming, fast
certified lower bounds with near-optimality certificates, an expected-
shortfall LP baseline, enumeration oracles for ground truth on small
instances, and risk-reward frontier diagnostics.
"""

from .certify import Certificate, certify, default_delta
from .core import (
    ConfigurationError,
    InfeasibleProblemError,
    InvalidInputError,
    LinearRow,
    Portfolio,
    ProblemSpec,
    QuantileIndex,
    ScenarioSet,
    big_m,
    portfolio_quantile,
    validate_instance,
)
from .estimators import CertifiedVaRPortfolio, CVaRPortfolio, VaRPortfolio
from .frontier import (
    FrontierCurve,
    duality_check,
    max_reward_curve,
    min_risk_curve,
    plateau_demo_instance,
)
from .io import InstanceFile, emit_results, mu0_grid, parse_ff_daily
from .lowerbound import LowerBoundResult, default_initial_set, lower_bound
from .model import (
    LinearModel,
    build_cvar_lp,
    build_fixed_y_lp,
    build_full_milp,
    build_max_return_milp,
    build_restricted_milp,
    build_upper_milp,
)
from .solve import (
    OracleResult,
    SolveOutcome,
    SolverLimits,
    oracle_max_return,
    oracle_var,
    solve_lp,
    solve_milp,
)

__version__ = "0.1.0"

__all__ = [
    "Certificate",
    "CertifiedVaRPortfolio",
    "ConfigurationError",
    "CVaRPortfolio",
    "FrontierCurve",
    "InfeasibleProblemError",
    "InstanceFile",
    "InvalidInputError",
    "LinearModel",
    "LinearRow",
    "LowerBoundResult",
    "OracleResult",
    "Portfolio",
    "ProblemSpec",
    "QuantileIndex",
    "ScenarioSet",
    "SolveOutcome",
    "SolverLimits",
    "VaRPortfolio",
    "big_m",
    "build_cvar_lp",
    "build_fixed_y_lp",
    "build_full_milp",
    "build_max_return_milp",
    "build_restricted_milp",
    "build_upper_milp",
    "certify",
    "default_delta",
    "default_initial_set",
    "duality_check",
    "emit_results",
    "lower_bound",
    "max_reward_curve",
    "min_risk_curve",
    "mu0_grid",
    "oracle_max_return",
    "oracle_var",
    "parse_ff_daily",
    "plateau_demo_instance",
    "portfolio_quantile",
    "solve_lp",
    "solve_milp",
    "validate_instance",
]
