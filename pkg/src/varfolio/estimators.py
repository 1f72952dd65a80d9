"""Scikit-learn style estimators wrapping the optimization pipelines.

Each estimator fits on a scenario matrix ``X`` of shape (m, n) holding percent
returns (rows are scenarios, columns are assets) and exposes the optimized
allocation as ``weights_``. ``predict(X)`` maps scenarios to portfolio
returns; ``score(X)`` is the sample quantile of those returns at the
estimator's level, so higher is better. The classes follow the estimator
contract (``get_params``/``set_params``, fit returns self) and therefore
compose with model-selection and pipeline tooling.
"""

from __future__ import annotations

import numpy as np
from sklearn.base import BaseEstimator
from sklearn.exceptions import NotFittedError
from sklearn.utils.validation import check_array

from .certify import DEFAULT_BETA, certify
from .core import InfeasibleProblemError, ProblemSpec, ScenarioSet, portfolio_quantile
from .lowerbound import lower_bound
from .model import build_cvar_lp, build_full_milp
from .solve import SolverLimits, extract_weights, solve_lp, solve_milp

__all__ = ["CVaRPortfolio", "CertifiedVaRPortfolio", "VaRPortfolio"]


class _ScenarioEstimator(BaseEstimator):
    """Shared fit plumbing: input validation and spec assembly."""

    def _check_X(self, X) -> np.ndarray:
        return check_array(X, dtype=float, ensure_min_samples=1, ensure_min_features=1)

    def _scenarios(self, X) -> ScenarioSet:
        return ScenarioSet.from_returns(self._check_X(X))

    def _spec(self, scenarios: ScenarioSet) -> ProblemSpec:
        mu0 = self.mu0
        if mu0 is None:
            mu0 = 0.5 * (float(scenarios.mu.min()) + float(scenarios.mu.max()))
        return ProblemSpec(
            alpha=self.alpha,
            mu0=mu0,
            bounds=self.bounds,
            extra_rows=tuple(self.extra_rows) if self.extra_rows else (),
        )

    def _limits(self) -> SolverLimits:
        return SolverLimits(time_limit=self.time_limit, mip_rel_gap=self.mip_rel_gap)

    def _require_fitted(self):
        if not hasattr(self, "weights_"):
            raise NotFittedError(
                f"this {type(self).__name__} instance is not fitted yet; call fit first"
            )

    def predict(self, X) -> np.ndarray:
        """Portfolio return per scenario row."""
        self._require_fitted()
        X = self._check_X(X)
        if X.shape[1] != self.weights_.size:
            raise ValueError(
                f"X has {X.shape[1]} assets, estimator was fitted with {self.weights_.size}"
            )
        return X @ self.weights_

    def score(self, X, y=None) -> float:
        """Sample quantile of the realized portfolio returns at ``alpha``."""
        self._require_fitted()
        scenarios = self._scenarios(X)
        return portfolio_quantile(self.weights_, scenarios, self.alpha)


class VaRPortfolio(_ScenarioEstimator):
    """Exact quantile-optimal allocation via one MILP solve.

    Parameters mirror the problem description: quantile level ``alpha``,
    return floor ``mu0`` (default: midpoint of the asset means), optional
    per-asset ``bounds`` and extra linear rows, and solver limits.

    Attributes after fit: ``weights_``, ``quantile_`` (recomputed sample
    quantile of the fitted weights), ``loss_var_`` (= -quantile_),
    ``objective_``, ``bound_``, ``status_``.
    """

    def __init__(
        self,
        alpha: float = 0.05,
        mu0: float | None = None,
        bounds=None,
        extra_rows=(),
        time_limit: float | None = None,
        mip_rel_gap: float = 1e-6,
    ):
        self.alpha = alpha
        self.mu0 = mu0
        self.bounds = bounds
        self.extra_rows = extra_rows
        self.time_limit = time_limit
        self.mip_rel_gap = mip_rel_gap

    def fit(self, X, y=None):
        scenarios = self._scenarios(X)
        spec = self._spec(scenarios)
        outcome = solve_milp(build_full_milp(scenarios, spec), self._limits())
        if outcome.status == "infeasible":
            raise InfeasibleProblemError("no admissible portfolio meets the return floor")
        if outcome.primal is None:
            raise RuntimeError(f"solve ended with status {outcome.status} and no incumbent")
        self.weights_ = extract_weights(outcome, scenarios.n_assets)
        self.quantile_ = portfolio_quantile(self.weights_, scenarios, spec.alpha)
        self.loss_var_ = -self.quantile_
        self.objective_ = outcome.objective
        self.bound_ = outcome.best_bound
        self.status_ = outcome.status
        self.n_features_in_ = scenarios.n_assets
        return self


class CertifiedVaRPortfolio(_ScenarioEstimator):
    """Near-optimal allocation with a width-``delta`` optimality certificate.

    Runs the iterative lower-bound search and then attempts to certify that
    the exact optimum lies within ``[quantile_, quantile_ + delta]``. The
    default ``delta`` is 1% of the bound's magnitude.

    Attributes after fit: ``weights_``, ``quantile_`` (the certified lower
    bound), ``loss_var_``, ``certificate_``, ``lower_result_``, ``proven_``.
    """

    def __init__(
        self,
        alpha: float = 0.05,
        mu0: float | None = None,
        bounds=None,
        extra_rows=(),
        beta: float = DEFAULT_BETA,
        delta: float | None = None,
        max_iter: int = 50,
        certify_max_iter: int = 50,
        time_limit: float | None = None,
        mip_rel_gap: float = 1e-6,
    ):
        self.alpha = alpha
        self.mu0 = mu0
        self.bounds = bounds
        self.extra_rows = extra_rows
        self.beta = beta
        self.delta = delta
        self.max_iter = max_iter
        self.certify_max_iter = certify_max_iter
        self.time_limit = time_limit
        self.mip_rel_gap = mip_rel_gap

    def fit(self, X, y=None):
        scenarios = self._scenarios(X)
        spec = self._spec(scenarios)
        limits = self._limits()
        result = lower_bound(
            scenarios, spec, max_iter=self.max_iter, limits=limits
        )
        cert = certify(
            scenarios,
            spec,
            result,
            beta=self.beta,
            delta=self.delta,
            iter_max=self.certify_max_iter,
            limits=limits,
        )
        self.weights_ = result.portfolio.weights
        self.quantile_ = result.bound
        self.loss_var_ = -result.bound
        self.lower_result_ = result
        self.certificate_ = cert
        self.proven_ = cert.proven
        self.n_features_in_ = scenarios.n_assets
        return self


class CVaRPortfolio(_ScenarioEstimator):
    """Expected-shortfall LP baseline; its optimum lower-bounds the exact
    quantile optimum and its weights make a feasible warm start.

    Attributes after fit: ``weights_``, ``shortfall_``, ``quantile_``,
    ``loss_var_``.
    """

    def __init__(
        self,
        alpha: float = 0.05,
        mu0: float | None = None,
        bounds=None,
        extra_rows=(),
        time_limit: float | None = None,
        mip_rel_gap: float = 1e-6,
    ):
        self.alpha = alpha
        self.mu0 = mu0
        self.bounds = bounds
        self.extra_rows = extra_rows
        self.time_limit = time_limit
        self.mip_rel_gap = mip_rel_gap

    def fit(self, X, y=None):
        scenarios = self._scenarios(X)
        spec = self._spec(scenarios)
        outcome = solve_lp(build_cvar_lp(scenarios, spec), self._limits())
        if outcome.status == "infeasible":
            raise InfeasibleProblemError("no admissible portfolio meets the return floor")
        if not outcome.is_optimal:
            raise RuntimeError(f"solve ended with status {outcome.status}")
        self.weights_ = extract_weights(outcome, scenarios.n_assets)
        self.shortfall_ = outcome.objective
        self.quantile_ = portfolio_quantile(self.weights_, scenarios, spec.alpha)
        self.loss_var_ = -self.quantile_
        self.n_features_in_ = scenarios.n_assets
        return self
