"""Domain types and shared primitives for scenario-based VaR portfolio problems.

Return data is kept in the units it was ingested in (percent per period for
the bundled data readers); nothing in this package rescales it. The sample
quantile reported throughout is the return-space quantile ``nu``; the
loss-convention figure is ``-nu``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field, replace

import numpy as np
from scipy.optimize import linprog

__all__ = [
    "ConfigurationError",
    "InfeasibleProblemError",
    "InvalidInputError",
    "LinearRow",
    "Portfolio",
    "ProblemSpec",
    "QuantileIndex",
    "ScenarioSet",
    "ValidationReport",
    "big_m",
    "portfolio_quantile",
    "validate_instance",
]

BUDGET_TOL = 1e-8
MEAN_MATCH_RTOL = 1e-12
# Guard for order-statistic index arithmetic: alpha*m can land a hair below an
# integer it represents exactly in rational arithmetic (0.29 * 100 -> 28.999...).
INDEX_EPS = 1e-9


class InvalidInputError(ValueError):
    """Raised for malformed data: bad shapes, non-finite entries, bad levels."""


class ConfigurationError(ValueError):
    """Raised for inconsistent problem configuration (e.g. shorting without a cap)."""


class InfeasibleProblemError(RuntimeError):
    """Raised when an instance admits no feasible portfolio."""


def _frozen_array(values, dtype=float) -> np.ndarray:
    arr = np.array(values, dtype=dtype)
    arr.setflags(write=False)
    return arr


@dataclass(frozen=True)
class ScenarioSet:
    """Sampled joint asset returns: one row per scenario, one column per asset.

    ``mu`` defaults to the per-asset sample mean; callers may override it with
    an external estimate, in which case :func:`validate_instance` reports the
    mismatch instead of failing.
    """

    returns: np.ndarray
    asset_labels: tuple[str, ...]
    mu: np.ndarray

    def __post_init__(self):
        returns = _frozen_array(self.returns)
        if returns.ndim != 2 or returns.shape[0] < 1 or returns.shape[1] < 1:
            raise InvalidInputError(
                f"returns must be a non-empty 2-d matrix, got shape {returns.shape}"
            )
        if not np.all(np.isfinite(returns)):
            raise InvalidInputError("returns contain non-finite entries")
        mu = _frozen_array(self.mu)
        if mu.shape != (returns.shape[1],):
            raise InvalidInputError(
                f"mu has shape {mu.shape}, expected ({returns.shape[1]},)"
            )
        if not np.all(np.isfinite(mu)):
            raise InvalidInputError("mu contains non-finite entries")
        labels = tuple(str(l) for l in self.asset_labels)
        if len(labels) != returns.shape[1]:
            raise InvalidInputError(
                f"{len(labels)} labels for {returns.shape[1]} assets"
            )
        object.__setattr__(self, "returns", returns)
        object.__setattr__(self, "mu", mu)
        object.__setattr__(self, "asset_labels", labels)

    @classmethod
    def from_returns(cls, returns, asset_labels=None, mu=None) -> "ScenarioSet":
        arr = np.asarray(returns, dtype=float)
        if arr.ndim != 2 or arr.shape[0] < 1 or arr.shape[1] < 1:
            raise InvalidInputError(
                f"returns must be a non-empty 2-d matrix, got shape {arr.shape}"
            )
        if asset_labels is None:
            asset_labels = tuple(f"A{i:03d}" for i in range(arr.shape[1]))
        if mu is None:
            mu = arr.mean(axis=0)
        return cls(returns=arr, asset_labels=tuple(asset_labels), mu=np.asarray(mu, dtype=float))

    @property
    def n_scenarios(self) -> int:
        return self.returns.shape[0]

    @property
    def n_assets(self) -> int:
        return self.returns.shape[1]

    def mu_matches_sample_mean(self, rtol: float = MEAN_MATCH_RTOL) -> bool:
        sample = self.returns.mean(axis=0)
        scale = np.maximum(np.abs(sample), 1.0)
        return bool(np.all(np.abs(self.mu - sample) <= rtol * scale))


@dataclass(frozen=True)
class LinearRow:
    """One linear inequality over the asset weights: ``coeffs @ x <sense> rhs``."""

    coeffs: tuple[float, ...]
    sense: str
    rhs: float

    def __post_init__(self):
        if self.sense not in ("<=", ">=", "="):
            raise InvalidInputError(f"unknown row sense {self.sense!r}")
        object.__setattr__(self, "coeffs", tuple(float(c) for c in self.coeffs))
        object.__setattr__(self, "rhs", float(self.rhs))


@dataclass(frozen=True)
class ProblemSpec:
    """Problem parameters: quantile level, return floor, and the admissible set.

    The budget constraint ``sum(x) == 1`` is always implied and never stored in
    ``extra_rows``. Per-asset weight bounds default to [0, 1]. Construction is
    permissive; :func:`validate_instance` reports invariant violations.
    """

    alpha: float
    mu0: float
    bounds: tuple[tuple[float, float], ...] | None = None
    extra_rows: tuple[LinearRow, ...] = ()
    allow_short: bool = False
    short_cap: float | None = None
    big_m_override: float | None = None

    def __post_init__(self):
        if self.bounds is not None:
            object.__setattr__(
                self,
                "bounds",
                tuple((float(lo), float(hi)) for lo, hi in self.bounds),
            )
        object.__setattr__(self, "extra_rows", tuple(self.extra_rows))

    def resolved_bounds(self, n_assets: int) -> tuple[tuple[float, float], ...]:
        """Per-asset weight bounds, expanded to one (lower, upper) pair per asset."""
        if self.bounds is None:
            return tuple((0.0, 1.0) for _ in range(n_assets))
        if len(self.bounds) != n_assets:
            raise InvalidInputError(
                f"{len(self.bounds)} bound pairs for {n_assets} assets"
            )
        return self.bounds

    def with_mu0(self, mu0: float) -> "ProblemSpec":
        return replace(self, mu0=float(mu0))


@dataclass(frozen=True)
class Portfolio:
    """A full-investment allocation: fractions of wealth per asset, summing to one."""

    weights: np.ndarray

    def __post_init__(self):
        w = _frozen_array(self.weights)
        if w.ndim != 1 or w.size < 1:
            raise InvalidInputError("weights must be a non-empty vector")
        if not np.all(np.isfinite(w)):
            raise InvalidInputError("weights contain non-finite entries")
        if abs(float(w.sum()) - 1.0) > BUDGET_TOL:
            raise InvalidInputError(
                f"weights sum to {w.sum()!r}, expected 1 within {BUDGET_TOL}"
            )
        object.__setattr__(self, "weights", w)

    def sample_returns(self, scenarios: ScenarioSet) -> np.ndarray:
        if scenarios.n_assets != self.weights.size:
            raise InvalidInputError(
                f"portfolio has {self.weights.size} assets, scenarios have {scenarios.n_assets}"
            )
        return scenarios.returns @ self.weights

    def expected_return(self, scenarios: ScenarioSet) -> float:
        return float(scenarios.mu @ self.weights)


@dataclass(frozen=True)
class QuantileIndex:
    """Which order statistic of the sample returns defines the quantile."""

    k: int
    order: int

    @classmethod
    def from_alpha(cls, alpha: float, n_scenarios: int) -> "QuantileIndex":
        if not 0.0 < alpha < 1.0:
            raise InvalidInputError(f"alpha must lie in (0, 1), got {alpha}")
        k = math.floor(alpha * n_scenarios + INDEX_EPS)
        if not 0 <= k < n_scenarios:
            raise InvalidInputError(
                f"alpha={alpha} with m={n_scenarios} gives out-of-range k={k}"
            )
        return cls(k=k, order=k + 1)


def _weights_of(x) -> np.ndarray:
    if isinstance(x, Portfolio):
        return x.weights
    return np.asarray(x, dtype=float)


def portfolio_quantile(x, scenarios: ScenarioSet, alpha: float) -> float:
    """Sample alpha-quantile of the portfolio return: the (floor(alpha*m)+1)-th
    smallest of the per-scenario returns, duplicates retained, no interpolation.
    """
    w = _weights_of(x)
    if w.shape != (scenarios.n_assets,):
        raise InvalidInputError(
            f"weights shape {w.shape} does not match {scenarios.n_assets} assets"
        )
    idx = QuantileIndex.from_alpha(alpha, scenarios.n_scenarios)
    samples = np.sort(scenarios.returns @ w, kind="stable")
    return float(samples[idx.k])


def exceedance_set(x, scenarios: ScenarioSet, alpha: float) -> tuple[int, ...]:
    """The floor(alpha*m) scenario indices the portfolio places below its
    quantile (first-k of a stable ascending sort, so ties break by index).
    """
    w = _weights_of(x)
    k = QuantileIndex.from_alpha(alpha, scenarios.n_scenarios).k
    order = np.argsort(scenarios.returns @ w, kind="stable")
    return tuple(int(j) for j in sorted(order[:k]))


def big_m(scenarios: ScenarioSet, spec: ProblemSpec) -> float:
    """Activation constant for the indicator rows.

    Long-only: ``2 * max|return| + 1``; with shorting allowed and position cap
    ``U``: ``2 * U * max|return| + 1``. The +1 keeps the required inequality
    strict. An explicit override on the spec is returned verbatim.
    """
    if spec.big_m_override is not None:
        if spec.big_m_override <= 0:
            raise ConfigurationError("big_m_override must be positive")
        return float(spec.big_m_override)
    peak = float(np.max(np.abs(scenarios.returns)))
    if spec.allow_short:
        if spec.short_cap is None:
            raise ConfigurationError("allow_short requires short_cap to be set")
        return 2.0 * float(spec.short_cap) * peak + 1.0
    return 2.0 * peak + 1.0


@dataclass(frozen=True)
class ValidationReport:
    """Structured diagnostics for an instance; never raised, always returned."""

    ok: bool
    issues: tuple[str, ...]
    k: int | None
    degenerate_lp: bool
    mu0_attainable: bool | None
    max_expected_return: float | None
    mu_matches_sample_mean: bool


def _max_expected_return(scenarios: ScenarioSet, spec: ProblemSpec) -> float | None:
    """Maximize mu @ x over the admissible set (budget, bounds, extra rows)."""
    n = scenarios.n_assets
    a_ub, b_ub = [], []
    for row in spec.extra_rows:
        coeffs = np.asarray(row.coeffs, dtype=float)
        if row.sense == "<=":
            a_ub.append(coeffs), b_ub.append(row.rhs)
        elif row.sense == ">=":
            a_ub.append(-coeffs), b_ub.append(-row.rhs)
    a_eq = [np.ones(n)]
    b_eq = [1.0]
    for row in spec.extra_rows:
        if row.sense == "=":
            a_eq.append(np.asarray(row.coeffs, dtype=float))
            b_eq.append(row.rhs)
    res = linprog(
        -scenarios.mu,
        A_ub=np.array(a_ub) if a_ub else None,
        b_ub=np.array(b_ub) if b_ub else None,
        A_eq=np.array(a_eq),
        b_eq=np.array(b_eq),
        bounds=list(spec.resolved_bounds(n)),
        method="highs",
    )
    if res.status != 0:
        return None
    return float(-res.fun)


def validate_instance(scenarios: ScenarioSet, spec: ProblemSpec) -> ValidationReport:
    """Check all instance invariants and report attainability of the return floor.

    Attainability is decided by one LP (max expected return over the admissible
    set). A zero exceedance budget (k == 0) is flagged: the problem collapses
    to a pure LP.
    """
    issues: list[str] = []
    k: int | None = None
    degenerate = False

    if not 0.0 < spec.alpha < 1.0:
        issues.append(f"alpha must lie in (0, 1), got {spec.alpha}")
    else:
        k = math.floor(spec.alpha * scenarios.n_scenarios)
        degenerate = k == 0

    try:
        bounds = spec.resolved_bounds(scenarios.n_assets)
        for i, (lo, hi) in enumerate(bounds):
            if lo > hi:
                issues.append(f"asset {i}: lower bound {lo} exceeds upper bound {hi}")
    except InvalidInputError as exc:
        issues.append(str(exc))
        bounds = None

    if spec.allow_short:
        if spec.short_cap is None:
            issues.append("allow_short requires short_cap")
        elif bounds is not None:
            widest = max(max(abs(lo), abs(hi)) for lo, hi in bounds)
            if spec.short_cap < widest:
                issues.append(
                    f"short_cap {spec.short_cap} below largest bound magnitude {widest}"
                )

    for i, row in enumerate(spec.extra_rows):
        if len(row.coeffs) != scenarios.n_assets:
            issues.append(
                f"extra row {i} has {len(row.coeffs)} coefficients for {scenarios.n_assets} assets"
            )

    mu_ok = scenarios.mu_matches_sample_mean()

    max_ret: float | None = None
    attainable: bool | None = None
    if not issues:
        max_ret = _max_expected_return(scenarios, spec)
        if max_ret is None:
            issues.append("admissible set is empty (bounds/extra rows infeasible)")
        else:
            attainable = spec.mu0 <= max_ret + 1e-9
            if not attainable:
                issues.append(
                    f"return floor {spec.mu0} exceeds best attainable {max_ret}"
                )

    return ValidationReport(
        ok=not issues,
        issues=tuple(issues),
        k=k,
        degenerate_lp=degenerate,
        mu0_attainable=attainable,
        max_expected_return=max_ret,
        mu_matches_sample_mean=mu_ok,
    )
