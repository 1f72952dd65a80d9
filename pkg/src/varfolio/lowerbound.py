"""Iterative lower bound on the optimal sample-quantile portfolio.

Each round solves the exact formulation restricted to a small candidate set of
exceedance scenarios, then re-prices all scenario rows in the indicator-fixed
LP; scenarios whose rows carry a positive shadow price join the candidate set.
Every restricted solution is feasible for the full problem, so its true sample
quantile is a certified lower bound.
"""

from __future__ import annotations

import math
import time
from dataclasses import dataclass

import numpy as np

from .core import (
    INDEX_EPS,
    InfeasibleProblemError,
    InvalidInputError,
    Portfolio,
    ProblemSpec,
    QuantileIndex,
    ScenarioSet,
    exceedance_set,
    portfolio_quantile,
)
from .model import build_fixed_y_lp, build_restricted_milp
from .solve import SolverLimits, extract_weights, solve_lp, solve_milp

__all__ = ["IterationRecord", "LowerBoundResult", "default_initial_set", "lower_bound"]


@dataclass(frozen=True)
class IterationRecord:
    """One round: candidate-set size, restricted optimum, incumbent quality."""

    size: int
    objective: float
    quantile: float
    best_quantile: float
    duals_added: tuple[int, ...]
    wall_time: float


@dataclass(frozen=True)
class LowerBoundResult:
    """Outcome of the lower-bound search.

    ``bound`` is the exact sample quantile of ``portfolio`` (recomputed, not
    the solver objective) and is a valid lower bound on the full optimum.
    ``warm_start`` holds the scenarios the incumbent places below its
    quantile, sized exactly floor(alpha*m), for seeding certification.
    """

    portfolio: Portfolio
    bound: float
    last_objective: float
    warm_start: tuple[int, ...]
    trace: tuple[IterationRecord, ...]
    termination: str  # fixed_point | iteration_cap | cycle_detected | time_cap

    @property
    def iterations(self) -> int:
        return len(self.trace)


def default_initial_set(scenarios: ScenarioSet, spec: ProblemSpec) -> tuple[int, ...]:
    """Leading ceil(2*alpha*m) scenario indices, clamped to at least the
    exceedance budget and at most m.
    """
    m = scenarios.n_scenarios
    k = QuantileIndex.from_alpha(spec.alpha, m).k
    count = min(m, max(math.ceil(2.0 * spec.alpha * m - INDEX_EPS), k, 1))
    return tuple(range(count))


def lower_bound(
    scenarios: ScenarioSet,
    spec: ProblemSpec,
    initial: tuple[int, ...] | None = None,
    *,
    max_iter: int = 50,
    time_limit: float | None = None,
    limits: SolverLimits | None = None,
    track_best: bool = True,
) -> LowerBoundResult:
    """Run the lower-bound search from ``initial`` (default: the leading
    ceil(2*alpha*m) scenarios).

    The candidate set keeps the chosen exceedances of the current restricted
    solution and adds every outside scenario whose row in the indicator-fixed
    LP carries a positive shadow price. The search stops at a fixed point of
    that update; because the update can also shrink the set, an iteration cap
    and cycle detection guard termination, reported honestly in
    ``termination``.

    With ``track_best`` (default) the result is the best iterate by true
    sample quantile; disabling it returns the last iterate instead.
    """
    m = scenarios.n_scenarios
    k = QuantileIndex.from_alpha(spec.alpha, m).k
    limits = limits or SolverLimits()
    if max_iter < 1:
        raise InvalidInputError("max_iter must be at least 1")

    current = tuple(sorted(set(initial))) if initial is not None else default_initial_set(scenarios, spec)
    if any(j < 0 or j >= m for j in current):
        raise InvalidInputError("initial index out of range")
    if len(current) < k:
        raise InvalidInputError(
            f"initial set has {len(current)} scenarios, need at least {k}"
        )

    previous = frozenset(range(m))
    visited = {frozenset(current)}
    trace: list[IterationRecord] = []
    best_q = -np.inf
    best_x: np.ndarray | None = None
    last_x: np.ndarray | None = None
    last_objective = float("nan")
    termination = "iteration_cap"
    start = time.perf_counter()

    for _ in range(max_iter):
        iter_start = time.perf_counter()
        outcome = solve_milp(build_restricted_milp(scenarios, spec, current), limits)
        if outcome.status == "infeasible":
            raise InfeasibleProblemError(
                "restricted problem infeasible: the return floor is unattainable"
            )
        if outcome.primal is None:
            raise RuntimeError(f"restricted solve ended with status {outcome.status}")

        x = extract_weights(outcome, scenarios.n_assets)
        last_x = x
        last_objective = float(outcome.objective)
        quantile = portfolio_quantile(x, scenarios, spec.alpha)
        if quantile > best_q:
            best_q, best_x = quantile, x

        if not outcome.is_optimal:
            # time-limited solve: the incumbent is still feasible, keep it and stop
            trace.append(
                IterationRecord(
                    size=len(current),
                    objective=last_objective,
                    quantile=quantile,
                    best_quantile=best_q,
                    duals_added=(),
                    wall_time=time.perf_counter() - iter_start,
                )
            )
            termination = "time_cap"
            break

        if previous <= frozenset(current) or k == 0:
            # Update fixed point (with k == 0 the restriction is vacuous).
            trace.append(
                IterationRecord(
                    size=len(current),
                    objective=last_objective,
                    quantile=quantile,
                    best_quantile=best_q,
                    duals_added=(),
                    wall_time=time.perf_counter() - iter_start,
                )
            )
            termination = "fixed_point"
            break

        chosen = [
            j
            for j in current
            if outcome.primal.get(f"y_{j}", 0.0) > 0.5
        ]
        indicator = np.zeros(m)
        indicator[chosen] = 1.0
        lp_out = solve_lp(build_fixed_y_lp(scenarios, spec, indicator), limits)
        if not lp_out.is_optimal:
            raise RuntimeError(f"indicator-fixed LP ended with status {lp_out.status}")
        in_current = set(current)
        added = tuple(
            j
            for j in range(m)
            if j not in in_current
            and lp_out.duals.get(f"bigM:{j}", 0.0) > limits.dual_positive_tol
        )

        trace.append(
            IterationRecord(
                size=len(current),
                objective=last_objective,
                quantile=quantile,
                best_quantile=best_q,
                duals_added=added,
                wall_time=time.perf_counter() - iter_start,
            )
        )

        previous = frozenset(current)
        updated = frozenset(chosen) | frozenset(added)
        if updated in visited:
            termination = "cycle_detected"
            break
        visited.add(updated)
        current = tuple(sorted(updated))

        if time_limit is not None and time.perf_counter() - start > time_limit:
            termination = "time_cap"
            break

    final_x = best_x if track_best else last_x
    portfolio = Portfolio(final_x)
    bound = portfolio_quantile(portfolio, scenarios, spec.alpha)
    warm = exceedance_set(portfolio, scenarios, spec.alpha)
    return LowerBoundResult(
        portfolio=portfolio,
        bound=bound,
        last_objective=last_objective,
        warm_start=warm,
        trace=tuple(trace),
        termination=termination,
    )
