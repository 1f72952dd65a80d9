"""Near-optimality certification for a feasible quantile-optimal candidate.

A candidate with certified lower bound ``b`` is delta-near-optimal when no
admissible portfolio with sample quantile at least ``b + delta`` reaches the
return floor. That condition is checked through a relaxation of the max-return
problem that enforces scenario rows only on a growing subset; once the
relaxation's optimum drops below the floor (or the relaxation goes
infeasible), the full optimum is pinned inside ``[b, b + delta]``.
"""

from __future__ import annotations

import json
import math
import time
from dataclasses import dataclass, field

import numpy as np

from .core import (
    INDEX_EPS,
    InvalidInputError,
    ProblemSpec,
    QuantileIndex,
    ScenarioSet,
)
from .lowerbound import LowerBoundResult
from .model import build_upper_milp
from .solve import SolverLimits, extract_weights, solve_milp

__all__ = ["Certificate", "CertifyRecord", "DEFAULT_BETA", "certify", "default_delta"]

DEFAULT_BETA = 0.1
ZERO_BOUND_DELTA = 1e-4


def default_delta(bound: float) -> float:
    """Default tolerance: 1% of the bound's magnitude.

    The magnitude is taken so the tolerance stays positive for the negative
    quantiles typical of real return data; a zero bound falls back to an
    absolute default of 1e-4.
    """
    if not math.isfinite(bound):
        raise InvalidInputError("bound must be finite")
    if bound == 0.0:
        return ZERO_BOUND_DELTA
    return 0.01 * abs(bound)


@dataclass(frozen=True)
class CertifyRecord:
    """One round: enforced-set size, relaxation value (-inf if infeasible),
    scenarios added afterwards."""

    size: int
    relaxation_value: float
    added: tuple[int, ...]
    wall_time: float


@dataclass(frozen=True)
class Certificate:
    """Verdict on delta-near-optimality, with the enclosing interval and an
    audit trace sufficient to replay the run."""

    verdict: str  # "proven" | "not_verified"
    lower: float
    upper: float
    delta: float
    threshold: float
    iterations: int
    final_size: int
    reason: str | None  # iteration_cap | I_exhausted_with_mu_above_floor | time_limit
    trace: tuple[CertifyRecord, ...]
    params: dict = field(default_factory=dict)

    @property
    def proven(self) -> bool:
        return self.verdict == "proven"

    def to_json(self, indent: int | None = 2) -> str:
        payload = {
            "verdict": self.verdict,
            "interval": [self.lower, self.upper],
            "delta": self.delta,
            "threshold": self.threshold,
            "iterations": self.iterations,
            "final_size": self.final_size,
            "reason": self.reason,
            "trace": [
                {
                    "size": rec.size,
                    "relaxation_value": rec.relaxation_value
                    if math.isfinite(rec.relaxation_value)
                    else None,
                    "added": list(rec.added),
                    "wall_time": rec.wall_time,
                }
                for rec in self.trace
            ],
            "params": self.params,
        }
        return json.dumps(payload, indent=indent, sort_keys=True)


def _force_add(values: np.ndarray, outside: list[int], count: int) -> list[int]:
    """The ``count`` smallest-return scenarios among ``outside``."""
    order = np.argsort(values[outside], kind="stable")
    return [outside[i] for i in order[: max(count, 1)]]


def certify(
    scenarios: ScenarioSet,
    spec: ProblemSpec,
    lb: LowerBoundResult,
    *,
    beta: float = DEFAULT_BETA,
    delta: float | None = None,
    iter_max: int = 50,
    time_limit: float | None = None,
    limits: SolverLimits | None = None,
    strict_infeasible: bool = False,
    growth_base: str = "initial",
) -> Certificate:
    """Try to prove that the full optimum lies in ``[lb.bound, lb.bound + delta]``.

    The enforced set starts from the candidate's exceedance scenarios and
    grows each round by the scenarios whose returns under the current
    relaxation optimum fall at or below its (m'+1)-th smallest outside return,
    with m' = floor(beta*alpha*m). If a round adds nothing, the m'+1
    lowest-return scenarios outside the set are force-added so the set always
    makes progress toward covering every scenario.

    An infeasible relaxation already proves the threshold unreachable, so the
    default certifies immediately; ``strict_infeasible`` instead keeps growing
    the set (deciding only once it covers every scenario), matching the
    looser loop-control convention of treating infeasibility as an infinite
    relaxation value. ``growth_base`` picks the reference set for the order
    statistic in the growth rule: the initial set (default) or the current one.
    """
    m = scenarios.n_scenarios
    k = QuantileIndex.from_alpha(spec.alpha, m).k
    limits = limits or SolverLimits()
    if delta is None:
        delta = default_delta(lb.bound)
    if delta <= 0:
        raise InvalidInputError(f"delta must be positive, got {delta}")
    if growth_base not in ("initial", "current"):
        raise InvalidInputError(f"unknown growth_base {growth_base!r}")
    initial = tuple(sorted(set(lb.warm_start)))
    if len(initial) < k:
        raise InvalidInputError(
            f"warm start has {len(initial)} scenarios, need at least {k}"
        )

    threshold = lb.bound + delta
    m_prime = math.floor(beta * spec.alpha * m + INDEX_EPS)
    params = {
        "alpha": spec.alpha,
        "mu0": spec.mu0,
        "beta": beta,
        "delta": delta,
        "bound": lb.bound,
        "initial_set": list(initial),
        "iter_max": iter_max,
        "growth_base": growth_base,
        "strict_infeasible": strict_infeasible,
    }

    enforced = set(initial)
    trace: list[CertifyRecord] = []
    start = time.perf_counter()

    def done(verdict: str, reason: str | None) -> Certificate:
        return Certificate(
            verdict=verdict,
            lower=lb.bound,
            upper=threshold,
            delta=delta,
            threshold=threshold,
            iterations=len(trace),
            final_size=len(enforced),
            reason=reason,
            trace=tuple(trace),
            params=params,
        )

    if iter_max < 1:
        return done("not_verified", "iteration_cap")

    while True:
        iter_start = time.perf_counter()
        outcome = solve_milp(
            build_upper_milp(scenarios, spec, sorted(enforced), threshold), limits
        )
        infeasible = outcome.status == "infeasible"
        if not infeasible and not outcome.is_optimal:
            trace.append(
                CertifyRecord(len(enforced), float("nan"), (), time.perf_counter() - iter_start)
            )
            return done("not_verified", "time_limit")
        value = float("-inf") if infeasible else float(outcome.objective)
        # The proven test compares the solver's bound (a true upper estimate of
        # the relaxation optimum) against the floor; the incumbent objective
        # alone could sit below the floor with the optimum above it.
        upper_estimate = value if infeasible else float(
            outcome.best_bound if outcome.best_bound is not None else outcome.objective
        )

        if infeasible and not strict_infeasible:
            trace.append(
                CertifyRecord(len(enforced), value, (), time.perf_counter() - iter_start)
            )
            return done("proven", None)
        if not infeasible and upper_estimate < spec.mu0:
            trace.append(
                CertifyRecord(len(enforced), value, (), time.perf_counter() - iter_start)
            )
            return done("proven", None)
        if len(enforced) == m:
            # The relaxation is now the max-return problem itself: its value
            # at or above the floor definitively refutes this delta.
            trace.append(
                CertifyRecord(len(enforced), value, (), time.perf_counter() - iter_start)
            )
            if infeasible:
                return done("proven", None)
            return done("not_verified", "I_exhausted_with_mu_above_floor")

        if infeasible:
            x = lb.portfolio.weights  # no relaxation optimum to price with
        else:
            x = extract_weights(outcome, scenarios.n_assets)
        values = scenarios.returns @ x
        base = initial if growth_base == "initial" else tuple(sorted(enforced))
        reference = [j for j in range(m) if j not in set(base)]
        outside = [j for j in range(m) if j not in enforced]
        if reference:
            ordered = np.sort(values[reference], kind="stable")
            cutoff = float(ordered[min(m_prime, len(ordered) - 1)])
            added = [j for j in outside if values[j] <= cutoff]
        else:
            added = []
        if not added:
            added = _force_add(values, outside, m_prime + 1)
        enforced.update(added)
        trace.append(
            CertifyRecord(
                len(enforced) - len(added),
                value,
                tuple(sorted(added)),
                time.perf_counter() - iter_start,
            )
        )

        if len(trace) >= iter_max:
            return done("not_verified", "iteration_cap")
        if time_limit is not None and time.perf_counter() - start > time_limit:
            return done("not_verified", "time_limit")
