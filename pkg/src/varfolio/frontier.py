"""Risk-reward frontier diagnostics.

Two curve families are computed on grids: minimum risk at a reward floor, and
maximum reward at a risk cap. For the quantile risk the sign convention is
``risk = -quantile``, so minimizing risk aligns with maximizing the sample
quantile; emitted values can be negated back by callers that want
quantile-style output.

Composing the two curves tests their one-to-one correspondence: the reward
floor is recovered by capping risk at the curve value exactly where the
min-risk curve is strictly increasing, and fails exactly on its plateaus.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .core import InvalidInputError, ProblemSpec, ScenarioSet
from .model import (
    Constraint,
    LinearModel,
    Variable,
    build_cvar_lp,
    build_full_milp,
    build_max_return_milp,
)
from .solve import SolverLimits, extract_weights, solve_lp, solve_milp

__all__ = [
    "CurvePoint",
    "DualityReport",
    "FrontierCurve",
    "ImplicationReport",
    "Plateau",
    "duality_check",
    "find_plateaus",
    "huber_max_reward",
    "huber_min_risk",
    "huber_risk",
    "implication_check",
    "max_reward",
    "max_reward_curve",
    "min_risk",
    "min_risk_curve",
    "min_risk_fn",
    "plateau_demo_instance",
    "reward_cap_fn",
]

PLATEAU_TOL = 1e-6
RISK_KINDS = ("var", "cvar", "huber")


@dataclass(frozen=True)
class CurvePoint:
    level: float
    value: float  # +inf / -inf on infeasible points
    weights: np.ndarray | None
    status: str


@dataclass(frozen=True)
class Plateau:
    """Maximal run of grid points whose values agree within tolerance."""

    first: int
    last: int
    start: float
    stop: float
    value: float

    def covers(self, index: int) -> bool:
        return self.first <= index <= self.last

    def interior(self, index: int) -> bool:
        return self.first <= index < self.last


@dataclass(frozen=True)
class FrontierCurve:
    kind: str  # var | cvar | huber
    axis: str  # reward_floor | risk_cap
    points: tuple[CurvePoint, ...]
    plateaus: tuple[Plateau, ...]

    @property
    def levels(self) -> np.ndarray:
        return np.array([p.level for p in self.points])

    @property
    def values(self) -> np.ndarray:
        return np.array([p.value for p in self.points])

    def plateau_id(self, index: int) -> int:
        for pid, plateau in enumerate(self.plateaus):
            if plateau.covers(index):
                return pid
        return -1


def find_plateaus(
    levels, values, tol: float = PLATEAU_TOL
) -> tuple[Plateau, ...]:
    """Maximal runs of two or more consecutive finite values within ``tol`` of
    the run's first value."""
    levels = np.asarray(levels, dtype=float)
    values = np.asarray(values, dtype=float)
    plateaus: list[Plateau] = []
    i = 0
    n = len(values)
    while i < n:
        if not math.isfinite(values[i]):
            i += 1
            continue
        j = i
        while (
            j + 1 < n
            and math.isfinite(values[j + 1])
            and abs(values[j + 1] - values[i]) <= tol
        ):
            j += 1
        if j > i:
            plateaus.append(
                Plateau(
                    first=i,
                    last=j,
                    start=float(levels[i]),
                    stop=float(levels[j]),
                    value=float(values[i]),
                )
            )
        i = j + 1
    return tuple(plateaus)


# ---------------------------------------------------------------------------
# Analytic one-dimensional demo (quadratic core with linear tails): a risk
# function that is not convex yet has a strictly increasing min-risk curve.
# ---------------------------------------------------------------------------


def huber_risk(x: float, kappa: float = 2.0) -> float:
    if kappa <= 1.0:
        raise InvalidInputError("kappa must exceed 1")
    if abs(x) <= kappa:
        return x * x
    return abs(x) + kappa * (kappa - 1.0)


def huber_min_risk(reward_floor: float, kappa: float = 2.0) -> float:
    """Minimum risk over the segment [-2*kappa, 2*kappa] with reward x at
    least ``reward_floor``; the risk is unimodal with its minimum at zero, so
    the minimizer is the floor clamped up to zero."""
    if kappa <= 1.0:
        raise InvalidInputError("kappa must exceed 1")
    if reward_floor > 2.0 * kappa:
        return float("inf")
    return huber_risk(max(reward_floor, 0.0), kappa)


def huber_max_reward(risk_cap: float, kappa: float = 2.0) -> float:
    """Largest x in [-2*kappa, 2*kappa] with risk at most ``risk_cap``."""
    if kappa <= 1.0:
        raise InvalidInputError("kappa must exceed 1")
    if risk_cap < 0.0:
        return float("-inf")
    edge = 2.0 * kappa + kappa * (kappa - 1.0)
    if risk_cap >= edge:
        return 2.0 * kappa
    if risk_cap >= kappa * kappa:
        return risk_cap - kappa * (kappa - 1.0)
    return math.sqrt(risk_cap)


# ---------------------------------------------------------------------------
# Single-point solves
# ---------------------------------------------------------------------------


def _cvar_cap_lp(scenarios: ScenarioSet, spec: ProblemSpec, risk_cap: float) -> LinearModel:
    """Max expected return subject to the shortfall risk staying at or below
    the cap (risk = -shortfall objective, so the cap row reads
    ``eta - sum(u)/(alpha*m) >= -cap``)."""
    m, n = scenarios.n_scenarios, scenarios.n_assets
    inv_am = 1.0 / (spec.alpha * m)
    variables = [
        Variable(f"x_{i}", "continuous", lo, hi)
        for i, (lo, hi) in enumerate(spec.resolved_bounds(n))
    ]
    variables.append(Variable("eta", "continuous", None, None))
    variables.extend(Variable(f"u_{j}", "continuous", 0.0, None) for j in range(m))

    constraints = [Constraint("budget", {f"x_{i}": 1.0 for i in range(n)}, "=", 1.0)]
    tags = {"budget": "budget"}
    for r, row in enumerate(spec.extra_rows):
        name = f"extra_{r}"
        constraints.append(
            Constraint(name, {f"x_{i}": float(c) for i, c in enumerate(row.coeffs)}, row.sense, row.rhs)
        )
        tags[name] = f"extra:{r}"
    cap = {"eta": 1.0}
    cap.update({f"u_{j}": -inv_am for j in range(m)})
    constraints.append(Constraint("risk_cap", cap, ">=", -float(risk_cap)))
    tags["risk_cap"] = "risk-cap"
    for j in range(m):
        coeffs = {"eta": 1.0, f"u_{j}": -1.0}
        for i in range(n):
            c = float(scenarios.returns[j, i])
            if c != 0.0:
                coeffs[f"x_{i}"] = -c
        constraints.append(Constraint(f"short_{j}", coeffs, "<=", 0.0))
        tags[f"short_{j}"] = f"shortfall:{j}"

    objective = {f"x_{i}": float(scenarios.mu[i]) for i in range(n)}
    return LinearModel(
        name="cvar_cap_lp",
        variables=tuple(variables),
        constraints=tuple(constraints),
        sense="max",
        objective=objective,
        tags=tags,
    )


def min_risk(
    scenarios: ScenarioSet | None,
    spec: ProblemSpec | None,
    reward_floor: float,
    kind: str = "var",
    *,
    kappa: float = 2.0,
    limits: SolverLimits | None = None,
) -> tuple[float, np.ndarray | None, str]:
    """Minimum risk at a reward floor: (value, weights, status); +inf when the
    floor is unattainable."""
    if kind == "huber":
        value = huber_min_risk(reward_floor, kappa)
        status = "optimal" if math.isfinite(value) else "infeasible"
        return value, None, status
    if kind == "var":
        out = solve_milp(build_full_milp(scenarios, spec.with_mu0(reward_floor)), limits)
    elif kind == "cvar":
        out = solve_lp(build_cvar_lp(scenarios, spec.with_mu0(reward_floor)), limits)
    else:
        raise InvalidInputError(f"unknown risk kind {kind!r}")
    if out.status == "infeasible":
        return float("inf"), None, "infeasible"
    if not out.is_optimal:
        return float("nan"), None, out.status
    return -float(out.objective), extract_weights(out, scenarios.n_assets), "optimal"


def max_reward(
    scenarios: ScenarioSet | None,
    spec: ProblemSpec | None,
    risk_cap: float,
    kind: str = "var",
    *,
    kappa: float = 2.0,
    limits: SolverLimits | None = None,
) -> tuple[float, np.ndarray | None, str]:
    """Maximum reward at a risk cap: (value, weights, status); -inf when the
    cap admits no portfolio."""
    if kind == "huber":
        value = huber_max_reward(risk_cap, kappa)
        status = "optimal" if math.isfinite(value) else "infeasible"
        return value, None, status
    if kind == "var":
        out = solve_milp(build_max_return_milp(scenarios, spec, -float(risk_cap)), limits)
    elif kind == "cvar":
        out = solve_lp(_cvar_cap_lp(scenarios, spec, risk_cap), limits)
    else:
        raise InvalidInputError(f"unknown risk kind {kind!r}")
    if out.status == "infeasible":
        return float("-inf"), None, "infeasible"
    if not out.is_optimal:
        return float("nan"), None, out.status
    return float(out.objective), extract_weights(out, scenarios.n_assets), "optimal"


def min_risk_curve(
    scenarios: ScenarioSet | None,
    spec: ProblemSpec | None,
    reward_grid,
    kind: str = "var",
    *,
    kappa: float = 2.0,
    limits: SolverLimits | None = None,
    plateau_tol: float = PLATEAU_TOL,
) -> FrontierCurve:
    """Minimum-risk value per reward floor on a grid. For the quantile risk
    each point is one exact MILP solve, so keep grids desk-scale. Per-point
    failures are recorded in the point status; the curve is still returned.
    """
    points = []
    for a in reward_grid:
        value, weights, status = min_risk(
            scenarios, spec, float(a), kind, kappa=kappa, limits=limits
        )
        points.append(CurvePoint(float(a), value, weights, status))
    plateaus = find_plateaus([p.level for p in points], [p.value for p in points], plateau_tol)
    return FrontierCurve(kind=kind, axis="reward_floor", points=tuple(points), plateaus=plateaus)


def max_reward_curve(
    scenarios: ScenarioSet | None,
    spec: ProblemSpec | None,
    risk_grid,
    kind: str = "var",
    *,
    kappa: float = 2.0,
    limits: SolverLimits | None = None,
    plateau_tol: float = PLATEAU_TOL,
) -> FrontierCurve:
    """Maximum-reward value per risk cap on a grid."""
    points = []
    for b in risk_grid:
        value, weights, status = max_reward(
            scenarios, spec, float(b), kind, kappa=kappa, limits=limits
        )
        points.append(CurvePoint(float(b), value, weights, status))
    plateaus = find_plateaus([p.level for p in points], [p.value for p in points], plateau_tol)
    return FrontierCurve(kind=kind, axis="risk_cap", points=tuple(points), plateaus=plateaus)


def reward_cap_fn(
    scenarios: ScenarioSet | None,
    spec: ProblemSpec | None,
    kind: str = "var",
    *,
    kappa: float = 2.0,
    limits: SolverLimits | None = None,
):
    """Callable ``cap -> max reward`` for use with :func:`duality_check`."""

    def alpha_fn(risk_cap: float) -> float:
        return max_reward(scenarios, spec, risk_cap, kind, kappa=kappa, limits=limits)[0]

    return alpha_fn


def min_risk_fn(
    scenarios: ScenarioSet | None,
    spec: ProblemSpec | None,
    kind: str = "var",
    *,
    kappa: float = 2.0,
    limits: SolverLimits | None = None,
):
    """Callable ``floor -> min risk`` for use with :func:`duality_check`."""

    def beta_fn(reward_floor: float) -> float:
        return min_risk(scenarios, spec, reward_floor, kind, kappa=kappa, limits=limits)[0]

    return beta_fn


# ---------------------------------------------------------------------------
# Reports
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class DualityRow:
    level: float
    risk: float
    reward_at_risk: float
    equal: bool
    in_plateau: bool
    plateau_interior: bool
    flat_to_recovered: bool  # min risk unchanged up to the recovered reward


@dataclass(frozen=True)
class DualityReport:
    """Composition test of the two curves on the min-risk grid.

    ``consistent`` holds when every equality failure is explained by a
    plateau and every (numerically confirmed) plateau interior point fails
    equality: the grid-level statement of the strict-monotonicity
    correspondence. A failure at level ``a`` recovering reward ``r > a``
    asserts the min-risk curve is flat on ``[a, r]``; when that interval ends
    between grid points the flatness is confirmed by re-evaluating the curve
    just below ``r``.
    """

    rows: tuple[DualityRow, ...]
    failures_on_plateaus: bool
    interiors_fail: bool

    @property
    def consistent(self) -> bool:
        return self.failures_on_plateaus and self.interiors_fail


def duality_check(
    curve: FrontierCurve,
    alpha_fn,
    risk_fn=None,
    tol: float = PLATEAU_TOL,
    confirm_tol: float = 1e-7,
) -> DualityReport:
    """For each finite grid point, cap the risk at the curve value and test
    whether the reward floor is recovered within ``tol``.

    ``risk_fn`` (level -> min risk), when given, settles the two grid
    artifacts: an equality failure whose implied plateau ends between grid
    points is confirmed by probing the curve just below the recovered reward,
    and a detected plateau only obliges its interior to fail when its grid
    values agree to solver precision (``confirm_tol``), not merely to the
    merge tolerance.
    """
    if curve.axis != "reward_floor":
        raise InvalidInputError("duality_check expects a min-risk curve")

    def plateau_spread(pid: int) -> float:
        plateau = curve.plateaus[pid]
        values = [
            curve.points[i].value for i in range(plateau.first, plateau.last + 1)
        ]
        return max(values) - min(values)

    rows: list[DualityRow] = []
    failures_ok = True
    interiors_ok = True
    for idx, point in enumerate(curve.points):
        if not math.isfinite(point.value):
            continue
        recovered = alpha_fn(point.value)
        equal = math.isfinite(recovered) and abs(recovered - point.level) <= tol
        pid = curve.plateau_id(idx)
        in_plateau = pid >= 0
        interior = in_plateau and curve.plateaus[pid].interior(idx)
        flat = False
        if not equal and not in_plateau and risk_fn is not None and math.isfinite(recovered):
            probe = recovered - max(confirm_tol, tol / 10.0)
            if probe > point.level:
                flat = abs(risk_fn(probe) - point.value) <= tol
        rows.append(
            DualityRow(
                level=point.level,
                risk=point.value,
                reward_at_risk=float(recovered),
                equal=equal,
                in_plateau=in_plateau,
                plateau_interior=interior,
                flat_to_recovered=flat,
            )
        )
        if not equal and not in_plateau and not flat:
            failures_ok = False
        if interior and equal:
            if risk_fn is None or plateau_spread(pid) <= confirm_tol:
                interiors_ok = False
    return DualityReport(
        rows=tuple(rows),
        failures_on_plateaus=failures_ok,
        interiors_fail=interiors_ok,
    )


@dataclass(frozen=True)
class ImplicationRow:
    reward_floor: float
    risk_cap: float
    reward_at_cap: float
    risk_at_floor: float | None
    vacuous: bool
    holds: bool


@dataclass(frozen=True)
class ImplicationReport:
    """Checks the one-sided bound linking the two curves: whenever the best
    reward under cap ``b`` stays below floor ``a``, the min risk at ``a`` is
    at least ``b``. Pairs where the premise fails make no claim."""

    rows: tuple[ImplicationRow, ...]

    @property
    def all_hold(self) -> bool:
        return all(row.holds for row in self.rows)


def implication_check(
    scenarios: ScenarioSet | None,
    spec: ProblemSpec | None,
    pairs,
    kind: str = "var",
    *,
    kappa: float = 2.0,
    limits: SolverLimits | None = None,
    tol: float = 1e-9,
) -> ImplicationReport:
    rows: list[ImplicationRow] = []
    for a, b in pairs:
        reward_at_cap = max_reward(scenarios, spec, float(b), kind, kappa=kappa, limits=limits)[0]
        if reward_at_cap >= float(a):
            rows.append(ImplicationRow(float(a), float(b), reward_at_cap, None, True, True))
            continue
        risk_at_floor = min_risk(scenarios, spec, float(a), kind, kappa=kappa, limits=limits)[0]
        holds = risk_at_floor >= float(b) - tol
        rows.append(
            ImplicationRow(float(a), float(b), reward_at_cap, risk_at_floor, False, holds)
        )
    return ImplicationReport(rows=tuple(rows))


def plateau_demo_instance() -> tuple[ScenarioSet, ProblemSpec]:
    """Synthetic two-asset instance whose quantile min-risk curve has a wide
    plateau followed by a strictly increasing stretch.

    Stand-in for a real-data pair of assets exhibiting the same qualitative
    shape; the scenarios are constructed, not market data. One constant
    scenario pins the quantile at 1 while both tilted scenarios stay above it
    for mid-range allocations, so the min risk stays at -1 for every reward
    floor up to 1.3 and then rises to 0 at 1.4.
    """
    returns = np.array(
        [
            [1.0, 1.0],
            [-2.0, -2.0],
            [4.0, 0.0],
            [0.0, 4.0],
            [2.0, 4.0],
        ]
    )
    scenarios = ScenarioSet.from_returns(returns, asset_labels=("P1", "P2"))
    spec = ProblemSpec(alpha=0.2, mu0=1.0)
    return scenarios, spec
