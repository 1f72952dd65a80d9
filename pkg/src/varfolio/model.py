"""Solver-agnostic LP/MILP descriptions of every formulation in the toolkit.

Builders return immutable :class:`LinearModel` values. Constraint semantics are
carried by tags (``bigM:<j>``, ``budget``, ``return-floor``, ...) rather than
row positions, so dual values survive any row reordering done by a backend.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass, field
from typing import Iterable, Sequence

import numpy as np

from .core import (
    InvalidInputError,
    ProblemSpec,
    QuantileIndex,
    ScenarioSet,
    big_m,
)

__all__ = [
    "Constraint",
    "LinearModel",
    "Variable",
    "build_cvar_lp",
    "build_fixed_y_lp",
    "build_full_milp",
    "build_max_return_milp",
    "build_restricted_milp",
    "build_upper_milp",
]

BIG_M_TAG = "bigM"


@dataclass(frozen=True)
class Variable:
    name: str
    kind: str = "continuous"  # "continuous" | "binary"
    lower: float | None = None
    upper: float | None = None

    def __post_init__(self):
        if self.kind not in ("continuous", "binary"):
            raise InvalidInputError(f"unknown variable kind {self.kind!r}")


@dataclass(frozen=True)
class Constraint:
    name: str
    coeffs: dict[str, float]
    sense: str  # "<=" | "=" | ">="
    rhs: float

    def __post_init__(self):
        if self.sense not in ("<=", "=", ">="):
            raise InvalidInputError(f"unknown constraint sense {self.sense!r}")


@dataclass(frozen=True)
class LinearModel:
    """An LP/MILP in named, order-preserving form."""

    name: str
    variables: tuple[Variable, ...]
    constraints: tuple[Constraint, ...]
    sense: str  # "max" | "min"
    objective: dict[str, float]
    tags: dict[str, str] = field(default_factory=dict)

    def __post_init__(self):
        if self.sense not in ("max", "min"):
            raise InvalidInputError(f"unknown objective sense {self.sense!r}")
        declared = {v.name for v in self.variables}
        if len(declared) != len(self.variables):
            raise InvalidInputError("duplicate variable names")
        for con in self.constraints:
            missing = set(con.coeffs) - declared
            if missing:
                raise InvalidInputError(
                    f"constraint {con.name!r} references undeclared variables {sorted(missing)}"
                )
        missing = set(self.objective) - declared
        if missing:
            raise InvalidInputError(f"objective references undeclared variables {sorted(missing)}")
        known = {c.name for c in self.constraints}
        for cname in self.tags:
            if cname not in known:
                raise InvalidInputError(f"tag on unknown constraint {cname!r}")

    @property
    def binary_names(self) -> tuple[str, ...]:
        return tuple(v.name for v in self.variables if v.kind == "binary")

    def constraints_with_tag_prefix(self, prefix: str) -> tuple[Constraint, ...]:
        return tuple(
            c for c in self.constraints if self.tags.get(c.name, "").startswith(prefix)
        )

    def to_lp_format(self) -> str:
        """Serialize to CPLEX LP text (fixed section order, names preserved)."""
        lines = [f"\\ {self.name}"]
        lines.append("Maximize" if self.sense == "max" else "Minimize")
        lines.append(" obj: " + _terms(self.objective, self.variables))
        lines.append("Subject To")
        for con in self.constraints:
            op = {"<=": "<=", ">=": ">=", "=": "="}[con.sense]
            lines.append(
                f" {con.name}: {_terms(con.coeffs, self.variables)} {op} {con.rhs:.17g}"
            )
        lines.append("Bounds")
        for v in self.variables:
            if v.kind == "binary":
                continue
            if v.lower is None and v.upper is None:
                lines.append(f" {v.name} free")
            else:
                lo = "-inf" if v.lower is None else f"{v.lower:.17g}"
                hi = "+inf" if v.upper is None else f"{v.upper:.17g}"
                lines.append(f" {lo} <= {v.name} <= {hi}")
        binaries = self.binary_names
        if binaries:
            lines.append("Binaries")
            lines.append(" " + " ".join(binaries))
        lines.append("End")
        return "\n".join(lines) + "\n"


def _terms(coeffs: dict[str, float], variables: tuple[Variable, ...]) -> str:
    parts = []
    for v in variables:
        c = coeffs.get(v.name)
        if c is None or c == 0.0:
            continue
        sign = "-" if c < 0 else ("+" if parts else "")
        parts.append(f"{sign} {abs(c):.17g} {v.name}".strip())
    return " ".join(parts) if parts else "0 " + variables[0].name


def _asset_variables(scenarios: ScenarioSet, spec: ProblemSpec) -> list[Variable]:
    bounds = spec.resolved_bounds(scenarios.n_assets)
    return [
        Variable(f"x_{i}", "continuous", lo, hi) for i, (lo, hi) in enumerate(bounds)
    ]


def _admissible_rows(scenarios: ScenarioSet, spec: ProblemSpec) -> tuple[list[Constraint], dict[str, str]]:
    """Budget row plus any user-supplied rows describing the admissible set."""
    n = scenarios.n_assets
    rows = [Constraint("budget", {f"x_{i}": 1.0 for i in range(n)}, "=", 1.0)]
    tags = {"budget": "budget"}
    for r, row in enumerate(spec.extra_rows):
        if len(row.coeffs) != n:
            raise InvalidInputError(
                f"extra row {r} has {len(row.coeffs)} coefficients for {n} assets"
            )
        name = f"extra_{r}"
        coeffs = {f"x_{i}": float(c) for i, c in enumerate(row.coeffs) if c != 0.0}
        rows.append(Constraint(name, coeffs, row.sense, row.rhs))
        tags[name] = f"extra:{r}"
    return rows, tags


def _return_floor(scenarios: ScenarioSet, spec: ProblemSpec) -> Constraint:
    coeffs = {f"x_{i}": float(scenarios.mu[i]) for i in range(scenarios.n_assets)}
    return Constraint("return_floor", coeffs, ">=", float(spec.mu0))


def _scenario_row(
    scenarios: ScenarioSet, j: int, m_const: float | None
) -> Constraint:
    """``quantile - x.xi_j - M*y_j <= 0`` (plain ``quantile <= x.xi_j`` when no binary)."""
    coeffs = {"quantile": 1.0}
    for i in range(scenarios.n_assets):
        c = float(scenarios.returns[j, i])
        if c != 0.0:
            coeffs[f"x_{i}"] = -c
    if m_const is not None:
        coeffs[f"y_{j}"] = -m_const
    return Constraint(f"scen_{j}", coeffs, "<=", 0.0)


def build_full_milp(scenarios: ScenarioSet, spec: ProblemSpec) -> LinearModel:
    """Exact formulation: maximize the sample quantile with exactly
    floor(alpha*m) scenarios allowed to fall below it.

    With a zero exceedance budget the binaries vanish and the pure-LP variant
    is emitted instead.
    """
    m = scenarios.n_scenarios
    k = QuantileIndex.from_alpha(spec.alpha, m).k
    m_const = big_m(scenarios, spec)

    variables = _asset_variables(scenarios, spec)
    variables.append(Variable("quantile", "continuous", None, None))
    constraints, tags = _admissible_rows(scenarios, spec)
    constraints.append(_return_floor(scenarios, spec))
    tags["return_floor"] = "return-floor"

    if k > 0:
        variables.extend(Variable(f"y_{j}", "binary", 0.0, 1.0) for j in range(m))
        constraints.append(
            Constraint("exceed_count", {f"y_{j}": 1.0 for j in range(m)}, "=", float(k))
        )
        tags["exceed_count"] = "cardinality"
    for j in range(m):
        row = _scenario_row(scenarios, j, m_const if k > 0 else None)
        constraints.append(row)
        tags[row.name] = f"{BIG_M_TAG}:{j}"

    return LinearModel(
        name="var_milp",
        variables=tuple(variables),
        constraints=tuple(constraints),
        sense="max",
        objective={"quantile": 1.0},
        tags=tags,
    )


def build_max_return_milp(
    scenarios: ScenarioSet, spec: ProblemSpec, quantile_floor: float
) -> LinearModel:
    """Alternate formulation: maximize expected return subject to the sample
    quantile staying at or above ``quantile_floor``. No return-floor row.
    """
    m = scenarios.n_scenarios
    k = QuantileIndex.from_alpha(spec.alpha, m).k
    m_const = big_m(scenarios, spec)

    variables = _asset_variables(scenarios, spec)
    constraints, tags = _admissible_rows(scenarios, spec)

    if k > 0:
        variables.extend(Variable(f"y_{j}", "binary", 0.0, 1.0) for j in range(m))
        constraints.append(
            Constraint("exceed_count", {f"y_{j}": 1.0 for j in range(m)}, "<=", float(k))
        )
        tags["exceed_count"] = "cardinality"
    for j in range(m):
        coeffs = {}
        for i in range(scenarios.n_assets):
            c = float(scenarios.returns[j, i])
            if c != 0.0:
                coeffs[f"x_{i}"] = -c
        if k > 0:
            coeffs[f"y_{j}"] = -m_const
        name = f"scen_{j}"
        constraints.append(Constraint(name, coeffs, "<=", -float(quantile_floor)))
        tags[name] = f"{BIG_M_TAG}:{j}"

    objective = {f"x_{i}": float(scenarios.mu[i]) for i in range(scenarios.n_assets)}
    return LinearModel(
        name="max_return_milp",
        variables=tuple(variables),
        constraints=tuple(constraints),
        sense="max",
        objective=objective,
        tags=tags,
    )


def build_restricted_milp(
    scenarios: ScenarioSet, spec: ProblemSpec, candidates: Iterable[int]
) -> LinearModel:
    """Exact formulation with binaries only for ``candidates``; every other
    scenario is pinned above the quantile. The optimum is a lower bound on the
    full problem's.
    """
    m = scenarios.n_scenarios
    k = QuantileIndex.from_alpha(spec.alpha, m).k
    cand = sorted(set(int(j) for j in candidates))
    if any(j < 0 or j >= m for j in cand):
        raise InvalidInputError("candidate index out of range")
    if len(cand) < k:
        raise InvalidInputError(
            f"need at least {k} candidate scenarios, got {len(cand)}"
        )
    m_const = big_m(scenarios, spec)
    cand_set = set(cand)

    variables = _asset_variables(scenarios, spec)
    variables.append(Variable("quantile", "continuous", None, None))
    constraints, tags = _admissible_rows(scenarios, spec)
    constraints.append(_return_floor(scenarios, spec))
    tags["return_floor"] = "return-floor"

    if k > 0:
        variables.extend(Variable(f"y_{j}", "binary", 0.0, 1.0) for j in cand)
        constraints.append(
            Constraint("exceed_count", {f"y_{j}": 1.0 for j in cand}, "=", float(k))
        )
        tags["exceed_count"] = "cardinality"
    for j in range(m):
        with_binary = k > 0 and j in cand_set
        row = _scenario_row(scenarios, j, m_const if with_binary else None)
        constraints.append(row)
        tags[row.name] = f"{BIG_M_TAG}:{j}"

    return LinearModel(
        name="var_milp_restricted",
        variables=tuple(variables),
        constraints=tuple(constraints),
        sense="max",
        objective={"quantile": 1.0},
        tags=tags,
    )


def build_fixed_y_lp(
    scenarios: ScenarioSet, spec: ProblemSpec, exceed: Sequence[int] | np.ndarray
) -> LinearModel:
    """Pure LP obtained by fixing the exceedance indicators to the 0/1 vector
    ``exceed``: each scenario row becomes ``quantile - x.xi_j <= M*y_j``.

    Every scenario row is tagged for dual extraction. A vector with more
    exceedances than the budget floor(alpha*m) is accepted but degenerate (the
    optimum then overshoots any true sample quantile); a warning is issued.
    """
    m = scenarios.n_scenarios
    y = np.asarray(exceed, dtype=float)
    if y.shape != (m,):
        raise InvalidInputError(f"exceed vector has shape {y.shape}, expected ({m},)")
    if not np.all((y == 0.0) | (y == 1.0)):
        raise InvalidInputError("exceed vector must be 0/1")
    k = QuantileIndex.from_alpha(spec.alpha, m).k
    if int(y.sum()) > k:
        warnings.warn(
            f"{int(y.sum())} exceedances fixed but only {k} allowed; "
            "the LP optimum will exceed any attainable sample quantile",
            stacklevel=2,
        )
    m_const = big_m(scenarios, spec)

    variables = _asset_variables(scenarios, spec)
    variables.append(Variable("quantile", "continuous", None, None))
    constraints, tags = _admissible_rows(scenarios, spec)
    constraints.append(_return_floor(scenarios, spec))
    tags["return_floor"] = "return-floor"
    for j in range(m):
        coeffs = {"quantile": 1.0}
        for i in range(scenarios.n_assets):
            c = float(scenarios.returns[j, i])
            if c != 0.0:
                coeffs[f"x_{i}"] = -c
        name = f"scen_{j}"
        constraints.append(Constraint(name, coeffs, "<=", m_const * float(y[j])))
        tags[name] = f"{BIG_M_TAG}:{j}"

    return LinearModel(
        name="var_lp_fixed_indicators",
        variables=tuple(variables),
        constraints=tuple(constraints),
        sense="max",
        objective={"quantile": 1.0},
        tags=tags,
    )


def build_upper_milp(
    scenarios: ScenarioSet,
    spec: ProblemSpec,
    enforced: Iterable[int],
    quantile_floor: float,
) -> LinearModel:
    """Relaxation of the max-return formulation that keeps scenario rows (and
    binaries) only for ``enforced``. Its optimum upper-bounds the max-return
    optimum at the same quantile floor.
    """
    m = scenarios.n_scenarios
    k = QuantileIndex.from_alpha(spec.alpha, m).k
    kept = sorted(set(int(j) for j in enforced))
    if any(j < 0 or j >= m for j in kept):
        raise InvalidInputError("enforced index out of range")
    if len(kept) < k:
        raise InvalidInputError(f"need at least {k} enforced scenarios, got {len(kept)}")
    m_const = big_m(scenarios, spec)

    variables = _asset_variables(scenarios, spec)
    constraints, tags = _admissible_rows(scenarios, spec)

    if k > 0:
        variables.extend(Variable(f"y_{j}", "binary", 0.0, 1.0) for j in kept)
        constraints.append(
            Constraint("exceed_count", {f"y_{j}": 1.0 for j in kept}, "<=", float(k))
        )
        tags["exceed_count"] = "cardinality"
    for j in kept:
        coeffs = {}
        for i in range(scenarios.n_assets):
            c = float(scenarios.returns[j, i])
            if c != 0.0:
                coeffs[f"x_{i}"] = -c
        if k > 0:
            coeffs[f"y_{j}"] = -m_const
        name = f"scen_{j}"
        constraints.append(Constraint(name, coeffs, "<=", -float(quantile_floor)))
        tags[name] = f"{BIG_M_TAG}:{j}"

    objective = {f"x_{i}": float(scenarios.mu[i]) for i in range(scenarios.n_assets)}
    return LinearModel(
        name="max_return_relaxation",
        variables=tuple(variables),
        constraints=tuple(constraints),
        sense="max",
        objective=objective,
        tags=tags,
    )


def build_cvar_lp(scenarios: ScenarioSet, spec: ProblemSpec) -> LinearModel:
    """Expected-shortfall LP baseline: maximize ``eta - sum(u)/(alpha*m)`` with
    shortfalls ``u_j >= eta - x.xi_j``. Its optimum lower-bounds the exact
    quantile optimum, and its portfolio is a feasible warm start.
    """
    m = scenarios.n_scenarios
    if not 0.0 < spec.alpha < 1.0:
        raise InvalidInputError(f"alpha must lie in (0, 1), got {spec.alpha}")
    inv_am = 1.0 / (spec.alpha * m)

    variables = _asset_variables(scenarios, spec)
    variables.append(Variable("eta", "continuous", None, None))
    variables.extend(Variable(f"u_{j}", "continuous", 0.0, None) for j in range(m))
    constraints, tags = _admissible_rows(scenarios, spec)
    constraints.append(_return_floor(scenarios, spec))
    tags["return_floor"] = "return-floor"
    for j in range(m):
        coeffs = {"eta": 1.0, f"u_{j}": -1.0}
        for i in range(scenarios.n_assets):
            c = float(scenarios.returns[j, i])
            if c != 0.0:
                coeffs[f"x_{i}"] = -c
        name = f"short_{j}"
        constraints.append(Constraint(name, coeffs, "<=", 0.0))
        tags[name] = f"shortfall:{j}"

    objective = {"eta": 1.0}
    objective.update({f"u_{j}": -inv_am for j in range(m)})
    return LinearModel(
        name="cvar_lp",
        variables=tuple(variables),
        constraints=tuple(constraints),
        sense="max",
        objective=objective,
        tags=tags,
    )
