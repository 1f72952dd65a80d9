"""Uniform solver contract (LPs with duals, MILPs with incumbent + bound) plus
an exhaustive enumeration oracle used as ground truth on small instances.

The bundled backend is HiGHS via :mod:`scipy.optimize`. Any engine exposing
the same two capabilities can stand in; nothing else in the package touches a
solver directly.
"""

from __future__ import annotations

import itertools
import math
import time
from dataclasses import dataclass

import numpy as np
from scipy.optimize import Bounds, LinearConstraint, linprog, milp

from .core import (
    InvalidInputError,
    Portfolio,
    ProblemSpec,
    QuantileIndex,
    ScenarioSet,
)
from .model import LinearModel

__all__ = [
    "OracleResult",
    "SolveOutcome",
    "SolverLimits",
    "extract_weights",
    "oracle_max_return",
    "oracle_var",
    "solve_lp",
    "solve_milp",
]

# Absolute dual value above which a shadow price counts as positive; separates
# true sensitivity from round-off.
DUAL_POSITIVE_TOL = 1e-7


@dataclass(frozen=True)
class SolverLimits:
    """Resource limits and tolerances applied to a single solve."""

    time_limit: float | None = None
    mip_rel_gap: float = 1e-6
    dual_positive_tol: float = DUAL_POSITIVE_TOL


DEFAULT_LIMITS = SolverLimits()

_STATUS = {
    0: "optimal",
    2: "infeasible",
    3: "unbounded",
}


@dataclass(frozen=True)
class SolveOutcome:
    """Result of one LP/MILP solve.

    ``status == "optimal"`` guarantees objective and primal values; LP solves
    additionally carry a dual value for every tagged row. ``best_bound`` is
    populated for MILPs (bound >= objective for maximization). A numerical
    breakdown is reported as status ``"failed"``, never as a fabricated
    solution.
    """

    status: str
    objective: float | None
    primal: dict[str, float] | None
    best_bound: float | None
    duals: dict[str, float] | None
    wall_time: float

    @property
    def is_optimal(self) -> bool:
        return self.status == "optimal"


def extract_weights(outcome: SolveOutcome, n_assets: int) -> np.ndarray:
    if outcome.primal is None:
        raise InvalidInputError("no primal solution to extract weights from")
    return np.array([outcome.primal[f"x_{i}"] for i in range(n_assets)])


def _to_matrices(model: LinearModel):
    """Dense matrix form plus bookkeeping for dual sign recovery.

    Rows are normalized for the backend; per tagged row we keep the factor
    that maps the backend marginal to the sensitivity of the *stated*
    objective to the *stated* right-hand side.
    """
    names = [v.name for v in model.variables]
    index = {name: i for i, name in enumerate(names)}
    nvar = len(names)

    c = np.zeros(nvar)
    for name, coef in model.objective.items():
        c[index[name]] = coef
    obj_sign = -1.0 if model.sense == "max" else 1.0
    c = obj_sign * c

    rows = np.zeros((len(model.constraints), nvar))
    for r, con in enumerate(model.constraints):
        for name, coef in con.coeffs.items():
            rows[r, index[name]] = coef
    rhs = np.array([con.rhs for con in model.constraints])

    lower = np.array(
        [-np.inf if v.lower is None else v.lower for v in model.variables]
    )
    upper = np.array(
        [np.inf if v.upper is None else v.upper for v in model.variables]
    )
    integrality = np.array(
        [1 if v.kind == "binary" else 0 for v in model.variables]
    )
    return names, c, obj_sign, rows, rhs, lower, upper, integrality


def solve_lp(model: LinearModel, limits: SolverLimits | None = None) -> SolveOutcome:
    """Solve a pure LP, returning primal values and per-tag duals.

    Dual convention: the dual of a row is the sensitivity of the stated
    optimum to the row's right-hand side. For a maximization with a row
    written ``g(x) <= rhs`` this is nonnegative and strictly positive only
    when the row is active.
    """
    if model.binary_names:
        raise InvalidInputError("solve_lp requires a model without binary variables")
    limits = limits or DEFAULT_LIMITS
    names, c, obj_sign, rows, rhs, lower, upper, _ = _to_matrices(model)

    a_ub, b_ub, ub_map = [], [], []  # ub_map: (constraint idx, rhs sign)
    a_eq, b_eq, eq_map = [], [], []
    for r, con in enumerate(model.constraints):
        if con.sense == "<=":
            a_ub.append(rows[r]), b_ub.append(rhs[r]), ub_map.append((r, 1.0))
        elif con.sense == ">=":
            a_ub.append(-rows[r]), b_ub.append(-rhs[r]), ub_map.append((r, -1.0))
        else:
            a_eq.append(rows[r]), b_eq.append(rhs[r]), eq_map.append(r)

    options = {}
    if limits.time_limit is not None:
        options["time_limit"] = float(limits.time_limit)

    start = time.perf_counter()
    res = linprog(
        c,
        A_ub=np.array(a_ub) if a_ub else None,
        b_ub=np.array(b_ub) if b_ub else None,
        A_eq=np.array(a_eq) if a_eq else None,
        b_eq=np.array(b_eq) if b_eq else None,
        bounds=np.column_stack([lower, upper]),
        method="highs",
        options=options,
    )
    elapsed = time.perf_counter() - start

    if res.status == 1:
        status = "time_limit" if limits.time_limit is not None else "iteration_limit"
        return SolveOutcome(status, None, None, None, None, elapsed)
    status = _STATUS.get(res.status, "failed")
    if status != "optimal":
        return SolveOutcome(status, None, None, None, None, elapsed)

    primal = {name: float(v) for name, v in zip(names, res.x)}
    objective = obj_sign * float(res.fun)

    duals: dict[str, float] = {}
    for pos, (r, rhs_sign) in enumerate(ub_map):
        tag = model.tags.get(model.constraints[r].name)
        if tag is not None:
            duals[tag] = obj_sign * rhs_sign * float(res.ineqlin.marginals[pos])
    for pos, r in enumerate(eq_map):
        tag = model.tags.get(model.constraints[r].name)
        if tag is not None:
            duals[tag] = obj_sign * float(res.eqlin.marginals[pos])

    return SolveOutcome("optimal", objective, primal, None, duals, elapsed)


def solve_milp(model: LinearModel, limits: SolverLimits | None = None) -> SolveOutcome:
    """Solve a MILP (or LP) to within the configured relative gap; on a time
    limit the best incumbent and bound found so far are reported.
    """
    limits = limits or DEFAULT_LIMITS
    names, c, obj_sign, rows, rhs, lower, upper, integrality = _to_matrices(model)

    lb = np.where([con.sense == "<=" for con in model.constraints], -np.inf, rhs)
    ub = np.where([con.sense == ">=" for con in model.constraints], np.inf, rhs)

    options = {"mip_rel_gap": float(limits.mip_rel_gap)}
    if limits.time_limit is not None:
        options["time_limit"] = float(limits.time_limit)

    start = time.perf_counter()
    res = milp(
        c,
        constraints=LinearConstraint(rows, lb, ub) if len(model.constraints) else None,
        integrality=integrality,
        bounds=Bounds(lower, upper),
        options=options,
    )
    elapsed = time.perf_counter() - start

    has_incumbent = res.x is not None
    bound = None
    if getattr(res, "mip_dual_bound", None) is not None:
        bound = obj_sign * float(res.mip_dual_bound)

    if res.status == 1:
        status = "time_limit" if limits.time_limit is not None else "iteration_limit"
        if has_incumbent:
            primal = {name: float(v) for name, v in zip(names, res.x)}
            return SolveOutcome(status, obj_sign * float(res.fun), primal, bound, None, elapsed)
        return SolveOutcome(status, None, None, bound, None, elapsed)

    status = _STATUS.get(res.status, "failed")
    if status != "optimal" or not has_incumbent:
        return SolveOutcome(status if status != "optimal" else "failed", None, None, None, None, elapsed)

    primal = {name: float(v) for name, v in zip(names, res.x)}
    objective = obj_sign * float(res.fun)
    if bound is None or not np.isfinite(bound):
        bound = objective
    return SolveOutcome("optimal", objective, primal, bound, None, elapsed)


# ---------------------------------------------------------------------------
# Enumeration oracle
# ---------------------------------------------------------------------------

SUBSET_GUARD = 10**6


@dataclass(frozen=True)
class OracleResult:
    status: str  # "optimal" | "infeasible"
    value: float  # -inf when infeasible
    portfolio: Portfolio | None
    subset: tuple[int, ...] | None

    @property
    def is_optimal(self) -> bool:
        return self.status == "optimal"


def _region(scenarios: ScenarioSet, spec: ProblemSpec):
    """Matrix form of the x-only admissible set (bounds, extras, budget)."""
    n = scenarios.n_assets
    a_ub, b_ub = [], []
    a_eq, b_eq = [np.ones(n)], [1.0]
    for row in spec.extra_rows:
        coeffs = np.asarray(row.coeffs, dtype=float)
        if row.sense == "<=":
            a_ub.append(coeffs), b_ub.append(row.rhs)
        elif row.sense == ">=":
            a_ub.append(-coeffs), b_ub.append(-row.rhs)
        else:
            a_eq.append(coeffs), b_eq.append(row.rhs)
    return a_ub, b_ub, a_eq, b_eq, list(spec.resolved_bounds(n))


def _guard(count: int, max_subsets: int):
    if count > max_subsets:
        raise InvalidInputError(
            f"enumeration would visit {count} subsets, above the guard of {max_subsets}"
        )


def _better(a, b):
    """Deterministic reduction: larger value wins, exact ties go to the
    lexicographically smallest subset."""
    if b is None:
        return a
    if a is None:
        return b
    if a[0] != b[0]:
        return a if a[0] > b[0] else b
    return a if a[1] <= b[1] else b


def _scan_var_subsets(subsets, n, quant_rows, fixed_ub, fixed_rhs, eq, beq, var_bounds):
    c = np.zeros(n + 1)
    c[n] = -1.0
    m = quant_rows.shape[0]
    best = None
    for subset in subsets:
        keep = np.ones(m, dtype=bool)
        keep[list(subset)] = False
        a_ub = np.vstack([quant_rows[keep], fixed_ub])
        b_ub = np.concatenate([np.zeros(int(keep.sum())), fixed_rhs])
        res = linprog(
            c, A_ub=a_ub, b_ub=b_ub, A_eq=eq, b_eq=beq, bounds=var_bounds,
            method="highs",
        )
        if res.status != 0:
            continue
        best = _better(best, (-float(res.fun), tuple(subset), res.x[:n].copy()))
    return best


def _scan_return_subsets(subsets, c, quant_rows, floor, fixed_ub, fixed_rhs, eq, beq, bounds):
    m = quant_rows.shape[0]
    best = None
    for subset in subsets:
        keep = np.ones(m, dtype=bool)
        keep[list(subset)] = False
        blocks = [quant_rows[keep]]
        rhs = [np.full(int(keep.sum()), -floor)]
        if fixed_ub is not None:
            blocks.append(fixed_ub)
            rhs.append(fixed_rhs)
        res = linprog(
            c,
            A_ub=np.vstack(blocks),
            b_ub=np.concatenate(rhs),
            A_eq=eq,
            b_eq=beq,
            bounds=bounds,
            method="highs",
        )
        if res.status != 0:
            continue
        best = _better(best, (-float(res.fun), tuple(subset), res.x.copy()))
    return best


def _chunked(items, n_chunks):
    size = max(1, math.ceil(len(items) / n_chunks))
    return [items[i : i + size] for i in range(0, len(items), size)]


def _run_scans(scan, subsets, args, n_jobs):
    if n_jobs == 1 or len(subsets) < 4:
        return scan(subsets, *args)
    from joblib import Parallel, delayed

    chunks = _chunked(subsets, 4 * abs(n_jobs))
    partial = Parallel(n_jobs=n_jobs)(delayed(scan)(chunk, *args) for chunk in chunks)
    best = None
    for candidate in partial:
        best = _better(best, candidate)
    return best


def oracle_var(
    scenarios: ScenarioSet,
    spec: ProblemSpec,
    max_subsets: int = SUBSET_GUARD,
    n_jobs: int = 1,
) -> OracleResult:
    """Ground-truth optimum of the exact quantile problem by enumerating every
    size-k exceedance subset and solving the induced min-row LP.

    The best value over subsets is the exact optimum. Subsets may be scanned
    in parallel (``n_jobs``); the reduction is deterministic either way, with
    exact ties broken toward the lexicographically smallest subset. Guarded
    against instances with more than ``max_subsets`` subsets.
    """
    m, n = scenarios.n_scenarios, scenarios.n_assets
    k = QuantileIndex.from_alpha(spec.alpha, m).k
    _guard(math.comb(m, k), max_subsets)

    a_ub_x, b_ub_x, a_eq, b_eq, bounds = _region(scenarios, spec)
    # variables: x_0..x_{n-1}, quantile
    quant_rows = np.hstack([-scenarios.returns, np.ones((m, 1))])  # quantile <= x.xi_j
    floor_row = np.concatenate([-scenarios.mu, [0.0]])
    fixed_ub = np.array([floor_row] + [np.concatenate([r, [0.0]]) for r in a_ub_x])
    fixed_rhs = np.array([-spec.mu0] + list(b_ub_x))
    eq = np.array([np.concatenate([r, [0.0]]) for r in a_eq])
    beq = np.array(b_eq)
    var_bounds = bounds + [(None, None)]

    subsets = list(itertools.combinations(range(m), k))
    best = _run_scans(
        _scan_var_subsets,
        subsets,
        (n, quant_rows, fixed_ub, fixed_rhs, eq, beq, var_bounds),
        n_jobs,
    )
    if best is None:
        return OracleResult("infeasible", float("-inf"), None, None)
    value, subset, x = best
    return OracleResult("optimal", value, Portfolio(x), subset)


def oracle_max_return(
    scenarios: ScenarioSet,
    spec: ProblemSpec,
    quantile_floor: float,
    max_subsets: int = SUBSET_GUARD,
    n_jobs: int = 1,
) -> OracleResult:
    """Ground-truth optimum of the max-return problem at a quantile floor, by
    enumerating every exceedance subset of size at most k. Returns -inf when
    every subset is infeasible.
    """
    m, n = scenarios.n_scenarios, scenarios.n_assets
    k = QuantileIndex.from_alpha(spec.alpha, m).k
    total = sum(math.comb(m, r) for r in range(k + 1))
    _guard(total, max_subsets)

    a_ub_x, b_ub_x, a_eq, b_eq, bounds = _region(scenarios, spec)
    c = -scenarios.mu
    quant_rows = -scenarios.returns  # -x.xi_j <= -floor
    fixed_ub = np.array(a_ub_x) if a_ub_x else None
    fixed_rhs = np.array(b_ub_x)
    eq = np.array(a_eq)
    beq = np.array(b_eq)

    subsets = [
        subset
        for size in range(k + 1)
        for subset in itertools.combinations(range(m), size)
    ]
    best = _run_scans(
        _scan_return_subsets,
        subsets,
        (c, quant_rows, float(quantile_floor), fixed_ub, fixed_rhs, eq, beq, bounds),
        n_jobs,
    )
    if best is None:
        return OracleResult("infeasible", float("-inf"), None, None)
    value, subset, x = best
    return OracleResult("optimal", value, Portfolio(x), subset)
