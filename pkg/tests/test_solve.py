import dataclasses

import numpy as np
import pytest

from varfolio import (
    InvalidInputError,
    ProblemSpec,
    ScenarioSet,
    build_fixed_y_lp,
    build_full_milp,
    build_max_return_milp,
    oracle_max_return,
    oracle_var,
    solve_lp,
    solve_milp,
)
from varfolio.model import Constraint, LinearModel, Variable
from varfolio.solve import SolverLimits

from conftest import random_instance


def tiny_model(**overrides):
    base = dict(
        name="tiny",
        variables=(Variable("v", "continuous", None, None),),
        constraints=(Constraint("cap", {"v": 1.0}, "<=", 2.0),),
        sense="max",
        objective={"v": 1.0},
        tags={"cap": "cap"},
    )
    base.update(overrides)
    return LinearModel(**base)


class TestSolveLp:
    def test_known_dual(self):
        out = solve_lp(tiny_model())
        assert out.is_optimal
        assert out.objective == pytest.approx(2.0)
        assert out.duals["cap"] == pytest.approx(1.0)

    def test_single_exceedance_duals(self, toy, toy_spec):
        out = solve_lp(build_fixed_y_lp(toy, toy_spec, [1, 0, 0, 0, 0]))
        assert out.objective == pytest.approx(0.5, abs=1e-9)
        # the slack row carries no price; the active rows support the optimum
        assert out.duals["bigM:0"] == pytest.approx(0.0, abs=1e-9)
        active = sum(out.duals[f"bigM:{j}"] for j in range(1, 5))
        assert active == pytest.approx(1.0, abs=1e-7)
        assert all(out.duals[f"bigM:{j}"] >= -1e-9 for j in range(5))

    def test_infeasible_status(self):
        model = tiny_model(
            variables=(Variable("v", "continuous", 2.0, None),),
            constraints=(Constraint("cap", {"v": 1.0}, "<=", 1.0),),
        )
        assert solve_lp(model).status == "infeasible"

    def test_unbounded_status(self):
        model = tiny_model(constraints=(), tags={})
        assert solve_lp(model).status == "unbounded"

    def test_rejects_binaries(self, toy, toy_spec):
        with pytest.raises(InvalidInputError):
            solve_lp(build_full_milp(toy, toy_spec))

    def test_duals_match_finite_differences(self):
        rng = np.random.default_rng(31)
        eps = 1e-5
        checked = 0
        for _ in range(5):
            s, spec = random_instance(rng)
            y = np.zeros(s.n_scenarios)
            y[0] = 1.0
            model = build_fixed_y_lp(s, spec, y)
            out = solve_lp(model)
            if not out.is_optimal:
                continue
            for name, tag in model.tags.items():
                if not tag.startswith("bigM:"):
                    continue
                shifted = {}
                for sign in (+1, -1):
                    cons = tuple(
                        dataclasses.replace(c, rhs=c.rhs + sign * eps)
                        if c.name == name
                        else c
                        for c in model.constraints
                    )
                    res = solve_lp(dataclasses.replace(model, constraints=cons))
                    shifted[sign] = res.objective if res.is_optimal else None
                if shifted[+1] is None or shifted[-1] is None:
                    continue
                fwd = (shifted[+1] - out.objective) / eps
                bwd = (out.objective - shifted[-1]) / eps
                if abs(fwd - bwd) > 1e-6:
                    continue  # kink at the optimum: dual not unique
                central = (shifted[+1] - shifted[-1]) / (2 * eps)
                assert out.duals[tag] == pytest.approx(central, abs=1e-3)
                checked += 1
        assert checked >= 10


class TestSolveMilp:
    def test_toy_full(self, toy, toy_spec):
        out = solve_milp(build_full_milp(toy, toy_spec))
        assert out.is_optimal
        assert out.objective == pytest.approx(0.5, abs=1e-9)
        assert out.best_bound >= out.objective - 1e-6

    def test_infeasible_threshold(self, toy, toy_spec):
        out = solve_milp(build_max_return_milp(toy, toy_spec, 0.505))
        assert out.status == "infeasible"

    def test_relaxation_rounds_down(self):
        model = LinearModel(
            name="one_bit",
            variables=(Variable("y", "binary", 0.0, 1.0),),
            constraints=(Constraint("half", {"y": 1.0}, "<=", 0.5),),
            sense="max",
            objective={"y": 1.0},
        )
        out = solve_milp(model)
        assert out.objective == pytest.approx(0.0)
        assert out.primal["y"] == pytest.approx(0.0)


class TestOracle:
    def test_toy(self, toy, toy_spec):
        result = oracle_var(toy, toy_spec)
        assert result.is_optimal
        assert result.value == pytest.approx(0.5, abs=1e-9)
        assert result.portfolio.weights == pytest.approx([0.5, 0.5], abs=1e-7)

    def test_unattainable_floor(self, toy):
        result = oracle_var(toy, ProblemSpec(alpha=0.2, mu0=0.9))
        assert result.status == "infeasible"
        assert result.value == float("-inf")

    def test_single_asset_second_smallest(self):
        rng = np.random.default_rng(32)
        returns = rng.uniform(-3, 3, size=(9, 1))
        s = ScenarioSet.from_returns(returns)
        result = oracle_var(s, ProblemSpec(alpha=1.5 / 9, mu0=float(s.mu[0])))
        assert result.value == pytest.approx(np.sort(returns[:, 0])[1], abs=1e-9)

    def test_size_guard(self):
        rng = np.random.default_rng(33)
        s = ScenarioSet.from_returns(rng.uniform(-1, 1, size=(40, 2)))
        with pytest.raises(InvalidInputError):
            oracle_var(s, ProblemSpec(alpha=10.5 / 40, mu0=0.0), max_subsets=1000)

    def test_max_return_toy(self, toy, toy_spec):
        assert oracle_max_return(toy, toy_spec, 0.5).value == pytest.approx(0.5, abs=1e-9)
        assert oracle_max_return(toy, toy_spec, 0.505).value == float("-inf")

    def test_max_return_vacuous_threshold(self, toy, toy_spec):
        result = oracle_max_return(toy, toy_spec, -1e6)
        assert result.value == pytest.approx(0.5, abs=1e-9)

    def test_matches_milp_on_small_suite(self):
        rng = np.random.default_rng(34)
        for _ in range(15):
            s, spec = random_instance(rng)
            exact = oracle_var(s, spec)
            out = solve_milp(build_full_milp(s, spec))
            if exact.is_optimal:
                assert out.is_optimal
                assert out.objective == pytest.approx(exact.value, abs=1e-6)
            else:
                assert out.status == "infeasible"

    def test_max_return_matches_milp_on_small_suite(self):
        rng = np.random.default_rng(35)
        for _ in range(10):
            s, spec = random_instance(rng)
            floor = float(rng.uniform(-2.0, 1.0))
            exact = oracle_max_return(s, spec, floor)
            out = solve_milp(build_max_return_milp(s, spec, floor))
            if exact.is_optimal:
                assert out.is_optimal
                assert out.objective == pytest.approx(exact.value, abs=1e-6)
            else:
                assert out.status == "infeasible"


class TestLimits:
    def test_time_limit_status(self, toy, toy_spec):
        # a generous limit still solves; the status stays optimal
        out = solve_milp(build_full_milp(toy, toy_spec), SolverLimits(time_limit=60.0))
        assert out.is_optimal
