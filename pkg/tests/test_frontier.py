import math

import numpy as np
import pytest

from varfolio import (
    duality_check,
    max_reward_curve,
    min_risk_curve,
    oracle_max_return,
    oracle_var,
    plateau_demo_instance,
)
from varfolio.frontier import (
    find_plateaus,
    huber_max_reward,
    huber_min_risk,
    huber_risk,
    implication_check,
    max_reward,
    min_risk,
    min_risk_fn,
    reward_cap_fn,
)

from conftest import random_instance

KAPPA = 2.0


def huber_closed_form(a: float, kappa: float = KAPPA) -> float:
    if a <= kappa:
        return max(a, 0.0) ** 2
    return a + kappa * (kappa - 1.0)


class TestHuberDemo:
    def test_risk_function_not_convex(self):
        k = KAPPA
        assert 2 * huber_risk(k) > huber_risk(k - 1) + huber_risk(k + 1)

    def test_min_risk_closed_form(self):
        assert huber_min_risk(1.0) == pytest.approx(1.0)
        assert huber_min_risk(2.0) == pytest.approx(4.0)
        assert huber_min_risk(3.0) == pytest.approx(5.0)

    def test_min_risk_matches_closed_form_on_grid(self):
        for a in np.arange(0.0, 4.0 + 1e-12, 0.1):
            assert abs(huber_min_risk(float(a)) - huber_closed_form(float(a))) <= 1e-9

    def test_max_reward_inverts(self):
        assert huber_max_reward(4.0) == pytest.approx(2.0)
        assert huber_max_reward(1.0) == pytest.approx(1.0)
        assert huber_max_reward(-0.5) == float("-inf")

    def test_beyond_reach_infeasible(self):
        assert huber_min_risk(2 * KAPPA + 0.1) == float("inf")

    def test_duality_holds_everywhere(self):
        grid = np.arange(0.0, 4.0 + 1e-12, 0.5)
        curve = min_risk_curve(None, None, grid, "huber", kappa=KAPPA)
        assert len(curve.points) == 9
        assert curve.plateaus == ()
        report = duality_check(curve, reward_cap_fn(None, None, "huber", kappa=KAPPA))
        assert report.consistent
        assert all(row.equal for row in report.rows)


class TestVarCurves:
    def test_toy_min_risk_point(self, toy, toy_spec):
        value, weights, status = min_risk(toy, toy_spec, 0.5, "var")
        assert status == "optimal"
        assert value == pytest.approx(-0.5, abs=1e-9)

    def test_toy_max_reward_points(self, toy, toy_spec):
        value, _, _ = max_reward(toy, toy_spec, -0.5, "var")
        assert value == pytest.approx(0.5, abs=1e-9)
        value, _, status = max_reward(toy, toy_spec, -0.505, "var")
        assert value == float("-inf")
        assert status == "infeasible"

    def test_infeasible_floor_is_plus_inf(self, toy, toy_spec):
        value, _, status = min_risk(toy, toy_spec, 0.9, "var")
        assert value == float("inf")
        assert status == "infeasible"

    def test_min_risk_curve_non_decreasing(self):
        rng = np.random.default_rng(61)
        for _ in range(5):
            s, spec = random_instance(rng)
            lo, hi = float(s.mu.min()), float(s.mu.max())
            grid = np.linspace(lo, hi, 6)
            curve = min_risk_curve(s, spec, grid, "var")
            finite = [p.value for p in curve.points if math.isfinite(p.value)]
            assert all(b >= a - 1e-7 for a, b in zip(finite, finite[1:]))


class TestPlateauInstance:
    def test_curve_has_wide_plateau(self):
        s, spec = plateau_demo_instance()
        grid = np.arange(1.0, 1.4 + 1e-9, 0.025)
        curve = min_risk_curve(s, spec, grid, "var")
        assert len(curve.plateaus) >= 1
        widest = max(curve.plateaus, key=lambda p: p.last - p.first)
        assert widest.last - widest.first >= 2
        assert widest.value == pytest.approx(-1.0, abs=1e-6)

    def test_plateau_verified_by_oracle_sweep(self):
        s, spec = plateau_demo_instance()
        for a in (1.0, 1.1, 1.2, 1.3):
            z = oracle_var(s, spec.with_mu0(a)).value
            assert z == pytest.approx(1.0, abs=1e-9)
        assert oracle_var(s, spec.with_mu0(1.35)).value == pytest.approx(0.5, abs=1e-9)

    def test_duality_fails_inside_plateau_only(self):
        s, spec = plateau_demo_instance()
        grid = np.arange(1.0, 1.4 + 1e-9, 0.025)
        curve = min_risk_curve(s, spec, grid, "var")
        report = duality_check(curve, reward_cap_fn(s, spec, "var"))
        assert report.consistent
        interior = [r for r in report.rows if r.plateau_interior]
        assert interior and all(not r.equal for r in interior)
        assert all(r.reward_at_risk > r.level for r in interior)


class TestCvarCurves:
    def test_convex_non_decreasing(self):
        rng = np.random.default_rng(62)
        for _ in range(5):
            s, spec = random_instance(rng)
            lo, hi = float(s.mu.min()), float(s.mu.max())
            grid = np.linspace(lo, hi, 7)
            curve = min_risk_curve(s, spec, grid, "cvar")
            values = [p.value for p in curve.points if math.isfinite(p.value)]
            assert all(b >= a - 1e-7 for a, b in zip(values, values[1:]))
            diffs = np.diff(values)
            assert all(d2 >= d1 - 1e-6 for d1, d2 in zip(diffs, diffs[1:]))

    def test_equality_off_plateaus(self):
        rng = np.random.default_rng(63)
        for _ in range(5):
            s, spec = random_instance(rng)
            lo, hi = float(s.mu.min()), float(s.mu.max())
            grid = np.linspace(lo, hi, 7)
            curve = min_risk_curve(s, spec, grid, "cvar")
            report = duality_check(
                curve,
                reward_cap_fn(s, spec, "cvar"),
                risk_fn=min_risk_fn(s, spec, "cvar"),
            )
            assert report.failures_on_plateaus


class TestSubGridPlateaus:
    def test_failure_explained_by_probing_the_curve(self):
        # A plateau ending between grid points is invisible to grid detection;
        # probing the curve at the recovered reward confirms the flat stretch.
        rng = np.random.default_rng(777)
        sweeps = [random_instance(rng) for _ in range(17)]
        s, spec = sweeps[-1]
        grid = np.linspace(float(s.mu.min()), float(s.mu.max()), 6)
        curve = min_risk_curve(s, spec, grid, "var")
        blind = duality_check(curve, reward_cap_fn(s, spec, "var"))
        informed = duality_check(
            curve,
            reward_cap_fn(s, spec, "var"),
            risk_fn=min_risk_fn(s, spec, "var"),
        )
        assert informed.consistent
        explained = [r for r in informed.rows if r.flat_to_recovered]
        if not blind.failures_on_plateaus:
            assert explained


class TestImplicationCheck:
    def test_toy_pair(self, toy, toy_spec):
        report = implication_check(toy, toy_spec, [(0.5, -0.505)], "var")
        row = report.rows[0]
        assert not row.vacuous
        assert row.reward_at_cap == float("-inf")
        assert row.holds

    def test_vacuous_pair_makes_no_claim(self, toy, toy_spec):
        report = implication_check(toy, toy_spec, [(0.5, -0.5)], "var")
        assert report.rows[0].vacuous
        assert report.all_hold

    def test_huber_pair(self):
        report = implication_check(None, None, [(1.5, 1.0)], "huber", kappa=KAPPA)
        row = report.rows[0]
        assert not row.vacuous
        assert row.reward_at_cap == pytest.approx(1.0)
        assert row.risk_at_floor == pytest.approx(2.25)
        assert row.holds

    def test_random_var_pairs_hold(self):
        rng = np.random.default_rng(64)
        for _ in range(5):
            s, spec = random_instance(rng)
            pairs = [
                (float(rng.uniform(s.mu.min(), s.mu.max())), float(rng.uniform(-3, 1)))
                for _ in range(4)
            ]
            assert implication_check(s, spec, pairs, "var").all_hold


class TestPlateauDetection:
    def test_runs_merged_within_tolerance(self):
        levels = [0.0, 1.0, 2.0, 3.0, 4.0]
        values = [1.0, 1.0 + 5e-7, 1.0 - 5e-7, 2.0, 3.0]
        plateaus = find_plateaus(levels, values, tol=1e-6)
        assert len(plateaus) == 1
        assert (plateaus[0].first, plateaus[0].last) == (0, 2)

    def test_infinite_points_excluded(self):
        values = [float("inf"), 1.0, 1.0, float("inf")]
        plateaus = find_plateaus([0, 1, 2, 3], values)
        assert len(plateaus) == 1
        assert (plateaus[0].first, plateaus[0].last) == (1, 2)

    def test_strictly_increasing_has_none(self):
        assert find_plateaus([0, 1, 2], [1.0, 2.0, 3.0]) == ()
