import numpy as np
import pytest

from varfolio import (
    ConfigurationError,
    InvalidInputError,
    Portfolio,
    ProblemSpec,
    QuantileIndex,
    ScenarioSet,
    big_m,
    portfolio_quantile,
    validate_instance,
)
from varfolio.core import exceedance_set

from conftest import random_instance


class TestScenarioSet:
    def test_mu_defaults_to_column_means(self, toy):
        assert np.allclose(toy.mu, [0.5, 0.5])
        assert toy.mu_matches_sample_mean()

    def test_mu_override_reported_not_rejected(self):
        s = ScenarioSet.from_returns([[1.0, 2.0], [3.0, 4.0]], mu=[9.0, 9.0])
        assert not s.mu_matches_sample_mean()

    def test_rejects_non_finite(self):
        with pytest.raises(InvalidInputError):
            ScenarioSet.from_returns([[1.0, np.nan]])

    def test_rejects_empty(self):
        with pytest.raises(InvalidInputError):
            ScenarioSet.from_returns(np.empty((0, 2)))

    def test_immutable(self, toy):
        with pytest.raises(ValueError):
            toy.returns[0, 0] = 3.0


class TestPortfolio:
    def test_budget_enforced(self):
        with pytest.raises(InvalidInputError):
            Portfolio(np.array([0.7, 0.7]))

    def test_sample_returns(self, toy):
        p = Portfolio(np.array([1.0, 0.0]))
        assert np.allclose(p.sample_returns(toy), [1.0, 0.0, -1.0, 2.0, 0.5])


class TestQuantile:
    def test_equal_weights_constant_returns(self, toy):
        # all five sample returns equal 0.5
        assert portfolio_quantile([0.5, 0.5], toy, 0.2) == 0.5

    def test_second_smallest(self, toy):
        assert portfolio_quantile([1.0, 0.0], toy, 0.2) == 0.0

    def test_single_sample_is_minimum(self):
        s = ScenarioSet.from_returns([[2.0, -1.0]])
        assert portfolio_quantile([0.25, 0.75], s, 0.3) == pytest.approx(-0.25)

    def test_dimension_mismatch(self, toy):
        with pytest.raises(InvalidInputError):
            portfolio_quantile([1.0, 0.0, 0.0], toy, 0.2)

    def test_alpha_domain(self, toy):
        with pytest.raises(InvalidInputError):
            portfolio_quantile([1.0, 0.0], toy, 0.0)

    def test_at_most_k_strictly_below(self):
        rng = np.random.default_rng(7)
        for _ in range(50):
            s, spec = random_instance(rng)
            k = QuantileIndex.from_alpha(spec.alpha, s.n_scenarios).k
            w = rng.dirichlet(np.ones(s.n_assets))
            nu = portfolio_quantile(w, s, spec.alpha)
            strictly_below = int(np.sum(s.returns @ w < nu))
            assert strictly_below <= k

    def test_positively_homogeneous_in_scenario_scaling(self):
        rng = np.random.default_rng(8)
        for _ in range(25):
            s, spec = random_instance(rng)
            w = rng.dirichlet(np.ones(s.n_assets))
            c = float(rng.uniform(0.1, 5.0))
            scaled = ScenarioSet.from_returns(c * s.returns)
            assert portfolio_quantile(w, scaled, spec.alpha) == pytest.approx(
                c * portfolio_quantile(w, s, spec.alpha), rel=1e-12
            )

    def test_exceedance_set_size_and_membership(self, toy):
        idx = exceedance_set([1.0, 0.0], toy, 0.2)
        assert idx == (2,)  # the -1 return


class TestBigM:
    def test_long_only(self, toy, toy_spec):
        assert big_m(toy, toy_spec) == 5.0

    def test_all_zero_returns(self):
        s = ScenarioSet.from_returns(np.zeros((3, 2)))
        assert big_m(s, ProblemSpec(alpha=0.4, mu0=0.0)) == 1.0

    def test_short_selling_cap(self, toy):
        spec = ProblemSpec(alpha=0.2, mu0=0.5, allow_short=True, short_cap=3.0)
        assert big_m(toy, spec) == 13.0

    def test_short_without_cap_rejected(self, toy):
        spec = ProblemSpec(alpha=0.2, mu0=0.5, allow_short=True)
        with pytest.raises(ConfigurationError):
            big_m(toy, spec)

    def test_override_returned_verbatim(self, toy):
        spec = ProblemSpec(alpha=0.2, mu0=0.5, big_m_override=42.5)
        assert big_m(toy, spec) == 42.5

    def test_strictly_exceeds_twice_peak(self):
        rng = np.random.default_rng(11)
        for _ in range(100):
            m, n = rng.integers(1, 12), rng.integers(1, 6)
            returns = rng.uniform(-50.0, 50.0, size=(m, n))
            s = ScenarioSet.from_returns(returns)
            value = big_m(s, ProblemSpec(alpha=0.1, mu0=0.0))
            assert value > 2.0 * np.abs(returns).max()


class TestValidateInstance:
    def test_toy_valid_and_attainable(self, toy, toy_spec):
        report = validate_instance(toy, toy_spec)
        assert report.ok
        assert report.mu0_attainable
        assert report.max_expected_return == pytest.approx(0.5)
        assert report.k == 1
        assert not report.degenerate_lp

    def test_unattainable_floor_flagged(self, toy):
        report = validate_instance(toy, ProblemSpec(alpha=0.2, mu0=0.9))
        assert not report.ok
        assert report.mu0_attainable is False

    def test_bad_alpha_reported_not_raised(self, toy):
        report = validate_instance(toy, ProblemSpec(alpha=0.0, mu0=0.5))
        assert not report.ok
        assert any("alpha" in issue for issue in report.issues)

    def test_degenerate_lp_flagged(self, toy):
        report = validate_instance(toy, ProblemSpec(alpha=0.1, mu0=0.5))
        assert report.ok
        assert report.k == 0
        assert report.degenerate_lp
