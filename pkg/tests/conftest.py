import numpy as np
import pytest

from varfolio import ProblemSpec, ScenarioSet

# Two-asset, five-scenario reference instance used across the suite. With
# alpha = 0.2 one scenario may fall below the quantile; every budget-feasible
# portfolio has expected return 0.5 and the optimum is 0.5 at (0.5, 0.5).
TOY_RETURNS = np.array(
    [
        [1.0, 0.0],
        [0.0, 1.0],
        [-1.0, 2.0],
        [2.0, -1.0],
        [0.5, 0.5],
    ]
)
TOY_ALPHA = 0.2
TOY_MU0 = 0.5


@pytest.fixture
def toy() -> ScenarioSet:
    return ScenarioSet.from_returns(TOY_RETURNS.copy())


@pytest.fixture
def toy_spec() -> ProblemSpec:
    return ProblemSpec(alpha=TOY_ALPHA, mu0=TOY_MU0)


def random_instance(rng: np.random.Generator, *, n=None, m=None, k=None):
    """Small random instance with an attainable return floor.

    Returns are uniform percent values in [-3, 3]; alpha is chosen so the
    exceedance budget is exactly k.
    """
    n = int(rng.integers(2, 5)) if n is None else n
    m = int(rng.integers(8, 15)) if m is None else m
    k = int(rng.integers(1, 3)) if k is None else k
    returns = rng.uniform(-3.0, 3.0, size=(m, n))
    scenarios = ScenarioSet.from_returns(returns)
    lo, hi = float(scenarios.mu.min()), float(scenarios.mu.max())
    mu0 = lo + float(rng.uniform(0.05, 0.95)) * (hi - lo)
    spec = ProblemSpec(alpha=(k + 0.5) / m, mu0=mu0)
    return scenarios, spec
