import math

import mpmath
import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from dyncopula.copula import CorrelationPath
from dyncopula.exceptions import ConfigError, DomainError
from dyncopula.limits import (
    COMONOTONE,
    INDEPENDENT,
    LimitLaw,
    MaximaExperiment,
    empirical_maxima_cdf,
    limit_cdf,
    normalized_maxima,
    tail_coefficient,
    tail_dependence_fn,
)

mpmath.mp.dps = 30

negative = st.floats(min_value=-20.0, max_value=-1e-3)


def mp_tail_fn(m_fn, x, y, breaks=(0, 0.5, 1)):
    """l(x, y) by mpmath quadrature over s, split at the tabulated knot."""
    x, y = mpmath.mpf(x), mpmath.mpf(y)

    def part(a, b):
        return mpmath.quad(lambda s: mpmath.ncdf(mpmath.sqrt(m_fn(s)) + mpmath.log(a / b) / (2 * mpmath.sqrt(m_fn(s)))), list(breaks))

    return float(-x * part(x, y) - y * part(y, x))


def test_constant_path_tail_coefficient_erf_oracle():
    law = LimitLaw(CorrelationPath.constant(1.0))
    # 2 Phi(1) = 1 + erf(1/sqrt 2)
    assert tail_coefficient(law) == pytest.approx(float(1 + mpmath.erf(1 / mpmath.sqrt(2))), abs=1e-12)
    assert tail_coefficient(law) == pytest.approx(1.6826894921370859, abs=1e-10)


@pytest.mark.parametrize("path, m_fn", [
    (CorrelationPath.linear(0.5, 2.0), lambda s: 0.5 + 2 * s),
    (CorrelationPath.power(1.0, 1.0, 0.5), lambda s: 1 + mpmath.sqrt(s)),
    (CorrelationPath.tabulated([0.0, 0.5, 1.0], [0.2, 3.0, 1.0]),
     lambda s: 0.2 + 5.6 * s if s <= 0.5 else 3.0 - 4.0 * (s - 0.5)),
])
@pytest.mark.parametrize("x, y", [(-1.0, -1.0), (-0.5, -2.0), (-3.0, -0.1)])
def test_tail_fn_matches_mpmath(path, m_fn, x, y):
    law = LimitLaw(path)
    assert tail_dependence_fn(law, x, y) == pytest.approx(mp_tail_fn(m_fn, x, y), rel=1e-9)


def test_husler_reiss_closed_form_for_constant_m():
    m = 2.5
    law = LimitLaw(CorrelationPath.constant(m))
    x, y = -0.7, -1.9
    r = math.sqrt(m)
    phi = lambda t: 0.5 * math.erfc(-t / math.sqrt(2))
    expect = -x * phi(r + math.log(x / y) / (2 * r)) - y * phi(r + math.log(y / x) / (2 * r))
    assert tail_dependence_fn(law, x, y) == pytest.approx(expect, rel=1e-12)
    assert limit_cdf(law, x, y) == pytest.approx(math.exp(-expect), rel=1e-12)


def test_regimes_at_minus_one():
    path = CorrelationPath.constant(1.0)
    assert limit_cdf(LimitLaw(path, COMONOTONE), -1.0, -1.0) == pytest.approx(math.exp(-1))
    assert limit_cdf(LimitLaw(path, INDEPENDENT), -1.0, -1.0) == pytest.approx(math.exp(-2))
    assert tail_coefficient(LimitLaw(path, COMONOTONE)) == 1.0
    assert tail_coefficient(LimitLaw(path, INDEPENDENT)) == 2.0
    assert limit_cdf(LimitLaw(path, COMONOTONE), -0.5, -2.0) == pytest.approx(math.exp(-2.0))


def test_husler_reiss_approaches_regimes():
    small = LimitLaw(CorrelationPath.constant(1e-8))
    big = LimitLaw(CorrelationPath.constant(400.0))
    assert tail_coefficient(small) == pytest.approx(1.0, abs=1e-4)
    assert tail_coefficient(big) == pytest.approx(2.0, abs=1e-12)


@settings(max_examples=40, deadline=None)
@given(negative, negative, st.floats(min_value=0.05, max_value=20.0))
def test_tail_fn_bounds_homogeneity_symmetry(x, y, t):
    law = LimitLaw(CorrelationPath.linear(0.3, 1.2))
    val = tail_dependence_fn(law, x, y)
    assert max(-x, -y) * (1 - 1e-9) <= val <= (-x - y) * (1 + 1e-9)
    assert tail_dependence_fn(law, t * x, t * y) == pytest.approx(t * val, rel=1e-8)
    assert tail_dependence_fn(law, y, x) == pytest.approx(val, rel=1e-10)


def test_limit_domain_and_regime_errors():
    law = LimitLaw(CorrelationPath.constant(1.0))
    with pytest.raises(DomainError):
        limit_cdf(law, 0.0, -1.0)
    with pytest.raises(ConfigError):
        LimitLaw(CorrelationPath.tabulated([0, 1], [0.0, 1.0]))
    with pytest.raises(ConfigError):
        LimitLaw(CorrelationPath.constant(1.0), "gumbel")
    # a nonpositive path is fine in the limiting regimes
    LimitLaw(CorrelationPath.constant(0.0), COMONOTONE)


def test_experiment_validation():
    path = CorrelationPath.constant(1.0)
    with pytest.raises(ConfigError):
        MaximaExperiment(path, 100, 0, ((-1, -1),))
    with pytest.raises(ConfigError):
        MaximaExperiment(path, 100, 10, ((1, -1),))
    with pytest.raises(ConfigError):
        MaximaExperiment(path, 100, 10, ())


def test_normalized_maxima_marginals_are_uniform_maxima():
    # each margin of n (max U - 1) has P(<= x) = (1 + x/n)^n
    n, reps = 200, 4000
    ax, ay = normalized_maxima(CorrelationPath.constant(1.0), n, reps, seed=3)
    for arr in (ax, ay):
        p = np.mean(arr <= -1.0)
        expect = (1 - 1 / n) ** n
        assert abs(p - expect) < 4 * math.sqrt(expect * (1 - expect) / reps)


def test_empirical_rows_reproducible():
    exp = MaximaExperiment(CorrelationPath.constant(1.0), 100, 500, ((-0.5, -0.5), (-1.0, -2.0)), seed=9)
    rows = empirical_maxima_cdf(exp)
    assert rows == empirical_maxima_cdf(exp)
    assert set(rows[0]) == {"x", "y", "empirical", "limit", "gap"}
    for row in rows:
        assert row["gap"] == pytest.approx(abs(row["empirical"] - row["limit"]))
        # loose agreement with the limit already at n = 100
        assert row["gap"] < 0.08
