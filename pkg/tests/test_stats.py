import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st
from scipy import stats as sps

from uppertail import stats


def test_dkw_epsilon():
    assert stats.dkw_epsilon(100_000, 0.01) == pytest.approx(
        math.sqrt(math.log(200) / 200_000))
    with pytest.raises(ValueError):
        stats.dkw_epsilon(0)


@given(st.integers(0, 500), st.integers(1, 500))
def test_wilson_contains_estimate(k, n):
    k = min(k, n)
    lo, hi = stats.wilson_interval(k, n)
    assert 0 <= lo <= k / n <= hi <= 1


def test_wilson_reference_values():
    # reference values from the textbook Wilson score interval
    lo, hi = stats.wilson_interval(10, 100)
    assert lo == pytest.approx(0.05522, abs=1e-5)
    assert hi == pytest.approx(0.17437, abs=1e-5)
    assert stats.wilson_interval(0, 0) == (0.0, 1.0)


def test_ecdf():
    assert list(stats.ecdf([3, 1, 2], [0, 1, 2.5, 3])) == [0, 1 / 3, 2 / 3, 1]


def test_ks_helpers():
    gen = np.random.default_rng(1)
    a = gen.exponential(size=2000)
    assert stats.ks_one_sample(a, "expon")["passed"]
    assert not stats.ks_one_sample(a + 0.5, "expon")["passed"]
    assert stats.ks_two_sample(a, gen.exponential(size=2000))["passed"]


def test_bootstrap_is_seeded_and_sensible():
    gen = np.random.default_rng(2)
    x = gen.normal(size=400)
    a = stats.bootstrap(lambda d: np.mean(d[0]), [x], 500, 7, 1)
    b = stats.bootstrap(lambda d: np.mean(d[0]), [x], 500, 7, 1)
    assert np.array_equal(a, b)
    assert a.std() == pytest.approx(x.std() / 20, rel=0.2)
    assert not np.array_equal(a, stats.bootstrap(lambda d: np.mean(d[0]), [x], 500, 7, 2))


def test_loglog_slope():
    ns = [10, 20, 40]
    assert stats.loglog_slope(ns, [3 * n ** 0.5 for n in ns]) == pytest.approx(0.5)
    assert sps.linregress(np.log(ns), np.log([n ** -2.0 for n in ns])).slope == pytest.approx(
        stats.loglog_slope(ns, [n ** -2.0 for n in ns]))
