import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from uppertail import engine, lpp, rng


def test_seed_checks():
    with pytest.raises(ValueError):
        rng.check_seed(None)
    with pytest.raises(TypeError):
        rng.check_seed(1.5)
    with pytest.raises(TypeError):
        rng.check_seed(True)
    assert rng.check_seed(-1) == 2 ** 64 - 1


def test_streams_are_keyed_by_path():
    a = rng.philox(7, 1, 2).random(4)
    assert np.array_equal(a, rng.philox(7, 1, 2).random(4))
    assert not np.array_equal(a, rng.philox(7, 1, 3).random(4))
    assert not np.array_equal(a, rng.philox(8, 1, 2).random(4))


def test_exp_from_uniform_edges():
    assert rng.exp_from_uniform(np.array([0.0]))[0] == 0.0
    assert np.isfinite(rng.exp_from_uniform(np.array([1 - 2 ** -53]))[0])


@given(st.integers(1, 5000), st.integers(1, 700))
def test_block_counts_partition(trials, size):
    counts = engine.block_counts(trials, size)
    assert sum(counts) == trials
    assert all(0 < c <= size for c in counts)


def test_block_size_ignores_workers(monkeypatch):
    monkeypatch.setenv(engine.WORKERS_ENV, "8")
    assert engine.block_size(40, 40) == 1000
    assert engine.block_size(100, 100) == 200
    assert engine.default_workers() == 8


def test_bad_worker_env(monkeypatch):
    monkeypatch.setenv(engine.WORKERS_ENV, "zero")
    with pytest.raises(ValueError):
        engine.default_workers()
    monkeypatch.setenv(engine.WORKERS_ENV, "0")
    with pytest.raises(ValueError):
        engine.default_workers()


def test_trials_match_direct_dynamic_programming():
    T, last, logL, dmax = engine.lpp_trials(3, 9, 25, 5, 4, want_geo=True, threshold=-np.inf)
    gen = rng.philox(3, rng.TRIAL_BLOCK, 9, 0)
    E = gen.standard_exponential((25, 5, 4))
    for i in range(25):
        g = lpp.geodesic(lpp.WeightField(E[i]))
        assert T[i] == pytest.approx(g.weight, rel=1e-12)
        assert last[i] == E[i, -1, -1]
        assert dmax[i] == g.max_fluct
    assert np.all(logL == 0)


def test_tilted_likelihood_ratio():
    # one site drawn from Exp(1 - theta): dP/dQ at x is e^{-theta x} / (1 - theta)
    th = 0.4
    scale = np.full((1, 1), 1 / (1 - th))
    coef = np.full((1, 1), th)
    const = np.full((1, 1), -math.log1p(-th))
    T, _, logL, _ = engine.lpp_trials(1, 2, 100, 1, 1, scale=scale, lr_coef=coef,
                                      lr_const=const)
    assert np.allclose(logL, -th * T - math.log1p(-th), rtol=1e-14)


def test_tilted_mean_of_likelihood_is_one():
    th = 0.3
    plan = np.full((3, 3), 1.0)
    scale, coef, const = plan / (1 - th), plan * th, plan * -math.log1p(-th)
    _, _, logL, _ = engine.lpp_trials(5, 3, 200_000, 3, 3, scale=scale, lr_coef=coef,
                                      lr_const=const)
    L = np.exp(logL)
    assert abs(L.mean() - 1) < 4 * L.std() / math.sqrt(len(L))


def test_worker_invariance():
    a = engine.lpp_trials(11, 4, 3000, 20, 20, workers=1)
    b = engine.lpp_trials(11, 4, 3000, 20, 20, workers=3)
    for x, y in zip(a, b):
        assert np.array_equal(x, y)
