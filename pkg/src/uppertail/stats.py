"""Small statistical helpers: DKW bands, KS tests, binomial intervals, bootstrap."""
from __future__ import annotations

import math

import numpy as np
from scipy import stats

from . import rng


def dkw_epsilon(n: int, alpha: float = 0.01) -> float:
    """Half-width of the DKW confidence band for an empirical CDF of ``n`` draws."""
    if n < 1:
        raise ValueError("need at least one sample")
    return math.sqrt(math.log(2.0 / alpha) / (2.0 * n))


def ks_two_sample(a, b, alpha: float = 0.01) -> dict:
    res = stats.ks_2samp(np.asarray(a), np.asarray(b))
    return {"statistic": float(res.statistic), "pvalue": float(res.pvalue),
            "alpha": alpha, "passed": bool(res.pvalue > alpha)}


def ks_one_sample(a, cdf, alpha: float = 0.01) -> dict:
    res = stats.kstest(np.asarray(a), cdf)
    return {"statistic": float(res.statistic), "pvalue": float(res.pvalue),
            "alpha": alpha, "passed": bool(res.pvalue > alpha)}


def ecdf(sample, points) -> np.ndarray:
    s = np.sort(np.asarray(sample))
    return np.searchsorted(s, points, side="right") / len(s)


def wilson_interval(k: int, n: int, z: float = 1.959964) -> tuple[float, float]:
    if n == 0:
        return 0.0, 1.0
    p = k / n
    den = 1.0 + z * z / n
    mid = (p + z * z / (2 * n)) / den
    half = z * math.sqrt(p * (1 - p) / n + z * z / (4 * n * n)) / den
    # exact at the boundary, where rounding would leave the interval short of k/n
    lo = 0.0 if k == 0 else max(0.0, mid - half)
    hi = 1.0 if k == n else min(1.0, mid + half)
    return lo, hi


def bootstrap(stat, samples, resamples: int, seed: int, *path) -> np.ndarray:
    """Bootstrap replicates of ``stat`` applied jointly to a list of samples.

    Each sample in ``samples`` is resampled independently; ``stat`` receives
    the resampled list and returns a float.
    """
    gen = rng.philox(seed, rng.BOOTSTRAP, *path)
    arrays = [np.asarray(s) for s in samples]
    out = np.empty(resamples)
    for r in range(resamples):
        draw = [a[gen.integers(0, len(a), len(a))] for a in arrays]
        out[r] = stat(draw)
    return out


def loglog_slope(ns, values) -> float:
    x = np.log(np.asarray(ns, dtype=float))
    y = np.log(np.asarray(values, dtype=float))
    return float(np.polyfit(x, y, 1)[0])
