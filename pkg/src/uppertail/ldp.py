"""Rare upper-tail events of exponential LPP: rejection, importance sampling,
and the experiments built on them.

Tilting: a tilted vertex draws Exp(1 - theta) instead of Exp(1) and carries
the likelihood ratio exp(-theta X) / (1 - theta).
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field

import mpmath
import numpy as np

from . import engine, rng
from .errors import BudgetError, ConstraintError, DomainError, ParityError
from .lpp import GeodesicRecord, WeightField, geodesic
from .rates import convexity_constant_probe, convexity_penalty, rate_I
from .rmt import lue_top_law, lue_top_tail
from .stats import bootstrap, loglog_slope, wilson_interval

REJECTION = "rejection"
MIN_ESS = 30.0
GATE_NI = 16.0
MIN_PILOT = 1e-6

# stream tags, one per experiment role
TAG_ESTIMATE = 31
TAG_PILOT = 32
TAG_REJECT = 33
TAG_MID_A = 34
TAG_MID_B = 35
TAG_MID_DEN = 36
TAG_UNCOND = 37
TAG_SPLIT_1 = 38
TAG_SPLIT_2 = 39
TAG_TRUNC = 40


@dataclass(frozen=True)
class LDEvent:
    kind: str
    delta: float
    n: int

    def __post_init__(self):
        if self.kind not in ("upper", "lower"):
            raise ValueError(f"kind must be 'upper' or 'lower', got {self.kind!r}")
        if not self.delta > 0:
            raise DomainError("delta must be positive")
        if self.kind == "lower" and not self.delta < 4:
            raise DomainError("the lower-tail event needs delta < 4")
        if self.n < 1:
            raise DomainError("n must be positive")

    @property
    def threshold(self) -> float:
        sign = 1.0 if self.kind == "upper" else -1.0
        return (4.0 + sign * self.delta) * self.n

    def holds(self, T) -> np.ndarray:
        T = np.asarray(T)
        return T >= self.threshold if self.kind == "upper" else T <= self.threshold


@dataclass(frozen=True)
class TiltPlan:
    theta: float = 0.0
    strip_half_width: float = 0.0  # in units of sqrt(n); 0 tilts every vertex

    def __post_init__(self):
        if not 0.0 <= self.theta < 1.0:
            raise DomainError(f"theta must lie in [0, 1), got {self.theta}")
        if self.strip_half_width < 0:
            raise DomainError("strip_half_width must be nonnegative")

    def mask(self, rows, cols, n, origin=(1, 1)) -> np.ndarray:
        """Tilted vertices of a rows x cols block whose corner sits at ``origin``."""
        if self.strip_half_width == 0:
            return np.ones((rows, cols), dtype=bool)
        x = origin[0] + np.arange(rows)[:, None]
        y = origin[1] + np.arange(cols)[None, :]
        return np.abs(x - y) <= self.strip_half_width * math.sqrt(n)

    def arrays(self, rows, cols, n, origin=(1, 1)):
        m = self.mask(rows, cols, n, origin)
        th = self.theta
        scale = np.where(m, 1.0 / (1.0 - th), 1.0)
        coef = np.where(m, th, 0.0)
        const = np.where(m, -math.log1p(-th), 0.0)
        return scale, coef, const

    def as_dict(self):
        return {"theta": self.theta, "strip_half_width": self.strip_half_width}


@dataclass(frozen=True)
class LDEstimate:
    log_p: float
    std_err: float
    ess: float
    trials: int
    plan: object
    accepted: int = 0
    degenerate: bool = False

    @property
    def p(self) -> float:
        return math.exp(self.log_p)

    def as_dict(self):
        plan = self.plan.as_dict() if isinstance(self.plan, TiltPlan) else self.plan
        return {"log_p": self.log_p, "std_err": self.std_err, "ess": self.ess,
                "trials": self.trials, "accepted": self.accepted,
                "degenerate": self.degenerate, "plan": plan}


def _weighted(hit, logL, trials, plan) -> LDEstimate:
    """Estimate from per-trial hits and log likelihood ratios."""
    k = int(hit.sum())
    if k == 0:
        return LDEstimate(-math.inf, math.inf, 0.0, trials, plan, 0, True)
    lw = logL[hit]
    shift = float(lw.max())
    w = np.exp(lw - shift)
    s1 = math.fsum(w)
    s2 = math.fsum(w * w)
    mean = s1 / trials
    var = max(s2 / trials - mean * mean, 0.0) * trials / max(trials - 1, 1)
    ess = s1 * s1 / s2
    se = math.sqrt(var / trials) / mean if var > 0 else 0.0
    return LDEstimate(shift + math.log(mean), se, ess, trials, plan, k, ess < MIN_ESS)


def _check_trials(trials, minimum=1000):
    if trials < minimum:
        raise DomainError(f"need at least {minimum} trials, got {trials}")


def importance_estimate(n: int, delta: float, plan: TiltPlan, trials: int, seed: int, *,
                        truncated: bool = False, workers=None, tag=TAG_ESTIMATE,
                        min_trials: int = 1000, return_trials: bool = False):
    """Estimate P(T_n >= (4 + delta) n) (or of T'_n = T_n - X_n) under ``plan``.

    With ``return_trials`` the per-trial statistic, log likelihood ratio,
    acceptance flag and D_n (-1 where T_n is below threshold) come back too.
    """
    _check_trials(trials, min_trials)
    event = LDEvent("upper", delta, n)
    scale, coef, const = plan.arrays(n, n, n)
    # T'_n <= T_n, so thresholding T for the geodesic covers every accepted trial
    T, last, logL, dmax = engine.lpp_trials(seed, tag, trials, n, n, scale=scale,
                                            lr_coef=coef, lr_const=const,
                                            threshold=event.threshold,
                                            want_geo=return_trials, workers=workers)
    stat = T - last if truncated else T
    hit = event.holds(stat)
    est = _weighted(hit, logL, trials, plan)
    if return_trials:
        return est, {"T": stat, "logL": logL, "accepted": hit, "dmax": dmax}
    return est


def choose_tilt(n: int, delta: float, trials: int, seed: int,
                thetas=(0.1, 0.15, 0.2, 0.25, 0.3, 0.35), widths=(0.25, 0.5, 1.0),
                truncated=False, workers=None) -> TiltPlan:
    """The grid plan whose pilot run has the largest effective sample size."""
    best, best_ess = None, -1.0
    for i, (w, th) in enumerate((w, th) for w in widths for th in thetas):
        plan = TiltPlan(th, w)
        est = importance_estimate(n, delta, plan, trials, seed, truncated=truncated,
                                  workers=workers, tag=TAG_PILOT * 100 + i, min_trials=1)
        if est.ess > best_ess:
            best, best_ess = plan, est.ess
    return best


def exact_upper_tail(n: int, delta: float) -> float:
    """P(T_n >= (4 + delta) n) from the top-eigenvalue law of the n x n LUE."""
    return lue_top_tail(n, n, (4.0 + delta) * n)


# -- rejection -------------------------------------------------------------------------


@dataclass
class RejectionResult:
    n: int
    delta: float
    trials: int
    accepted_T: np.ndarray
    accepted_dmax: np.ndarray
    accepted_index: np.ndarray  # global trial indices
    seed: int
    pilot_estimate: float
    records: list = field(default_factory=list)

    @property
    def acceptance(self) -> float:
        return len(self.accepted_T) / self.trials

    def acceptance_ci(self):
        return wilson_interval(len(self.accepted_T), self.trials)


def rejection_gate(n: int, delta: float, budget: int) -> float:
    """Rate-based pilot estimate exp(-n I(delta)); raises when rejection is hopeless.

    A 10^4-trial pilot cannot resolve acceptance near 10^-6, so feasibility
    is judged from the rate function: n I(delta) <= 16 and at least one
    expected acceptance within the budget.
    """
    nI = n * rate_I(delta).value
    est = math.exp(-nI)
    if nI > GATE_NI or est * budget < 1.0 or est < MIN_PILOT * 0.1:
        raise BudgetError(f"rejection infeasible for n={n}, delta={delta} "
                          f"(n I = {nI:.3g}, budget {budget:g})", est)
    return est


def rejection_conditional_samples(n: int, delta: float, budget: int, seed: int, *,
                                  max_accepted: int | None = None, pilot_trials: int = 10_000,
                                  with_paths: bool = False, workers=None) -> RejectionResult:
    """Sample fields until U_delta(n) holds; keep the accepted geodesics' statistics.

    Trials run in fixed blocks; with ``max_accepted`` the run stops after the
    first block that reaches it, so the result does not depend on workers.
    """
    gate = rejection_gate(n, delta, budget)
    pilot_T = engine.lpp_trials(seed, TAG_PILOT, min(pilot_trials, budget), n, n,
                                workers=workers)[0]
    pilot_hits = int(np.sum(pilot_T >= (4.0 + delta) * n))
    pilot = pilot_hits / len(pilot_T) if pilot_hits else gate
    size = engine.block_size(n, n)
    counts = engine.block_counts(budget, size)
    workers = engine.default_workers() if workers is None else workers
    thr = (4.0 + delta) * n
    ones, zeros = np.ones((n, n)), np.zeros((n, n))
    Ts, ds, idx = [], [], []
    done = 0
    k = 0
    while k < len(counts):
        chunk = list(range(k, min(len(counts), k + max(workers, 1))))
        jobs = [(seed, TAG_REJECT, b, counts[b], n, n, ones, zeros, zeros, thr, True)
                for b in chunk]
        stop = False
        for b, (T, _, _, dmax) in zip(chunk, engine.map_blocks(engine.lpp_block, jobs, workers)):
            hit = np.nonzero(T >= thr)[0]
            Ts.append(T[hit])
            ds.append(dmax[hit])
            idx.append(b * size + hit)
            done += counts[b]
            if max_accepted is not None and sum(len(t) for t in Ts) >= max_accepted:
                stop = True
                break
        if stop:
            break
        k = chunk[-1] + 1
    res = RejectionResult(n, delta, done, np.concatenate(Ts), np.concatenate(ds),
                          np.concatenate(idx), seed, pilot)
    if with_paths:
        res.records = [accepted_geodesic(res, i) for i in range(len(res.accepted_T))]
    return res


def trial_field(seed: int, tag: int, n: int, trial: int) -> WeightField:
    """Regenerate the weight field of one untilted engine trial."""
    size = engine.block_size(n, n)
    b, i = divmod(int(trial), size)
    gen = rng.philox(seed, rng.TRIAL_BLOCK, tag, b)
    count = min(size, i + 1)
    E = gen.standard_exponential((count, n, n))
    return WeightField(E[i])


def accepted_geodesic(res: RejectionResult, i: int) -> GeodesicRecord:
    return geodesic(trial_field(res.seed, TAG_REJECT, res.n, res.accepted_index[i]))


# -- subadditive bound ----------------------------------------------------------------------


def subadditive_bound_check(n: int, delta: float, trials: int, seed: int,
                            plan: TiltPlan | None = None, workers=None) -> dict:
    """Check log P(T'_n >= (4+delta)n) + 3 sigma <= -n I(delta) with an IS estimate."""
    if plan is None:
        plan = choose_tilt(n, delta, max(trials // 20, 500), seed, truncated=True,
                           workers=workers)
    est = importance_estimate(n, delta, plan, trials, seed, truncated=True, workers=workers,
                              tag=TAG_TRUNC)
    bound = -n * rate_I(delta).value
    upper = est.log_p + 3.0 * est.std_err
    return {"n": n, "delta": delta, "estimate": est.as_dict(), "bound": bound,
            "upper": upper, "holds": bool(upper <= bound),
            "gap": -est.log_p / n - rate_I(delta).value}


# -- midpoint ratio --------------------------------------------------------------------------


def _midpoint_blocks(n, k):
    if n % 2:
        raise ParityError("midpoint experiment needs n even")
    m = n // 2
    v = (m + k, m - k)
    if not (1 <= v[1] and v[0] <= n):
        raise DomainError(f"offset k={k} leaves the grid")
    first = (v[0], v[1])
    second = (n - v[0] + 1, n - v[1] + 1)
    return v, first, second


def midpoint_ratio_is(n: int, delta: float, trials: int, seed: int, k: int = 0,
                      plan: TiltPlan | None = None, workers=None) -> dict:
    """Importance-sampling estimate of P(T_{1,v} + T'_{v,n} >= (4+delta)n) / P(U_delta).

    The two summands come from independent fields; the same plan tilts both
    and the n x n denominator field, with the strip measured in the global
    coordinates of the n x n square.
    """
    v, (r1, c1), (r2, c2) = _midpoint_blocks(n, k)
    if plan is None:
        plan = choose_tilt(n, delta, max(trials // 20, 500), seed, workers=workers)
    thr = (4.0 + delta) * n
    s1 = plan.arrays(r1, c1, n)
    s2 = plan.arrays(r2, c2, n, origin=v)
    TA, _, lA, _ = engine.lpp_trials(seed, TAG_MID_A, trials, r1, c1, scale=s1[0],
                                     lr_coef=s1[1], lr_const=s1[2], workers=workers)
    TB, lastB, lB, _ = engine.lpp_trials(seed, TAG_MID_B, trials, r2, c2, scale=s2[0],
                                         lr_coef=s2[1], lr_const=s2[2], workers=workers)
    num = _weighted(TA + (TB - lastB) >= thr, lA + lB, trials, plan)
    den = importance_estimate(n, delta, plan, trials, seed, workers=workers, tag=TAG_MID_DEN)
    log_r = num.log_p - den.log_p
    se = math.hypot(num.std_err, den.std_err)
    r = math.exp(log_r)
    return {"method": "importance", "n": n, "delta": delta, "k": k, "ratio": r,
            "ratio_se": r * se, "log_ratio": log_r, "log_ratio_se": se,
            "sqrt_n_ratio": math.sqrt(n) * r, "sqrt_n_ratio_se": math.sqrt(n) * r * se,
            "numerator": num.as_dict(), "denominator": den.as_dict()}


def _lue_shape(rows, cols):
    return max(rows, cols), min(rows, cols)


def midpoint_ratio_exact(n: int, delta: float, k: int = 0, nodes: int = 48) -> dict:
    """The same ratio from the exact top-eigenvalue laws (LPP-LUE identity).

    numerator = int_0^t f_A(s) P(T'_B >= t - s) ds + P(T_A >= t), with A, B the
    two blocks and t = (4 + delta) n; the integral runs over a window around
    the maximiser of its integrand, on Gauss-Legendre nodes.  T'_B drops the
    independent Exp(1) corner weight from T_B, so its tail is
    P(T_B >= s) - f_B(s).
    """
    v, (r1, c1), (r2, c2) = _midpoint_blocks(n, k)
    A, B = _lue_shape(r1, c1), _lue_shape(r2, c2)
    t = (4.0 + delta) * n
    dps = 60 + 5 * max(A[1], B[1], n)
    with mpmath.workdps(dps):
        den = lue_top_law(n, n, t)[1]
        x, w = np.polynomial.legendre.leggauss(nodes)

        def integrand(s):
            _, _, f = lue_top_law(A[0], A[1], s, density=True)
            _, tail, fB = lue_top_law(B[0], B[1], t - s, density=True)
            return f * (tail - fB)

        # the integrand peaks near the split proportional to block sizes
        centre = t * (r1 + c1) / (r1 + c1 + r2 + c2)
        width = 12.0 * math.sqrt(n / 2) + 10.0
        lo, hi = max(0.0, centre - width), min(t, centre + width)
        vals = [integrand((lo + hi) / 2 + (hi - lo) / 2 * xi) for xi in x]
        body = mpmath.fsum(wi * (hi - lo) / 2 * fv for wi, fv in zip(w, vals))
        # only an edge that cuts the range [0, t] short loses mass
        edge = max(abs(vals[0]) if lo > 0 else 0, abs(vals[-1]) if hi < t else 0)
        num = body + lue_top_law(A[0], A[1], t)[1]
        r = num / den
        return {"method": "exact", "n": n, "delta": delta, "k": k, "ratio": float(r),
                "ratio_se": 0.0, "sqrt_n_ratio": math.sqrt(n) * float(r),
                "numerator": float(num), "denominator": float(den),
                "window_edge_rel": float(edge * (hi - lo) / body) if body > 0 else 0.0}


def midpoint_ratio_experiment(ns, delta: float, trials: int, seed: int, method: str = "exact",
                              k: int = 0, workers=None, nodes: int = 48) -> dict:
    """sqrt(n) r(n) over ``ns`` and a one-sided trend test on it."""
    rows = []
    for n in ns:
        if method == "exact":
            rows.append(midpoint_ratio_exact(n, delta, k, nodes))
        elif method == "importance":
            rows.append(midpoint_ratio_is(n, delta, trials, seed, k, workers=workers))
        else:
            raise ValueError(f"unknown method {method!r}")
    trend = trend_test([math.log(r["n"]) for r in rows], [r["sqrt_n_ratio"] for r in rows],
                       [r.get("sqrt_n_ratio_se", 0.0) for r in rows])
    return {"method": method, "delta": delta, "rows": rows, "trend": trend}


def trend_test(x, y, se, z: float = 1.6449) -> dict:
    """Weighted least-squares slope of y on x; upward trend if slope - z*se > 0.

    With all standard errors zero (exact values) the slope is exact and any
    positive slope counts as a trend.
    """
    x, y, se = map(lambda a: np.asarray(a, dtype=float), (x, y, se))
    if np.all(se == 0):
        slope = float(np.polyfit(x, y, 1)[0])
        return {"slope": slope, "slope_se": 0.0, "upward": bool(slope > 0)}
    w = 1.0 / np.maximum(se, 1e-300) ** 2
    xm = np.sum(w * x) / np.sum(w)
    sxx = np.sum(w * (x - xm) ** 2)
    slope = float(np.sum(w * (x - xm) * y) / sxx)
    slope_se = float(math.sqrt(1.0 / sxx))
    return {"slope": slope, "slope_se": slope_se, "upward": bool(slope - z * slope_se > 0)}


# -- transversal fluctuation exponents ----------------------------------------------------


def unconditioned_dmax(n: int, trials: int, seed: int, workers=None) -> np.ndarray:
    return engine.lpp_trials(seed, TAG_UNCOND, trials, n, n, threshold=-np.inf, want_geo=True,
                             workers=workers)[3].astype(float)


def conditional_tf_experiment(n_grid, delta: float, budget: int, seed: int, *,
                              uncond_trials: int = 1000, max_accepted: int | None = 400,
                              resamples: int = 10_000, keep_samples: bool = False,
                              workers=None) -> dict:
    """Median transversal fluctuation with and without conditioning on U_delta(n).

    Slopes of log median D_n against log n come with percentile bootstrap
    intervals.  Grid points where rejection is infeasible are reported and
    the result is flagged incomplete.
    """
    n_grid = sorted(int(n) for n in n_grid)
    if len(n_grid) < 3:
        raise DomainError("n_grid needs at least 3 points")
    uncond, cond, infeasible = {}, {}, {}
    for n in n_grid:
        uncond[n] = unconditioned_dmax(n, uncond_trials, seed, workers)
        try:
            res = rejection_conditional_samples(n, delta, budget, seed,
                                                max_accepted=max_accepted, workers=workers)
        except BudgetError as exc:
            infeasible[n] = {"reason": str(exc), "pilot_estimate": exc.pilot_estimate}
            continue
        if len(res.accepted_dmax) == 0:
            infeasible[n] = {"reason": f"no acceptance in {res.trials} trials",
                             "pilot_estimate": res.pilot_estimate}
            continue
        cond[n] = res.accepted_dmax.astype(float)

    def summary(samples):
        return {str(n): {"median": float(np.median(s)), "upper_quartile":
                         float(np.percentile(s, 75)), "count": int(len(s))}
                for n, s in samples.items()}

    def slope_with_ci(samples, path):
        ns = sorted(samples)
        if len(ns) < 2:
            return None
        est = loglog_slope(ns, [np.median(samples[n]) for n in ns])
        reps = bootstrap(lambda d: loglog_slope(ns, [max(np.median(a), 0.5) for a in d]),
                         [samples[n] for n in ns], resamples, seed, *path)
        lo, hi = np.percentile(reps, [2.5, 97.5])
        return {"n": ns, "slope": est, "ci": [float(lo), float(hi)]}

    out = {"delta": delta, "budget": budget, "n_grid": n_grid,
           "unconditioned": summary(uncond), "conditioned": summary(cond),
           "slope_unconditioned": slope_with_ci(uncond, (1,)),
           "slope_conditioned": slope_with_ci(cond, (2,)),
           "slope_unconditioned_same_grid": slope_with_ci(
               {n: uncond[n] for n in cond}, (3,)) if cond else None,
           "infeasible": {str(n): v for n, v in infeasible.items()},
           "incomplete": bool(infeasible)}
    top = n_grid[-1]
    if top in cond:
        reps = bootstrap(lambda d: np.median(d[0]) - np.median(d[1]),
                         [cond[top], uncond[top]], resamples, seed, 4)
        out["median_gap_top"] = {"n": top, "gap": float(np.median(cond[top])
                                                        - np.median(uncond[top])),
                                 "upper_99": float(np.percentile(reps, 99))}
    if keep_samples:
        out["samples"] = {"unconditioned": {n: s.tolist() for n, s in uncond.items()},
                          "conditioned": {n: s.tolist() for n, s in cond.items()}}
    return out


# -- two-scale split -----------------------------------------------------------------------


def split_bound(t: int, d: float) -> float:
    """Rigorous log upper bound on P(T_t >= (4 + d) t) via T_t <= T'_{t+1}."""
    dprime = d - (4.0 + d) / (t + 1)
    if dprime <= 1e-8:
        return 0.0
    return -(t + 1) * rate_I(dprime).value


def two_scale_split_probe(n: int, t1: int, delta1: float, delta2: float, trials: int,
                          seed: int, delta: float | None = None, workers=None) -> dict:
    """Both factors by importance sampling, against two upper bounds.

    ``rigorous_bound`` sums the every-n bound from ``split_bound`` and is the
    pass/fail check (3 sigma slack).  ``lemma_bound`` is -n I(delta) minus
    n C_delta times the convexity penalty, with C_delta probed on a grid; it
    holds only up to lower-order terms and is reported, not asserted.
    """
    t2 = n - t1
    if not (1 <= t1 < n):
        raise ConstraintError(f"need 1 <= t1 < n, got t1={t1}, n={n}")
    mean = (t1 * delta1 + t2 * delta2) / n
    if delta is None:
        delta = mean
    if mean < delta * (1 - 1e-12):
        raise ConstraintError("t1*delta1 + t2*delta2 must be at least n*delta")
    ests = []
    for t, d, tag in ((t1, delta1, TAG_SPLIT_1), (t2, delta2, TAG_SPLIT_2)):
        plan = choose_tilt(t, d, max(trials // 20, 500), seed, workers=workers)
        ests.append(importance_estimate(t, d, plan, trials, seed, workers=workers, tag=tag))
    log_prod = ests[0].log_p + ests[1].log_p
    se = math.hypot(ests[0].std_err, ests[1].std_err)
    bound = split_bound(t1, delta1) + split_bound(t2, delta2)
    # the penalty is symmetric under swapping the blocks; it wants alpha <= 1/2
    alpha, d1, d2 = (t1 / n, delta1, delta2) if t1 <= t2 else (t2 / n, delta2, delta1)
    penalty = convexity_penalty(mean, alpha, d1, d2)
    C = float(convexity_constant_probe(mean))
    lemma = float(-n * rate_I(mean).value - n * C * penalty)
    return {"n": n, "t1": t1, "t2": t2, "delta": delta, "delta1": delta1, "delta2": delta2,
            "factors": [e.as_dict() for e in ests], "log_product": log_prod,
            "log_product_se": se, "rigorous_bound": bound,
            "holds": bool(log_prod - 3 * se <= bound),
            "main_term": -n * rate_I(delta).value, "penalty": penalty, "C_delta": C,
            "lemma_bound": lemma, "lemma_consistent": bool(log_prod - 3 * se <= lemma)}
