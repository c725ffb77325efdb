"""Upper-tail rate functions and the curvature calculus around them.

Notation used throughout (MP is MP_1 on [0, 4], l = log(4 + delta)):

    L(delta) = int log(4 + delta - x) dMP
    R(delta) = int (4 + delta - x)^-1 dMP
    Q(delta) = int_0^4 log(4 + delta - x) / (2 pi sqrt(x (4 - x))) dx

The rate is I(delta) = 2 + delta - 2 L(delta), and the curvature
coefficient is stored positive: beta = 6 + L - (6 + delta) R - 2 Q, which
runs from 4 at delta = 0 up to 5 as delta -> infinity.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
from scipy.special import gammaln

from .errors import ConstraintError, DomainError, NearSingularError
from .mp import MPLaw, closed_form_arctan, closed_form_sqrt_rational, mp_integrate
from .quadrature import QuadratureSpec, gauss_adaptive

MIN_DELTA_RATE = 1e-8
MIN_DELTA_DERIV = 1e-6
SPEC = QuadratureSpec()
SQUARE = MPLaw(1.0)


@dataclass(frozen=True)
class RateEval:
    delta: float
    y: float
    value: float
    abs_err_estimate: float


@dataclass(frozen=True)
class CurvatureExpansion:
    delta: float
    A: float
    B: float
    beta: float
    sub_integrals: dict = field(default_factory=dict)
    z_grid: tuple = ()
    numeric: tuple = ()
    fitted_A: float = math.nan
    fitted_B: float = math.nan


def _check_delta(delta, floor):
    if not math.isfinite(delta):
        raise DomainError(f"delta must be finite, got {delta}")
    if delta < floor:
        raise NearSingularError(f"delta must be at least {floor:g}, got {delta:g}")
    return float(delta)


def _edge_integral(law: MPLaw, offset: float, g, spec=SPEC):
    """int g(offset + (b - x), x) dMP_y, refined near b where offset is small.

    ``offset`` is the distance from the upper edge b to the singular point
    of ``g``, so ``offset + gap`` never loses digits to cancellation.
    """
    brk = (law.b - min(offset, 1.0),) if offset < 1.0 else ()
    return mp_integrate(law, lambda x, gap: g(offset + gap, x), spec, gap=True,
                        breakpoints=brk, refine_top=bool(brk))


def log_moment(delta: float, y: float = 1.0):
    """int log(4 + delta - x) dMP_y, with its error estimate."""
    law = MPLaw(y)
    return _edge_integral(law, (4.0 + delta) - law.b, lambda d, x: np.log(d))


def resolvent(delta: float, power: int = 1):
    """int (4 + delta - x)^-power dMP."""
    return _edge_integral(SQUARE, delta, lambda d, x: d ** (-power))


def arcsine_log(delta: float):
    """int_0^4 log(4 + delta - x) / (2 pi sqrt(x(4-x))) dx.

    With x = 2 + 2 cos(theta) this is (1/2pi) int_0^pi log(delta + 4 sin^2(theta/2)).
    """
    f = lambda t: np.log(delta + 4.0 * np.sin(0.5 * t) ** 2) / (2.0 * np.pi)  # noqa: E731
    brk = [min(math.sqrt(delta), 1.0)] if delta < 1.0 else []
    return gauss_adaptive(f, 0.0, np.pi, SPEC.target_abs_tol, SPEC.max_subdivisions, brk)


def rate_I(delta: float) -> RateEval:
    delta = _check_delta(delta, MIN_DELTA_RATE)
    L, err = log_moment(delta)
    return RateEval(delta, 1.0, max(2.0 + delta - 2.0 * L, 0.0), 2.0 * err)


def rate_Jy(y: float, delta: float) -> RateEval:
    delta = _check_delta(delta, MIN_DELTA_RATE)
    J, err = log_moment(delta, y)
    return RateEval(delta, float(y), J, err)


def rate_Iy(y: float, delta: float) -> RateEval:
    J = rate_Jy(y, delta)
    y = float(y)
    ell = math.log(4.0 + delta)
    val = math.fsum([-(2.0 + 1.0 / y), math.log(y), 1.0, (4.0 + delta) / y,
                     -(1.0 / y - 1.0) * ell, -2.0 * J.value])
    return RateEval(J.delta, y, val, 2.0 * J.abs_err_estimate)


def rate_derivatives(delta: float) -> tuple[float, float]:
    """(I'(delta), I''(delta)) by differentiating under the integral."""
    delta = _check_delta(delta, MIN_DELTA_DERIV)
    R, _ = resolvent(delta, 1)
    R2, _ = resolvent(delta, 2)
    return 1.0 - 2.0 * R, 2.0 * R2


def partition_log_ratio(M: int, N: int) -> float:
    """log(Z_{M-1,N-1} / Z_{M,N}) for the scaled LUE partition function.

    Z_{M,N} = M^{-NM} prod_{j<N} j! (M - N + j)!, so the ratio telescopes to
    NM log M - (N-1)(M-1) log(M-1) - log (N-1)! - log (M-1)!.
    """
    M, N = int(M), int(N)
    if N < 1:
        raise DomainError(f"N must be at least 1, got {N}")
    if M < N:
        raise DomainError(f"need M >= N, got M={M}, N={N}")
    if M == 1:
        return 0.0
    # NM log M - (N-1)(M-1) log(M-1) regrouped so nothing of size NM log M cancels
    head = -N * M * math.log1p(-1.0 / M) + (N + M - 1) * math.log(M - 1)
    return head - float(gammaln(N)) - float(gammaln(M))


def beta_coefficient(delta: float) -> float:
    delta = _check_delta(delta, MIN_DELTA_DERIV)
    L, _ = log_moment(delta)
    R, _ = resolvent(delta)
    Q, _ = arcsine_log(delta)
    return math.fsum([6.0, L, -(6.0 + delta) * R, -2.0 * Q])


def beta_prime(delta: float) -> float:
    delta = _check_delta(delta, MIN_DELTA_DERIV)
    return 2.0 / ((4.0 + delta) ** 1.5 * math.sqrt(delta))


def beta_prime_unsimplified(delta: float) -> float:
    """(6 + delta) int (4+delta-x)^-2 dMP - 2 int dx / (2 pi (4+delta-x) sqrt(x(4-x)))."""
    delta = _check_delta(delta, MIN_DELTA_DERIV)
    R2, _ = resolvent(delta, 2)
    f = lambda t: 1.0 / (2.0 * np.pi * (delta + 4.0 * np.sin(0.5 * t) ** 2))  # noqa: E731
    brk = [min(math.sqrt(delta), 1.0)] if delta < 1.0 else []
    P, _ = gauss_adaptive(f, 0.0, np.pi, SPEC.target_abs_tol, SPEC.max_subdivisions, brk)
    return (6.0 + delta) * R2 - 2.0 * P


# -- expansion in z = 1 - sqrt(y) ----------------------------------------------


def analytic_AB(delta: float) -> tuple[float, float]:
    delta = _check_delta(delta, MIN_DELTA_DERIV)
    ell = math.log(4.0 + delta)
    L, _ = log_moment(delta)
    R, _ = resolvent(delta)
    Q, _ = arcsine_log(delta)
    A = -1.0 + L - ell
    B = math.fsum([-0.5, -1.5 * ell, (0.5 * (2.0 + delta) + 2.0) * R, L, Q])
    return A, B


def log_difference(delta: float, z: float) -> float:
    """int log(4 + dhat - x) dMP_y - int log(4 + delta - x) dMP, y = (1-z)^2.

    dhat solves (4 + delta) n = (4 + dhat) m_1, i.e. 4 + dhat = (4 + delta)(1 + y)/2.
    """
    y = (1.0 - z) ** 2
    hat = (4.0 + delta) * (1.0 + y) / 2.0
    law = MPLaw(y)
    J, _ = _edge_integral(law, hat - law.b, lambda d, x: np.log(d))
    L, _ = log_moment(delta)
    return J - L


def _denominator(z):
    return lambda x: (1.0 - z) * x + z * z


def sub_integrals(delta: float, z: float) -> dict:
    """Each piece of the z-expansion: name -> (numeric value, expansion value).

    Expansion values drop the o(.) remainder; I2 is checked against the
    exact identity I2 = z L + z^2 I21 - z^2 (1 + z) I22 instead.
    """
    delta = _check_delta(delta, MIN_DELTA_DERIV)
    if not 0.0 < z < 1.0:
        raise DomainError(f"z must lie in (0, 1), got {z}")
    ell = math.log(4.0 + delta)
    L, _ = log_moment(delta)
    R, _ = resolvent(delta)
    Q, _ = arcsine_log(delta)
    den = _denominator(z)
    # the peak of 1/den sits at x ~ z^2
    near0 = tuple(k * z * z for k in (1.0, 16.0, 256.0) if k * z * z < 2.0)
    # values grow like 1/z, so an absolute 1e-13 would sit below rounding
    tol_spec = QuadratureSpec(target_abs_tol=1e-12 / z)

    def mp1(g, brk=()):
        off = min(delta, 1.0)
        edge = (4.0 - off,) if delta < 1.0 else ()
        val, _ = mp_integrate(SQUARE, g, tol_spec, gap=True, breakpoints=near0 + edge + brk,
                              refine_top=bool(edge))
        return val

    I1 = mp1(lambda x, gap: x * np.log1p(-z + 0.5 * z * z + z * z * (x - 2.0)
                                         / (2.0 * (delta + gap))) / den(x))
    I21 = mp1(lambda x, gap: np.log(delta + gap) * x / den(x))
    I22 = mp1(lambda x, gap: np.log(delta + gap) / den(x))
    I2 = mp1(lambda x, gap: np.log(delta + gap) * (x / den(x) - 1.0))

    # x = 4 sin^2(phi): removes sqrt(x) at 0 and sqrt(4 - x) at 4
    def i221(phi):
        s, c = np.sin(phi), np.cos(phi)
        num = np.log(delta + 4.0 * c * c) * 2.0 * c - 2.0 * ell
        return num * 2.0 * c / (np.pi * ((1.0 - z) * 4.0 * s * s + z * z))

    brk_phi = [math.asin(min(1.0, k * z / 2.0)) for k in (1.0, 4.0, 16.0) if k * z < 2.0]
    I221, _ = gauss_adaptive(i221, 0.0, np.pi / 2, tol_spec.target_abs_tol, SPEC.max_subdivisions,
                             brk_phi)
    u_brk = [k * z for k in (1.0, 4.0, 16.0) if k * z < 2.0]
    raw, _ = gauss_adaptive(lambda u: 2.0 / ((1.0 - z) * u * u + z * z), 0.0, 2.0,
                            tol_spec.target_abs_tol, SPEC.max_subdivisions, u_brk)
    I222 = ell / np.pi * raw
    I222_closed = ell / np.pi * closed_form_arctan(z * z, 1.0 - z)

    return {
        "I1": (I1, -z + (-0.5 + 0.5 * (2.0 + delta) * R) * z * z),
        "I2": (I2, z * L + z * z * I21 - z * z * (1.0 + z) * I22),
        "I21": (I21, L),
        "I22": (I22, ell / z + ell / 2.0 - 2.0 * R - Q),
        "I221": (I221, ell / np.pi - 2.0 * R - Q),
        "I222": (I222, ell / z + ell / 2.0 - ell / np.pi),
        "I222_closed": (I222, I222_closed),
        "I11": (-z * closed_form_sqrt_rational(1.0 - z, z * z), -z),
    }


def intest_expansion(delta: float, z_grid) -> CurvatureExpansion:
    """Analytic A, B against a least-squares fit of the numeric log difference.

    The fit uses the basis (z, z^2, z^3); the cubic column absorbs the
    leading remainder so the quadratic coefficient is not biased by it.
    """
    delta = _check_delta(delta, MIN_DELTA_DERIV)
    zs = np.asarray(sorted(float(z) for z in z_grid))
    if len(zs) < 3 or zs[0] <= 0.0 or zs[-1] > 0.1:
        raise DomainError("z_grid needs at least 3 points in (0, 0.1]")
    A, B = analytic_AB(delta)
    vals = np.array([log_difference(delta, z) for z in zs])
    design = np.column_stack([zs, zs ** 2, zs ** 3])
    coef, *_ = np.linalg.lstsq(design, vals, rcond=None)
    return CurvatureExpansion(
        delta=delta, A=A, B=B, beta=beta_coefficient(delta),
        sub_integrals=sub_integrals(delta, float(zs[0])),
        z_grid=tuple(zs), numeric=tuple(vals),
        fitted_A=float(coef[0]), fitted_B=float(coef[1]),
    )


# -- the finite-n sum over A_i - B_i -------------------------------------------


def curvature_terms(delta: float, n: int, c: int) -> dict:
    """Each A_i - B_i for m_1 = n + c, n_1 = n - c."""
    delta = _check_delta(delta, MIN_DELTA_DERIV)
    n, c = int(n), int(c)
    if c < 0 or c >= n:
        raise DomainError(f"need 0 <= c < n, got c={c}, n={n}")
    m1, n1 = n + c, n - c
    y = n1 / m1
    law = MPLaw(y)
    hat = (4.0 + delta) * n / m1  # this is 4 + dhat
    d0 = partition_log_ratio(m1, n1) - partition_log_ratio(n, n)
    J, _ = _edge_integral(law, hat - law.b, lambda d, x: np.log(d))
    L, _ = log_moment(delta)
    d1 = 2.0 * n1 * J - 2.0 * n * L
    mean_y, _ = mp_integrate(law, lambda x: x)
    mean_1, _ = mp_integrate(SQUARE, lambda x: x)
    d2 = -n1 * mean_y + n * mean_1
    d3 = (m1 - n1) * math.log(hat)
    d4 = -m1 * hat + n * (4.0 + delta)
    return {"A0-B0": d0, "A1-B1": d1, "A2-B2": d2, "A3-B3": d3, "A4-B4": d4}


def curvature_sum_check(delta: float, n: int, c: int) -> float:
    if c > n:
        raise DomainError(f"c={c} exceeds n={n}")
    return math.fsum(curvature_terms(delta, n, c).values())


def curvature_exact_coefficient(delta: float) -> float:
    """Coefficient of -c^2/n in the exact sum, sqrt(delta / (4 + delta)).

    Expanding log(1 - w) = -w - w^2/2 correctly gives A0 - B0 = c - 2c^2/n,
    so the sum carries beta - 4 rather than beta; beta - 4 integrates
    beta' back from beta(0) = 4 and equals I'(delta).
    """
    delta = _check_delta(delta, MIN_DELTA_DERIV)
    return math.sqrt(delta / (4.0 + delta))


def fit_curvature(delta: float, n: int, cs) -> dict:
    """Quadratic least-squares fit of the summed terms over ``cs``.

    ``rel_err`` compares the fitted coefficient against -beta/n;
    ``rel_err_exact`` against -(beta - 4)/n.
    """
    cs = np.asarray(cs, dtype=float)
    vals = np.array([curvature_sum_check(delta, n, int(c)) for c in cs])
    coef = np.polyfit(cs, vals, 2)
    beta = beta_coefficient(delta)
    exact = curvature_exact_coefficient(delta)
    return {"quad_coef": float(coef[0]), "target": -beta / n,
            "rel_err": float(abs(coef[0] * n + beta) / beta),
            "target_exact": -exact / n,
            "rel_err_exact": float(abs(coef[0] * n + exact) / exact),
            "linear_coef": float(coef[1]), "values": vals.tolist()}


# -- convexity ------------------------------------------------------------------


def convexity_gap(delta, alpha, delta1, delta2) -> float:
    """alpha I(delta1) + (1 - alpha) I(delta2) - I(delta)."""
    if not 0.0 <= alpha <= 0.5:
        raise ConstraintError(f"alpha must lie in [0, 1/2], got {alpha}")
    for d in (delta, delta1, delta2):
        _check_delta(d, MIN_DELTA_DERIV)
    if abs(alpha * delta1 + (1.0 - alpha) * delta2 - delta) > 1e-12 * max(1.0, delta):
        raise ConstraintError("alpha*delta1 + (1-alpha)*delta2 must equal delta")
    return (alpha * rate_I(delta1).value + (1.0 - alpha) * rate_I(delta2).value
            - rate_I(delta).value)


def convexity_penalty(delta, alpha, delta1, delta2) -> float:
    return ((1.0 - alpha) * (delta2 - delta) ** 2
            + alpha * min((delta1 - delta) ** 2, abs(delta1 - delta)))


def convexity_constant_probe(delta: float, n_alpha: int = 12, n_delta1: int = 24,
                             delta1_max: float = 50.0) -> float:
    """Smallest gap / penalty ratio over a grid of admissible (alpha, delta1).

    The result is the largest C_delta consistent with the grid.
    """
    delta = _check_delta(delta, MIN_DELTA_DERIV)
    I0 = rate_I(delta).value
    cache = {}

    def I(d):
        if d not in cache:
            cache[d] = rate_I(d).value
        return cache[d]

    best = math.inf
    alphas = np.linspace(0.0, 0.5, n_alpha + 1)[1:]
    offsets = np.geomspace(1e-2, delta1_max, n_delta1)
    for a in alphas:
        for off in np.concatenate([offsets, -offsets]):
            d1 = delta + off
            d2 = (delta - a * d1) / (1.0 - a)
            if d1 < MIN_DELTA_DERIV or d2 < MIN_DELTA_DERIV:
                continue
            gap = a * I(d1) + (1.0 - a) * I(d2) - I0
            best = min(best, gap / convexity_penalty(delta, a, d1, d2))
    return best
