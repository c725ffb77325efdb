"""Marchenko-Pastur measures MP_y on [(1-sqrt y)^2, (1+sqrt y)^2], 0 < y <= 1.

Integrals against MP_y use the substitution

    x = a + 4 sqrt(y) cos^2(theta/2),   b - x = 4 sqrt(y) sin^2(theta/2),

under which dMP_y = (8/pi) sin^2(theta/2) cos^2(theta/2) / x  dtheta on
[0, pi].  Both square-root endpoint factors are absorbed, and ``b - x`` is
available without cancellation, which matters for integrands such as
``log(4 + delta - x)`` with small ``delta``.
"""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy import integrate

from .errors import DomainError, RangeError, ToleranceNotMet
from .quadrature import QuadratureSpec, gauss_adaptive, segment_integrals

DEFAULT_SPEC = QuadratureSpec()


@dataclass(frozen=True)
class MPLaw:
    y: float

    def __post_init__(self):
        if not 0.0 < self.y <= 1.0:
            raise DomainError(f"MP parameter y must lie in (0, 1], got {self.y}")

    @property
    def sqrt_y(self) -> float:
        return math.sqrt(self.y)

    @property
    def a(self) -> float:
        return (1.0 - self.sqrt_y) ** 2

    @property
    def b(self) -> float:
        return (1.0 + self.sqrt_y) ** 2


def mp_density(law: MPLaw, x):
    x = np.asarray(x, dtype=np.float64)
    a, b = law.a, law.b
    inside = (x > a) & (x < b)
    xs = np.where(inside, x, 0.5 * (a + b))
    val = np.sqrt((b - xs) * (xs - a)) / (2.0 * np.pi * xs * law.y)
    out = np.where(inside, val, 0.0)
    return out[()] if out.ndim == 0 else out


def _half_angles(theta, flip):
    # flip evaluates at pi - theta without forming pi - theta, which would
    # cost the relative precision of small theta near x = a
    s, c = np.sin(0.5 * theta), np.cos(0.5 * theta)
    return (c, s) if flip else (s, c)


def _x_and_gap(law: MPLaw, theta, flip=False):
    s, c = _half_angles(theta, flip)
    r = 4.0 * law.sqrt_y
    return law.a + r * c * c, r * s * s


def _theta_weight(law: MPLaw, theta, flip=False):
    s, c = _half_angles(theta, flip)
    x = law.a + 4.0 * law.sqrt_y * c * c
    return (8.0 / np.pi) * s * s * c * c / x


def theta_of_x(law: MPLaw, x):
    """Inverse of the substitution; decreasing from pi (x = a) to 0 (x = b)."""
    u = np.clip((np.asarray(x, dtype=np.float64) - law.a) / (4.0 * law.sqrt_y), 0.0, 1.0)
    return 2.0 * np.arccos(np.sqrt(u))


def mp_integrate(law: MPLaw, f, spec: QuadratureSpec = DEFAULT_SPEC, *, gap=False,
                 breakpoints=(), refine_top=False):
    """Integral of ``f`` against MP_y; returns ``(value, error_estimate)``.

    With ``gap=True`` the integrand is called as ``f(x, b - x)``.
    ``breakpoints`` are x-values where panels must split; ``refine_top``
    doubles the node count in the panel touching the upper edge ``b``.
    """
    if spec.method == "adaptive":
        return _integrate_adaptive(law, f, spec, gap)

    def g(theta, flip=False):
        x, top = _x_and_gap(law, theta, flip)
        vals = f(x, top) if gap else f(x)
        return vals * _theta_weight(law, theta, flip)

    # theta runs opposite to x, so the upper edge b sits at theta = 0
    tb = sorted(float(t) for t in theta_of_x(law, np.asarray(breakpoints, dtype=float)))
    if refine_top:
        # flipped so that b sits at the right end, where last_order applies
        return gauss_adaptive(lambda t: g(t, True), 0.0, np.pi, spec.target_abs_tol,
                              spec.max_subdivisions, [np.pi - t for t in tb],
                              order=24, last_order=48)
    return gauss_adaptive(g, 0.0, np.pi, spec.target_abs_tol, spec.max_subdivisions, tb)


def _integrate_adaptive(law, f, spec, gap):
    """QUADPACK fallback with algebraic endpoint weights."""
    a, b, y = law.a, law.b, law.y
    if a == 0.0:
        # sqrt(x(4-x))/(2 pi x) = x^(-1/2) (4-x)^(1/2) / (2 pi)
        h = lambda x: (f(x, b - x) if gap else f(x)) / (2 * np.pi)  # noqa: E731
        wvar = (-0.5, 0.5)
    else:
        h = lambda x: (f(x, b - x) if gap else f(x)) / (2 * np.pi * x * y)  # noqa: E731
        wvar = (0.5, 0.5)
    val, err = integrate.quad(h, a, b, weight="alg", wvar=wvar,
                              epsabs=spec.target_abs_tol, epsrel=0.0,
                              limit=spec.max_subdivisions)
    if err > spec.target_abs_tol:
        raise ToleranceNotMet("adaptive quadrature did not converge", val, err)
    return val, err


def mp_cdf(law: MPLaw, x, spec: QuadratureSpec = DEFAULT_SPEC):
    """MP_y((-inf, x]); accepts scalars or arrays."""
    xs = np.asarray(x, dtype=np.float64)
    flat = xs.ravel()
    out = np.where(flat <= law.a, 0.0, 1.0)
    inner = (flat > law.a) & (flat < law.b)
    if inner.any():
        th = theta_of_x(law, flat[inner])
        order = np.argsort(th)
        edges = np.concatenate([th[order], [np.pi]])
        w = lambda t: _theta_weight(law, t)  # noqa: E731
        seg, _ = segment_integrals(w, edges, spec.target_abs_tol, spec.max_subdivisions)
        tail = np.cumsum(seg[::-1])[::-1]  # integral from theta_k to pi
        vals = np.empty(len(th))
        vals[order] = tail
        out[inner] = np.clip(vals, 0.0, 1.0)
    out = out.reshape(xs.shape)
    return out[()] if out.ndim == 0 else out


def mp_quantile(law: MPLaw, p, tol=1e-12):
    """Inverse CDF by bisection in x; vectorised over ``p``."""
    ps = np.asarray(p, dtype=np.float64)
    if np.any((ps < 0) | (ps > 1)) or np.any(np.isnan(ps)):
        raise RangeError("quantile level must lie in [0, 1]")
    flat = ps.ravel()
    lo = np.full(flat.shape, law.a)
    hi = np.full(flat.shape, law.b)
    while np.max(hi - lo) > tol:
        mid = 0.5 * (lo + hi)
        below = mp_cdf(law, mid) < flat
        lo = np.where(below, mid, lo)
        hi = np.where(below, hi, mid)
    out = 0.5 * (lo + hi)
    out = np.where(flat == 0, law.a, np.where(flat == 1, law.b, out)).reshape(ps.shape)
    return out[()] if out.ndim == 0 else out


def classical_locations(law: MPLaw, N: int) -> np.ndarray:
    """gamma_1 >= ... >= gamma_N with MP_y((-inf, gamma_j]) = 1 - j/N."""
    if N < 1:
        raise ValueError("N must be positive")
    j = np.arange(1, N + 1)
    return mp_quantile(law, 1.0 - j / N)


def _check_coeffs(a_coef, b_coef):
    if not (a_coef > 0 and b_coef > 0):
        raise DomainError(f"coefficients must be positive, got a={a_coef}, b={b_coef}")


def closed_form_sqrt_rational(a_coef: float, b_coef: float) -> float:
    """Integral over [0, 4] of sqrt(x(4-x)) / (2 pi (a x + b))."""
    _check_coeffs(a_coef, b_coef)
    a, b = float(a_coef), float(b_coef)
    # (2a + b - sqrt(4ab + b^2)) / (2a^2), rationalised against cancellation when b << a
    return 2.0 / (2.0 * a + b + math.sqrt(4.0 * a * b + b * b))


def closed_form_arctan(a_coef: float, b_coef: float) -> float:
    """Integral over [0, 4] of 1 / (sqrt(x) (b x + a))."""
    _check_coeffs(a_coef, b_coef)
    a, b = float(a_coef), float(b_coef)
    return 2.0 * math.atan(2.0 * math.sqrt(b / a)) / math.sqrt(a * b)
