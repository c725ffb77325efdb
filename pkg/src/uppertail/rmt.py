"""Complex Wishart (LUE) spectra: samplers, exact top-eigenvalue law, diagnostics.

Unscaled eigenvalues are those of X*X for an M x N matrix X of standard
complex Gaussians (real and imaginary parts N(0, 1/2)); scaled eigenvalues
divide by M.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from functools import lru_cache

import mpmath
import numpy as np
from scipy import integrate, stats as sps

from . import engine, rng
from .errors import (ConditioningError, DimensionError, NumericError, ParityError,
                     WindowError, BudgetError)
from .mp import MPLaw, classical_locations, mp_cdf
from .stats import dkw_epsilon, ecdf, ks_two_sample, loglog_slope, wilson_interval

DENSE = "dense"
BIDIAGONAL = "bidiagonal"
KERNEL_SIZE_CAP = 60


@dataclass(frozen=True)
class WishartSpec:
    M: int
    N: int
    scaled: bool = True

    def __post_init__(self):
        if not (isinstance(self.M, (int, np.integer)) and isinstance(self.N, (int, np.integer))):
            raise TypeError("M and N must be integers")
        if self.N < 1 or self.M < self.N:
            raise DimensionError(f"need M >= N >= 1, got M={self.M}, N={self.N}")

    @property
    def y(self) -> float:
        return self.N / self.M


@dataclass(frozen=True)
class Spectrum:
    spec: WishartSpec
    values: np.ndarray = field(repr=False)
    seed: int | None
    backend: str
    resample: bool = False  # set when two eigenvalues coincide

    @property
    def unscaled(self) -> np.ndarray:
        return self.values * self.spec.M if self.spec.scaled else self.values


@dataclass(frozen=True)
class RigidityReport:
    deviations: np.ndarray = field(repr=False)
    normalized: np.ndarray = field(repr=False)
    c: float
    window: tuple
    window_max: float
    argmax: int  # 1-based eigenvalue index


def default_backend(spec: WishartSpec) -> str:
    return BIDIAGONAL if spec.N > 64 else DENSE


def _dense_unscaled(gen, M, N, count):
    X = (gen.standard_normal((count, M, N)) + 1j * gen.standard_normal((count, M, N)))
    X *= math.sqrt(0.5)
    W = np.conj(np.swapaxes(X, 1, 2)) @ X
    # LAPACK heevd: Householder tridiagonalisation then a tridiagonal solver
    ev = np.linalg.eigvalsh(W)
    return ev[:, ::-1]


def _bidiagonal_unscaled(gen, M, N, count):
    i = np.arange(1, N + 1)
    d = np.sqrt(gen.standard_gamma(M - i + 1, size=(count, N)))
    e = np.sqrt(gen.standard_gamma(np.maximum(N - i[:-1], 1), size=(count, N - 1)))
    # B lower bidiagonal: B[k,k] = d_k, B[k+1,k] = e_k; eigenvalues of B^T B
    T = np.zeros((count, N, N))
    k = np.arange(N)
    T[:, k, k] = d * d
    T[:, k[:-1], k[:-1]] += e * e
    T[:, k[:-1], k[1:]] = d[:, 1:] * e
    T[:, k[1:], k[:-1]] = d[:, 1:] * e
    ev = np.linalg.eigvalsh(T)
    return ev[:, ::-1]


def sample_spectra(spec: WishartSpec, seed: int, count: int, backend: str | None = None,
                   tag: int = 0, block: int = 0) -> np.ndarray:
    """``count`` spectra as a (count, N) array, each row decreasing."""
    backend = backend or default_backend(spec)
    gen = rng.philox(seed, rng.SPECTRUM, tag, block)
    if backend == DENSE:
        ev = _dense_unscaled(gen, spec.M, spec.N, count)
    elif backend == BIDIAGONAL:
        ev = _bidiagonal_unscaled(gen, spec.M, spec.N, count)
    else:
        raise ValueError(f"unknown backend {backend!r}")
    if not np.all(np.isfinite(ev)):
        raise NumericError("eigensolver produced non-finite values", seed)
    # Hermitian PSD, so tiny negative values are rounding
    ev = np.maximum(ev, np.finfo(float).tiny)
    return ev / spec.M if spec.scaled else ev


def sample_spectrum(spec: WishartSpec, seed: int, backend: str | None = None) -> Spectrum:
    backend = backend or default_backend(spec)
    vals = sample_spectra(spec, seed, 1, backend)[0]
    vals.setflags(write=False)
    return Spectrum(spec, vals, rng.check_seed(seed), backend,
                    resample=bool(np.any(np.diff(vals) >= 0)))


def _spectra_block(M, N, scaled, seed, tag, block, count, backend):
    return sample_spectra(WishartSpec(M, N, scaled), seed, count, backend, tag, block)


def spectra_trials(spec: WishartSpec, seed: int, trials: int, backend: str | None = None,
                   tag: int = 0, workers: int | None = None) -> np.ndarray:
    """Many spectra, generated in fixed-size blocks (worker-count independent)."""
    backend = backend or default_backend(spec)
    size = max(1, min(10_000, 2_000_000 // (spec.N * spec.N + spec.M * spec.N)))
    jobs = [(spec.M, spec.N, spec.scaled, seed, tag, k, cnt, backend)
            for k, cnt in enumerate(engine.block_counts(trials, size))]
    return np.concatenate(engine.map_blocks(_spectra_block, jobs, workers))


# -- exact law of the top eigenvalue ----------------------------------------------


def _dps(N):
    return 60 + 5 * N


def lue_top_law(M: int, N: int, s, density: bool = False):
    """P(top unscaled eigenvalue <= s) as ``(cdf, tail)``, optionally with the density.

    cdf = det[gamma(a+i+j+1, s)]_{i,j<N} / prod_j j! (a+j)!,  a = M - N,
    with gamma the lower incomplete gamma function.  The density follows
    from Jacobi's formula.  Evaluated in extended precision so tails far
    below double-precision cancellation come out accurately.
    """
    a = M - N
    if N < 1 or a < 0:
        raise DimensionError(f"need M >= N >= 1, got M={M}, N={N}")
    with mpmath.workdps(_dps(N)):
        s = mpmath.mpf(s)
        if s <= 0:
            out = (mpmath.mpf(0), mpmath.mpf(1))
            return out + (mpmath.mpf(0),) if density else out
        G = mpmath.matrix(N, N)
        for i in range(N):
            for j in range(N):
                G[i, j] = mpmath.gammainc(a + i + j + 1, 0, s)
        norm = mpmath.fprod(mpmath.factorial(j) * mpmath.factorial(a + j) for j in range(N))
        det = mpmath.det(G)
        cdf = det / norm
        tail = 1 - cdf
        if not density:
            return cdf, tail
        D = mpmath.matrix(N, N)
        for i in range(N):
            for j in range(N):
                D[i, j] = mpmath.power(s, a + i + j) * mpmath.exp(-s)
        X = mpmath.inverse(G) * D
        tr = mpmath.fsum(X[i, i] for i in range(N))
        return cdf, tail, det * tr / norm


def lue_top_tail(M: int, N: int, s) -> float:
    return float(lue_top_law(M, N, s)[1])


# -- LPP identity, diagnostics -------------------------------------------------------


def lpp_wishart_identity_test(M: int, N: int, trials: int, seed: int, alpha=0.01,
                              workers=None) -> dict:
    if trials < 1000:
        raise ValueError("identity test needs at least 1000 trials")
    T = engine.lpp_trials(seed, 11, trials, M, N, workers=workers)[0]
    lam = spectra_trials(WishartSpec(M, N, scaled=False), seed, trials, tag=12,
                         workers=workers)[:, 0]
    out = ks_two_sample(T, lam, alpha)
    out.update(M=M, N=N, trials=trials, mean_T=float(T.mean()), mean_lambda=float(lam.mean()))
    return out


def esm_diagnostics(spec: WishartSpec, samples: int, seed: int, levels=(4.5, 5.0, 6.0),
                    backend=None) -> dict:
    """Sup distance of the sample-averaged spectral CDF to MP_{N/M}, plus top tails."""
    if samples < 1:
        raise ValueError("need at least one sample")
    scaled = WishartSpec(spec.M, spec.N, True)
    ev = spectra_trials(scaled, seed, samples, backend, tag=13)
    pooled = np.sort(ev.ravel())
    F = mp_cdf(MPLaw(spec.y), pooled)
    k = np.arange(1, len(pooled) + 1) / len(pooled)
    ks = float(max(np.max(np.abs(k - F)), np.max(np.abs(k - 1.0 / len(pooled) - F))))
    top = ev[:, 0]
    return {"M": spec.M, "N": spec.N, "samples": samples, "ks_distance": ks,
            "tail": {str(L): float(np.mean(top > L)) for L in levels}}


def rigidity_envelope(N: int, c: float) -> float:
    """g_c(N) = (log N)^(c log log N)."""
    ln = math.log(N)
    return ln ** (c * math.log(ln)) if ln > 1 else 1.0


def rigidity_report(spectrum: Spectrum, c: float = 1.0, gammas=None) -> RigidityReport:
    spec = spectrum.spec
    N = spec.N
    vals = np.asarray(spectrum.values if spec.scaled else spectrum.values / spec.M)
    if gammas is None:
        gammas = classical_locations(MPLaw(spec.y), N)
    g = rigidity_envelope(N, c)
    if not g < N / 2:
        raise WindowError(f"empty index window: g_c(N) = {g:.3g} >= N/2 for N={N}")
    j = np.arange(1, N + 1)
    dev = np.abs(vals - gammas)
    norm = dev * np.minimum(j, N + 1 - j) ** (1.0 / 3.0) * N ** (2.0 / 3.0)
    lo, hi = math.ceil(g), math.floor(N - g)
    inside = (j >= lo) & (j <= hi)
    if not inside.any():
        raise WindowError(f"empty index window [{g:.3g}, {N - g:.3g}]")
    k = int(np.argmax(np.where(inside, norm, -np.inf)))
    return RigidityReport(dev, norm, c, (lo, hi), float(norm[k]), k + 1)


def linear_statistic(spectrum: Spectrum, f) -> float:
    """tr f = (1/N) sum_i f(lambda_i)."""
    return float(np.mean(f(np.asarray(spectrum.values))))


def concentration_experiment(f, Ns, samples: int, seed: int, aspect: float = 1.0) -> dict:
    """Variance of tr f across samples for each N (M = N / aspect), and its log-log slope."""
    variances = []
    for N in Ns:
        M = int(round(N / aspect))
        ev = spectra_trials(WishartSpec(M, N, True), seed, samples, tag=14 + N)
        variances.append(float(np.var(np.mean(f(ev), axis=1), ddof=1)))
    return {"N": list(Ns), "variance": variances, "slope": loglog_slope(Ns, variances)}


# -- determinantal kernel ------------------------------------------------------------


class ProjectionKernel:
    """K(x, y) = sum_i phi_i(x) phi_i(y), phi_i orthonormal in L^2(R_+, e^{-x} dx).

    The phi_i span x^p for p = (M-N)/2, ..., (M+N)/2 - 1.
    """

    def __init__(self, M: int, N: int, coeffs, dps: int):
        self.M, self.N = M, N
        self.shift = (M - N) // 2
        self._coeffs = coeffs  # lower-triangular, mpmath
        self._dps = dps

    def phi(self, x):
        """Values of the N orthonormal functions at scalar ``x`` (mpmath)."""
        with mpmath.workdps(self._dps):
            x = mpmath.mpf(x)
            powers = [x ** (self.shift + k) for k in range(self.N)]
            return [mpmath.fsum(self._coeffs[i, k] * powers[k] for k in range(i + 1))
                    for i in range(self.N)]

    def matrix(self, xs, ys=None) -> np.ndarray:
        xs = np.atleast_1d(np.asarray(xs, dtype=float))
        ys = xs if ys is None else np.atleast_1d(np.asarray(ys, dtype=float))
        with mpmath.workdps(self._dps):
            px = [self.phi(x) for x in xs]
            py = px if ys is xs else [self.phi(y) for y in ys]
            return np.array([[float(mpmath.fsum(a * b for a, b in zip(u, v))) for v in py]
                             for u in px])

    def __call__(self, x, y) -> float:
        return float(self.matrix([x], [y])[0, 0])

    def trace(self) -> float:
        """int K(x, x) e^{-x} dx by Gauss-Laguerre (exact for these polynomials)."""
        nodes, weights = np.polynomial.laguerre.laggauss(self.M + self.N + 2)
        diag = np.array([self(x, x) for x in nodes])
        return float(weights @ diag)


@lru_cache(maxsize=32)
def build_projection_kernel(M: int, N: int) -> ProjectionKernel:
    if N < 1 or M < N:
        raise DimensionError(f"need M >= N >= 1, got M={M}, N={N}")
    if (M - N) % 2:
        raise ParityError("M - N must be even (half-integer kernels are not supported)")
    if M + N > KERNEL_SIZE_CAP:
        raise ConditioningError(f"M + N = {M + N} exceeds the Gram-Schmidt cap {KERNEL_SIZE_CAP}")
    shift = (M - N) // 2
    dps = 40 + 4 * (M + N)
    with mpmath.workdps(dps):
        # Gram matrix of x^{shift+k} under e^{-x}: (2 shift + k + l)!
        G = mpmath.matrix(N, N)
        for k in range(N):
            for l in range(N):
                G[k, l] = mpmath.factorial(2 * shift + k + l)
        # Gram-Schmidt = Cholesky G = C C^T; orthonormal coefficients are C^{-1}
        C = mpmath.cholesky(G)
        coeffs = mpmath.inverse(C)
    return ProjectionKernel(M, N, coeffs, dps)


def lue_unscaled_density_unnormalized(lams, M: int) -> float:
    lams = np.asarray(lams, dtype=float)
    N = len(lams)
    V = np.prod([lams[i] - lams[j] for i in range(N) for j in range(i + 1, N)])
    return float(V * V * np.prod(lams ** (M - N)) * np.exp(-lams.sum()))


def kernel_density_ratio(M: int, N: int, points) -> np.ndarray:
    """det[K(l_i, l_j)] e^{-sum l} divided by the unnormalised LUE density, per point."""
    K = build_projection_kernel(M, N)
    out = []
    for lam in points:
        lam = np.asarray(lam, dtype=float)
        det = np.linalg.det(K.matrix(lam))
        out.append(det * np.exp(-lam.sum()) / lue_unscaled_density_unnormalized(lam, M))
    return np.array(out)


# -- dominance and top-two tails -----------------------------------------------------


def dominance_check(M: int, N: int, trials: int, seed: int, alpha: float = 0.01,
                    workers=None) -> dict:
    """Is the top eigenvalue for (M+1, N-1) stochastically below that for (M, N)?

    Passes when F_{M+1,N-1}(s) >= F_{M,N}(s) - 2 eps at every sample point,
    eps the DKW half-width.
    """
    if N < 2 or M < N:
        raise DimensionError(f"need M >= N >= 2, got M={M}, N={N}")
    if (M - N) % 2:
        raise ParityError("M - N must be even")
    big = spectra_trials(WishartSpec(M, N, False), seed, trials, tag=21, workers=workers)[:, 0]
    small = spectra_trials(WishartSpec(M + 1, N - 1, False), seed, trials, tag=22,
                           workers=workers)[:, 0]
    pts = np.sort(np.concatenate([big, small]))
    excess = float(np.max(ecdf(big, pts) - ecdf(small, pts)))
    eps = dkw_epsilon(trials, alpha)
    report = {"M": M, "N": N, "trials": trials, "max_excess": excess,
              "band": 2 * eps, "passed": excess <= 2 * eps}
    if N == 2 and M == 2:
        # (3, 1): the top eigenvalue is a sum of three Exp(1), i.e. Gamma(3)
        exact_excess = float(np.max(ecdf(big, pts) - sps.gamma.cdf(pts, 3)))
        report.update(exact_excess=exact_excess, exact_band=eps,
                      exact_passed=exact_excess <= eps)
    return report


def top_two_tail_experiment(N: int, delta: float, budget: int, seed: int,
                            min_acceptance: float = 1e-4, workers=None) -> dict:
    """Among square spectra with lambda_1 > 4 + delta, the share with lambda_2 > 4 + delta/2."""
    if N > 40:
        raise DimensionError("top-two experiment is limited to N <= 40")
    pilot = lue_top_tail(N, N, (4.0 + delta) * N)
    if pilot < min_acceptance:
        raise BudgetError(f"acceptance for N={N}, delta={delta} below {min_acceptance:g}",
                          pilot)
    spec = WishartSpec(N, N, True)
    ev = spectra_trials(spec, seed, budget, tag=23, workers=workers)
    hit = ev[:, 0] > 4.0 + delta
    k = int(np.sum(ev[hit, 1] > 4.0 + delta / 2))
    n = int(hit.sum())
    lo, hi = wilson_interval(k, n)
    return {"N": N, "delta": delta, "budget": budget, "pilot_acceptance": pilot,
            "accepted": n, "both": k, "fraction": k / n if n else math.nan, "ci": [lo, hi]}


def top_eigen_integral_check(M: int, N: int) -> float:
    """int_0^inf tail ds equals the mean of the top unscaled eigenvalue (sanity helper)."""
    val, _ = integrate.quad(lambda s: lue_top_tail(M, N, s), 0, np.inf, limit=200)
    return val
