"""Scaled test functions, pairings and negative-order regularity estimators."""
from __future__ import annotations

from dataclasses import dataclass
from functools import cached_property, singledispatch

import numpy as np
from numpy.polynomial import polynomial as P
from scipy.signal import fftconvolve

from .parabolic import GriddedField, GridError, Rect, fit_slope, lattice_arrays
from .spectral_field import NoiseRealization, fourier_K_on_lattice

_GL_NODES, _GL_WEIGHTS = np.polynomial.legendre.leggauss(96)


@dataclass(frozen=True)
class Profile:
    """Polynomial on [-1/2, 1/2], zero outside; coefficients in increasing degree."""

    coef: tuple

    def __call__(self, u):
        u = np.asarray(u, float)
        return np.where(np.abs(u) <= 0.5, P.polyval(u, self.coef), 0.0)

    def deriv(self, k: int) -> "Profile":
        return Profile(tuple(P.polyder(self.coef, k)))

    @cached_property
    def mean(self) -> float:
        c = P.polyint(self.coef)
        return float(P.polyval(0.5, c) - P.polyval(-0.5, c))

    def ft(self, a) -> np.ndarray:
        """int psi(u) e^{i a u} du, exact for every real a."""
        a = np.asarray(a, float)
        out = np.empty(a.shape, complex)
        small = np.abs(a) <= 60.0
        if small.any():
            u = 0.5 * _GL_NODES
            w = 0.5 * _GL_WEIGHTS * P.polyval(u, self.coef)
            out[small] = np.exp(1j * np.outer(a[small], u)) @ w
        big = ~small
        if big.any():
            ab = a[big]
            acc = np.zeros(ab.shape, complex)
            d = np.asarray(self.coef, float)
            k = 0
            while d.size and np.any(d != 0):
                hi = P.polyval(0.5, d) * np.exp(0.5j * ab)
                lo = P.polyval(-0.5, d) * np.exp(-0.5j * ab)
                acc += (-1) ** k * (hi - lo) / (1j * ab) ** (k + 1)
                d = P.polyder(d)
                k += 1
            out[big] = acc
        return out


# (1 - 4u^2)^3 has a triple zero at +-1/2, so both profiles are C^2 on the line.
_BUMP = P.polypow([1.0, 0.0, -4.0], 3)
FATHER = Profile(tuple(_BUMP * 35.0 / 16.0))
MOTHER = Profile(tuple(P.polymulx(_BUMP) * 16.0))


@dataclass(frozen=True)
class TestFunction:
    """Tensor product time(t) * space(x), supported in [-1/2,1/2]^2."""

    time: Profile
    space: Profile
    name: str = ""

    __test__ = False  # not a pytest class

    def __call__(self, t, x):
        return self.time(t) * self.space(x)

    @property
    def support_radius(self) -> float:
        return float(np.sqrt(0.5 + 0.25))

    @property
    def mean(self) -> float:
        return self.time.mean * self.space.mean

    @cached_property
    def c2_norm(self) -> float:
        u = np.linspace(-0.5, 0.5, 2001)
        vals = []
        for kt, kx in ((0, 0), (1, 0), (0, 1), (0, 2)):
            a = np.abs(self.time.deriv(kt)(u)).max() if kt else np.abs(self.time(u)).max()
            b = np.abs(self.space.deriv(kx)(u)).max() if kx else np.abs(self.space(u)).max()
            vals.append(a * b)
        return float(max(vals))

    def ft(self, xi, eta):
        return np.outer(self.time.ft(xi), self.space.ft(eta))


@dataclass(frozen=True)
class ScaledTest:
    """S^delta_center psi: delta^-3 psi((t - c_t)/delta^2, (x - c_x)/delta)."""

    psi: TestFunction
    delta: float
    center: tuple

    __test__ = False

    def __call__(self, t, x):
        d = self.delta
        return d ** -3 * self.psi((np.asarray(t) - self.center[0]) / d ** 2, (np.asarray(x) - self.center[1]) / d)

    @property
    def support(self) -> Rect:
        d = self.delta
        return Rect(self.center[0] - d * d / 2, self.center[0] + d * d / 2,
                    self.center[1] - d / 2, self.center[1] + d / 2)

    @property
    def mean(self) -> float:
        return self.psi.mean

    @property
    def sup(self) -> float:
        u = np.linspace(-0.5, 0.5, 2001)
        return self.delta ** -3 * float(np.abs(self.psi.time(u)).max() * np.abs(self.psi.space(u)).max())


def scale_test(psi, delta: float, center=(0.0, 0.0)) -> ScaledTest:
    if not 0 < delta <= 1:
        raise ValueError("delta must lie in (0, 1]")
    if isinstance(psi, ScaledTest):
        c = psi.center
        return ScaledTest(psi.psi, psi.delta * delta,
                          (center[0] + delta ** 2 * c[0], center[1] + delta * c[1]))
    return ScaledTest(psi, delta, tuple(center))


def standard_family() -> list[TestFunction]:
    return [TestFunction(FATHER, FATHER, "father-father"),
            TestFunction(MOTHER, FATHER, "mother-father"),
            TestFunction(FATHER, MOTHER, "father-mother"),
            TestFunction(MOTHER, MOTHER, "mother-mother")]


def zero_mean(family) -> list[TestFunction]:
    return [p for p in family if abs(p.mean) < 1e-12]


# spectral fields -----------------------------------------------------

@dataclass(frozen=True)
class SpectralField:
    """A realization viewed as a field: kind is 'noise', 'K_noise' or 'sheet'."""

    realization: NoiseRealization
    kind: str = "noise"
    kd: object = None

    def coefficients(self) -> np.ndarray:
        z = self.realization.coeffs
        if self.kind == "K_noise":
            return z * fourier_K_on_lattice(self.realization.spec, self.kd)
        return z


def _mode_factors(field: SpectralField, psi: TestFunction, delta, ct, cx):
    spec = field.realization.spec
    xi, _ = spec.xi
    eta, _ = spec.eta_signed
    at, ax = spec.amplitudes()
    ft = psi.time.ft(delta ** 2 * xi)
    fx = psi.space.ft(delta * eta)
    T = np.exp(1j * np.outer(ct, xi)) * ft
    S = np.exp(1j * np.outer(cx, eta)) * fx
    if field.kind == "sheet":
        T = (T - psi.time.mean) * at
        S = (S - psi.space.mean) * ax
    else:
        T = T * (1j * xi * at)
        S = S * (1j * eta * ax)
    return T, S


def spectral_pairings(field: SpectralField, psi: TestFunction, delta: float, ct, cx) -> np.ndarray:
    """Pairings with S^delta psi centred on the tensor lattice ct x cx."""
    T, S = _mode_factors(field, psi, delta, np.atleast_1d(ct), np.atleast_1d(cx))
    Z = field.coefficients()
    return 2 * field.realization.spec.c_norm * np.real(T @ Z @ S.T)


@singledispatch
def pair(field, test) -> float:
    raise TypeError(f"cannot pair {type(field).__name__} with a test function")


@pair.register
def _(field: GriddedField, test) -> float:
    if not isinstance(test, ScaledTest):
        test = ScaledTest(test, 1.0, (0.0, 0.0))
    _check_resolution(field, test.delta)
    sup = test.support
    g = field.grid
    if sup.t0 < g.t_min - 1e-12 or sup.t1 > g.t_max + 1e-12 or sup.x0 < g.x_min - 1e-12 or sup.x1 > g.x_max + 1e-12:
        raise GridError(f"test support {tuple(sup)} leaves the grid")
    st, sx = g.window(sup)
    T, X = np.meshgrid(g.t[st], g.x[sx], indexing="ij")
    # psi vanishes on the boundary of its support, so the trapezoid rule is a plain sum
    return float(np.sum(field.values[st, sx] * test(T, X)) * g.dt * g.dx)


@pair.register
def _(field: SpectralField, test) -> float:
    if not isinstance(test, ScaledTest):
        test = ScaledTest(test, 1.0, (0.0, 0.0))
    return float(spectral_pairings(field, test.psi, test.delta, [test.center[0]], [test.center[1]])[0, 0])


def _check_resolution(field: GriddedField, delta: float):
    g = field.grid
    if g.dt > delta ** 2 / 4 or g.dx > delta / 4:
        raise GridError(f"scale {delta:.4g} needs dt <= {delta ** 2 / 4:.4g} and dx <= {delta / 4:.4g}; "
                        f"grid has dt={g.dt:.4g}, dx={g.dx:.4g}")


def _subsample(n: int, cap: int) -> np.ndarray:
    if n <= cap:
        return np.arange(n)
    return np.unique(np.linspace(0, n - 1, cap).round().astype(int))


@singledispatch
def level_pairings(field, psi: TestFunction, level: int, region: Rect, cap: int = 4096) -> np.ndarray:
    """Pairings at dyadic lattice points of the given level inside region."""
    raise TypeError(type(field).__name__)


@level_pairings.register
def _(field: GriddedField, psi: TestFunction, level: int, region: Rect, cap: int = 4096) -> np.ndarray:
    delta = 2.0 ** -level
    _check_resolution(field, delta)
    g = field.grid
    # correlate with psi sampled on the grid, then read off lattice nodes
    mt = int(np.floor(delta ** 2 / 2 / g.dt))
    mx = int(np.floor(delta / 2 / g.dx))
    ut = np.arange(-mt, mt + 1) * g.dt
    ux = np.arange(-mx, mx + 1) * g.dx
    T, X = np.meshgrid(ut, ux, indexing="ij")
    ker = ScaledTest(psi, delta, (0.0, 0.0))(T, X)[::-1, ::-1] * g.dt * g.dx
    corr = fftconvolve(field.values, ker, mode="valid")
    ct, cx = lattice_arrays(level, region)
    if ct.size == 0:
        return np.empty(0)
    i = np.round((ct - g.t_min) / g.dt).astype(int) - mt
    j = np.round((cx - g.x_min) / g.dx).astype(int) - mx
    ok = (i >= 0) & (i < corr.shape[0]) & (j >= 0) & (j < corr.shape[1])
    idx = np.nonzero(ok)[0]
    idx = idx[_subsample(idx.size, cap)]
    return corr[i[idx], j[idx]]


@level_pairings.register
def _(field: SpectralField, psi: TestFunction, level: int, region: Rect, cap: int = 4096) -> np.ndarray:
    delta = 2.0 ** -level
    ht, hx = 4.0 ** -level, 2.0 ** -level
    kt = np.arange(np.ceil(region.t0 / ht - 1e-9), np.floor(region.t1 / ht + 1e-9) + 1)
    kx = np.arange(np.ceil(region.x0 / hx - 1e-9), np.floor(region.x1 / hx + 1e-9) + 1)
    side = max(1, int(np.sqrt(cap)))
    ct = kt[_subsample(kt.size, max(1, cap // min(side, kx.size)))] * ht
    cx = kx[_subsample(kx.size, side)] * hx
    return spectral_pairings(field, psi, delta, ct, cx).ravel()


def besov_estimate(field, family, alpha: float, region: Rect, max_level: int) -> float:
    if alpha >= 0:
        raise ValueError("alpha must be negative")
    best = 0.0
    for psi in family:
        for lev in range(max_level + 1):
            vals = level_pairings(field, psi, lev, region, cap=1 << 30)
            if vals.size:
                best = max(best, 2.0 ** (lev * alpha) * float(np.abs(vals).max()))
    return best


@dataclass(frozen=True)
class SlopeFit:
    alpha: float
    levels: tuple
    rms: tuple
    max_residual: float


def regularity_slope(field, family, region: Rect, levels, cap: int = 4096) -> SlopeFit:
    """Fit RMS pairing ~ 2^{-level * alpha} over the zero-mean members of the family."""
    levels = list(levels)
    if len(levels) < 3:
        raise ValueError("need at least three levels")
    members = zero_mean(family) or list(family)
    rms = []
    for lev in levels:
        vals = np.concatenate([level_pairings(field, psi, lev, region, cap) for psi in members])
        rms.append(float(np.sqrt(np.mean(vals ** 2))) if vals.size else 0.0)
    if min(rms) <= 0:
        raise ValueError("degenerate fit: zero pairing variance at some level")
    slope, resid = fit_slope([-lev for lev in levels], np.log2(rms))
    return SlopeFit(slope, tuple(levels), tuple(rms), resid)


def exact_rms_curve(spec, family, levels, kd=None):
    """Deterministic RMS curve from exact second moments (averaged over members)."""
    from .spectral_field import exact_test_moment
    members = zero_mean(family) or list(family)
    return [float(np.sqrt(np.mean([exact_test_moment(spec, p, lev, kd=kd) for p in members]))) for lev in levels]
