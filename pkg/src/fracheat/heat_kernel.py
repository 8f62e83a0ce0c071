"""Forward heat kernel and its dyadic split into a compactly supported part.

Conventions
-----------
G(t, x) = (4 pi t)^(-1/2) exp(-x^2 / 4t) for t > 0 and 0 otherwise.

A smooth step ``chi`` on the parabolic radius r = (t + x^2)^(1/2) equals 1 for
r <= 1/4 and 0 for r >= 1.  With phi(z) = chi(r) - chi(2r) (supported in
1/8 <= r <= 1) the pieces

    K_k(t, x) = phi(4^k t, 2^k x) G(t, x) = 2^k K_0(4^k t, 2^k x)

telescope to K = chi(r) G, and G# = G - K vanishes for r <= 1/4.

Fourier transforms use  f^(xi, eta) = int f(t, x) exp(-i (xi t + eta x)) dt dx,
so that G^ = 1 / (eta^2 + i xi) and (K * e)(z) = K^ e(z) for a plane wave e.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from functools import cached_property

import numpy as np
from scipy.signal import fftconvolve

from .parabolic import GriddedField, GridError, SpaceTimeGrid, scaled_norm_array

R_INNER = 0.25
R_OUTER = 1.0


def heat_kernel(t, x):
    t = np.asarray(t, float)
    x = np.asarray(x, float)
    pos = t > 0
    ts = np.where(pos, t, 1.0)
    out = np.exp(-x * x / (4 * ts)) / np.sqrt(4 * np.pi * ts)
    return np.where(pos, out, 0.0)[()]


def heat_kernel_dx(t, x):
    t = np.asarray(t, float)
    ts = np.where(t > 0, t, 1.0)
    return (-np.asarray(x, float) / (2 * ts) * heat_kernel(t, x))[()]


def heat_kernel_hat(xi, eta):
    return 1.0 / (np.square(eta) + 1j * np.asarray(xi, float))


# smooth step sigma: 1 on s <= 0, 0 on s >= 1, built from exp(-1/u)

def _g(u):
    pos = u > 0
    us = np.where(pos, u, 1.0)
    return np.where(pos, np.exp(-1.0 / us), 0.0), us, pos


def _step(s, order=0):
    s = np.clip(np.asarray(s, float), 0.0, 1.0)
    a, ua, pa = _g(1.0 - s)
    b, ub, pb = _g(s)
    d = a + b
    if order == 0:
        return a / d
    # derivatives of a(s) = g(1-s), b(s) = g(s) with g' = g/u^2, g'' = g(1/u^4 - 2/u^3)
    a1 = -np.where(pa, a / ua ** 2, 0.0)
    b1 = np.where(pb, b / ub ** 2, 0.0)
    num = a1 * b - a * b1
    if order == 1:
        return num / d ** 2
    a2 = np.where(pa, a * (1 / ua ** 4 - 2 / ua ** 3), 0.0)
    b2 = np.where(pb, b * (1 / ub ** 4 - 2 / ub ** 3), 0.0)
    dnum = a2 * b - a * b2
    dd = 2 * d * (a1 + b1)
    return (dnum * d ** 2 - num * dd) / d ** 4


def cutoff(r, order=0):
    """chi(r) and its r-derivatives."""
    w = R_OUTER - R_INNER
    return _step((np.asarray(r, float) - R_INNER) / w, order) / w ** order


def annulus(t, x):
    """phi(t, x) = chi(r) - chi(2 r)."""
    r = scaled_norm_array(t, x)
    return cutoff(r) - cutoff(2 * r)


def _annulus_radial(r, order):
    return cutoff(r, order) - 2.0 ** order * cutoff(2 * r, order)


DERIVATIVES = ((0, 0), (1, 0), (0, 1), (0, 2))


def base_piece(t, x, deriv=(0, 0)):
    """K_0 = phi G or one of its derivatives D^l K_0, l in DERIVATIVES (time order first)."""
    t = np.asarray(t, float)
    x = np.asarray(x, float)
    pos = t > 0
    ts = np.where(pos, t, 1.0)
    r = np.sqrt(ts + x * x)
    G = np.where(pos, heat_kernel(ts, x), 0.0)
    P = _annulus_radial(r, 0)
    deriv = tuple(deriv)
    if deriv == (0, 0):
        return P * G
    P1 = _annulus_radial(r, 1)
    Gt = G * (x * x / (4 * ts * ts) - 1 / (2 * ts))
    Gx = -x / (2 * ts) * G
    if deriv == (1, 0):
        return P1 / (2 * r) * G + P * Gt
    if deriv == (0, 1):
        return P1 * x / r * G + P * Gx
    if deriv == (0, 2):
        P2 = _annulus_radial(r, 2)
        px = P1 * x / r
        pxx = P2 * (x / r) ** 2 + P1 * ts / r ** 3
        return pxx * G + 2 * px * Gx + P * Gt
    raise ValueError(f"unsupported derivative {deriv}; choose from {DERIVATIVES}")


def level_piece(k, t, x, deriv=(0, 0)):
    """D^l K_k(t, x) through the exact rescaling of D^l K_0."""
    sdeg = 2 * deriv[0] + deriv[1]
    return 2.0 ** ((1 + sdeg) * k) * base_piece(4.0 ** k * np.asarray(t, float), 2.0 ** k * np.asarray(x, float), deriv)


@dataclass(frozen=True)
class KernelPieces:
    K: np.ndarray
    G_sharp: np.ndarray
    levels: np.ndarray


@dataclass(frozen=True)
class KernelDecomposition:
    """Dyadic split of the heat kernel with a tabulated K_0 for transforms.

    ``n_max`` is the deepest level summed in pointwise evaluation.  The
    transform table samples K_0 at ``nt_table x nx_table`` midpoints of
    (0, 1] x [0, 1] (K_0 is even in x).
    """

    n_max: int = 12
    nt_table: int = 8192
    nx_table: int = 512
    tail_tol: float = 1e-2
    _cache: dict = field(default_factory=dict, repr=False, compare=False)

    # pointwise -------------------------------------------------------
    def pieces(self, t, x) -> KernelPieces:
        t = np.asarray(t, float)
        x = np.asarray(x, float)
        G = heat_kernel(t, x)
        levels = np.stack([level_piece(k, t, x) for k in range(self.n_max + 1)])
        K = levels.sum(axis=0)
        return KernelPieces(K=K, G_sharp=G - K, levels=levels)

    def K(self, t, x):
        """Truncated sum of levels 0..n_max."""
        r = scaled_norm_array(t, x)
        return (cutoff(r) - cutoff(2.0 ** (self.n_max + 1) * r)) * heat_kernel(t, x)

    def K_full(self, t, x):
        return cutoff(scaled_norm_array(t, x)) * heat_kernel(t, x)

    def G_sharp(self, t, x):
        return (1 - cutoff(scaled_norm_array(t, x))) * heat_kernel(t, x)

    # tabulation ------------------------------------------------------
    @cached_property
    def _table(self):
        nt, nx = self.nt_table, self.nx_table
        dt, dx = 1.0 / nt, 1.0 / nx
        t = (np.arange(nt) + 0.5) * dt
        x = (np.arange(nx) + 0.5) * dx
        T, X = np.meshgrid(t, x, indexing="ij")
        W = base_piece(T, X) * (2 * dt * dx)
        mass = W.sum()
        m_t = (W * T).sum()
        m_xx = (W * X * X).sum()
        band = (0.5 * np.pi / dt, 0.5 * np.pi / dx)
        return t, x, W, band, mass, m_t, m_xx

    @property
    def band(self) -> tuple[float, float]:
        return self._table[3]

    @property
    def mass_K0(self) -> float:
        return self._table[4]

    @property
    def mass_K(self) -> float:
        """int K over the plane (all levels)."""
        return self.mass_K0 * 4.0 / 3.0

    def fourier_K0(self, xi, eta) -> np.ndarray:
        """Outer-product table of K_0^(xi_a, eta_b); zero outside the trusted band."""
        t, x, W, band, *_ = self._table
        xi = np.atleast_1d(np.asarray(xi, float))
        eta = np.atleast_1d(np.asarray(eta, float))
        out = np.zeros((xi.size, eta.size), complex)
        ia = np.nonzero(np.abs(xi) <= band[0])[0]
        ib = np.nonzero(np.abs(eta) <= band[1])[0]
        if ia.size == 0 or ib.size == 0:
            return out
        A = W @ np.cos(np.outer(x, eta[ib]))
        ph = np.outer(xi[ia], t)
        out[np.ix_(ia, ib)] = np.cos(ph) @ A - 1j * (np.sin(ph) @ A)
        return out

    def fourier_K(self, xi, eta) -> np.ndarray:
        """Outer-product table of K^(xi_a, eta_b) for the full kernel K = chi G.

        Inside the trusted band the dyadic series over levels k >= 0 is summed
        from the table, with a moment expansion for the remote tail.  Outside
        the band K^ = G^ - sum_{k<0} (rescaled K_0^), and every negative level
        sits further out where K_0^ is below 1e-9 of its peak, so K^ = G^ there.
        """
        xi = np.atleast_1d(np.asarray(xi, float))
        eta = np.atleast_1d(np.asarray(eta, float))
        axi, aeta = np.abs(xi), np.abs(eta)
        *_, band, mass, m_t, m_xx = self._table
        inner = (axi[:, None] <= band[0]) & (aeta[None, :] <= band[1])
        with np.errstate(divide="ignore", invalid="ignore"):
            out = np.where(inner, 0j, heat_kernel_hat(axi[:, None], aeta[None, :]))
        ia = np.nonzero(axi <= band[0])[0]
        ib = np.nonzero(aeta <= band[1])[0]
        if ia.size and ib.size:
            u, v = axi[ia], aeta[ib]
            top = max(u.max(initial=0.0), v.max(initial=0.0) ** 2, 1e-300)
            n_levels = max(1, int(np.ceil(np.log(top / self.tail_tol) / np.log(4.0))) + 1)
            acc = np.zeros((u.size, v.size), complex)
            for k in range(n_levels):
                acc += 4.0 ** -k * self.fourier_K0(4.0 ** -k * u, 2.0 ** -k * v)
            K = n_levels - 1
            acc += mass * 4.0 ** -K / 3.0
            acc -= (1j * u[:, None] * m_t + 0.5 * (v[None, :] ** 2) * m_xx) * 16.0 ** -K / 15.0
            out[np.ix_(ia, ib)] = acc
        neg = xi < 0
        out[neg] = np.conj(out[neg])
        return out

    def fourier_K_points(self, points) -> np.ndarray:
        pts = np.asarray(points, float).reshape(-1, 2)
        ux, ix = np.unique(pts[:, 0], return_inverse=True)
        ue, ie = np.unique(pts[:, 1], return_inverse=True)
        return self.fourier_K(ux, ue)[ix, ie]

    # grid convolution ------------------------------------------------
    def resolved_level(self, grid: SpaceTimeGrid) -> int:
        """Deepest level with at least four grid nodes per scale on both axes."""
        kt = np.floor(np.log(1.0 / (4 * grid.dt)) / np.log(4.0))
        kx = np.floor(np.log2(1.0 / (4 * grid.dx)))
        return int(min(kt, kx))

    def convolve(self, f: GriddedField, which: str = "K", level: int | None = None,
                 deriv=(0, 0)) -> GriddedField:
        """Discrete causal convolution with K, G#, K_level or D^l K_level.

        Levels finer than the grid resolves enter through their mass times f
        (their first moments are smaller by a further factor 4^-k).  Values of
        f outside the grid are taken as zero.
        """
        g = f.grid
        k_res = self.resolved_level(g)
        if which in ("K_n", "DK_n"):
            if level is None:
                raise ValueError("level required")
            if level > k_res:
                raise GridError(
                    f"level {level} needs dt <= {4.0 ** -level / 4:.3g} and dx <= {2.0 ** -level / 4:.3g}; "
                    f"grid has dt={g.dt:.3g}, dx={g.dx:.3g}")
            d = deriv if which == "DK_n" else (0, 0)
            return GriddedField(g, self._conv_level(f, level, d))
        if k_res < 0:
            raise GridError(f"grid too coarse for K: need dt <= 1/4 and dx <= 1/4, have dt={g.dt:.3g}, dx={g.dx:.3g}")
        top = min(k_res, self.n_max)
        vals = sum(self._conv_level(f, k, (0, 0)) for k in range(top + 1))
        vals = vals + self.mass_K0 * 4.0 ** -top / 3.0 * f.values
        if which == "K":
            return GriddedField(g, vals)
        if which == "G_sharp":
            return GriddedField(g, self._conv_heat(f) - vals)
        raise ValueError(f"unknown kernel {which!r}")

    def _conv_level(self, f: GriddedField, k: int, deriv) -> np.ndarray:
        g = f.grid
        nt_k = min(int(np.floor(4.0 ** -k / g.dt)) + 1, g.nt)
        nx_k = min(int(np.floor(2.0 ** -k / g.dx)), g.nx - 1)
        ts = np.arange(nt_k) * g.dt
        xs = np.arange(-nx_k, nx_k + 1) * g.dx
        T, X = np.meshgrid(ts, xs, indexing="ij")
        ker = level_piece(k, T, X, deriv) * g.dt * g.dx
        full = fftconvolve(f.values, ker, mode="full")
        return full[: g.nt, nx_k: nx_k + g.nx]

    def _conv_heat(self, f: GriddedField) -> np.ndarray:
        g = f.grid
        ts = np.arange(g.nt) * g.dt
        xs = np.arange(-(g.nx - 1), g.nx) * g.dx
        T, X = np.meshgrid(ts, xs, indexing="ij")
        ker = heat_kernel(T, X) * g.dt * g.dx
        full = fftconvolve(f.values, ker, mode="full")
        return full[: g.nt, g.nx - 1: 2 * g.nx - 1]

    def pairing_form(self, eta_fn, z, level: int, deriv=(0, 0), nodes: int = 257) -> float:
        """[D^l K_n * eta](z) as 2^{(|l|-2)n} <eta, S^{2^-n}_z (reflected D^l K_0)>.

        The pairing is a midpoint quadrature over the support of K_0.
        """
        sdeg = 2 * deriv[0] + deriv[1]
        u = (np.arange(4 * nodes) + 0.5) / (4 * nodes)
        v = -1 + (np.arange(2 * nodes) + 0.5) / nodes
        U, V = np.meshgrid(u, v, indexing="ij")
        w = (1.0 / (4 * nodes)) * (1.0 / nodes)
        delta = 2.0 ** -level
        vals = base_piece(U, V, deriv) * eta_fn(z[0] - delta ** 2 * U, z[1] - delta * V)
        return float(2.0 ** ((sdeg - 2) * level) * vals.sum() * w)


def dx_heat_l1(t: float, nx: int = 200001, width: float = 40.0) -> float:
    """int |d/dx G(t, x)| dx by the trapezoid rule on [-width sqrt(t), width sqrt(t)]."""
    x = np.linspace(-width * np.sqrt(t), width * np.sqrt(t), nx)
    return float(np.trapezoid(np.abs(heat_kernel_dx(t, x)), x))


def kernel_pieces(kd: KernelDecomposition, t, x) -> KernelPieces:
    return kd.pieces(t, x)


def convolve(kd: KernelDecomposition, which: str, f: GriddedField, level: int | None = None,
             deriv=(0, 0)) -> GriddedField:
    return kd.convolve(f, which, level, deriv)


def fourier_K(kd: KernelDecomposition, freq_points) -> np.ndarray:
    return kd.fourier_K_points(freq_points)
