"""Renormalization constant, K-Levy areas over smooth noise, and area moments.

The constant is

    C^n = c^2 int_{D_n} Re K^(xi, eta) |xi|^{1-2H1} |eta|^{1-2H2} dxi deta,

the expectation E[(K * xi^n)(z) xi^n(z)].  The box D_n is cut into parabolic
shells D_j minus D_{j-1}; each shell is two rectangles, and each rectangle gets
a tensor Gauss rule whose Jacobi factor absorbs the power weight on the axis
it touches.  The region below shell J0 uses K^ ~ K^(0, 0).
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
from scipy.special import roots_jacobi, roots_legendre

from .besov import TestFunction, ScaledTest
from .heat_kernel import KernelDecomposition, heat_kernel_hat
from .parabolic import GriddedField, SpaceTimeGrid, fit_slope
from .spectral_field import (NoiseRealization, SheetSpec, evaluate, evaluate_tensor,
                             fourier_K_on_lattice, normalization_constant, sample_noise)


class PreconditionError(ValueError):
    pass


def _check_window(H1, H2, allow_boundary=True):
    s = 2 * H1 + H2
    ok = 5 / 3 < s <= 2 + 1e-12 if allow_boundary else 5 / 3 < s < 2 - 1e-12
    if not ok:
        bound = "5/3 < 2H1+H2 <= 2" if allow_boundary else "5/3 < 2H1+H2 < 2"
        raise PreconditionError(f"need {bound}, got 2H1+H2 = {s:.6g}")


def _jacobi(p, a, b, beta):
    """Nodes/weights on [a, b] for the weight (u - a)^beta."""
    x, w = roots_jacobi(p, 0.0, beta)
    h = (b - a) / 2
    return a + h * (x + 1), w * h ** (1 + beta)


def _legendre(p, a, b):
    x, w = roots_legendre(p)
    h = (b - a) / 2
    return a + h * (x + 1), w * h


def _shell_integral(j, H1, H2, p, khat):
    """Integral over the positive-quadrant shell [0,4^j]x[0,2^j] minus [0,4^(j-1)]x[0,2^(j-1)]."""
    a1, a2 = 1 - 2 * H1, 1 - 2 * H2
    u, wu = _legendre(p, 4.0 ** (j - 1), 4.0 ** j)
    v, wv = _jacobi(p, 0.0, 2.0 ** j, a2)
    total = (wu * u ** a1) @ khat(u, v) @ wv
    u, wu = _jacobi(p, 0.0, 4.0 ** (j - 1), a1)
    v, wv = _legendre(p, 2.0 ** (j - 1), 2.0 ** j)
    total += wu @ khat(u, v) @ (wv * v ** a2)
    return complex(total)


@dataclass(frozen=True)
class RenormConstant:
    n: int
    H1: float
    H2: float
    value: float
    rel_error: float
    imag_residual: float
    mesh: dict = field(default_factory=dict)

    def __post_init__(self):
        if not self.value > 0:
            raise ValueError(f"renormalization constant must be positive, got {self.value}")


class RenormTable:
    """C^n for all n up to n_top from a single pass over the shells."""

    J0 = -6

    def __init__(self, H1, H2, n_top, kd: KernelDecomposition | None = None, nodes=(24, 32)):
        _check_window(H1, H2)
        self.H1, self.H2, self.n_top = H1, H2, n_top
        self.kd = kd or KernelDecomposition()
        self.nodes = nodes
        c2 = (normalization_constant(H1) * normalization_constant(H2)) ** 2
        a1, a2 = 1 - 2 * H1, 1 - 2 * H2
        base = self.kd.mass_K * (4.0 ** self.J0) ** (1 + a1) / (1 + a1) * (2.0 ** self.J0) ** (1 + a2) / (1 + a2)
        runs = []
        for p in nodes:
            pos = [_shell_integral(j, H1, H2, p, lambda u, v: self.kd.fourier_K(u, v))
                   for j in range(self.J0 + 1, n_top + 1)]
            runs.append(np.cumsum(pos))
        neg = [_shell_integral(j, H1, H2, nodes[-1], lambda u, v: self.kd.fourier_K(-u, v))
               for j in range(self.J0 + 1, n_top + 1)]
        fine = runs[-1]
        # four quadrants: (+,+) and (-,-) conjugate, (+,-) equals (+,+) since K is even in x
        total = 2 * (fine + np.cumsum(neg)) + 4 * base
        self.values = {n: c2 * total[n - self.J0 - 1].real for n in range(0, n_top + 1)}
        coarse = 4 * (runs[0].real + base)
        self.rel_errors = {n: abs(coarse[n - self.J0 - 1] - 4 * (fine[n - self.J0 - 1].real + base))
                           / abs(4 * (fine[n - self.J0 - 1].real + base)) for n in range(0, n_top + 1)}
        self.imag = {n: abs(total[n - self.J0 - 1].imag) / abs(total[n - self.J0 - 1].real)
                     for n in range(0, n_top + 1)}

    def constant(self, n: int) -> RenormConstant:
        return RenormConstant(n, self.H1, self.H2, float(self.values[n]), float(self.rel_errors[n]),
                              float(self.imag[n]),
                              {"shells": f"{self.J0 + 1}..{n}", "gauss_nodes": list(self.nodes),
                               "inner_region": f"K^(0,0) below shell {self.J0}"})


def renorm_constant(n: int, H1: float, H2: float, kd: KernelDecomposition | None = None,
                    max_rel_error: float = 1e-4) -> RenormConstant:
    c = RenormTable(H1, H2, n, kd).constant(n)
    if c.rel_error > max_rel_error:
        raise ArithmeticError(f"quadrature error estimate {c.rel_error:.3g} exceeds {max_rel_error:g}")
    return c


def fourier_G_series(kd: KernelDecomposition, xi, eta, k_neg: int = 14) -> np.ndarray:
    """G^ rebuilt as sum over all integer levels of rescaled K_0^ (table based)."""
    xi = np.atleast_1d(np.asarray(xi, float))
    eta = np.atleast_1d(np.asarray(eta, float))
    acc = kd.fourier_K(xi, eta)  # levels k >= 0 with tail
    for k in range(1, k_neg + 1):
        acc = acc + 4.0 ** k * kd.fourier_K0(4.0 ** k * xi, 2.0 ** k * eta)
    return acc


@dataclass(frozen=True)
class LimitCheck:
    rescaled: float
    limit: float
    limit_closed_form_G: float

    @property
    def rel_gap(self) -> float:
        return abs(self.rescaled - self.limit) / abs(self.limit)


def renorm_limit_check(H1: float, H2: float, n: int, kd: KernelDecomposition | None = None,
                       table: RenormTable | None = None, p: int = 32) -> LimitCheck:
    """Rescaled C^n against c^2 int_{[-1,1]^2} Re G^ |xi|^{1-2H1}|eta|^{1-2H2}.

    G^ is parabolically homogeneous of degree -2, so the box integral is the
    shell [0,1]^2 minus [0,1/4]x[0,1/2] divided by 1 - 2^{-2(2-2H1-H2)}.
    """
    _check_window(H1, H2, allow_boundary=False)
    kd = kd or KernelDecomposition()
    table = table if table is not None and table.n_top >= n else RenormTable(H1, H2, n, kd)
    gamma = 2 - 2 * H1 - H2
    rescaled = table.values[n] * 2.0 ** (-2 * n * gamma)
    c2 = (normalization_constant(H1) * normalization_constant(H2)) ** 2
    factor = 4 * c2 / (1 - 2.0 ** (-2 * gamma))
    series = _shell_integral(0, H1, H2, p, lambda u, v: fourier_G_series(kd, u, v)).real
    closed = _shell_integral(0, H1, H2, p, lambda u, v: heat_kernel_hat(u[:, None], v[None, :])).real
    return LimitCheck(float(rescaled), float(factor * series), float(factor * closed))


# Levy areas -------------------------------------------------------------

@dataclass(frozen=True)
class LevyAreaSlice:
    base: tuple
    values: GriddedField
    variant: str
    constant: RenormConstant | None = None


def levy_area(r: NoiseRealization, kd: KernelDecomposition, base, window: SpaceTimeGrid,
              variant: str = "canonical", C: RenormConstant | None = None) -> LevyAreaSlice:
    """z -> [(K*xi)(z) - (K*xi)(base)] xi(z), minus C for the renormalized variant."""
    if variant not in ("canonical", "renormalized"):
        raise ValueError(f"unknown variant {variant!r}")
    if (variant == "renormalized") != (C is not None):
        raise ValueError("a constant is required exactly for the renormalized variant")
    kx = evaluate_tensor(r, window.t, window.x, "K_noise", kd)
    k0 = evaluate(r, [base], "K_noise", kd)[0]
    xi = evaluate_tensor(r, window.t, window.x, "noise")
    vals = (kx - k0) * xi
    if C is not None:
        vals = vals - C.value
    return LevyAreaSlice(tuple(base), GriddedField(window, vals), variant, C)


def area_at(r: NoiseRealization, kd, base, points, C: float = 0.0) -> np.ndarray:
    pts = np.asarray(points, float).reshape(-1, 2)
    kz = evaluate(r, pts, "K_noise", kd)
    k0 = evaluate(r, [base], "K_noise", kd)[0]
    return (kz - k0) * evaluate(r, pts, "noise") - C


def _full_lattice_eval(r: NoiseRealization, points, kind, kd=None) -> np.ndarray:
    """Independent evaluator: sums the whole Hermitian lattice without the 2 Re shortcut."""
    spec = r.spec
    xi_f, eta, Z = r.full_lattice
    at = np.abs(xi_f) ** (-spec.H1 - 0.5) * np.sqrt(np.concatenate([spec.xi[1][::-1], spec.xi[1]]))
    ax = np.abs(eta) ** (-spec.H2 - 0.5) * np.sqrt(spec.eta_signed[1])
    if kind == "K_noise":
        Kh = fourier_K_on_lattice(spec, kd)
        Z = Z * np.vstack([np.conj(Kh[::-1, ::-1]), Kh])
    out = []
    for t, x in np.asarray(points, float).reshape(-1, 2):
        a = 1j * xi_f * at * np.exp(1j * t * xi_f)
        b = 1j * eta * ax * np.exp(1j * x * eta)
        out.append(spec.c_norm * np.sum(a[:, None] * Z * b[None, :]))
    out = np.array(out)
    return out.real


def chen_defect(r: NoiseRealization, kd: KernelDecomposition, x, y, probes,
                variant: str = "canonical", C: RenormConstant | None = None) -> float:
    """Relative max defect of  A_x - A_y = [(K*xi)(y) - (K*xi)(x)] xi  over the probes."""
    c = 0.0 if C is None else C.value
    lhs = area_at(r, kd, x, probes, c) - area_at(r, kd, y, probes, c)
    kxy = _full_lattice_eval(r, [y, x], "K_noise", kd)
    noise = _full_lattice_eval(r, probes, "noise")
    rhs = (kxy[0] - kxy[1]) * noise
    scale = max(float(np.abs(kxy).max() * np.abs(noise).max()), 1e-300)
    return float(np.abs(lhs - rhs).max() / scale)


# area moment scan ---------------------------------------------------------

@dataclass(frozen=True)
class AreaScan:
    n: int
    m: int
    levels: tuple
    moments: tuple
    std_errors: tuple
    samples: int

    def slope(self) -> float:
        return fit_slope(self.levels, np.log2(self.moments))[0]


def area_moment_scan(spec_m: SheetSpec, n: int, psi: TestFunction, levels, base=(0.5, 0.0),
                     samples: int = 1000, seed: int = 0, kd: KernelDecomposition | None = None,
                     constants: tuple[float, float] = (0.0, 0.0), quad_nodes: tuple[int, int] | None = None,
                     min_samples: int = 1000) -> AreaScan:
    """Monte Carlo second moments of <A^n_base - A^m_base, S^{2^-l}_base psi>.

    The level-n field is the restriction of each level-m draw (coupled).
    ``constants`` are (C^n, C^m); they enter through the mean of psi only.
    Pairings use a tensor Gauss-Legendre rule over the rescaled support.
    """
    _check_window(spec_m.H1, spec_m.H2)
    if samples < min_samples:
        raise ValueError(f"need at least {min_samples} samples")
    m = spec_m.n
    if not 0 <= n <= m:
        raise ValueError("need 0 <= n <= m")
    kd = kd or KernelDecomposition()
    levels = tuple(levels)
    spec_n = spec_m.restrict(n)
    Kh = fourier_K_on_lattice(spec_m, kd)
    nx_n = spec_n.xi[0].size
    ne_full, ne_n = spec_m.eta[0].size, spec_n.eta[0].size
    cols = slice(ne_full - ne_n, ne_full + ne_n)
    c = spec_m.c_norm
    xi, _ = spec_m.xi
    eta, _ = spec_m.eta_signed
    at, ax = spec_m.amplitudes()

    plans = []
    for lev in levels:
        d = 2.0 ** -lev
        # phase range of a product of two band-limited fields over the support
        if quad_nodes is None:
            qt = int(min(512, 24 + 2 * spec_m.cut_t * d * d))
            qx = int(min(256, 24 + 2 * spec_m.cut_x * d))
        else:
            qt, qx = quad_nodes
        ut, wt = roots_legendre(qt)
        ux, wx = roots_legendre(qx)
        tt = base[0] + 0.5 * d * d * ut
        xx = base[1] + 0.5 * d * ux
        test = ScaledTest(psi, d, tuple(base))(tt[:, None], xx[None, :])
        W = test * np.outer(0.5 * d * d * wt, 0.5 * d * wx)
        A = np.exp(1j * np.outer(np.concatenate([tt, [base[0]]]), xi)) * (1j * xi * at)
        B = np.exp(1j * np.outer(np.concatenate([xx, [base[1]]]), eta)) * (1j * eta * ax)
        plans.append((A, B, W))

    def fields(Z, A, B, rows, cs):
        Ar, Br = A[:, rows], B[:, cs]
        plain = 2 * c * np.real(Ar @ (Z[rows][:, cs] @ Br.T))
        kfield = 2 * c * np.real(Ar @ ((Z[rows][:, cs] * Kh[rows][:, cs]) @ Br.T))
        return plain, kfield

    vals = np.empty((samples, len(levels)))
    all_rows = slice(0, xi.size)
    all_cols = slice(0, eta.size)
    mean_psi = psi.mean
    for s in range(samples):
        Z = sample_noise(spec_m, seed + s).coeffs
        for i, (A, B, W) in enumerate(plans):
            out = []
            for rows, cs, Cc in ((slice(0, nx_n), cols, constants[0]), (all_rows, all_cols, constants[1])):
                xi_f, k_f = fields(Z, A, B, rows, cs)
                area = (k_f[:-1, :-1] - k_f[-1, -1]) * xi_f[:-1, :-1]
                out.append(np.sum(area * W) - Cc * mean_psi)
            vals[s, i] = out[0] - out[1]
    sq = vals ** 2
    mom = sq.mean(axis=0)
    se = sq.std(axis=0, ddof=1) / math.sqrt(samples)
    return AreaScan(n, m, levels, tuple(float(v) for v in mom), tuple(float(v) for v in se), samples)
