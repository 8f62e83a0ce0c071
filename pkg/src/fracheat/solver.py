"""Mild-form exponential Euler solvers on a periodic interval [-L, L).

    Y_{k+1} = P_dt (Y_k + dt F(x, Y_k) xi(t_k, x) - dt C F(x, Y_k) d2F(x, Y_k))

with P_dt the exact heat semigroup on the discrete Fourier basis.  The Ito
reference replaces dt xi(t_k, .) by a Gaussian increment with spatial
spectral density c_{H2}^2 |eta|^{1-2H2} on the same frequency mesh.
"""
from __future__ import annotations

import math
import warnings
from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np

from .parabolic import GriddedField, Rect, SpaceTimeGrid, holder_norm
from .spectral_field import (AxisParams, NoiseRealization, SheetSpec, _space_factor, _time_factor,
                             normalization_constant, sample_noise)


class DivergenceError(RuntimeError):
    pass


class ResolutionWarning(UserWarning):
    pass


def heat_step(state: np.ndarray, dt: float, L: float) -> np.ndarray:
    """exp(dt d^2/dx^2) on periodic vectors over [-L, L): mode k scales by exp(-dt (pi k / L)^2)."""
    nx = state.shape[-1]
    k = np.fft.rfftfreq(nx, d=1.0 / nx)
    mult = np.exp(-dt * (np.pi * k / L) ** 2)
    return np.fft.irfft(np.fft.rfft(state, axis=-1) * mult, n=nx, axis=-1)


def _bump(u):
    u = np.asarray(u, float)
    return np.where(np.abs(u) < 1, (1 - u * u) ** 3, 0.0)


def _bump_d(u):
    u = np.asarray(u, float)
    return np.where(np.abs(u) < 1, -6 * u * (1 - u * u) ** 2, 0.0)


@dataclass(frozen=True)
class VectorFieldSpec:
    F: Callable
    d1F: Callable
    d2F: Callable
    a: float
    name: str = "custom"

    def spot_check(self, seed: int = 0, samples: int = 64, h: float = 1e-5) -> float:
        """Largest relative mismatch of d2F against a central difference of F."""
        rng = np.random.default_rng(seed)
        x = rng.uniform(-self.a, self.a, samples)
        y = rng.uniform(-3, 3, samples)
        fd = (self.F(x, y + h) - self.F(x, y - h)) / (2 * h)
        ex = self.d2F(x, y)
        scale = max(np.abs(ex).max(), 1e-12)
        return float(np.abs(fd - ex).max() / scale)


def bump_sin(a: float = 1.0, amp: float = 1.0) -> VectorFieldSpec:
    """F(x, y) = amp (1 - (x/a)^2)^3 sin(y) on |x| < a."""
    return VectorFieldSpec(lambda x, y: amp * _bump(x / a) * np.sin(y),
                           lambda x, y: amp * _bump_d(x / a) / a * np.sin(y),
                           lambda x, y: amp * _bump(x / a) * np.cos(y), a, f"bump_sin(a={a}, amp={amp})")


def bump_affine(a: float = 1.0, amp: float = 1.0, slope: float = 0.0) -> VectorFieldSpec:
    """F(x, y) = amp bump(x/a) (1 + slope y); the slope-0 case is additive noise."""
    return VectorFieldSpec(lambda x, y: amp * _bump(x / a) * (1 + slope * y),
                           lambda x, y: amp * _bump_d(x / a) / a * (1 + slope * y),
                           lambda x, y: amp * slope * _bump(x / a) + 0 * y, a, f"bump_affine(a={a}, amp={amp}, slope={slope})")


def zero_field(a: float = 1.0) -> VectorFieldSpec:
    z = lambda x, y: 0.0 * np.asarray(x) * np.asarray(y)
    return VectorFieldSpec(z, z, z, a, "zero")


@dataclass(frozen=True)
class SolverConfig:
    L: float = 6.0
    nx: int = 1536
    T: float = 0.25
    nt: int = 4096
    psi0: Callable = field(default=lambda x: np.zeros_like(x), compare=False)
    save_rows: int = 257
    guard: float = 1e6

    @property
    def dt(self) -> float:
        return self.T / self.nt

    @property
    def dx(self) -> float:
        return 2 * self.L / self.nx

    @property
    def x(self) -> np.ndarray:
        return -self.L + self.dx * np.arange(self.nx)

    @property
    def save_every(self) -> int:
        every = max(1, int(math.ceil(self.nt / (self.save_rows - 1))))
        while self.nt % every:
            every += 1
        return every

    def check(self, F: VectorFieldSpec):
        if self.L < 2 * F.a + 4 * math.sqrt(self.T) - 1e-12:
            raise ValueError(f"L={self.L} is below 2a + 4 sqrt(T) = {2 * F.a + 4 * math.sqrt(self.T):.4g}")

    def accuracy_number(self) -> float:
        return self.dt * (math.pi * self.nx / (2 * self.L)) ** 2

    @classmethod
    def for_level(cls, n: int, L: float = 6.0, T: float = 0.25, time_margin: int = 2, **kw) -> "SolverConfig":
        """Grid meeting dt <= 4^{-n-time_margin}, dx <= 2^{-n-2}."""
        dx = 2.0 ** (-n - 2)
        nx = int(round(2 * L / dx))
        nt = int(math.ceil(T * 4.0 ** (n + time_margin)))
        return cls(L=L, nx=nx, T=T, nt=nt, **kw)


@dataclass(frozen=True)
class SolutionPath:
    grid: SpaceTimeGrid
    values: np.ndarray = field(repr=False)
    provenance: dict = field(default_factory=dict)

    def field(self) -> GriddedField:
        return GriddedField(self.grid, self.values)

    def final(self) -> np.ndarray:
        return self.values[-1]


def solver_lattice(n_top: int, h_t: float = 16.0, h_x: float | None = None) -> tuple[AxisParams, AxisParams]:
    """Frequency meshes used for solver noise: uniform above the geometric core.

    Time spacing h_t keeps the lattice period 2 pi / h_t longer than the horizon;
    space spacing defaults to a fine uniform mesh.
    """
    return (AxisParams(10, 8, h_t), AxisParams(10, 8, h_x if h_x is not None else 0.5))


def _warn_resolution(spec: SheetSpec, cfg: SolverConfig):
    if cfg.dt > 2.0 ** (-2 * spec.n - 2) or cfg.dx > 2.0 ** (-spec.n - 2):
        warnings.warn(f"grid dt={cfg.dt:.3g}, dx={cfg.dx:.3g} under-resolves noise level n={spec.n} "
                      f"(want dt <= {2.0 ** (-2 * spec.n - 2):.3g}, dx <= {2.0 ** (-spec.n - 2):.3g})",
                      ResolutionWarning, stacklevel=3)


class _NoiseStream:
    """xi^n(t_k, x_j) for blocks of steps on the support columns, for a batch of realizations."""

    def __init__(self, realizations: Sequence[NoiseRealization], cfg: SolverConfig, cols: np.ndarray, block: int = 512):
        self.rs = realizations
        self.cfg = cfg
        self.block = block
        spec = realizations[0].spec
        self.spec = spec
        xs = cfg.x[cols]
        B = _space_factor(spec, xs, "noise")
        c = spec.c_norm
        self.ZB = [2 * c * (r.coeffs @ B.T) for r in realizations]
        self._start = -1
        self._vals = None

    def at(self, k: int) -> np.ndarray:
        s = (k // self.block) * self.block
        if s != self._start:
            t = self.cfg.dt * np.arange(s, min(s + self.block, self.cfg.nt))
            A = _time_factor(self.spec, t, "noise")
            self._vals = np.stack([np.real(A @ zb) for zb in self.ZB], axis=1)  # (steps, paths, cols)
            self._start = s
        return self._vals[k - s]


def _march(cfg: SolverConfig, F: VectorFieldSpec, increment, paths: int, provenance: dict) -> list[SolutionPath]:
    cfg.check(F)
    x = cfg.x
    cols = np.nonzero(np.abs(x) <= F.a)[0]
    xs = x[cols]
    Y = np.tile(np.asarray(cfg.psi0(x), float), (paths, 1))
    every = cfg.save_every
    rows = cfg.nt // every + 1
    out = np.empty((rows, paths, cfg.nx))
    out[0] = Y
    for k in range(cfg.nt):
        y = Y[:, cols]
        Y[:, cols] = y + increment(k, xs, y)
        Y = heat_step(Y, cfg.dt, cfg.L)
        if (k + 1) % every == 0:
            if not np.all(np.isfinite(Y)) or np.abs(Y).max() > cfg.guard:
                raise DivergenceError(f"sup|Y| exceeded {cfg.guard:g} by step {k + 1} (t={(k + 1) * cfg.dt:.4g})")
            out[(k + 1) // every] = Y
    grid = SpaceTimeGrid(0.0, cfg.T, rows, float(x[0]), float(x[-1]), cfg.nx)
    return [SolutionPath(grid, out[:, p, :], dict(provenance, path=p)) for p in range(paths)]


def _smooth_solve(rs: Sequence[NoiseRealization], F: VectorFieldSpec, cfg: SolverConfig, C: float,
                  label: str) -> list[SolutionPath]:
    _warn_resolution(rs[0].spec, cfg)
    noise = _NoiseStream(rs, cfg, np.nonzero(np.abs(cfg.x) <= F.a)[0])
    dt = cfg.dt

    def inc(k, xs, y):
        f = F.F(xs, y)
        drive = f * noise.at(k)
        if C:
            drive = drive - C * f * F.d2F(xs, y)
        return dt * drive

    prov = {"equation": label, "n": rs[0].spec.n, "H1": rs[0].spec.H1, "H2": rs[0].spec.H2,
            "C": C, "F": F.name, "dt": dt, "dx": cfg.dx}
    paths = _march(cfg, F, inc, len(rs), prov)
    return [SolutionPath(p.grid, p.values, dict(p.provenance, seed=r.seed)) for p, r in zip(paths, rs)]


def solve_young(r: NoiseRealization, F: VectorFieldSpec, cfg: SolverConfig) -> SolutionPath:
    if 2 * r.spec.H1 + r.spec.H2 <= 2:
        warnings.warn("2H1 + H2 <= 2: outside the Young regime", stacklevel=2)
    return _smooth_solve([r], F, cfg, 0.0, "young")[0]


def solve_renormalized(r: NoiseRealization, C, F: VectorFieldSpec, cfg: SolverConfig) -> SolutionPath:
    value = float(getattr(C, "value", C))
    return _smooth_solve([r], F, cfg, value, "renormalized")[0]


def solve_batch(rs: Sequence[NoiseRealization], F: VectorFieldSpec, cfg: SolverConfig, C: float = 0.0,
                label: str = "renormalized") -> list[SolutionPath]:
    """Several realizations stepped together (same spec)."""
    return _smooth_solve(rs, F, cfg, float(getattr(C, "value", C)), label)


def ito_spatial_covariance(H2: float, r) -> np.ndarray:
    """c_{H2}^2 int |eta|^{1-2H2} e^{i eta r} d eta = -2 Gamma(2-2H2) cos(pi H2) c^2 |r|^{2H2-2}."""
    c2 = normalization_constant(H2) ** 2
    return -2 * math.gamma(2 - 2 * H2) * math.cos(math.pi * H2) * c2 * np.abs(r) ** (2 * H2 - 2)


def ito_increment_factor(H2: float, n: int, space_axis: AxisParams, x: np.ndarray) -> np.ndarray:
    """Matrix M with  dW(x) = sqrt(dt) 2 Re(M z)  for standard complex z on eta > 0."""
    eta, w = space_axis.build(2.0 ** n, H2)
    c = normalization_constant(H2)
    amp = c * np.sqrt(w) * eta ** (0.5 - H2)
    return np.exp(1j * np.outer(x, eta)) * amp


def solve_ito_reference(H2: float, F: VectorFieldSpec, cfg: SolverConfig, seed: int, n: int = 6,
                        space_axis: AxisParams | None = None) -> SolutionPath:
    """Euler-Maruyama mild stepping with spectrally sampled spatial increments."""
    return solve_ito_batch(H2, F, cfg, seed, 1, n, space_axis)[0]


def solve_ito_batch(H2: float, F: VectorFieldSpec, cfg: SolverConfig, seed: int, paths: int, n: int = 6,
                    space_axis: AxisParams | None = None) -> list[SolutionPath]:
    if not 2 / 3 < H2 < 1:
        raise ValueError("H2 must lie in (2/3, 1)")
    space_axis = space_axis or solver_lattice(n)[1]
    cols = np.nonzero(np.abs(cfg.x) <= F.a)[0]
    M = ito_increment_factor(H2, n, space_axis, cfg.x[cols])
    rng = np.random.default_rng([int(seed), 0x17])
    sq = math.sqrt(cfg.dt)
    m = M.shape[1]

    def inc(k, xs, y):
        z = (rng.standard_normal((y.shape[0], m)) + 1j * rng.standard_normal((y.shape[0], m))) / math.sqrt(2)
        dW = 2 * sq * np.real(z @ M.T)
        return F.F(xs, y) * dW

    prov = {"equation": "ito", "H2": H2, "n": n, "seed": seed, "F": F.name, "dt": cfg.dt, "dx": cfg.dx}
    return _march(cfg, F, inc, paths, prov)


def heat_evolution(cfg: SolverConfig) -> np.ndarray:
    """psi0 evolved to T by the discrete semigroup."""
    return heat_step(np.asarray(cfg.psi0(cfg.x), float), cfg.T, cfg.L)


# convergence studies ---------------------------------------------------------

@dataclass(frozen=True)
class StudyResult:
    rows: list
    drift: dict
    constants: dict


@dataclass(frozen=True)
class StudyRow:
    n: int
    sup_diff: float
    holder_diff: float
    control_drift: float
    C: float


def _holder_of(path_diff: GriddedField, region: Rect, gamma: float, max_nodes: tuple[int, int]) -> float:
    g = path_diff.grid
    st, sx = g.window(region)
    sub = path_diff.values[st, sx]
    t = g.t[st]
    x = g.x[sx]
    # uniform strides keep the subsample a tensor grid
    it = np.arange(0, sub.shape[0], max(1, -(-(sub.shape[0] - 1) // (max_nodes[0] - 1))))
    ix = np.arange(0, sub.shape[1], max(1, -(-(sub.shape[1] - 1) // (max_nodes[1] - 1))))
    grid = SpaceTimeGrid(float(t[it[0]]), float(t[it[-1]]), len(it), float(x[ix[0]]), float(x[ix[-1]]), len(ix))
    f = GriddedField(grid, sub[np.ix_(it, ix)])
    return holder_norm(f, Rect(grid.t_min, grid.t_max, grid.x_min, grid.x_max), gamma)


def convergence_study(master_seed: int, levels: Sequence[int], variant: str, F: VectorFieldSpec,
                      cfg: SolverConfig, H1: float, H2: float, axes: tuple[AxisParams, AxisParams],
                      constants: dict | None = None, gamma: float = 0.5,
                      holder_region: Rect | None = None, holder_nodes=(65, 129)) -> StudyResult:
    """Norms of Y^{n+1} - Y^n for coupled realizations on one common grid.

    variant 'young' uses no correction; 'renormalized' subtracts constants[n]
    and also runs the uncorrected control, whose distance to the corrected
    path is reported as control_drift (per level in ``drift``).
    """
    levels = list(levels)
    top = SheetSpec(H1, H2, max(levels), *axes)
    master = sample_noise(top, master_seed)
    region = holder_region or Rect(cfg.T / 4, cfg.T, -1.0, 1.0)
    paths, drift = {}, {}
    for n in levels:
        r = master.restrict(n)
        C = float(constants[n]) if variant == "renormalized" else 0.0
        paths[n] = _smooth_solve([r], F, cfg, C, variant)[0]
        if variant == "renormalized":
            ctrl = _smooth_solve([r], F, cfg, 0.0, "control")[0]
            drift[n] = float(np.abs(ctrl.values - paths[n].values).max())
    rows = []
    for a, b in zip(levels[:-1], levels[1:]):
        d = paths[b].values - paths[a].values
        diff = GriddedField(paths[a].grid, d)
        rows.append(StudyRow(b, float(np.abs(d).max()), float(_holder_of(diff, region, gamma, holder_nodes)),
                             drift.get(b, float("nan")), float(constants[b]) if constants else 0.0))
    used = {n: float(constants[n]) for n in levels} if variant == "renormalized" else {}
    return StudyResult(rows, drift, used)
