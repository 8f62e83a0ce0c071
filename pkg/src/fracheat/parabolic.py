"""Parabolic geometry of the plane.

Time counts twice: ``|(t, x)| = (|t| + x**2) ** 0.5``.  Fields live on uniform
tensor grids with rows indexed by time and columns by space.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import Iterable, NamedTuple

import numpy as np


class ScaledPoint(NamedTuple):
    t: float
    x: float


class MultiIndex(NamedTuple):
    k1: int
    k2: int

    @property
    def degree(self) -> int:
        return 2 * self.k1 + self.k2


class Rect(NamedTuple):
    """Closed rectangle ``[t0, t1] x [x0, x1]``."""

    t0: float
    t1: float
    x0: float
    x1: float


class GridError(ValueError):
    pass


def scaled_norm(p) -> float:
    t, x = p
    return float(np.sqrt(abs(t) + x * x))


def scaled_norm_array(t, x):
    return np.sqrt(np.abs(t) + np.square(x))


def scaled_degree(k: MultiIndex) -> int:
    return 2 * k[0] + k[1]


@dataclass(frozen=True)
class SpaceTimeGrid:
    t_min: float
    t_max: float
    nt: int
    x_min: float
    x_max: float
    nx: int

    def __post_init__(self):
        if self.nt < 2 or self.nx < 2:
            raise GridError(f"grid needs at least 2 nodes per axis, got nt={self.nt}, nx={self.nx}")
        if not (self.t_max > self.t_min and self.x_max > self.x_min):
            raise GridError("grid extents must be increasing")

    @property
    def dt(self) -> float:
        return (self.t_max - self.t_min) / (self.nt - 1)

    @property
    def dx(self) -> float:
        return (self.x_max - self.x_min) / (self.nx - 1)

    @property
    def t(self) -> np.ndarray:
        return np.linspace(self.t_min, self.t_max, self.nt)

    @property
    def x(self) -> np.ndarray:
        return np.linspace(self.x_min, self.x_max, self.nx)

    @property
    def shape(self) -> tuple[int, int]:
        return (self.nt, self.nx)

    def mesh(self):
        return np.meshgrid(self.t, self.x, indexing="ij")

    @classmethod
    def from_spacing(cls, t_min, dt, nt, x_min, dx, nx) -> "SpaceTimeGrid":
        return cls(t_min, t_min + dt * (nt - 1), nt, x_min, x_min + dx * (nx - 1), nx)

    def node_index(self, p, tol: float = 1e-9) -> tuple[int, int]:
        """Index of the node at ``p``; raises GridError if ``p`` is off-grid."""
        ft = (p[0] - self.t_min) / self.dt
        fx = (p[1] - self.x_min) / self.dx
        i, j = int(round(ft)), int(round(fx))
        problems = []
        if abs(ft - i) > tol or not 0 <= i < self.nt:
            problems.append(f"t={p[0]!r} is at fractional time index {ft:.6g} (valid 0..{self.nt - 1})")
        if abs(fx - j) > tol or not 0 <= j < self.nx:
            problems.append(f"x={p[1]!r} is at fractional space index {fx:.6g} (valid 0..{self.nx - 1})")
        if problems:
            raise GridError("off-grid point: " + "; ".join(problems))
        return i, j

    def window(self, region: Rect) -> tuple[slice, slice]:
        t, x = self.t, self.x
        eps_t, eps_x = 1e-9 * self.dt, 1e-9 * self.dx
        it = np.nonzero((t >= region.t0 - eps_t) & (t <= region.t1 + eps_t))[0]
        ix = np.nonzero((x >= region.x0 - eps_x) & (x <= region.x1 + eps_x))[0]
        if it.size == 0 or ix.size == 0:
            raise GridError(f"region {tuple(region)} does not meet the grid")
        return slice(it[0], it[-1] + 1), slice(ix[0], ix[-1] + 1)


@dataclass(frozen=True)
class GriddedField:
    grid: SpaceTimeGrid
    values: np.ndarray = field(repr=False)

    def __post_init__(self):
        v = np.asarray(self.values, dtype=float)
        if v.shape != self.grid.shape:
            raise GridError(f"values have shape {v.shape}, grid expects {self.grid.shape}")
        if not np.all(np.isfinite(v)):
            raise GridError("field contains non-finite values")
        v.setflags(write=False)
        object.__setattr__(self, "values", v)

    @classmethod
    def from_function(cls, grid: SpaceTimeGrid, fn) -> "GriddedField":
        T, X = grid.mesh()
        return cls(grid, np.broadcast_to(fn(T, X), grid.shape).astype(float))

    def at(self, p) -> float:
        i, j = self.grid.node_index(p)
        return float(self.values[i, j])

    def interp(self, t, x):
        """Bilinear interpolation at arbitrary points inside the grid."""
        g = self.grid
        ft = np.clip((np.asarray(t, float) - g.t_min) / g.dt, 0, g.nt - 1)
        fx = np.clip((np.asarray(x, float) - g.x_min) / g.dx, 0, g.nx - 1)
        i = np.minimum(np.floor(ft).astype(int), g.nt - 2)
        j = np.minimum(np.floor(fx).astype(int), g.nx - 2)
        a, b = ft - i, fx - j
        v = self.values
        return ((1 - a) * (1 - b) * v[i, j] + a * (1 - b) * v[i + 1, j]
                + (1 - a) * b * v[i, j + 1] + a * b * v[i + 1, j + 1])

    def scaled(self, c: float) -> "GriddedField":
        return GriddedField(self.grid, c * self.values)


def rect_increment(f: GriddedField, base, offset) -> float:
    s, x = base
    t, y = offset
    corners = [(s + t, x + y), (s, x + y), (s + t, x), (s, x)]
    bad = []
    idx = []
    for c in corners:
        try:
            idx.append(f.grid.node_index(c))
        except GridError as exc:
            bad.append(f"corner {c}: {exc}")
    if bad:
        raise GridError("rectangular increment needs grid corners; " + " | ".join(bad))
    v = f.values
    (a, b), (c, d), (e, g), (h, k) = idx
    return float(v[a, b] - v[c, d] - v[e, g] + v[h, k])


def dyadic_lattice(n: int, region: Rect) -> list[ScaledPoint]:
    """Points ``(4**-n k1, 2**-n k2)`` inside ``region``, time-major order."""
    ht, hx = 4.0 ** -n, 2.0 ** -n
    k1 = np.arange(np.ceil(region.t0 / ht - 1e-9), np.floor(region.t1 / ht + 1e-9) + 1)
    k2 = np.arange(np.ceil(region.x0 / hx - 1e-9), np.floor(region.x1 / hx + 1e-9) + 1)
    return [ScaledPoint(float(a * ht), float(b * hx)) for a in k1 for b in k2]


def lattice_arrays(n: int, region: Rect) -> tuple[np.ndarray, np.ndarray]:
    pts = dyadic_lattice(n, region)
    if not pts:
        return np.empty(0), np.empty(0)
    arr = np.array(pts)
    return arr[:, 0], arr[:, 1]


def holder_norm(f: GriddedField, region: Rect, gamma: float) -> float:
    """Discrete parabolic Holder norm over grid-node pairs at scaled distance <= 1.

    The supremum runs over grid nodes only, so this is a lower bound for the
    continuum norm.
    """
    if not 0 < gamma < 1:
        raise ValueError("gamma must lie in (0, 1)")
    st, sx = f.grid.window(region)
    v = f.values[st, sx]
    if v.size < 2:
        raise GridError("region meets the grid in fewer than two nodes")
    dt, dx = f.grid.dt, f.grid.dx
    nt, nx = v.shape
    best = 0.0
    # Offsets (a, b) with a >= 0 cover every unordered pair once.
    max_a = min(nt - 1, int(np.floor(1.0 / dt + 1e-12)))
    max_b = min(nx - 1, int(np.floor(1.0 / dx + 1e-12)))
    for a in range(0, max_a + 1):
        ta = a * dt
        bs = np.arange(-max_b if a else 1, max_b + 1)
        dist = np.sqrt(ta + (bs * dx) ** 2)
        keep = (dist <= 1.0 + 1e-12) & (dist > 0)
        for b, d in zip(bs[keep], dist[keep]):
            lo, hi = max(0, -b), min(nx, nx - b)
            if hi <= lo:
                continue
            diff = np.abs(v[a:, lo + b:hi + b] - v[:nt - a, lo:hi])
            if diff.size:
                best = max(best, float(diff.max()) / d ** gamma)
    return float(np.abs(v).max()) + best


def fit_slope(x: Iterable[float], y: Iterable[float]) -> tuple[float, float]:
    """Least-squares slope and max absolute residual."""
    x = np.asarray(list(x), float)
    y = np.asarray(list(y), float)
    A = np.vstack([x, np.ones_like(x)]).T
    coef, *_ = np.linalg.lstsq(A, y, rcond=None)
    resid = y - A @ coef
    return float(coef[0]), float(np.abs(resid).max()) if resid.size else 0.0
