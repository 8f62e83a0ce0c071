import itertools
import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from fracheat.parabolic import (GriddedField, GridError, MultiIndex, Rect, ScaledPoint, SpaceTimeGrid,
                                dyadic_lattice, fit_slope, holder_norm, rect_increment, scaled_degree,
                                scaled_norm)

finite = st.floats(-1e3, 1e3, allow_nan=False, allow_subnormal=False)


def unit_grid(nt=9, nx=9):
    return SpaceTimeGrid(0.0, 1.0, nt, 0.0, 1.0, nx)


@pytest.mark.parametrize("p, expected", [((0, 0), 0.0), ((0, 2), 2.0), ((3, 4), math.sqrt(19))])
def test_scaled_norm_examples(p, expected):
    assert scaled_norm(ScaledPoint(*p)) == pytest.approx(expected, abs=1e-15)


@pytest.mark.parametrize("k, expected", [((1, 0), 2), ((0, 1), 1), ((0, 0), 0), ((2, 3), 7)])
def test_scaled_degree(k, expected):
    assert scaled_degree(MultiIndex(*k)) == expected
    assert MultiIndex(*k).degree == expected


@given(finite, finite, st.floats(1e-3, 1e3))
def test_norm_parabolic_homogeneity(t, x, lam):
    assert scaled_norm((lam ** 2 * t, lam * x)) == pytest.approx(lam * scaled_norm((t, x)), rel=1e-12, abs=1e-300)


@given(finite, finite, finite, finite)
def test_norm_triangle(t1, x1, t2, x2):
    lhs = scaled_norm((t1 + t2, x1 + x2))
    assert lhs <= scaled_norm((t1, x1)) + scaled_norm((t2, x2)) + 1e-9 * (1 + lhs)


@given(finite, finite)
def test_norm_zero_only_at_origin(t, x):
    assert (scaled_norm((t, x)) == 0) == (t == 0 and x == 0)


def test_grid_spacing_and_validation():
    g = SpaceTimeGrid(0.0, 2.0, 5, -1.0, 1.0, 3)
    assert (g.dt, g.dx) == (0.5, 1.0)
    with pytest.raises(GridError):
        SpaceTimeGrid(0.0, 1.0, 1, 0.0, 1.0, 4)
    with pytest.raises(GridError):
        GriddedField(g, np.full((5, 3), np.nan))
    with pytest.raises(GridError):
        GriddedField(g, np.zeros((3, 5)))


def test_rect_increment_additive_and_product():
    g = unit_grid()
    add = GriddedField.from_function(g, lambda t, x: 3 * t - 2 * x)
    prod = GriddedField.from_function(g, lambda t, x: t * x)
    for base, off in [((0, 0), (0.5, 0.25)), ((0.25, 0.125), (0.375, 0.5))]:
        assert rect_increment(add, base, off) == pytest.approx(0, abs=1e-14)
    assert rect_increment(prod, (0, 0), (0.5, 0.75)) == pytest.approx(0.375, abs=1e-14)


def test_rect_increment_matches_four_term_oracle():
    rng = np.random.default_rng(3)
    g = unit_grid()
    f = GriddedField(g, rng.standard_normal(g.shape))
    for _ in range(50):
        i, j = rng.integers(0, 5, 2)
        a, b = rng.integers(0, 5, 2)
        v = f.values
        oracle = v[i + a, j + b] - v[i, j + b] - v[i + a, j] + v[i, j]
        assert rect_increment(f, (i / 8, j / 8), (a / 8, b / 8)) == pytest.approx(oracle, abs=1e-14)


def test_rect_increment_antisymmetry():
    rng = np.random.default_rng(4)
    g = unit_grid()
    f = GriddedField(g, rng.standard_normal(g.shape))
    base, off = (0.25, 0.25), (0.25, 0.375)
    flipped = rect_increment(f, (base[0] + off[0], base[1]), (-off[0], off[1]))
    assert flipped == pytest.approx(-rect_increment(f, base, off), abs=1e-14)


def test_rect_increment_off_grid_report():
    f = GriddedField(unit_grid(), np.zeros((9, 9)))
    with pytest.raises(GridError, match="fractional time index"):
        rect_increment(f, (0.1, 0.0), (0.25, 0.25))


@pytest.mark.parametrize("n, region, count", [
    (0, Rect(-1, 1, -1, 1), 9),
    (1, Rect(0, 1, 0, 1), 15),
    (2, Rect(0, 1, 0, 1), 85),
])
def test_dyadic_lattice_counts(n, region, count):
    pts = dyadic_lattice(n, region)
    assert len(pts) == count
    k1 = np.arange(math.ceil(region.t0 * 4 ** n), math.floor(region.t1 * 4 ** n) + 1)
    k2 = np.arange(math.ceil(region.x0 * 2 ** n), math.floor(region.x1 * 2 ** n) + 1)
    assert len(pts) == k1.size * k2.size


def test_dyadic_lattice_order_time_major():
    pts = dyadic_lattice(1, Rect(0, 1, 0, 1))
    assert pts[:3] == [(0.0, 0.0), (0.0, 0.5), (0.0, 1.0)]
    assert pts == sorted(pts)


@given(st.integers(0, 3), st.floats(-1, 0), st.floats(0.1, 1))
@settings(max_examples=30)
def test_dyadic_lattice_refinement(n, lo, hi):
    region = Rect(lo, hi, lo, hi)
    coarse = set(dyadic_lattice(n, region))
    assert coarse <= set(dyadic_lattice(n + 2, region))
    fine_space = {(p.t, p.x) for p in dyadic_lattice(n + 1, region)}
    assert {(p.t, p.x) for p in coarse if (p.t * 4 ** (n + 1)).is_integer()} <= fine_space


def _holder_brute(f: GriddedField, gamma):
    g = f.grid
    nodes = list(itertools.product(range(g.nt), range(g.nx)))
    best = 0.0
    for (a, b), (c, d) in itertools.combinations(nodes, 2):
        dist = math.sqrt(abs(g.t[a] - g.t[c]) + (g.x[b] - g.x[d]) ** 2)
        if 0 < dist <= 1:
            best = max(best, abs(f.values[a, b] - f.values[c, d]) / dist ** gamma)
    return np.abs(f.values).max() + best


def test_holder_constant():
    f = GriddedField(unit_grid(), np.full((9, 9), -2.5))
    assert holder_norm(f, Rect(0, 1, 0, 1), 0.3) == 2.5


def test_holder_linear_matches_brute_force():
    f = GriddedField.from_function(unit_grid(), lambda t, x: x + 0 * t)
    assert holder_norm(f, Rect(0, 1, 0, 1), 0.5) == pytest.approx(_holder_brute(f, 0.5), rel=1e-14)


def test_holder_random_matches_brute_force():
    rng = np.random.default_rng(0)
    g = SpaceTimeGrid(0.0, 1.5, 7, -1.0, 1.0, 6)
    f = GriddedField(g, rng.standard_normal(g.shape))
    assert holder_norm(f, Rect(0, 1.5, -1, 1), 0.7) == pytest.approx(_holder_brute(f, 0.7), rel=1e-14)


def test_holder_rejects_empty_region():
    f = GriddedField(unit_grid(), np.zeros((9, 9)))
    with pytest.raises(GridError):
        holder_norm(f, Rect(2, 3, 2, 3), 0.5)


def test_holder_heat_bump_increment_exponent():
    # heat flow of a bump is smooth; increments over dyadic separations scale at least like d^gamma
    g = SpaceTimeGrid(0.5, 1.5, 257, -2.0, 2.0, 257)
    f = GriddedField.from_function(g, lambda t, x: np.exp(-x ** 2 / (4 * t)) / np.sqrt(t))
    gamma = 0.95
    assert np.isfinite(holder_norm(f, Rect(0.5, 1.5, -2, 2), gamma))
    shifts = [2, 4, 8, 16]
    incs = [np.abs(f.values[:, k:] - f.values[:, :-k]).max() for k in shifts]
    assert fit_slope(np.log2([k * g.dx for k in shifts]), np.log2(incs))[0] >= gamma
