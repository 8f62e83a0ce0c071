import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st
from scipy import integrate

from fracheat.besov import FATHER, MOTHER, Profile, TestFunction
from fracheat.parabolic import GriddedField, SpaceTimeGrid, fit_slope, rect_increment
from fracheat.spectral_field import (AxisParams, SheetSpec, eval_noise_density, eval_sheet, evaluate_grid,
                                     exact_increment_moment, exact_noise_variance, exact_second_moment,
                                     exact_test_moment, normalization_constant, normalization_integral,
                                     normalization_integral_closed_form, sample_noise,
                                     truncated_noise_variance)

hurst = st.floats(0.05, 0.95)
SMALL = SheetSpec(0.5, 0.8, 2, AxisParams(4, 4), AxisParams(4, 4))


def test_normalization_half():
    assert normalization_constant(0.5) == pytest.approx((2 * math.pi) ** -0.5, rel=1e-9)


@pytest.mark.parametrize("H", [0.1, 0.2, 0.35, 0.5, 0.65, 0.8, 0.9])
def test_normalization_closed_form_oracle(H):
    assert normalization_integral(H) == pytest.approx(normalization_integral_closed_form(H), rel=1e-8)
    assert normalization_constant(H) ** 2 * normalization_integral_closed_form(H) == pytest.approx(1, rel=1e-8)


def test_normalization_brute_quadrature_oracle():
    # plain truncated quadrature of 4 sin^2(s/2) s^{-2H-1}, tail added analytically
    H = 0.8
    f = lambda s: 4 * math.sin(s / 2) ** 2 * s ** (-2 * H - 1)
    body = sum(integrate.quad(f, a, a + 1.0, limit=200)[0] for a in np.arange(0.0, 400.0))
    tail = 2 * 400.0 ** (-2 * H) / (2 * H)  # mean of 4 sin^2 is 2
    assert 2 * (body + tail) == pytest.approx(normalization_integral(H), rel=1e-3)


def test_normalization_distinct():
    a, b = normalization_constant(0.2), normalization_constant(0.8)
    assert a > 0 and b > 0 and abs(a - b) > 1e-3


@given(hurst, st.integers(4, 12), st.integers(2, 16))
@settings(max_examples=25)
def test_axis_mesh_partitions_range(H, inner, per):
    nodes, widths = AxisParams(inner, per).build(2.0 ** 6, H)
    assert np.all(widths > 0) and np.all(nodes > 0)
    assert widths.sum() == pytest.approx(2.0 ** 6, rel=1e-12)
    edges = np.concatenate([[0], np.cumsum(widths)])
    assert np.all((nodes > edges[:-1]) & (nodes < edges[1:]))


@given(hurst)
@settings(max_examples=20)
def test_innermost_node_integrates_density(H):
    # the single node in [0, eps] reproduces int_0^eps u^{1-2H} du
    eps = 2.0 ** -10
    nodes, widths = AxisParams().build(4.0, H)
    exact = eps ** (2 - 2 * H) / (2 - 2 * H)
    assert widths[0] * nodes[0] ** (1 - 2 * H) == pytest.approx(exact, rel=1e-12)


def test_meshes_nest_across_levels():
    big, small = SheetSpec(0.5, 0.8, 6), SheetSpec(0.5, 0.8, 4)
    assert np.array_equal(big.xi[0][: small.xi[0].size], small.xi[0])
    assert np.array_equal(big.eta[0][: small.eta[0].size], small.eta[0])


def test_lattice_symmetric_excludes_zero():
    eta, w = SMALL.eta_signed
    assert np.array_equal(eta, -eta[::-1]) and np.array_equal(w, w[::-1])
    assert 0 not in eta and np.all(SMALL.xi[0] > 0)


def test_sampling_deterministic_and_coupled():
    spec = SheetSpec(0.5, 0.8, 5)
    a, b = sample_noise(spec, 11), sample_noise(spec, 11)
    assert np.array_equal(a.coeffs, b.coeffs)
    assert not np.array_equal(a.coeffs, sample_noise(spec, 12).coeffs)
    for n in range(0, 5):
        assert np.array_equal(a.restrict(n).coeffs, sample_noise(spec.restrict(n), 11).coeffs)


def test_full_lattice_hermitian():
    r = sample_noise(SMALL, 3)
    xi, eta, Z = r.full_lattice
    assert np.array_equal(Z, np.conj(Z[::-1, ::-1]))
    assert np.array_equal(xi, -xi[::-1])


def test_full_lattice_sum_is_real():
    r = sample_noise(SMALL, 4)
    xi, eta, Z = r.full_lattice
    t, x = 0.3, -0.7
    val = np.sum(Z * np.exp(1j * t * xi)[:, None] * np.exp(1j * x * eta)[None, :])
    assert abs(val.imag) <= 1e-12 * np.abs(Z).sum()


def test_coefficient_moments():
    N = 10000
    Z = np.array([sample_noise(SMALL, s).coeffs[0, 0] for s in range(N)])
    for part in (Z.real, Z.imag):
        assert abs(part.mean()) <= 4 * part.std() / math.sqrt(N)
    v = np.abs(Z) ** 2
    assert abs(v.mean() - 1.0) <= 5 * v.std() / math.sqrt(N)  # unit variance; amplitudes carry the weights


def test_sheet_pinned_on_axes():
    r = sample_noise(SheetSpec(0.5, 0.8, 5), 9)
    pts = [(0.0, 0.3), (0.0, -2.0), (0.7, 0.0), (0.0, 0.0)]
    assert np.all(eval_sheet(r, pts) == 0.0)


def test_sheet_covariance_monte_carlo():
    spec = SheetSpec(0.5, 0.5, 3, AxisParams(6, 4), AxisParams(6, 4))
    p, q = (1.0, 1.0), (0.5, 2.0)
    N = 4000
    vals = np.array([eval_sheet(sample_noise(spec, s), [p, q]) for s in range(N)])
    prod = vals[:, 0] * vals[:, 1]
    assert abs(prod.mean() - exact_second_moment(spec, p, q)) <= 3.5 * prod.std() / math.sqrt(N)


def test_noise_density_centered_and_stationary():
    spec = SheetSpec(0.5, 0.8, 2, AxisParams(4, 4), AxisParams(4, 4))
    N = 4000
    vals = np.array([eval_noise_density(sample_noise(spec, s), [(0.1, 0.2), (1.7, -3.0)]) for s in range(N)])
    ex = exact_noise_variance(spec)
    for j in range(2):
        assert abs(vals[:, j].mean()) <= 4 * vals[:, j].std() / math.sqrt(N)
        sq = vals[:, j] ** 2
        assert abs(sq.mean() - ex) <= 4 * sq.std() / math.sqrt(N)


@pytest.mark.parametrize("H1, H2", [(0.5, 0.8), (0.7, 0.6)])
def test_noise_variance_closed_form(H1, H2):
    # midpoint rule, second order in the octave spacing
    errs = []
    for per in (8, 32):
        spec = SheetSpec(H1, H2, 6, AxisParams(10, per), AxisParams(10, per))
        errs.append(abs(exact_noise_variance(spec) / truncated_noise_variance(spec) - 1))
    assert errs[0] < 1e-3
    assert errs[1] < errs[0] / 10


def test_second_moment_examples():
    spec = SheetSpec(0.5, 0.5, 8)
    assert exact_second_moment(spec, (0.0, 1.0), (1.0, 1.0)) == 0.0
    assert exact_second_moment(spec, (1.0, 1.0), (1.0, 0.0)) == 0.0
    assert exact_second_moment(spec, (1.0, 1.0), (2.0, 3.0)) == pytest.approx(1.0, rel=0.02)
    assert exact_second_moment(SheetSpec(0.7, 0.8, 10), (1.0, 1.0), (1.0, 1.0)) == pytest.approx(1.0, rel=0.02)


def test_second_moment_monotone_in_n():
    vals = [exact_second_moment(SheetSpec(0.6, 0.8, n), (0.7, 0.4), (0.7, 0.4)) for n in range(0, 9)]
    assert all(b >= a for a, b in zip(vals, vals[1:]))


@pytest.mark.parametrize("H1, H2", [(0.5, 0.8), (0.9, 0.9), (0.3, 0.6)])
def test_increment_doubling(H1, H2):
    spec = SheetSpec(H1, H2, 8)
    for o in (0.125, 0.25):
        assert exact_increment_moment(spec, (2 * o, 0.5)) / exact_increment_moment(spec, (o, 0.5)) == \
            pytest.approx(2 ** (2 * H1), rel=0.01)
        assert exact_increment_moment(spec, (0.5, 2 * o)) / exact_increment_moment(spec, (0.5, o)) == \
            pytest.approx(2 ** (2 * H2), rel=0.01)


def test_increment_rejects_zero_offset():
    with pytest.raises(ValueError):
        exact_increment_moment(SMALL, (0.0, 0.5))


def test_increment_monte_carlo_two_bases():
    spec = SheetSpec(0.5, 0.8, 3, AxisParams(6, 4), AxisParams(6, 4))
    g = SpaceTimeGrid(0.0, 2.0, 9, -1.0, 1.0, 9)
    N = 3000
    ex = exact_increment_moment(spec, (0.5, 0.5))
    for base in [(0.0, -1.0), (1.0, 0.0)]:
        sq = []
        for s in range(N):
            f = evaluate_grid(sample_noise(spec, s), g)
            sq.append(rect_increment(f, base, (0.5, 0.5)) ** 2)
        sq = np.array(sq)
        assert abs(sq.mean() - ex) <= 3.5 * sq.std() / math.sqrt(N)


def test_tail_decay_positive_exponent():
    # E|Delta(X^m - X^n)|^2 = E|Delta X^m|^2 - E|Delta X^n|^2 for disjoint modes
    m = 12
    big = exact_increment_moment(SheetSpec(0.5, 0.8, m), (0.25, 0.25))
    ns = np.arange(3, 9)
    tail = [big - exact_increment_moment(SheetSpec(0.5, 0.8, int(n)), (0.25, 0.25)) for n in ns]
    eps = -fit_slope(ns, np.log2(tail))[0]
    assert eps > 0


def test_test_moment_zero_function():
    zero = TestFunction(Profile((0.0,)), FATHER)
    assert exact_test_moment(SheetSpec(0.5, 0.8, 6), zero, 2) == 0.0


def test_test_moment_slope():
    spec = SheetSpec(0.5, 0.8, 10, AxisParams(10, 16), AxisParams(10, 16))
    psi = TestFunction(MOTHER, FATHER)
    levels = range(0, 7)
    slope, resid = fit_slope(levels, np.log2([exact_test_moment(spec, psi, lev) for lev in levels]))
    assert slope == pytest.approx(2 * (3 - 2 * 0.5 - 0.8), abs=0.1)
    assert resid < 0.05
