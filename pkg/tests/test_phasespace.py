import math

import numpy as np
import pytest
from hypothesis import given, strategies as st
from scipy.interpolate import RegularGridInterpolator

from displacemon import hilbert, phasespace, protocol
from displacemon.errors import GridTooSmall, UnderResolved
from displacemon.hilbert import FockSpace
from displacemon.phasespace import ClassicalCheckerboard, GridSpec, MarginalCurve

from conftest import ALPHA, random_state


# --- Wigner ----------------------------------------------------------------------

def test_vacuum_wigner():
    wg = phasespace.wigner(hilbert.vacuum(FockSpace(64)), GridSpec(8.0, 161))
    assert 0.0 in wg.x
    i = int(np.argmin(np.abs(wg.x)))
    assert wg.values[i, i] == pytest.approx(1 / (2 * math.pi), abs=1e-12)
    xx, pp = np.meshgrid(wg.x, wg.p, indexing="ij")
    # the y integral is cut at the window edge, so away from the centre the error is ~1e-9
    assert np.allclose(wg.values, np.exp(-(xx ** 2 + pp ** 2) / 2) / (2 * math.pi), atol=1e-8)
    assert wg.integral == pytest.approx(1, abs=1e-4)


def test_thermal_wigner_moments():
    rho = hilbert.thermal_state(FockSpace(256), 3.0)
    wg = phasespace.wigner(rho, GridSpec(14.0, 281))
    px = wg.x_marginal()
    var = np.sum(px * wg.x ** 2) * (wg.x[1] - wg.x[0])
    assert var == pytest.approx(7.0, abs=1e-4)
    assert wg.minimum > -1e-8


def test_compass_wigner(compass):
    wg = phasespace.wigner(compass)
    assert wg.minimum < 0
    assert wg.integral == pytest.approx(1, abs=1e-4)
    assert wg.negative_volume() > 0.01


def test_marginal_consistency(compass):
    wg = phasespace.wigner(compass)
    px = phasespace.marginal(compass, 0.0, wg.x)
    pp = phasespace.marginal(compass, math.pi / 2, wg.p)
    assert np.max(np.abs(wg.x_marginal() - px.values)) < 1e-4
    assert np.max(np.abs(wg.p_marginal() - pp.values)) < 1e-4


def test_rotation_covariance():
    state = random_state(np.random.default_rng(21), 64, 6, mixed=True)
    theta = 0.6
    grid = GridSpec(16.0, 321)
    base = phasespace.wigner(state, grid)
    rotated = phasespace.wigner(hilbert.rotate(state, theta), grid)
    interp = RegularGridInterpolator((base.x, base.p), base.values, method="cubic")
    xx, pp = np.meshgrid(rotated.x, rotated.p, indexing="ij")
    inner = (np.abs(xx) < 8) & (np.abs(pp) < 8)
    # R(theta) rho R^dag has W'(x, p) = W(x cos t - p sin t, x sin t + p cos t)
    c, s = math.cos(theta), math.sin(theta)
    pts = np.stack([xx[inner] * c - pp[inner] * s, xx[inner] * s + pp[inner] * c], axis=-1)
    assert np.max(np.abs(rotated.values[inner] - interp(pts))) < 1e-3


def test_grid_guards():
    rho = hilbert.thermal_state(FockSpace(256), 5.0)
    with pytest.raises(GridTooSmall):
        phasespace.wigner(rho, GridSpec(8.0, 201))
    with pytest.raises(GridTooSmall):
        # p range beyond the sampling band pi/h
        phasespace.wigner(hilbert.vacuum(FockSpace(32)), GridSpec(10.0, 21))
    hw, n = GridSpec().resolve(rho)
    assert hw > 12 and n > 1024


# --- characteristic function ---------------------------------------------------------

@pytest.mark.parametrize("alpha", [0.0, 0.5, 1.2j, 0.8 - 0.9j])
def test_vacuum_characteristic(alpha):
    chi = phasespace.characteristic(hilbert.vacuum(FockSpace(64)), alpha)
    assert chi == pytest.approx(math.exp(-abs(alpha) ** 2 / 2), abs=1e-12)


@given(seed=st.integers(0, 2 ** 32 - 1), re=st.floats(-1.5, 1.5), im=st.floats(-1.5, 1.5))
def test_characteristic_bounded(seed, re, im):
    state = random_state(np.random.default_rng(seed), 64, 8, mixed=True)
    assert phasespace.characteristic(state, 0) == pytest.approx(1, abs=1e-12)
    assert abs(phasespace.characteristic(state, complex(re, im))) <= 1 + 1e-12


@pytest.mark.parametrize("alpha", [0.7j, 1.9j, 3.8j, 1.0 + 0.5j])
def test_characteristic_routes_agree(compass, alpha):
    wg = phasespace.wigner(compass)
    assert phasespace.characteristic_from_wigner(wg, alpha) == pytest.approx(
        phasespace.characteristic(compass, alpha), abs=1e-4)


# --- marginals and spectra -----------------------------------------------------------

def test_vacuum_marginals():
    vac = hilbert.vacuum(FockSpace(64))
    x = np.linspace(-8, 8, 321)
    gauss = np.exp(-x ** 2 / 2) / math.sqrt(2 * math.pi)
    assert np.allclose(phasespace.marginal(vac, 0.0, x).values, gauss, atol=1e-14)
    assert phasespace.marginal(vac, 0.0, x).integral == pytest.approx(1, abs=1e-5)


def test_quarter_turn_gives_momentum_marginal():
    state = random_state(np.random.default_rng(13), 64, 8)
    x = np.linspace(-14, 14, 561)
    wg = phasespace.wigner(state, GridSpec(14.0, 561))
    turned = phasespace.marginal(state, math.pi / 2, x)
    assert np.max(np.abs(turned.values - wg.p_marginal())) < 1e-4
    assert turned.values.min() > -1e-9


def test_single_grating_marginal():
    out, prob = protocol.grating(hilbert.vacuum(FockSpace(128)), protocol.GratingSpec(1j * ALPHA))
    curve = phasespace.marginal(out.normalized(), 0.0)
    expected = np.cos(ALPHA * curve.x) ** 2 * np.exp(-curve.x ** 2 / 2) / math.sqrt(2 * math.pi) / prob
    assert np.allclose(curve.values, expected, atol=1e-12)
    assert curve.integral == pytest.approx(1, abs=1e-5)


def test_marginal_coverage_guard():
    with pytest.raises(GridTooSmall):
        phasespace.marginal(hilbert.thermal_state(FockSpace(256), 5.0), 0.0, np.linspace(-5, 5, 101))


def test_cosine_spectrum_single_peak():
    x = np.linspace(-20, 20, 2001)
    k = 1.7
    curve = MarginalCurve(x, np.cos(k * x) ** 2 * np.exp(-x ** 2 / 8) / math.sqrt(8 * math.pi) * 2)
    spec = phasespace.wavenumber_spectrum(curve, k_max=6.0)
    assert len(spec.peaks) == 1
    assert spec.peaks[0][0] == pytest.approx(2 * k, abs=1e-3)


def test_featureless_marginal_has_no_peaks():
    # a hard-edged box would show sinc sidelobes (~22% of DC); a broad smooth
    # distribution has no structure at finite k
    x = np.linspace(-30, 30, 1201)
    curve = phasespace.marginal(hilbert.thermal_state(FockSpace(256), 8.0), 0.0, x)
    assert phasespace.wavenumber_spectrum(curve, k_max=8.0).peaks == []


def test_spectrum_resolution_guard():
    x = np.linspace(-10, 10, 41)
    with pytest.raises(UnderResolved):
        phasespace.wavenumber_spectrum(MarginalCurve(x, np.exp(-x ** 2)), k_max=10.0)


def test_compass_wave_numbers(compass):
    at0 = phasespace.wavenumber_spectrum(phasespace.marginal(compass, 0.0), k_max=8.0)
    at45 = phasespace.wavenumber_spectrum(phasespace.marginal(compass, math.pi / 4), k_max=8.0)
    assert at0.peaks_near(2 * ALPHA, 0.02)
    assert at45.peaks_near(2 * math.sqrt(2) * ALPHA, 0.02)
    # several components at one time, unlike the classical marginal
    assert len(at45.peaks) >= 2


@given(a3=st.floats(0.05, 2.5), theta=st.floats(0, math.pi))
def test_readout_identity(checkerboard, a3, theta):
    rotated = hilbert.rotate(checkerboard, theta)
    curve = phasespace.marginal(rotated, 0.0)
    expected = 0.5 + 0.5 * phasespace.fourier_cosine(curve, 2 * a3)
    assert protocol.pplus(rotated, 1j * a3, 0.0) == pytest.approx(expected, abs=1e-6)


# --- classical checkerboard --------------------------------------------------------------

@pytest.fixture(scope="module")
def board():
    return ClassicalCheckerboard(5.0, ALPHA)


def test_checkerboard_validation():
    with pytest.raises(ValueError):
        ClassicalCheckerboard(0.0, 1.0)


def test_classical_marginal_properties(board):
    flat = phasespace.classical_marginal(board, 0.0)
    assert flat.integral == pytest.approx(1, abs=1e-6)
    # grating shadow at theta = 0, washed out at pi/8
    assert phasespace.fourier_cosine(flat, 2 * ALPHA) == pytest.approx(0.5, abs=1e-6)
    eighth = phasespace.classical_marginal(board, math.pi / 8)
    assert abs(phasespace.fourier_cosine(eighth, 2 * ALPHA)) < 1e-6
    a = phasespace.classical_marginal(board, 0.3).values
    b = phasespace.classical_marginal(board, 0.3 + math.pi / 2).values
    assert np.max(np.abs(a - b)) < 1e-12


def test_classical_pplus_without_checkerboard():
    cb = ClassicalCheckerboard(1.3, 0.0)
    for a3, phi in [(0.2, 0.0), (0.5, 1.0), (0.9, 2.5)]:
        expected = 0.5 + 0.5 * math.exp(-2 * 1.3 ** 2 * a3 ** 2) * math.cos(phi)
        for method in ("closed_form", "separable", "quadrature"):
            assert phasespace.classical_pplus(cb, a3, phi, 0.4, method=method) == pytest.approx(expected, abs=1e-9)


@pytest.mark.parametrize("sigma,alpha", [(5.0, 1.9), (1.0, 0.8), (2.0, 2.5)])
@pytest.mark.parametrize("theta", [0.0, 0.3, math.pi / 4, 1.2])
def test_classical_routes_agree(sigma, alpha, theta):
    cb = ClassicalCheckerboard(sigma, alpha)
    for ratio in (0.5, 1.0, math.sqrt(2), 1.7):
        a3 = ratio * alpha
        closed = phasespace.classical_pplus(cb, a3, 0.0, theta)
        assert phasespace.classical_pplus(cb, a3, 0.0, theta, "separable") == pytest.approx(closed, abs=1e-12)
        assert phasespace.classical_pplus(cb, a3, 0.0, theta, "quadrature") == pytest.approx(closed, abs=1e-6)


def test_classical_phase_quadrature(board):
    assert phasespace.classical_pplus(board, 1.3, math.pi / 2, 0.2) == pytest.approx(0.5, abs=1e-15)


def test_classical_map_features_at_loci(board):
    thetas, ratios = phasespace.map_grid()
    values = phasespace.classical_pplus_map(board, thetas, ratios)
    found = {(round(f.theta / math.pi, 6), f.ratio) for f in phasespace.find_map_features(values, thetas, ratios)}
    assert found == {(0.0, 1.0), (0.25, 1.4375), (0.5, 1.0), (0.75, 1.4375)}


def test_map_grid():
    thetas, ratios = phasespace.map_grid(4, 5, 2.0)
    assert np.allclose(thetas, [0, math.pi / 4, math.pi / 2, 3 * math.pi / 4])
    assert np.allclose(ratios, [0.4, 0.8, 1.2, 1.6, 2.0])


def test_feature_detector_periodic_theta():
    thetas, ratios = phasespace.map_grid(8, 6)
    values = np.full((8, 6), 0.5)
    values[0, 3] = 0.6
    values[7, 3] = 0.55
    feats = phasespace.find_map_features(values, thetas, ratios)
    assert [(f.theta, f.ratio) for f in feats] == [(0.0, ratios[3])]
    values[0, 0] = 0.9  # first column is not reported
    assert len(phasespace.find_map_features(values, thetas, ratios)) == 1
