import math

import numpy as np
import pytest
from hypothesis import given, strategies as st
from scipy.special import eval_genlaguerre, gammaln

from displacemon import hilbert
from displacemon.errors import NotConverged, TruncationRisk, ZeroProbability
from displacemon.hilbert import FockSpace

from conftest import random_state


def laguerre_element(m, n, alpha):
    """<m|D(alpha)|n> from the associated-Laguerre closed form."""
    if m >= n:
        lognorm = 0.5 * (gammaln(n + 1) - gammaln(m + 1))
        return (np.exp(lognorm - 0.5 * abs(alpha) ** 2) * alpha ** (m - n)
                * eval_genlaguerre(n, m - n, abs(alpha) ** 2))
    # <m|D(a)|n> = conj(<n|D(-a)|m>)
    return np.conj(laguerre_element(n, m, -alpha))


def test_ladder_commutator():
    space = FockSpace(40)
    a, adag, n, x, p = hilbert.ladder_ops(space)
    comm = x @ p - p @ x
    # exact away from the truncation edge
    assert np.allclose(comm[:-1, :-1], 2j * np.eye(39), atol=1e-12)
    assert np.allclose(adag @ a, n)


@pytest.mark.parametrize("alpha", [0.3, 1.2j, 0.8 - 1.1j, 1.9j])
def test_displacement_matches_laguerre_elements(alpha):
    space = FockSpace(128)
    d = hilbert.displacement(space, alpha)
    for m in range(12):
        for n in range(12):
            assert d[m, n] == pytest.approx(laguerre_element(m, n, alpha), abs=1e-11)


@pytest.mark.parametrize("alpha", [0.4j, 1.9j, -2.2j, 0.7 + 0.2j, 1.5])
def test_displacement_routes_agree(alpha):
    space = FockSpace(256)
    d1 = hilbert.displacement(space, alpha)
    d2 = hilbert.displacement_spectral(space, alpha)
    # compare on the low-lying block where truncation cannot matter
    assert np.max(np.abs(d1[:64, :64] - d2[:64, :64])) < 1e-10


def test_displacement_guard():
    with pytest.raises(TruncationRisk):
        hilbert.displacement(FockSpace(32), 2.1)
    with pytest.raises(TruncationRisk):
        hilbert.coherent_state(FockSpace(32), 2.5j)


def test_coherent_state_is_displaced_vacuum(space):
    beta = 1.3 - 0.6j
    a = hilbert.coherent_state(space, beta)
    b = hilbert.apply(hilbert.vacuum(space), hilbert.displacement(space, beta))
    assert hilbert.fidelity(a, b) == pytest.approx(1.0, abs=1e-12)
    m = hilbert.quadrature_moments(a)
    assert m["mean_x"] == pytest.approx(2 * beta.real, abs=1e-10)
    assert m["mean_p"] == pytest.approx(2 * beta.imag, abs=1e-10)
    assert m["var_x"] == pytest.approx(1.0, abs=1e-10)


def test_rotation_heisenberg_picture():
    space = FockSpace(60)
    _, _, _, x, p = hilbert.ladder_ops(space)
    for theta in (0.3, math.pi / 2, 2.0):
        r = hilbert.rotation(space, theta)
        lhs = r.conj().T @ x @ r
        rhs = x * math.cos(theta) + p * math.sin(theta)
        assert np.allclose(lhs[:-1, :-1], rhs[:-1, :-1], atol=1e-12)


def test_rotated_coherent_state(space):
    beta = 1.1 + 0.4j
    theta = 0.7
    rotated = hilbert.rotate(hilbert.coherent_state(space, beta), theta)
    expected = hilbert.coherent_state(space, beta * np.exp(-1j * theta))
    assert hilbert.fidelity(rotated, expected) == pytest.approx(1.0, abs=1e-12)


def test_thermal_state_moments(space):
    rho = hilbert.thermal_state(space, 5.0)
    m = hilbert.quadrature_moments(rho)
    assert m["mean_n"] == pytest.approx(5.0, abs=1e-9)
    assert m["var_x"] == pytest.approx(11.0, abs=1e-8)
    assert rho.weight == pytest.approx(1.0, abs=1e-14)
    with pytest.raises(TruncationRisk):
        hilbert.thermal_state(FockSpace(64), 5.0)


def test_condition_tracks_weight(space):
    rho = hilbert.vacuum(space)
    proj = np.zeros((space.dim, space.dim))
    proj[1, 1] = 1
    with pytest.raises(ZeroProbability):
        hilbert.condition(rho, proj)
    half = np.eye(space.dim) / math.sqrt(2)
    out, prob = hilbert.condition(rho, half)
    assert prob == pytest.approx(0.5)
    assert out.weight == pytest.approx(0.5)


@given(seed=st.integers(0, 2 ** 32 - 1), mixed=st.booleans())
def test_fidelity_bounds(seed, mixed):
    rng = np.random.default_rng(seed)
    a = random_state(rng, 32, 10, mixed)
    b = random_state(rng, 32, 10, mixed)
    f = hilbert.fidelity(a, b)
    assert -1e-9 <= f <= 1 + 1e-9
    assert hilbert.fidelity(a, a) == pytest.approx(1.0, abs=1e-6)


def test_health_check_flags_tail_population():
    space = FockSpace(40)
    hilbert.check_health(hilbert.vacuum(space))
    with pytest.raises(TruncationRisk):
        hilbert.check_health(hilbert.fock_state(space, 39))


def test_hermite_functions_orthonormal():
    x = np.linspace(-25, 25, 8001)
    psi = hilbert.hermite_functions(30, x)
    gram = psi @ psi.T * (x[1] - x[0])
    assert np.allclose(gram, np.eye(30), atol=1e-10)


def test_vacuum_density_and_position_weights(space):
    x = np.linspace(-6, 6, 121)
    dens = hilbert.position_density(hilbert.vacuum(space), x)
    assert np.allclose(dens, np.exp(-x ** 2 / 2) / math.sqrt(2 * math.pi), atol=1e-14)
    rng = np.random.default_rng(3)
    rho = random_state(rng, 64, 15, mixed=True)
    w = hilbert.position_weights(rho)
    nodes = hilbert.position_nodes(FockSpace(64))
    _, _, _, xop, _ = hilbert.ladder_ops(FockSpace(64))
    assert np.sum(w) == pytest.approx(1.0, abs=1e-12)
    assert np.sum(w * nodes ** 2) == pytest.approx(np.trace(xop @ xop @ rho.matrix).real, abs=1e-10)


def test_position_nodes_are_scaled_gauss_hermite():
    nodes = hilbert.position_nodes(FockSpace(20))
    gh, _ = np.polynomial.hermite.hermgauss(20)
    assert np.allclose(nodes, math.sqrt(2) * gh, atol=1e-12)


def test_embed_round_trip(space):
    coh = hilbert.coherent_state(FockSpace(64), 0.5j)
    big = hilbert.embed(coh, 128)
    assert big.dim == 128
    assert hilbert.fidelity(hilbert.embed(big, 64), coh) == pytest.approx(1.0, abs=1e-14)


def test_converge_check_reports_and_raises():
    def scenario(space):
        return {"n": hilbert.quadrature_moments(hilbert.coherent_state(space, 1.0))["mean_n"]}

    report = hilbert.converge_check(scenario, (64, 128), tol=1e-9)
    assert report.passed and report.max_deviation < 1e-12

    with pytest.raises(NotConverged):
        hilbert.converge_check(lambda space: float(space.dim), (64, 128))


def test_thermal_convergence_at_128_vs_256():
    """n = 5 thermal P(x) converges across dim 128 -> 256 (64 is refused)."""
    x = np.linspace(-15, 15, 61)

    def scenario(space):
        return hilbert.position_density(hilbert.thermal_state(space, 5.0), x)

    report = hilbert.converge_check(scenario, (128, 256), tol=1e-6)
    assert report.passed
