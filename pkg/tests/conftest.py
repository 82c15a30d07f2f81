import math

import numpy as np
import pytest
from hypothesis import settings

from displacemon import hilbert, protocol

settings.register_profile("default", max_examples=25, deadline=None)
settings.load_profile("default")

ALPHA = 1.9
OMEGA = 2 * math.pi * 125e6


@pytest.fixture(scope="session")
def space():
    return hilbert.FockSpace(256)


@pytest.fixture(scope="session")
def compass_record(space):
    """Ground-state protocol with alpha1 = alpha2 = 1.9i, quarter-period gap."""
    return protocol.interferometer(hilbert.vacuum(space), 1j * ALPHA, 1j * ALPHA)


@pytest.fixture(scope="session")
def compass(compass_record):
    return compass_record.state_at("grating2").normalized()


@pytest.fixture(scope="session")
def thermal_record(space):
    return protocol.interferometer(hilbert.thermal_state(space, 5.0), 1j * ALPHA, 1j * ALPHA)


@pytest.fixture(scope="session")
def checkerboard(thermal_record):
    return thermal_record.state_at("grating2").normalized()


def random_state(rng, dim, n_max=20, mixed=False):
    """Random state supported on the lowest n_max Fock levels."""
    if mixed:
        g = rng.normal(size=(n_max, 3)) + 1j * rng.normal(size=(n_max, 3))
        rho = np.zeros((dim, dim), dtype=complex)
        rho[:n_max, :n_max] = g @ g.conj().T
        return hilbert.DensityMatrix(rho / np.trace(rho).real)
    psi = np.zeros(dim, dtype=complex)
    psi[:n_max] = rng.normal(size=n_max) + 1j * rng.normal(size=n_max)
    return hilbert.MechState(psi / np.linalg.norm(psi))
