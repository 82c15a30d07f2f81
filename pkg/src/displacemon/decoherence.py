"""Qubit dephasing during a grating and thermal-phonon addition afterwards.

Dephasing: the qubit picks up a random phase sqrt(2 gamma) W with W ~ N(0, t),
which averages the grating coherence down by exp(-gamma t).  Phonon addition:
a Gaussian mixture of displacements with mean |beta|^2 = n', which damps
the characteristic function by exp(-n' |xi|^2).
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Callable

import numpy as np

from . import hilbert, protocol
from .errors import TruncationRisk, ZeroProbability
from .hilbert import DensityMatrix, FockSpace, State
from .phasespace import characteristic

NEGLIGIBLE_WEIGHT = 1e-16


@dataclass(frozen=True)
class DephasingSpec:
    gamma: float
    t: float
    n_traj: int = 10_000
    seed: int = 0

    def __post_init__(self):
        if self.gamma < 0 or self.t < 0:
            raise ValueError("gamma and t must be non-negative")
        if self.n_traj < 1:
            raise ValueError("n_traj must be >= 1")
        if not 0 <= self.seed < 2 ** 64:
            raise ValueError("seed must be a 64-bit unsigned integer")

    @property
    def gamma_t(self) -> float:
        return self.gamma * self.t


@dataclass(frozen=True)
class ThermalAddSpec:
    nprime: float
    quadrature_points: int = 31

    def __post_init__(self):
        if self.nprime < 0:
            raise ValueError("n' must be non-negative")
        if self.quadrature_points < 1:
            raise ValueError("quadrature_points must be >= 1")


def _displaced_pair(rho: np.ndarray, d: np.ndarray):
    """(D^dag rho D, D rho D^dag, D rho D, D^dag rho D^dag)."""
    dd = d.conj().T
    return dd @ rho @ d, d @ rho @ dd, d @ rho @ d, dd @ rho @ dd


def _sign(outcome: str) -> float:
    if outcome not in ("+", "-"):
        raise ValueError("outcome must be '+' or '-'")
    return 1.0 if outcome == "+" else -1.0


def _finish(state: State, unnorm: np.ndarray):
    prob = float(np.trace(unnorm).real / state.weight)
    if prob < hilbert.MIN_PROBABILITY:
        raise ZeroProbability(f"outcome probability {prob:.3g}")
    out = DensityMatrix(0.5 * (unnorm + unnorm.conj().T))
    return out.normalized(), prob


def dephased_grating_analytic(state: State, alpha: complex, phi: float, outcome: str, gamma_t: float):
    """Conditional state after a grating whose qubit dephased by exp(-gamma t).

    rho' ~ e^{-gt} U rho U^dag + (1 - e^{-gt})/4 (D^dag rho D + D rho D^dag),
    with U the ideal grating operator.  Returns (normalised rho', probability).
    """
    if gamma_t < 0:
        raise ValueError("gamma*t must be non-negative")
    _sign(outcome)
    space = FockSpace(state.dim)
    rho = state.to_density().matrix
    ups = protocol.grating_operator(space, alpha, phi, outcome)
    d = hilbert.displacement_spectral(space, alpha)
    a, b, _, _ = _displaced_pair(rho, d)
    decay = math.exp(-gamma_t)
    unnorm = decay * ups @ rho @ ups.conj().T + 0.25 * (1 - decay) * (a + b)
    return _finish(state, unnorm)


def pplus_dephased(state: State, alpha: complex, phi: float, gamma_t: float, outcome: str = "+") -> float:
    """p_pm = 1/2 pm (e^{-gt}/2) Re[e^{i phi} chi(2 alpha)].

    The phase convention is that of the grating operator
    (D^dag pm e^{i phi} D)/2, i.e. p+ = Tr[cos^2(|alpha| x + phi/2) rho] at
    gamma t = 0 for imaginary alpha.
    """
    chi = characteristic(state, 2 * complex(alpha)) / state.weight
    return 0.5 + _sign(outcome) * 0.5 * math.exp(-gamma_t) * (np.exp(1j * phi) * chi).real


@dataclass(frozen=True)
class MonteCarloResult:
    state: DensityMatrix
    probability: float
    stderr: float
    samples: np.ndarray  # W(t) per trajectory
    trajectory_probabilities: np.ndarray
    seed: int


def sample_noise(spec: DephasingSpec) -> np.ndarray:
    """W(t) for each trajectory: one Gaussian increment of variance t."""
    rng = np.random.Generator(np.random.Philox(spec.seed))
    return rng.normal(0.0, math.sqrt(spec.t), size=spec.n_traj)


def dephasing_monte_carlo(state: State, alpha: complex, phi: float, outcome: str,
                          spec: DephasingSpec) -> MonteCarloResult:
    """Average the conditional grating state over sampled qubit phase noise.

    Trajectory k sees phase phi + sqrt(2 gamma) W_k.  Its unnormalised state
    U_k rho U_k^dag is linear in exp(i phi_k), so the average only needs the
    sample mean of that phase factor.  The standard error is that of the
    mean of per-trajectory outcome probabilities.
    """
    sgn = _sign(outcome)
    w = sample_noise(spec)
    phases = phi + math.sqrt(2 * spec.gamma) * w
    factors = np.exp(1j * phases)
    chi = characteristic(state, 2 * complex(alpha)) / state.weight
    probs = 0.5 + sgn * 0.5 * (factors * chi).real
    mean_factor = complex(factors.mean())

    space = FockSpace(state.dim)
    rho = state.to_density().matrix
    d = hilbert.displacement_spectral(space, alpha)
    a, b, c, e = _displaced_pair(rho, d)
    unnorm = 0.25 * (a + b + sgn * (mean_factor * c + mean_factor.conjugate() * e))
    out, prob = _finish(state, unnorm)
    stderr = float(probs.std(ddof=1) / math.sqrt(spec.n_traj)) if spec.n_traj > 1 else math.inf
    return MonteCarloResult(out, prob, stderr, w, probs, spec.seed)


# --- thermal phonon addition ----------------------------------------------------

def _kick_nodes(nprime: float, points: int):
    """Gauss-Hermite nodes/weights for a real Gaussian of variance n'/2."""
    t, w = np.polynomial.hermite.hermgauss(points)
    return math.sqrt(nprime) * t, w / math.sqrt(math.pi)


def _check_extent(space: FockSpace, nodes: np.ndarray, weights: np.ndarray) -> None:
    used = np.abs(nodes[weights > NEGLIGIBLE_WEIGHT])
    if used.size and used.max() ** 2 >= space.dim / 8:
        raise TruncationRisk(
            f"phonon-addition quadrature reaches |beta| = {used.max():.3g}; dim {space.dim} supports < {math.sqrt(space.dim / 8):.3g}"
        )


def _kick_mixture(rho: np.ndarray, vecs: np.ndarray, nodes_x: np.ndarray,
                  kicks: np.ndarray, weights: np.ndarray) -> np.ndarray:
    """sum_i w_i exp(i u_i x) rho exp(-i u_i x) in the x eigenbasis."""
    r = vecs.T @ rho @ vecs
    diff = nodes_x[:, None] - nodes_x[None, :]
    factor = np.zeros_like(diff)
    for u, w in zip(kicks, weights):
        factor += w * np.cos(u * diff)
    return vecs @ (r * factor) @ vecs.T


def thermal_add(state: State, spec) -> DensityMatrix:
    """int d^2 beta exp(-|beta|^2/n')/(pi n') D(beta) rho D^dag(beta).

    D(beta) factorises into a position kick exp(i Im(beta) x) and a
    momentum kick; each Gaussian average is a 1-D Gauss-Hermite sum applied
    in the eigenbasis of the quadrature it commutes with.  ``spec`` may be a
    ThermalAddSpec or a bare n'.
    """
    if not isinstance(spec, ThermalAddSpec):
        spec = ThermalAddSpec(float(spec))
    rho = state.to_density().matrix
    if spec.nprime == 0:
        return DensityMatrix(rho.copy())
    space = FockSpace(state.dim)
    kicks, weights = _kick_nodes(spec.nprime, spec.quadrature_points)
    _check_extent(space, kicks, weights)
    nodes, vecs = hilbert._position_eigensystem(space.dim)
    # D(i b) = exp(i b x); the symmetric weights make the sign of the kick irrelevant
    rho = _kick_mixture(rho, vecs, nodes, kicks, weights)
    # momentum kicks: rotate a quarter turn, kick in x, rotate back
    r = hilbert.rotation_phases(space.dim, math.pi / 2)
    rho = r[:, None] * rho * r.conj()[None, :]
    rho = _kick_mixture(rho, vecs, nodes, kicks, weights)
    rho = r.conj()[:, None] * rho * r[None, :]
    return DensityMatrix(0.5 * (rho + rho.conj().T))


def thermal_channel(nprime: float, quadrature_points: int = 31) -> Callable[[State], State]:
    spec = ThermalAddSpec(nprime, quadrature_points)
    return lambda state: thermal_add(state, spec)


def damping_factor(alpha3: complex, nprime: float) -> float:
    """Fringe-amplitude factor exp(-4 n' |alpha3|^2)."""
    return math.exp(-4 * nprime * abs(alpha3) ** 2)


def pplus_thermal(state: State, alpha3: complex, phi: float, nprime: float) -> float:
    """p+ after phonon addition, from the damped characteristic function.

    For Re(alpha3) = 0 this is 1/2 + e^{-4 n'|alpha3|^2} Re[e^{i phi} chi(2 alpha3)] / 2.
    """
    if nprime < 0:
        raise ValueError("n' must be non-negative")
    chi = characteristic(state, 2 * complex(alpha3)) / state.weight
    return 0.5 + 0.5 * damping_factor(alpha3, nprime) * (np.exp(1j * phi) * chi).real
