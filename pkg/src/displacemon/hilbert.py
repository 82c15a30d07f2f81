"""Truncated Fock-space numerics for the mechanical mode.

Units are dimensionless throughout: hbar = 1, quadratures x = a + a^dag and
p = i(a^dag - a), so the vacuum has <x^2> = <p^2> = 1 and [x, p] = 2i.

States are immutable values.  Conditioning does not renormalise: a state's
weight (norm squared or trace) records the probability of the branch it
describes, and normalisation happens only where a probability is reported.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from functools import lru_cache
from typing import Callable, Mapping, Sequence, Union

import numpy as np
import scipy.linalg
from scipy.special import gammaln

from .errors import NotConverged, TruncationRisk, ZeroProbability

DEFAULT_DIM = 256
DEFAULT_TOL = 1e-9
MIN_PROBABILITY = 1e-12


@dataclass(frozen=True)
class FockSpace:
    dim: int = DEFAULT_DIM
    convergence_tol: float = DEFAULT_TOL

    def __post_init__(self):
        if int(self.dim) != self.dim or self.dim < 2:
            raise ValueError(f"Fock dimension must be an integer >= 2, got {self.dim}")

    def doubled(self) -> "FockSpace":
        return FockSpace(2 * self.dim, self.convergence_tol)


def _frozen(arr: np.ndarray) -> np.ndarray:
    arr = np.array(arr, dtype=complex, copy=True)
    arr.flags.writeable = False
    return arr


@dataclass(frozen=True)
class MechState:
    """Pure (possibly sub-normalised) resonator state in the Fock basis."""

    amplitudes: np.ndarray

    def __post_init__(self):
        amps = np.asarray(self.amplitudes)
        if amps.ndim != 1 or amps.size < 2:
            raise ValueError("amplitudes must be a 1-d vector of length >= 2")
        object.__setattr__(self, "amplitudes", _frozen(amps))

    @property
    def dim(self) -> int:
        return self.amplitudes.size

    @property
    def norm_sq(self) -> float:
        return float(np.vdot(self.amplitudes, self.amplitudes).real)

    weight = norm_sq

    @property
    def populations(self) -> np.ndarray:
        return np.abs(self.amplitudes) ** 2

    def normalized(self) -> "MechState":
        return MechState(self.amplitudes / np.sqrt(self.norm_sq))

    def to_density(self) -> "DensityMatrix":
        return DensityMatrix(np.outer(self.amplitudes, self.amplitudes.conj()))


@dataclass(frozen=True)
class DensityMatrix:
    """Mixed resonator state; ``weight`` is its trace."""

    matrix: np.ndarray

    def __post_init__(self):
        mat = np.asarray(self.matrix)
        if mat.ndim != 2 or mat.shape[0] != mat.shape[1]:
            raise ValueError("density matrix must be square")
        object.__setattr__(self, "matrix", _frozen(mat))

    @property
    def dim(self) -> int:
        return self.matrix.shape[0]

    @property
    def weight(self) -> float:
        return float(np.trace(self.matrix).real)

    @property
    def populations(self) -> np.ndarray:
        return np.diagonal(self.matrix).real.copy()

    def normalized(self) -> "DensityMatrix":
        return DensityMatrix(self.matrix / self.weight)

    def to_density(self) -> "DensityMatrix":
        return self

    def is_physical(self, tol: float = DEFAULT_TOL) -> bool:
        mat = self.matrix
        if np.max(np.abs(mat - mat.conj().T)) > tol:
            return False
        herm = 0.5 * (mat + mat.conj().T)
        return bool(np.linalg.eigvalsh(herm).min() >= -tol)


State = Union[MechState, DensityMatrix]


@dataclass(frozen=True)
class JointState:
    """Qubit (x) resonator pure state, blocks ordered (|+>, |->)."""

    vector: np.ndarray
    dim: int = field(init=False)

    def __post_init__(self):
        vec = np.asarray(self.vector)
        if vec.ndim != 1 or vec.size % 2:
            raise ValueError("joint vector must have even length 2*dim")
        object.__setattr__(self, "vector", _frozen(vec))
        object.__setattr__(self, "dim", vec.size // 2)

    @classmethod
    def product(cls, qubit, mech: MechState) -> "JointState":
        """``qubit`` is a length-2 amplitude vector in the (|+>, |->) basis."""
        c_plus, c_minus = np.asarray(qubit, dtype=complex)
        return cls(np.concatenate([c_plus * mech.amplitudes, c_minus * mech.amplitudes]))

    @property
    def plus(self) -> MechState:
        return MechState(self.vector[: self.dim])

    @property
    def minus(self) -> MechState:
        return MechState(self.vector[self.dim:])

    @property
    def norm(self) -> float:
        return float(np.linalg.norm(self.vector))


# --- operators -----------------------------------------------------------

@lru_cache(maxsize=16)
def _annihilation(dim: int) -> np.ndarray:
    a = np.diag(np.sqrt(np.arange(1, dim, dtype=float)), k=1)
    a.flags.writeable = False
    return a


@lru_cache(maxsize=16)
def _position_eigensystem(dim: int):
    """Eigen-decomposition of the truncated x = a + a^dag (real tridiagonal).

    The eigenvalues are sqrt(2) times the Gauss-Hermite nodes of order ``dim``;
    any function of the truncated position operator is V f(nodes) V^T.
    """
    off = np.sqrt(np.arange(1, dim, dtype=float))
    nodes, vecs = scipy.linalg.eigh_tridiagonal(np.zeros(dim), off)
    nodes.flags.writeable = False
    vecs.flags.writeable = False
    return nodes, vecs


def ladder_ops(space: FockSpace):
    """Return (a, a^dag, n, x, p) as dense dim x dim complex matrices."""
    a = _annihilation(space.dim).astype(complex)
    adag = a.conj().T
    n = np.diag(np.arange(space.dim, dtype=complex))
    x = a + adag
    p = 1j * (adag - a)
    return a, adag, n, x, p


def position_nodes(space: FockSpace) -> np.ndarray:
    return _position_eigensystem(space.dim)[0]


def position_function(space: FockSpace, func: Callable[[np.ndarray], np.ndarray]) -> np.ndarray:
    """Matrix of f(x) for the truncated position operator."""
    nodes, vecs = _position_eigensystem(space.dim)
    values = np.asarray(func(nodes), dtype=complex)
    return (vecs * values) @ vecs.T


def _check_displacement(space: FockSpace, alpha: complex) -> None:
    if abs(alpha) ** 2 >= space.dim / 8:
        raise TruncationRisk(
            f"|alpha|^2 = {abs(alpha) ** 2:.3g} is not << dim = {space.dim} (need < dim/8)"
        )


def displacement(space: FockSpace, alpha: complex) -> np.ndarray:
    """D(alpha) = exp(alpha a^dag - alpha* a), by scaling-and-squaring."""
    _check_displacement(space, alpha)
    if alpha == 0:
        return np.eye(space.dim, dtype=complex)
    a = _annihilation(space.dim)
    gen = alpha * a.T - np.conj(alpha) * a
    return scipy.linalg.expm(gen)


def kick(space: FockSpace, k: float) -> np.ndarray:
    """exp(i k x) for real k, i.e. D(i k), built from the position eigenbasis.

    Agrees with ``displacement(space, 1j * k)`` to rounding; used on hot paths.
    """
    return position_function(space, lambda x: np.exp(1j * k * x))


def displacement_spectral(space: FockSpace, alpha: complex) -> np.ndarray:
    """D(alpha) as R(t) exp(i|alpha|x) R(t)^dag with i|alpha|e^{-it} = alpha."""
    _check_displacement(space, alpha)
    theta = np.pi / 2 - np.angle(alpha) if alpha != 0 else 0.0
    phases = rotation_phases(space.dim, theta)
    return phases[:, None] * kick(space, abs(alpha)) * phases.conj()[None, :]


def rotation(space: FockSpace, theta: float) -> np.ndarray:
    """R(theta) = exp(-i theta a^dag a).

    As a state map, R(theta) rho R(theta)^dag has x-marginal equal to the
    distribution of x cos(theta) + p sin(theta) in rho, so a quarter turn takes
    the momentum marginal onto the position axis.
    """
    return np.diag(rotation_phases(space.dim, theta))


def rotation_phases(dim: int, theta: float) -> np.ndarray:
    return np.exp(-1j * theta * np.arange(dim))


# --- states --------------------------------------------------------------

def fock_state(space: FockSpace, n: int = 0) -> MechState:
    amps = np.zeros(space.dim, dtype=complex)
    amps[n] = 1.0
    return MechState(amps)


def vacuum(space: FockSpace) -> MechState:
    return fock_state(space, 0)


def coherent_state(space: FockSpace, beta: complex) -> MechState:
    """|beta> from log-factorial amplitudes (no matrix exponential)."""
    _check_displacement(space, beta)
    n = np.arange(space.dim)
    log_mag = -0.5 * abs(beta) ** 2 - 0.5 * gammaln(n + 1)
    if beta == 0:
        return vacuum(space)
    amps = np.exp(log_mag + n * np.log(abs(beta)) + 1j * n * np.angle(beta))
    return MechState(amps)


def thermal_state(space: FockSpace, nbar: float) -> DensityMatrix:
    if nbar < 0:
        raise ValueError("mean occupation must be >= 0")
    if nbar >= space.dim / 20:
        raise TruncationRisk(f"nbar = {nbar} too large for dim = {space.dim} (need < dim/20)")
    n = np.arange(space.dim)
    if nbar == 0:
        probs = (n == 0).astype(float)
    else:
        probs = (nbar / (1 + nbar)) ** n / (1 + nbar)
        probs /= probs.sum()
    return DensityMatrix(np.diag(probs))


# --- state algebra -------------------------------------------------------

def apply(state: State, op: np.ndarray) -> State:
    """Map the state by op (psi -> op psi, rho -> op rho op^dag)."""
    if isinstance(state, MechState):
        return MechState(op @ state.amplitudes)
    return DensityMatrix(op @ state.matrix @ op.conj().T)


def rotate(state: State, theta: float) -> State:
    phases = rotation_phases(state.dim, theta)
    if isinstance(state, MechState):
        return MechState(phases * state.amplitudes)
    return DensityMatrix(phases[:, None] * state.matrix * phases.conj()[None, :])


def condition(state: State, op: np.ndarray):
    """Apply a measurement operator; return (unnormalised state, probability).

    The probability is relative to the incoming weight.
    """
    w_in = state.weight
    if w_in <= 0:
        raise ZeroProbability("conditioning a state of zero weight")
    out = apply(state, op)
    prob = out.weight / w_in
    if prob < MIN_PROBABILITY:
        raise ZeroProbability(f"outcome probability {prob:.3g} below {MIN_PROBABILITY}")
    return out, prob


def expectation(state: State, op: np.ndarray) -> complex:
    """Normalised expectation value Tr[op rho] / Tr[rho]."""
    if isinstance(state, MechState):
        psi = state.amplitudes
        return complex(np.vdot(psi, op @ psi) / state.norm_sq)
    return complex(np.trace(op @ state.matrix) / state.weight)


def quadrature_moments(state: State) -> dict:
    """Means and variances of x and p, and the mean phonon number."""
    space = FockSpace(state.dim)
    _, _, n, x, p = ladder_ops(space)
    mx = expectation(state, x).real
    mp = expectation(state, p).real
    return {
        "mean_x": mx,
        "mean_p": mp,
        "var_x": expectation(state, x @ x).real - mx ** 2,
        "var_p": expectation(state, p @ p).real - mp ** 2,
        "mean_n": expectation(state, n).real,
    }


def fidelity(a: State, b: State) -> float:
    """Uhlmann fidelity of the normalised states (squared-overlap convention)."""
    if isinstance(a, MechState) and isinstance(b, MechState):
        ov = np.vdot(a.amplitudes, b.amplitudes)
        return float(abs(ov) ** 2 / (a.norm_sq * b.norm_sq))
    if isinstance(a, MechState):
        a, b = b, a
    rho = a.normalized().matrix
    if isinstance(b, MechState):
        psi = b.normalized().amplitudes
        return float(np.vdot(psi, rho @ psi).real)
    sigma = b.normalized().matrix
    sq = scipy.linalg.sqrtm(rho)
    return float(np.real(np.trace(scipy.linalg.sqrtm(sq @ sigma @ sq))) ** 2)


def top_population(state: State, fraction: float = 0.05) -> float:
    """Relative weight in the top ``fraction`` of Fock levels."""
    pops = state.populations
    k = max(1, int(np.ceil(fraction * state.dim)))
    return float(pops[-k:].sum() / pops.sum())


def check_health(state: State, tol: float = DEFAULT_TOL) -> State:
    top = top_population(state)
    if top >= tol:
        raise TruncationRisk(
            f"population {top:.3g} in the top 5% of Fock levels (dim={state.dim}) exceeds {tol:g}"
        )
    return state


def embed(state: State, dim: int) -> State:
    """Zero-pad (or truncate) a state into a space of dimension ``dim``."""
    if isinstance(state, MechState):
        out = np.zeros(dim, dtype=complex)
        k = min(dim, state.dim)
        out[:k] = state.amplitudes[:k]
        return MechState(out)
    out = np.zeros((dim, dim), dtype=complex)
    k = min(dim, state.dim)
    out[:k, :k] = state.matrix[:k, :k]
    return DensityMatrix(out)


# --- quadrature representation --------------------------------------------

def hermite_functions(dim: int, x: np.ndarray) -> np.ndarray:
    """psi_n(x) for n < dim on points x, with x = a + a^dag scaling.

    Returns shape (dim, len(x)); each row is L2-normalised in x.
    """
    x = np.asarray(x, dtype=float)
    q = x / np.sqrt(2.0)
    out = np.empty((dim, x.size))
    out[0] = np.pi ** -0.25 * np.exp(-0.5 * q ** 2)
    if dim > 1:
        out[1] = np.sqrt(2.0) * q * out[0]
    for n in range(1, dim - 1):
        out[n + 1] = np.sqrt(2.0 / (n + 1)) * q * out[n] - np.sqrt(n / (n + 1)) * out[n - 1]
    return out * 2.0 ** -0.25


def position_weights(state: State) -> np.ndarray:
    """Weights of the state on the eigenvectors of the truncated x operator.

    Tr[f(x) rho] = sum_k f(nodes_k) * weights_k exactly within the truncation.
    """
    _, vecs = _position_eigensystem(state.dim)
    if isinstance(state, MechState):
        return np.abs(vecs.T @ state.amplitudes) ** 2
    return np.sum((vecs.T @ state.matrix) * vecs.T, axis=1).real


def wavefunction(state: MechState, x: np.ndarray) -> np.ndarray:
    return state.amplitudes @ hermite_functions(state.dim, x)


def position_density(state: State, x: np.ndarray) -> np.ndarray:
    """<x|rho|x> on points x (unnormalised states give unnormalised densities)."""
    psi = hermite_functions(state.dim, x)
    if isinstance(state, MechState):
        return np.abs(state.amplitudes @ psi) ** 2
    return np.sum(psi * (state.matrix.T @ psi).conj(), axis=0).real


# --- convergence ---------------------------------------------------------

@dataclass(frozen=True)
class ConvergenceReport:
    dims: tuple
    deviations: dict
    tol: float

    @property
    def max_deviation(self) -> float:
        return max(self.deviations.values(), default=0.0)

    @property
    def passed(self) -> bool:
        return self.max_deviation < self.tol


def _as_observables(result) -> dict:
    if isinstance(result, Mapping):
        return {k: np.asarray(v) for k, v in result.items()}
    return {"value": np.asarray(result)}


def converge_check(
    scenario: Callable[[FockSpace], object],
    dims: Sequence[int] = (DEFAULT_DIM, 2 * DEFAULT_DIM),
    tol: float = 1e-6,
    raise_on_fail: bool = True,
) -> ConvergenceReport:
    """Run ``scenario`` at each dimension and compare observables to the largest.

    ``scenario`` maps a FockSpace to an observable array or a dict of them.
    """
    dims = tuple(sorted(dims))
    if len(dims) < 2:
        raise ValueError("need at least two dimensions to compare")
    results = [_as_observables(scenario(FockSpace(d))) for d in dims]
    ref = results[-1]
    deviations = {}
    for key, ref_val in ref.items():
        dev = 0.0
        for res in results[:-1]:
            dev = max(dev, float(np.max(np.abs(res[key] - ref_val), initial=0.0)))
        deviations[key] = dev
    report = ConvergenceReport(dims, deviations, tol)
    if raise_on_fail and not report.passed:
        worst = max(deviations, key=deviations.get)
        raise NotConverged(f"{worst!r} drifts by {deviations[worst]:.3g} across dims {dims}")
    return report
