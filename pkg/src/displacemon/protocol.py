"""Qubit-mediated cooling, grating and interferometry of the resonator.

Angles are in radians of mechanical phase (theta = Omega * t); rates in rad/s
and times in seconds wherever a pulse is integrated in time.  All time-domain
integration runs in the qubit rotating frame, so the bare qubit splitting
never appears; in that frame the grating phase phi absorbs omega_q * t.

A grating multiplies the resonator wavefunction by cos(|alpha| x + phi/2)
(outcome '+') or sin(...) (outcome '-').  The mechanical rotation accumulated
while the coupling pulse is on is left to the free-evolution steps, so the
gratings here are instantaneous filters.
"""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass, field
from typing import Callable, Mapping, Optional, Sequence

import numpy as np
from scipy.special import erf

from . import hilbert
from .errors import StepTooLarge, ZeroProbability
from .hilbert import DensityMatrix, FockSpace, JointState, MechState, State

FWHM_TO_SIGMA = 1 / (2 * math.sqrt(2 * math.log(2)))
RESOLUTION_GUARD = 0.05


# --- pulses ----------------------------------------------------------------

@dataclass(frozen=True)
class PulseEnvelope:
    """Coupling pulse lambda(t) = lambda0 * g(t) * carrier(t).

    ``shape`` 'gaussian' has unit peak and FWHM ``fwhm``; 'box' is on for
    ``fwhm`` seconds.  The carrier is cos(Omega t) when 'modulated'.
    """

    lambda0: float
    fwhm: float
    carrier: str = "modulated"
    t0: Optional[float] = None
    shape: str = "gaussian"

    def __post_init__(self):
        if self.fwhm <= 0:
            raise ValueError("pulse width must be positive")
        if self.carrier not in ("modulated", "constant"):
            raise ValueError(f"unknown carrier {self.carrier!r}")
        if self.shape not in ("gaussian", "box"):
            raise ValueError(f"unknown envelope shape {self.shape!r}")

    @property
    def center(self) -> float:
        if self.t0 is not None:
            return self.t0
        return 4 * self.fwhm if self.shape == "gaussian" else self.fwhm / 2

    @property
    def duration(self) -> float:
        """Integration window [0, duration] that contains the whole pulse."""
        if self.shape == "gaussian":
            return self.center + 4 * self.fwhm
        return self.center + self.fwhm / 2

    def envelope(self, t):
        t = np.asarray(t, dtype=float)
        if self.shape == "gaussian":
            sigma = self.fwhm * FWHM_TO_SIGMA
            return np.exp(-0.5 * ((t - self.center) / sigma) ** 2)
        return (np.abs(t - self.center) <= self.fwhm / 2).astype(float)

    def coupling(self, t, omega: float):
        g = self.lambda0 * self.envelope(t)
        if self.carrier == "modulated":
            return g * np.cos(omega * np.asarray(t, dtype=float))
        return g

    def check_adiabatic(self, omega: float) -> None:
        if self.carrier == "modulated" and self.fwhm * omega / (2 * math.pi) < 5:
            warnings.warn("modulated pulse spans fewer than 5 mechanical periods", stacklevel=2)


def _panel_quadrature(func, a: float, b: float, panels: int, order: int = 16):
    nodes, weights = np.polynomial.legendre.leggauss(order)
    edges = np.linspace(a, b, panels + 1)
    half = 0.5 * np.diff(edges)
    mid = 0.5 * (edges[1:] + edges[:-1])
    t = (mid[:, None] + half[:, None] * nodes[None, :]).ravel()
    w = (half[:, None] * weights[None, :]).ravel()
    return np.sum(w * func(t))


def pulse_alpha(pulse: PulseEnvelope, omega: float, method: str = "quadrature") -> complex:
    """Coherent kick amplitude alpha = (i/2) int_0^T exp(i Omega t) lambda(t) dt.

    ``method='closed_form'`` returns the rotating-wave result for a Gaussian
    modulated pulse, i sqrt(pi) lambda0 tau / (8 sqrt(ln 2)).
    """
    if method == "closed_form":
        if pulse.shape != "gaussian" or pulse.carrier != "modulated":
            raise ValueError("closed form exists only for Gaussian modulated pulses")
        return 1j * math.sqrt(math.pi) / (8 * math.sqrt(math.log(2))) * pulse.lambda0 * pulse.fwhm
    if method != "quadrature":
        raise ValueError(f"unknown method {method!r}")
    if pulse.lambda0 == 0:
        return 0j
    pulse.check_adiabatic(omega)
    a, b = 0.0, pulse.duration
    if pulse.shape == "box":
        a, b = pulse.center - pulse.fwhm / 2, pulse.center + pulse.fwhm / 2
    panels = max(64, int(4 * omega * (b - a) / math.pi))
    integral = _panel_quadrature(
        lambda t: np.exp(1j * omega * t) * pulse.coupling(t, omega), a, b, panels
    )
    return 0.5j * integral


# --- joint qubit-resonator evolution -------------------------------------------

def grating_unitary(space: FockSpace, alpha: complex, qubit_phase: float = 0.0,
                    rotation_angle: float = 0.0) -> np.ndarray:
    """R(Omega t) exp(-i omega_q t sigma_z / 2) (D(alpha)|-><-| + D^dag(alpha)|+><+|).

    Joint basis is (|+> (x) Fock, |-> (x) Fock).
    """
    d = hilbert.displacement_spectral(space, alpha)
    r = hilbert.rotation_phases(space.dim, rotation_angle)[:, None]
    out = np.zeros((2 * space.dim, 2 * space.dim), dtype=complex)
    out[: space.dim, : space.dim] = np.exp(-0.5j * qubit_phase) * r * d.conj().T
    out[space.dim:, space.dim:] = np.exp(0.5j * qubit_phase) * r * d
    return out


def _propagate(blocks: np.ndarray, coupling, drive, omega: float, duration: float, dt: float):
    """RK4 in the frame rotating with Omega a^dag a; blocks shape (2, dim, k).

    H = (lambda(t)/2) x(t) sigma_z + (g(t)/2) sigma_x with
    x(t) = a e^{-i Omega t} + a^dag e^{i Omega t}.
    """
    n_steps = max(1, int(math.ceil(duration / dt - 1e-9)))
    h = duration / n_steps
    t_half = np.arange(2 * n_steps + 1) * (h / 2)
    lam = np.broadcast_to(np.asarray(coupling(t_half), dtype=float), t_half.shape)
    g = np.zeros_like(t_half) if drive is None else np.broadcast_to(
        np.asarray(drive(t_half), dtype=float), t_half.shape)
    rate = max(omega, float(np.max(np.abs(lam))), float(np.max(np.abs(g))))
    if h * rate >= RESOLUTION_GUARD:
        raise StepTooLarge(
            f"dt * max rate = {h * rate:.3g} >= {RESOLUTION_GUARD}; use dt < {RESOLUTION_GUARD / rate:.3g} s"
        )
    dim = blocks.shape[1]
    sq = np.sqrt(np.arange(1, dim, dtype=float))[:, None]
    sign = np.array([1.0, -1.0])[:, None, None]
    phase = np.exp(-1j * omega * t_half)

    def deriv(i, y):
        xy = np.zeros_like(y)
        xy[:, :-1] += phase[i] * sq * y[:, 1:]
        xy[:, 1:] += phase[i].conjugate() * sq * y[:, :-1]
        out = (0.5 * lam[i]) * sign * xy
        if g[i] != 0.0:
            out += (0.5 * g[i]) * y[::-1]
        return -1j * out

    y = np.array(blocks, dtype=complex)
    for step in range(n_steps):
        i = 2 * step
        k1 = deriv(i, y)
        k2 = deriv(i + 1, y + (0.5 * h) * k1)
        k3 = deriv(i + 1, y + (0.5 * h) * k2)
        k4 = deriv(i + 2, y + h * k3)
        y += (h / 6) * (k1 + 2 * k2 + 2 * k3 + k4)
    return y


def integrate_joint(joint: JointState, coupling: Callable, drive: Optional[Callable],
                    duration: float, dt: float, omega: float) -> JointState:
    """Integrate H = Omega a^dag a + lambda(t) x sigma_z / 2 + g(t) sigma_x / 2.

    ``coupling`` and ``drive`` are vectorised callables of time (seconds).
    Returns the state at ``duration`` in the lab frame of the resonator.
    """
    blocks = joint.vector.reshape(2, joint.dim, 1)
    y = _propagate(blocks, coupling, drive, omega, duration, dt)[..., 0]
    y = y * hilbert.rotation_phases(joint.dim, omega * duration)[None, :]
    return JointState(y.ravel())


# --- gratings ----------------------------------------------------------------

@dataclass(frozen=True)
class GratingSpec:
    alpha: complex
    phi: float = 0.0
    outcome: str = "+"
    general_alpha: bool = False

    def __post_init__(self):
        if self.outcome not in ("+", "-"):
            raise ValueError("outcome must be '+' or '-'")
        if not self.general_alpha and abs(complex(self.alpha).real) > 1e-12:
            raise ValueError("Re(alpha) must be 0 unless general_alpha=True")


def grating_operator(space: FockSpace, alpha: complex, phi: float = 0.0, outcome: str = "+") -> np.ndarray:
    """(D^dag(alpha) +/- e^{i phi} D(alpha)) / 2.

    For imaginary alpha this is e^{i phi/2} cos(|alpha| x + phi/2) or
    -i e^{i phi/2} sin(|alpha| x + phi/2).
    """
    d = hilbert.displacement_spectral(space, alpha)
    sgn = 1.0 if outcome == "+" else -1.0
    return 0.5 * (d.conj().T + sgn * np.exp(1j * phi) * d)


def grating(state: State, spec: GratingSpec):
    """Condition the resonator on a Ramsey grating outcome; (state', probability)."""
    space = FockSpace(state.dim)
    op = grating_operator(space, complex(spec.alpha), spec.phi, spec.outcome)
    return hilbert.condition(state, op)


def free_evolution(state: State, theta: Optional[float] = None, tau: Optional[float] = None,
                   omega: Optional[float] = None) -> State:
    """Rotate by theta, or by Omega * tau when a time is given."""
    if theta is None:
        if tau is None or omega is None:
            raise ValueError("give theta, or tau together with omega")
        theta = omega * tau
    return hilbert.rotate(state, theta)


# --- cooling ---------------------------------------------------------------

@dataclass(frozen=True)
class CoolingPulse:
    """Gaussian pi burst of total length 6 sigma with FWHM tau_pi / 2.

    While the burst is on the coupling is lambda0 cos(Omega t) ('modulated')
    or lambda0 ('constant').
    """

    tau_pi: float
    lambda0: float
    omega: float
    carrier: str = "modulated"

    @property
    def sigma(self) -> float:
        return 0.5 * self.tau_pi * FWHM_TO_SIGMA

    @property
    def duration(self) -> float:
        return 6 * self.sigma

    @property
    def peak_drive(self) -> float:
        return math.pi / (self.sigma * math.sqrt(2 * math.pi) * erf(3 / math.sqrt(2)))

    def drive(self, t):
        t = np.asarray(t, dtype=float)
        inside = (t >= 0) & (t <= self.duration)
        return np.where(inside, self.peak_drive * np.exp(-0.5 * ((t - 3 * self.sigma) / self.sigma) ** 2), 0.0)

    def coupling(self, t):
        t = np.asarray(t, dtype=float)
        if self.carrier == "modulated":
            return self.lambda0 * np.cos(self.omega * t)
        return np.full_like(t, self.lambda0)

    @property
    def frozen_coupling(self) -> float:
        """Cycle-averaged coupling to the frame-fixed position quadrature."""
        return 0.5 * self.lambda0 if self.carrier == "modulated" else self.lambda0


def flip_amplitude(x, pulse: CoolingPulse, steps: int = 4000) -> np.ndarray:
    """i <-| U |+> for a qubit detuned by frozen_coupling * x during the burst.

    The factor i references the phase to the resonant flip, so F(0) = 1.
    """
    x = np.asarray(x, dtype=float)
    delta = pulse.frozen_coupling * x
    h = pulse.duration / steps
    t_half = np.arange(2 * steps + 1) * (h / 2)
    g = pulse.drive(t_half)
    cp = np.ones_like(delta, dtype=complex)
    cm = np.zeros_like(delta, dtype=complex)

    def deriv(i, a, b):
        return (-0.5j * (delta * a + g[i] * b), -0.5j * (g[i] * a - delta * b))

    for step in range(steps):
        i = 2 * step
        k1 = deriv(i, cp, cm)
        k2 = deriv(i + 1, cp + 0.5 * h * k1[0], cm + 0.5 * h * k1[1])
        k3 = deriv(i + 1, cp + 0.5 * h * k2[0], cm + 0.5 * h * k2[1])
        k4 = deriv(i + 2, cp + h * k3[0], cm + h * k3[1])
        cp = cp + (h / 6) * (k1[0] + 2 * k2[0] + 2 * k3[0] + k4[0])
        cm = cm + (h / 6) * (k1[1] + 2 * k2[1] + 2 * k3[1] + k4[1])
    return 1j * cm


@dataclass(frozen=True)
class FilterResult:
    x: np.ndarray
    transmission: np.ndarray
    state: State
    probability: float
    mode: str
    amplitude: Optional[np.ndarray] = None

    @property
    def fwhm(self) -> float:
        return curve_fwhm(self.x, self.transmission)


def curve_fwhm(x: np.ndarray, y: np.ndarray) -> float:
    """Full width at half maximum around the global peak (linear interpolation)."""
    x = np.asarray(x, dtype=float)
    y = np.asarray(y, dtype=float)
    i0 = int(np.argmax(y))
    half = 0.5 * y[i0]
    right = np.nonzero(y[i0:] < half)[0]
    left = np.nonzero(y[: i0 + 1] < half)[0]
    if right.size == 0 or left.size == 0:
        return math.inf
    r = i0 + right[0]
    l = left[-1]
    xr = x[r - 1] + (half - y[r - 1]) * (x[r] - x[r - 1]) / (y[r] - y[r - 1])
    xl = x[l] + (half - y[l]) * (x[l + 1] - x[l]) / (y[l + 1] - y[l])
    return float(xr - xl)


def _support(state: State, tol: float = 1e-14) -> int:
    pops = state.populations
    tail = np.cumsum(pops[::-1])[::-1] / pops.sum()
    above = np.nonzero(tail > tol)[0]
    return int(above[-1]) + 1 if above.size else 1


def full_flip_operator(dim: int, pulse: CoolingPulse, columns: int, dt: Optional[float] = None) -> np.ndarray:
    """i <-| U_I |+> on the first ``columns`` Fock levels, by joint integration.

    U_I is the propagator in the frame rotating with Omega a^dag a, so its
    output is directly comparable with the frozen filter.
    """
    if dt is None:
        rate = max(pulse.omega, abs(pulse.lambda0), pulse.peak_drive)
        dt = 0.5 * RESOLUTION_GUARD / rate
    blocks = np.zeros((2, dim, columns), dtype=complex)
    blocks[0, np.arange(columns), np.arange(columns)] = 1.0
    y = _propagate(blocks, pulse.coupling, pulse.drive, pulse.omega, pulse.duration, dt)
    return 1j * y[1]


def cooling_filter(state: State, pulse: CoolingPulse, mode: str = "frozen",
                   x: Optional[np.ndarray] = None, dt: Optional[float] = None) -> FilterResult:
    """Condition on the qubit flipping |+> -> |-> under a pi burst.

    'frozen' multiplies the wavefunction by the flip amplitude F(x) of a
    two-level problem at fixed position; 'full' integrates the joint
    Hamiltonian.  In both cases the reported transmission curve is
    P_out(x) / P_in(x) (which is |F(x)|^2 in the frozen picture).
    """
    if x is None:
        x = np.linspace(-30, 30, 1201)
    space = FockSpace(state.dim)
    if mode == "frozen":
        op = hilbert.position_function(space, lambda nodes: flip_amplitude(nodes, pulse))
        out, prob = hilbert.condition(state, op)
        amp = flip_amplitude(x, pulse)
        return FilterResult(x, np.abs(amp) ** 2, out, prob, mode, amp)
    if mode != "full":
        raise ValueError(f"unknown cooling mode {mode!r}")
    cols = _support(state)
    k = full_flip_operator(state.dim, pulse, cols, dt)
    if isinstance(state, MechState):
        out = MechState(k @ state.amplitudes[:cols])
    else:
        out = DensityMatrix(k @ state.matrix[:cols, :cols] @ k.conj().T)
    prob = out.weight / state.weight
    if prob < hilbert.MIN_PROBABILITY:
        raise ZeroProbability(f"flip probability {prob:.3g}")
    p_in = hilbert.position_density(state, x)
    p_out = hilbert.position_density(out, x)
    with np.errstate(divide="ignore", invalid="ignore"):
        trans = np.where(p_in > 1e-300, p_out / p_in, 0.0)
    return FilterResult(x, trans, out, prob, mode)


@dataclass(frozen=True)
class CoolingRecord:
    state: State
    probability: float
    stages: list

    @property
    def moments(self) -> dict:
        return self.stages[-1]


def cool(state: State, pulse: CoolingPulse, repetitions: int = 2, mode: str = "frozen") -> CoolingRecord:
    """Repeated conditional pi bursts, a quarter period apart.

    ``stages[0]`` holds the input moments; each later entry the moments and
    step probability after one more filter.
    """
    if repetitions < 1:
        raise ValueError("repetitions must be >= 1")
    stages = [dict(hilbert.quadrature_moments(state), probability=1.0)]
    prob = 1.0
    current = state
    for rep in range(repetitions):
        if rep:
            current = free_evolution(current, math.pi / 2)
        result = cooling_filter(current, pulse, mode)
        current = result.state
        prob *= result.probability
        stages.append(dict(hilbert.quadrature_moments(current), probability=result.probability))
    return CoolingRecord(current, prob, stages)


# --- interferometer ----------------------------------------------------------

@dataclass(frozen=True)
class ProtocolStep:
    kind: str
    label: str
    probability: float
    state: State
    params: dict = field(default_factory=dict)


@dataclass
class ProtocolRecord:
    steps: list = field(default_factory=list)
    health_tol: float = hilbert.DEFAULT_TOL

    def add(self, kind: str, label: str, state: State, probability: float = 1.0, **params):
        hilbert.check_health(state, self.health_tol)
        self.steps.append(ProtocolStep(kind, label, probability, state, params))
        return state

    @property
    def final_state(self) -> State:
        return self.steps[-1].state

    @property
    def cumulative_probability(self) -> float:
        return float(np.prod([s.probability for s in self.steps]))

    @property
    def probabilities(self) -> dict:
        return {s.label: s.probability for s in self.steps}

    def state_at(self, label: str) -> State:
        for s in self.steps:
            if s.label == label:
                return s.state
        raise KeyError(label)


def interferometer(initial: State, alpha1: complex, alpha2: complex,
                   theta1: float = math.pi / 2, theta2: float = 0.0,
                   outcomes: Sequence[str] = ("+", "+"), phi1: float = 0.0, phi2: float = 0.0,
                   hooks: Optional[Mapping[str, Callable[[State], State]]] = None) -> ProtocolRecord:
    """Two gratings separated by theta1, then free evolution by theta2.

    Step labels: 'initial', 'grating1', 'evolve1', 'grating2', 'evolve2'.
    ``hooks[label]`` (e.g. a decoherence channel) is applied to the state
    right after that step; its output is stored as step '<label>+hook'.
    """
    hooks = dict(hooks or {})
    rec = ProtocolRecord()

    def step(kind, label, state, prob=1.0, **params):
        rec.add(kind, label, state, prob, **params)
        if label in hooks:
            state = rec.add("channel", label + "+hook", hooks[label](state))
        return state

    state = step("initial", "initial", initial)
    state, p = grating(state, GratingSpec(alpha1, phi1, outcomes[0]))
    state = step("grate", "grating1", state, p, alpha=alpha1, phi=phi1, outcome=outcomes[0])
    state = step("evolve", "evolve1", free_evolution(state, theta1), theta=theta1)
    state, p = grating(state, GratingSpec(alpha2, phi2, outcomes[1]))
    state = step("grate", "grating2", state, p, alpha=alpha2, phi=phi2, outcome=outcomes[1])
    state = step("evolve", "evolve2", free_evolution(state, theta2), theta=theta2)
    return rec


# --- readout ---------------------------------------------------------------

def pplus(rho: State, alpha3: complex, phi: float = 0.0) -> float:
    """Unconditioned Ramsey return probability Tr[cos^2(|alpha3| x + phi/2) rho]."""
    space = FockSpace(rho.dim)
    weights = hilbert.position_weights(rho)
    nodes = hilbert.position_nodes(space)
    return float(np.sum(weights * np.cos(abs(alpha3) * nodes + phi / 2) ** 2) / rho.weight)


def sample_pplus(rho: State, alpha3: complex, phi: float, shots: int, seed: int) -> float:
    """Fraction of '+' outcomes in ``shots`` simulated readouts."""
    rng = np.random.Generator(np.random.Philox(seed))
    return float(rng.binomial(shots, pplus(rho, alpha3, phi)) / shots)


@dataclass(frozen=True)
class PPlusMap:
    thetas: np.ndarray
    ratios: np.ndarray
    values: np.ndarray  # shape (len(thetas), len(ratios))
    alpha2: float
    phi: float


def rotated_position_weights(rho: State, thetas: Sequence[float]) -> np.ndarray:
    space = FockSpace(rho.dim)
    _, vecs = hilbert._position_eigensystem(space.dim)
    mat = rho.to_density().matrix
    out = np.empty((len(thetas), space.dim))
    for i, th in enumerate(thetas):
        m = vecs.T * hilbert.rotation_phases(space.dim, th)[None, :]
        out[i] = np.sum((m @ mat) * m.conj(), axis=1).real
    return out


def pplus_map(initial: State, alpha1: complex, alpha2: complex,
              ratios: Optional[Sequence[float]] = None, thetas: Optional[Sequence[float]] = None,
              phi: float = 0.0, outcomes: Sequence[str] = ("+", "+"),
              channel: Optional[Callable[[State], State]] = None,
              readout_dephasing: float = 0.0) -> PPlusMap:
    """p+ over a grid of (Omega tau2, alpha3/alpha2).

    ``channel`` acts on the state right after the second grating (it must
    commute with free rotation, as the phonon-addition channel does).
    ``readout_dephasing`` is gamma*t of the third Ramsey sequence.
    """
    if ratios is None:
        ratios = np.arange(1, 33) / 16
    if thetas is None:
        thetas = np.linspace(0, math.pi, 33)
    ratios = np.asarray(ratios, dtype=float)
    thetas = np.asarray(thetas, dtype=float)
    rec = interferometer(initial, alpha1, alpha2, outcomes=outcomes)
    rho = rec.final_state
    if channel is not None:
        rho = channel(rho)
    space = FockSpace(rho.dim)
    nodes = hilbert.position_nodes(space)
    weights = rotated_position_weights(rho, thetas) / rho.weight
    k = abs(alpha2) * ratios
    fringe = np.cos(k[:, None] * nodes[None, :] + phi / 2) ** 2  # (ratios, nodes)
    values = weights @ fringe.T
    if readout_dephasing:
        values = 0.5 + math.exp(-readout_dephasing) * (values - 0.5)
    return PPlusMap(thetas, ratios, values, abs(alpha2), phi)
