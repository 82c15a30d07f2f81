"""Electromechanical parameter model of a nanotube-junction transmon.

SI units everywhere.  Angular rates carry no suffix (rad/s); cyclic
frequencies are suffixed ``_hz``.  Energies are joules; use ``ghz_to_joule``
to enter E_J0 and E_C as E/h in GHz.
"""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass

import numpy as np

from .errors import InvalidGeometry, SingularBias

# CODATA, 6 significant figures
HBAR = 1.05457e-34
H_PLANCK = 6.62607e-34
E_CHARGE = 1.60218e-19
K_B = 1.38065e-23
PHI0 = H_PLANCK / (2 * E_CHARGE)

GRAPHENE_SHEET_DENSITY = 8e-7  # kg/m^2
RIGIDITY_PER_DIAMETER = 1.09e3  # Pa m; extensional rigidity E = D * this
BETA0_TENSION = 2 * math.sqrt(2) / math.pi
BETA0_RIGIDITY = 0.831
RIGIDITY_MODE_COEFF = 22.4
SINGULAR_COS = 1e-6


def ghz_to_joule(f_ghz: float) -> float:
    return f_ghz * 1e9 * H_PLANCK


def joule_to_ghz(energy: float) -> float:
    return energy / H_PLANCK / 1e9


@dataclass(frozen=True)
class MechGeometry:
    length: float
    diameter: float
    tension: float = 0.0
    regime: str = "tension"
    sheet_density: float = GRAPHENE_SHEET_DENSITY

    def __post_init__(self):
        if self.length <= 0 or self.diameter <= 0:
            raise InvalidGeometry("length and diameter must be positive")
        if self.regime not in ("tension", "rigidity"):
            raise InvalidGeometry(f"unknown regime {self.regime!r}")
        if self.regime == "tension" and self.tension <= 0:
            raise InvalidGeometry("tension regime requires T > 0")
        if self.sheet_density <= 0:
            raise InvalidGeometry("sheet density must be positive")

    @property
    def linear_density(self) -> float:
        return math.pi * self.sheet_density * self.diameter

    @property
    def rigidity(self) -> float:
        return self.diameter * RIGIDITY_PER_DIAMETER


def tension_for_frequency(length: float, diameter: float, freq_hz: float,
                          sheet_density: float = GRAPHENE_SHEET_DENSITY) -> float:
    """Tension giving fundamental frequency ``freq_hz`` in the tension regime."""
    mu = math.pi * sheet_density * diameter
    return mu * (2 * math.pi * freq_hz * length / math.pi) ** 2


@dataclass(frozen=True)
class ModeParams:
    omega: float
    x_zp: float
    beta0: float
    mass: float

    @property
    def omega_hz(self) -> float:
        return self.omega / (2 * math.pi)


def mode_from_mass(mass: float, omega: float, beta0: float = BETA0_TENSION) -> ModeParams:
    if mass <= 0 or omega <= 0:
        raise InvalidGeometry("mass and frequency must be positive")
    return ModeParams(omega, math.sqrt(HBAR / (2 * mass * omega)), beta0, mass)


def mechanical_mode(geom: MechGeometry) -> ModeParams:
    """Fundamental mode of a doubly clamped beam.

    The profile is normalised so its rms equals the coordinate X, which makes
    the modal mass the full beam mass mu*l in either regime.
    """
    mu = geom.linear_density
    mass = mu * geom.length
    if geom.regime == "tension":
        omega = math.pi / geom.length * math.sqrt(geom.tension / mu)
        beta0 = BETA0_TENSION
    else:
        omega = RIGIDITY_MODE_COEFF / geom.length ** 2 * math.sqrt(
            geom.rigidity * geom.diameter ** 2 / (8 * mu)
        )
        beta0 = BETA0_RIGIDITY
    return mode_from_mass(mass, omega, beta0)


@dataclass(frozen=True)
class SquidParams:
    ej0: float
    ec: float
    asymmetry: float = 0.0
    loop_area: float = 0.0
    b_parallel: float = 0.5
    flux_bias: float = -0.84

    def __post_init__(self):
        if self.ej0 <= 0 or self.ec <= 0:
            raise ValueError("E_J0 and E_C must be positive")
        if not 0 <= self.asymmetry < 2:
            raise ValueError("asymmetry must lie in [0, 2)")
        if self.ej0 / self.ec < 20:
            warnings.warn(
                f"E_J0/E_C = {self.ej0 / self.ec:.3g} is outside the transmon limit",
                stacklevel=2,
            )

    @property
    def critical_current(self) -> float:
        return math.pi * self.ej0 / PHI0


@dataclass(frozen=True)
class EnvironmentParams:
    temperature: float
    quality_factor: float
    t2: float

    def __post_init__(self):
        if min(self.temperature, self.quality_factor, self.t2) <= 0:
            raise ValueError("environment parameters must be positive")


@dataclass(frozen=True)
class DeviceParams:
    geometry: MechGeometry
    squid: SquidParams
    environment: EnvironmentParams

    @property
    def mode(self) -> ModeParams:
        return mechanical_mode(self.geometry)


def _ej_ratio(flux: np.ndarray, asymmetry: float) -> np.ndarray:
    arg = np.pi * np.asarray(flux, dtype=float) / 2
    c, s = np.cos(arg), np.sin(arg)
    return np.sqrt(c ** 2 + 0.25 * asymmetry ** 2 * s ** 2)


def _ej_ratio_derivative(flux: np.ndarray, asymmetry: float) -> np.ndarray:
    """d(E_J/E_J0)/d(dPhi/Phi0)."""
    arg = np.pi * np.asarray(flux, dtype=float) / 2
    c, s = np.cos(arg), np.sin(arg)
    ratio = np.sqrt(c ** 2 + 0.25 * asymmetry ** 2 * s ** 2)
    return (np.pi / 2) * c * s * (0.25 * asymmetry ** 2 - 1) / ratio


def josephson_energy(squid: SquidParams, flux=None):
    """E_J at flux difference ``flux`` = dPhi/Phi0 (defaults to the bias)."""
    flux = squid.flux_bias if flux is None else flux
    out = squid.ej0 * _ej_ratio(flux, squid.asymmetry)
    return float(out) if np.ndim(out) == 0 else out


def qubit_frequency(ej, ec):
    """Transmon-limit angular frequency sqrt(8 E_J E_C)/hbar."""
    ej = np.asarray(ej, dtype=float)
    if np.any(ej <= 0) or ec <= 0:
        raise ValueError("E_J and E_C must be positive")
    out = np.sqrt(8 * ej * ec) / HBAR
    return float(out) if out.ndim == 0 else out


def max_qubit_frequency(squid: SquidParams) -> float:
    return qubit_frequency(squid.ej0, squid.ec)


def flux_per_displacement(mode: ModeParams, geom: MechGeometry, squid: SquidParams) -> float:
    """d(dPhi)/dX = 2 beta0 l B_par, in Wb/m."""
    return 2 * mode.beta0 * geom.length * squid.b_parallel


def coupling_strength(mode: ModeParams, geom: MechGeometry, squid: SquidParams, flux=None):
    """lambda = X_ZP d(omega_q)/dX in rad/s (signed).

    For symmetric junctions the derivative diverges as 1/sqrt|cos|; that
    point raises SingularBias rather than returning a clamped number.
    """
    flux = squid.flux_bias if flux is None else flux
    flux_arr = np.asarray(flux, dtype=float)
    ratio = _ej_ratio(flux_arr, squid.asymmetry)
    if np.any(ratio < SINGULAR_COS):
        raise SingularBias(f"|cos(pi dPhi/2Phi0)| < {SINGULAR_COS} with asymmetry {squid.asymmetry}")
    omega_q0 = max_qubit_frequency(squid)
    domega_dflux = omega_q0 * _ej_ratio_derivative(flux_arr, squid.asymmetry) / (2 * np.sqrt(ratio))
    dflux_dx = flux_per_displacement(mode, geom, squid) / PHI0
    out = mode.x_zp * domega_dflux * dflux_dx
    return float(out) if out.ndim == 0 else out


def bose_occupation(omega: float, temperature: float) -> float:
    return 1.0 / math.expm1(HBAR * omega / (K_B * temperature))


@dataclass(frozen=True)
class FiguresOfMerit:
    coupling_ratio: float  # lambda / Omega
    mechanical_ratio: float  # lambda / kappa_th, both rad/s
    qubit_ratio: float  # T2 * lambda / 2pi
    nbar: float
    kappa_th: float  # k_B T / (hbar Q_m), s^-1
    strong_mechanical: bool
    strong_qubit: bool
    ultrastrong: bool
    min_quality_factor: float
    min_t2: float

    @property
    def strong(self) -> bool:
        return self.strong_mechanical and self.strong_qubit


def figures_of_merit(mode: ModeParams, coupling: float, env: EnvironmentParams) -> FiguresOfMerit:
    """Dimensionless comparison of the coupling with the decoherence rates.

    The flags follow the threshold convention that reproduces the quoted
    device limits: lambda (rad/s) against k_B T/(h Q_m), and lambda/2pi
    against 1/T2.  The ratios themselves are reported literally.
    """
    lam = abs(coupling)
    kappa_th = K_B * env.temperature / (HBAR * env.quality_factor)
    kappa_cyclic = kappa_th / (2 * math.pi)
    lam_hz = lam / (2 * math.pi)
    return FiguresOfMerit(
        coupling_ratio=lam / mode.omega,
        mechanical_ratio=lam / kappa_th,
        qubit_ratio=env.t2 * lam_hz,
        nbar=bose_occupation(mode.omega, env.temperature),
        kappa_th=kappa_th,
        strong_mechanical=lam > kappa_cyclic,
        strong_qubit=lam_hz * env.t2 > 1,
        ultrastrong=lam > mode.omega,
        min_quality_factor=K_B * env.temperature / (H_PLANCK * lam) if lam else math.inf,
        min_t2=1 / lam_hz if lam else math.inf,
    )


@dataclass(frozen=True)
class FluxSweep:
    flux: np.ndarray
    displacement: np.ndarray
    omega_q: np.ndarray
    coupling: np.ndarray

    def columns(self) -> dict:
        return {
            "flux_over_phi0": self.flux,
            "displacement_m": self.displacement,
            "omega_q_rad_s": self.omega_q,
            "omega_q_over_2pi_hz": self.omega_q / (2 * np.pi),
            "lambda_rad_s": self.coupling,
            "lambda_over_2pi_hz": self.coupling / (2 * np.pi),
        }


def flux_sweep(device: DeviceParams, flux_range=(-0.99, 0.99), n_points: int = 199) -> FluxSweep:
    """Qubit frequency and coupling across the principal flux branch.

    The displacement axis is the beam displacement that alone would produce
    each flux difference, X = dPhi / (2 beta0 l B_par).
    """
    lo, hi = flux_range
    if not -1 < lo < hi < 1:
        raise ValueError("flux range must lie inside (-1, 1)")
    flux = np.linspace(lo, hi, n_points)
    mode = device.mode
    squid = device.squid
    omega_q = qubit_frequency(josephson_energy(squid, flux), squid.ec)
    lam = coupling_strength(mode, device.geometry, squid, flux)
    disp = flux * PHI0 / flux_per_displacement(mode, device.geometry, squid)
    return FluxSweep(flux, disp, np.asarray(omega_q), np.asarray(lam))


def reference_device(asymmetry: float = 0.0, flux_bias: float = -0.84) -> DeviceParams:
    """The nanotube device used for the protocol simulations."""
    length, diameter = 800e-9, 2.5e-9
    return DeviceParams(
        geometry=MechGeometry(length, diameter, tension_for_frequency(length, diameter, 125e6)),
        squid=SquidParams(
            ej0=ghz_to_joule(12.0),
            ec=ghz_to_joule(0.2),
            asymmetry=asymmetry,
            b_parallel=0.5,
            flux_bias=flux_bias,
        ),
        environment=EnvironmentParams(temperature=0.033, quality_factor=1e5, t2=2e-6),
    )
