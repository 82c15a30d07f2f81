"""Wigner distributions, characteristic functions, rotated marginals and
wave-number spectra, plus the classical checkerboard reference model.

Convention: x = a + a^dag, p = i(a^dag - a), so the vacuum has unit
variance in both and W(0, 0) = 1/(2 pi); integrating W over p gives P(x).
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Optional, Sequence

import numpy as np
from scipy.integrate import trapezoid
from scipy.signal import find_peaks

from . import hilbert
from .errors import GridTooSmall, UnderResolved
from .hilbert import FockSpace, MechState, State

CONVENTION = "x=a+adag, p=i(adag-a); int W dp = P(x); vacuum W(0,0)=1/(2pi)"
DEFAULT_HALF_WIDTH = 12.0
DEFAULT_POINTS = 1024
COVERAGE_SIGMAS = 5.0
MIN_POINTS_PER_FRINGE = 8


def _quadrature_extent(state: State) -> tuple:
    """(|mean|, largest standard deviation over rotation angles)."""
    space = FockSpace(state.dim)
    _, _, _, x, p = hilbert.ladder_ops(space)
    rho = state.normalized().to_density().matrix
    mx = np.trace(x @ rho).real
    mp = np.trace(p @ rho).real
    cxx = np.trace(x @ x @ rho).real - mx ** 2
    cpp = np.trace(p @ p @ rho).real - mp ** 2
    cxp = 0.5 * np.trace((x @ p + p @ x) @ rho).real - mx * mp
    top = 0.5 * (cxx + cpp) + math.sqrt(0.25 * (cxx - cpp) ** 2 + cxp ** 2)
    return math.hypot(mx, mp), math.sqrt(max(top, 0.0))


def default_half_width(state: State) -> float:
    """Half-width covering six standard deviations, never below 12."""
    mean, std = _quadrature_extent(state)
    return max(DEFAULT_HALF_WIDTH, mean + 6 * std)


def check_coverage(state: State, half_width: float) -> None:
    mean, std = _quadrature_extent(state)
    if half_width < mean + COVERAGE_SIGMAS * std:
        raise GridTooSmall(
            f"grid half-width {half_width:.3g} < |mean| + {COVERAGE_SIGMAS:g} std = {mean + COVERAGE_SIGMAS * std:.3g}"
        )


@dataclass(frozen=True)
class GridSpec:
    """Symmetric square grid; ``half_width=None`` adapts to the state.

    With an adaptive width the point count grows to keep the spacing of the
    default [-12, 12] x 1024 grid.
    """

    half_width: Optional[float] = None
    points: int = DEFAULT_POINTS
    p_points: Optional[int] = None

    def resolve(self, state: State) -> tuple:
        if self.half_width is None:
            hw = default_half_width(state)
            spacing = 2 * DEFAULT_HALF_WIDTH / (DEFAULT_POINTS - 1)
            n = max(self.points, int(math.ceil(2 * hw / spacing)) + 1)
        else:
            hw, n = float(self.half_width), int(self.points)
            check_coverage(state, hw)
        return hw, n


@dataclass(frozen=True)
class WignerGrid:
    x: np.ndarray
    p: np.ndarray
    values: np.ndarray  # shape (len(x), len(p))
    convention: str = CONVENTION

    @property
    def integral(self) -> float:
        return float(trapezoid(trapezoid(self.values, self.p, axis=1), self.x))

    @property
    def minimum(self) -> float:
        return float(self.values.min())

    @property
    def maximum(self) -> float:
        return float(self.values.max())

    def x_marginal(self) -> np.ndarray:
        return trapezoid(self.values, self.p, axis=1)

    def p_marginal(self) -> np.ndarray:
        return trapezoid(self.values, self.x, axis=0)

    def negative_volume(self) -> float:
        neg = np.where(self.values < 0, -self.values, 0.0)
        return float(trapezoid(trapezoid(neg, self.p, axis=1), self.x))


def _grid_density_matrix(state: State, x: np.ndarray) -> np.ndarray:
    """<x_j| rho |x_k> on grid points."""
    psi = hilbert.hermite_functions(state.dim, x)  # (dim, nx)
    if isinstance(state, MechState):
        amp = state.amplitudes @ psi
        return np.outer(amp, amp.conj())
    return psi.T @ state.matrix @ psi


def wigner(state: State, grid: Optional[GridSpec] = None) -> WignerGrid:
    """W(x, p) = (1/4pi) int dy <x + y/2| rho |x - y/2> exp(-i p y / 2).

    Evaluated on a uniform grid with y = 2 k h so both arguments stay on
    grid points; the p axis spans the same range as x.
    """
    grid = grid or GridSpec()
    hw, n = grid.resolve(state)
    x = np.linspace(-hw, hw, n)
    p = np.linspace(-hw, hw, grid.p_points or n)
    h = x[1] - x[0]
    if hw >= math.pi / h:
        raise GridTooSmall("p range exceeds the aliasing limit pi / dx")
    rho = _grid_density_matrix(state, x)
    kmax = n - 1
    # A[j, k] = rho(x_{j+k}, x_{j-k}) for k >= 0, zero off the grid
    idx = np.arange(n)[:, None]
    ks = np.arange(kmax + 1)[None, :]
    plus, minus = idx + ks, idx - ks
    valid = (plus < n) & (minus >= 0)
    a = np.where(valid, rho[np.clip(plus, 0, n - 1), np.clip(minus, 0, n - 1)], 0.0)
    phase = np.outer(np.arange(kmax + 1) * h, p)
    weights = np.full(kmax + 1, 2.0)
    weights[0] = 1.0
    a = a * weights[None, :]
    values = np.ascontiguousarray(a.real) @ np.cos(phase) + np.ascontiguousarray(a.imag) @ np.sin(phase)
    values *= h / (2 * math.pi)
    return WignerGrid(x, p, values)


def characteristic(state: State, alpha: complex) -> complex:
    """chi(alpha) = Tr[D(alpha) rho], with D built by matrix exponential."""
    space = FockSpace(state.dim)
    d = hilbert.displacement(space, complex(alpha))
    if isinstance(state, MechState):
        return complex(np.vdot(state.amplitudes, d @ state.amplitudes))
    return complex(np.trace(d @ state.matrix))


def characteristic_from_wigner(wg: WignerGrid, alpha: complex) -> complex:
    """chi(alpha) = int W(x, p) exp(i x Im(alpha) - i p Re(alpha)) dx dp."""
    alpha = complex(alpha)
    kernel = np.exp(1j * alpha.imag * wg.x)[:, None] * np.exp(-1j * alpha.real * wg.p)[None, :]
    return complex(trapezoid(trapezoid(wg.values * kernel, wg.p, axis=1), wg.x))


@dataclass(frozen=True)
class MarginalCurve:
    x: np.ndarray
    values: np.ndarray
    theta: float = 0.0

    @property
    def integral(self) -> float:
        return float(trapezoid(self.values, self.x))

    @property
    def spacing(self) -> float:
        return float(self.x[1] - self.x[0])


def default_axis(state: State, points: Optional[int] = None) -> np.ndarray:
    hw, n = GridSpec().resolve(state)
    return np.linspace(-hw, hw, points or n)


def marginal(state: State, theta: float = 0.0, x: Optional[np.ndarray] = None) -> MarginalCurve:
    """Distribution of x cos(theta) + p sin(theta), i.e. <x| R rho R^dag |x>."""
    if x is None:
        x = default_axis(state)
    else:
        x = np.asarray(x, dtype=float)
        check_coverage(state, min(-x[0], x[-1]))
    return MarginalCurve(x, hilbert.position_density(hilbert.rotate(state, theta), x), float(theta))


@dataclass(frozen=True)
class Spectrum:
    k: np.ndarray
    magnitude: np.ndarray
    peaks: list = field(default_factory=list)  # [(wave number, magnitude)]
    floor: float = 0.0

    def peaks_near(self, k0: float, rel_tol: float) -> list:
        return [pk for pk in self.peaks if abs(pk[0] - k0) <= rel_tol * k0]


def _refine_peak(k: np.ndarray, s: np.ndarray, i: int) -> tuple:
    if 0 < i < len(k) - 1:
        y0, y1, y2 = s[i - 1], s[i], s[i + 1]
        denom = y0 - 2 * y1 + y2
        if denom != 0:
            shift = 0.5 * (y0 - y2) / denom
            dk = k[1] - k[0]
            return float(k[i] + shift * dk), float(y1 - 0.25 * (y0 - y2) * shift)
    return float(k[i]), float(s[i])


def wavenumber_spectrum(curve: MarginalCurve, k_max: Optional[float] = None, dk: float = 0.005,
                        floor: float = 0.01) -> Spectrum:
    """|int P(x) exp(-i k x) dx| on a fine k grid, with peak extraction.

    Peaks are local maxima above ``floor`` times the zero-frequency value,
    refined by a parabola through the three top samples.  ``k_max`` defaults
    to the highest wave number sampled with eight points per fringe.
    """
    h = curve.spacing
    limit = 2 * math.pi / (MIN_POINTS_PER_FRINGE * h)
    if k_max is None:
        k_max = limit
    elif k_max > limit * (1 + 1e-12):
        raise UnderResolved(
            f"wave number {k_max:.3g} needs spacing <= {2 * math.pi / (MIN_POINTS_PER_FRINGE * k_max):.3g}, have {h:.3g}"
        )
    k = np.arange(0.0, k_max + 0.5 * dk, dk)
    weights = np.full(curve.x.size, h)
    weights[[0, -1]] *= 0.5
    s = np.abs(np.exp(-1j * np.outer(k, curve.x)) @ (curve.values * weights))
    threshold = floor * s[0]
    idx, _ = find_peaks(s, height=threshold)
    peaks = [_refine_peak(k, s, int(i)) for i in idx]
    return Spectrum(k, s, peaks, threshold)


def fourier_cosine(curve: MarginalCurve, k: float) -> float:
    """int P(x) cos(k x) dx (trapezoid)."""
    return float(trapezoid(curve.values * np.cos(k * curve.x), curve.x))


# --- classical checkerboard ------------------------------------------------------

@dataclass(frozen=True)
class ClassicalCheckerboard:
    """P(x, p) = exp(-(x^2 + p^2) / 2 sigma^2) cos^2(alpha x) cos^2(alpha p) / N."""

    sigma: float
    alpha: float

    def __post_init__(self):
        if self.sigma <= 0:
            raise ValueError("sigma must be positive")
        if self.alpha < 0:
            raise ValueError("alpha is a wave number magnitude; pass |alpha|")

    def _factor(self, u):
        return np.exp(-0.5 * (u / self.sigma) ** 2) * np.cos(self.alpha * u) ** 2

    @property
    def normalization(self) -> float:
        """N, by quadrature of the separable 1-D factor."""
        u, w = _line_rule(self.sigma)
        return float(np.sum(w * self._factor(u))) ** 2

    def density(self, x, p):
        return self._factor(np.asarray(x)) * self._factor(np.asarray(p)) / self.normalization


def _line_rule(sigma: float, points: int = 4001, sigmas: float = 12.0):
    u = np.linspace(-sigmas * sigma, sigmas * sigma, points)
    w = np.full(points, u[1] - u[0])
    w[[0, -1]] *= 0.5
    return u, w


def classical_marginal(cb: ClassicalCheckerboard, theta: float, x: Optional[np.ndarray] = None,
                       points: int = 2001) -> MarginalCurve:
    """int P(x cos t + p sin t, p cos t - x sin t) dp by trapezoid quadrature."""
    if x is None:
        x = np.linspace(-8 * cb.sigma, 8 * cb.sigma, 1601)
    x = np.asarray(x, dtype=float)
    p, w = _line_rule(cb.sigma, points)
    c, s = math.cos(theta), math.sin(theta)
    dens = cb.density(x[:, None] * c + p[None, :] * s, p[None, :] * c - x[:, None] * s)
    return MarginalCurve(x, dens @ w, float(theta))


def _envelope(q, sigma: float, alpha: float):
    """Fourier transform of exp(-u^2/2 sigma^2) cos^2(alpha u), up to a constant."""
    g = lambda v: np.exp(-0.5 * sigma ** 2 * v ** 2)
    return 0.5 * g(q) + 0.25 * (g(q + 2 * alpha) + g(q - 2 * alpha))


def _closed_form_log(alpha3, theta, sigma: float, alpha: float):
    """Log of the expanded product expression (evaluated in log space to avoid overflow)."""
    a3 = np.abs(alpha3)
    s2 = sigma ** 2
    c, s = np.cos(theta), np.sin(theta)
    log_pre = -2 * s2 * (a3 ** 2 + 2 * a3 * alpha * (s + c) + 2 * alpha ** 2)

    def bracket(trig):
        return np.logaddexp(
            np.logaddexp(8 * a3 * alpha * s2 * trig, math.log(2) + 2 * alpha * s2 * (2 * a3 * trig + alpha)),
            0.0,
        )

    return log_pre + bracket(c) + bracket(s)


def classical_pplus(cb: ClassicalCheckerboard, alpha3, phi: float, theta, method: str = "closed_form"):
    """Return probability for a classical checkerboard probed by a third grating.

    'closed_form' evaluates the expanded product expression, normalised so
    that alpha3 -> 0 gives p+ = cos^2(phi/2); 'separable' uses the product of
    two 1-D envelope transforms; 'quadrature' integrates cos^2 against the
    2-D density directly.
    """
    if method == "closed_form":
        amp = np.exp(_closed_form_log(alpha3, theta, cb.sigma, cb.alpha)
                     - _closed_form_log(0.0, 0.0, cb.sigma, cb.alpha))
    elif method == "separable":
        k = 2 * np.abs(alpha3)
        g0 = _envelope(0.0, cb.sigma, cb.alpha)
        amp = (_envelope(k * np.cos(theta), cb.sigma, cb.alpha)
               * _envelope(k * np.sin(theta), cb.sigma, cb.alpha) / g0 ** 2)
    elif method == "quadrature":
        return _classical_pplus_quadrature(cb, alpha3, phi, theta)
    else:
        raise ValueError(f"unknown method {method!r}")
    return 0.5 + 0.5 * math.cos(phi) * amp


def _classical_pplus_quadrature(cb: ClassicalCheckerboard, alpha3: float, phi: float, theta: float,
                                points: int = 1601) -> float:
    u, w = _line_rule(cb.sigma, points, sigmas=10.0)
    fu = cb._factor(u) * w
    c, s = math.cos(theta), math.sin(theta)
    # x = u cos(theta) - v sin(theta) for the rotated marginal
    xs = u[:, None] * c - u[None, :] * s
    integrand = np.cos(abs(alpha3) * xs + phi / 2) ** 2
    total = fu @ integrand @ fu
    return float(total / np.sum(fu) ** 2)


def classical_pplus_map(cb: ClassicalCheckerboard, thetas: Sequence[float], ratios: Sequence[float],
                        phi: float = 0.0) -> np.ndarray:
    """Closed-form p+ on a (theta, alpha3/alpha) grid; shape (len(thetas), len(ratios))."""
    th = np.asarray(thetas, dtype=float)[:, None]
    a3 = cb.alpha * np.asarray(ratios, dtype=float)[None, :]
    return classical_pplus(cb, a3, phi, th)


# --- feature detection on p+ maps ----------------------------------------------

@dataclass(frozen=True)
class MapFeature:
    theta: float
    ratio: float
    amplitude: float  # p+ - 1/2, or its magnitude


def find_map_features(values: np.ndarray, thetas: Sequence[float], ratios: Sequence[float],
                      floor: float = 1e-3, theta_period: float = math.pi,
                      skip_columns: int = 1, absolute: bool = True) -> list:
    """Local maxima of |p+ - 1/2| over a (theta, ratio) grid.

    p+ - 1/2 is half the cosine component of P(x) at wave number 2|alpha3|,
    so its magnitude measures fringe strength regardless of fringe phase.
    ``absolute=False`` looks at p+ - 1/2 itself (maxima of p+ only).
    The theta axis is treated as periodic with ``theta_period``; a sample
    duplicating the first one a full period later is dropped.  The first
    ``skip_columns`` ratio columns hold the alpha3 -> 0 shoulder (p+ -> 1)
    and are not reported, though they still act as neighbours.
    """
    thetas = np.asarray(thetas, dtype=float)
    ratios = np.asarray(ratios, dtype=float)
    amp = np.asarray(values, dtype=float) - 0.5
    if absolute:
        amp = np.abs(amp)
    if len(thetas) > 1 and math.isclose(thetas[-1] - thetas[0], theta_period, abs_tol=1e-9):
        thetas, amp = thetas[:-1], amp[:-1]
    periodic = len(thetas) > 2 and math.isclose(
        (thetas[1] - thetas[0]) * len(thetas), theta_period, rel_tol=1e-6)
    nt, nr = amp.shape
    features = []
    for i in range(nt):
        for j in range(skip_columns, nr):
            v = amp[i, j]
            if v <= floor:
                continue
            neighbours = []
            for di in (-1, 0, 1):
                ii = i + di
                if periodic:
                    ii %= nt
                elif not 0 <= ii < nt:
                    continue
                for dj in (-1, 0, 1):
                    jj = j + dj
                    if (di, dj) != (0, 0) and 0 <= jj < nr:
                        neighbours.append(amp[ii, jj])
            if v >= max(neighbours):
                features.append(MapFeature(float(thetas[i]), float(ratios[j]), float(v)))
    return features


def map_grid(n_theta: int = 32, n_ratio: int = 32, max_ratio: float = 2.0) -> tuple:
    """theta in [0, pi) and ratio in (0, max_ratio] with uniform steps."""
    thetas = np.arange(n_theta) * math.pi / n_theta
    ratios = np.arange(1, n_ratio + 1) * max_ratio / n_ratio
    return thetas, ratios
