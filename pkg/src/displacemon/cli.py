"""Scenario runner: ``displacemon <subcommand> [--config FILE] [--set key=value ...]``.

Configs are JSON documents with the sections listed in ``DEFAULTS``; any
key not present there is rejected.  Outputs (CSV, JSON, a manifest) land in
``--out``, else ``output.directory``, else ``$DISPLACEMON_OUT/<subcommand>``,
else ``./displacemon_out/<subcommand>``.
"""

from __future__ import annotations

import argparse
import copy
import csv
import hashlib
import io
import json
import math
import os
import sys
import tempfile
import time
from pathlib import Path
from typing import Optional

import numpy as np

from . import __version__, decoherence, device, hilbert, phasespace, protocol
from .errors import ConfigError, NumericsError

OUT_ENV = "DISPLACEMON_OUT"
EXIT_OK, EXIT_CONFIG, EXIT_NUMERICS, EXIT_IO = 0, 2, 3, 4

DEFAULTS = {
    "device": {
        "length": 800e-9,
        "diameter": 2.5e-9,
        "regime": "tension",
        "frequency_hz": 125e6,  # sets the tension when "tension" is null
        "tension": None,
        "sheet_density": 8e-7,
        "ej0_ghz": 12.0,
        "ec_ghz": 0.2,
        "asymmetry": 0.0,
        "b_parallel": 0.5,
        "flux_bias": -0.84,
        "temperature": 0.033,
        "quality_factor": 1e5,
        "t2": 2e-6,
        "sweep_points": 199,
    },
    "protocol": {
        "lambda0_hz": 8.5e6,
        "tau_lambda": 130e-9,
        "carrier": "modulated",
        "alphas": None,  # [|alpha1|, |alpha2|]; null derives both from the pulse
        "theta1": math.pi / 2,
        "theta2": [0.0, math.pi / 8, math.pi / 4],
        "outcomes": ["+", "+"],
        "phi1": 0.0,
        "phi2": 0.0,
        "phi": 0.0,
        "alpha3": None,  # readout |alpha3|; null uses |alpha2|
        "initial_nbar": 0.0,
        "map_theta_points": 32,
        "map_ratio_points": 32,
        "map_max_ratio": 2.0,
    },
    "cooling": {
        "tau_pi": 100e-9,
        "lambda0_hz": 800e3,
        "carrier": "modulated",
        "repetitions": 2,
        "mode": "frozen",
        "initial_nbar": None,  # null uses the device thermal occupation
        "filter_half_width": 30.0,
        "filter_points": 1201,
    },
    "decoherence": {
        "gamma_t": 0.0,
        "nprime": 0.0,
        "quadrature_points": 31,
        "n_traj": 10000,
        "seed": 0,
    },
    "classical": {
        "sigma": 5.0,
        "alpha": 1.9,
    },
    "numerics": {
        "dim": 256,
        "health_tol": 1e-9,
        "check_convergence": False,
        "convergence_tol": 1e-6,
        "grid_half_width": None,  # null adapts to the state
        "grid_points": 201,
    },
    "output": {
        "directory": None,
        "formats": ["csv", "json"],
    },
}

SECTIONS = {
    "device-report": ("device", "output"),
    "cool": ("device", "cooling", "numerics", "output"),
    "interfere": ("device", "protocol", "decoherence", "numerics", "output"),
    "pplus-map": ("device", "protocol", "decoherence", "numerics", "output"),
    "classical-map": ("protocol", "classical", "output"),
    "wigner": ("device", "protocol", "decoherence", "numerics", "output"),
}


# --- configuration ---------------------------------------------------------

def _merge(base: dict, update: dict, path: str = "") -> dict:
    out = copy.deepcopy(base)
    for key, value in update.items():
        full = f"{path}{key}"
        if key not in base:
            raise ConfigError(f"unknown config key {full!r}", key=full)
        if isinstance(base[key], dict):
            if not isinstance(value, dict):
                raise ConfigError(f"{full!r} must be a section", key=full)
            out[key] = _merge(base[key], value, full + ".")
        else:
            out[key] = value
    return out


def _parse_override(text: str):
    if "=" not in text:
        raise ConfigError(f"override {text!r} is not key=value")
    key, raw = text.split("=", 1)
    try:
        value = json.loads(raw)
    except json.JSONDecodeError:
        value = raw
    node: dict = {}
    cur = node
    parts = key.strip().split(".")
    for part in parts[:-1]:
        cur = cur.setdefault(part, {})
    cur[parts[-1]] = value
    return node


def load_config(path: Optional[str], overrides=()) -> dict:
    cfg = copy.deepcopy(DEFAULTS)
    if path:
        try:
            user = json.loads(Path(path).read_text(encoding="utf-8"))
        except json.JSONDecodeError as exc:
            raise ConfigError(f"config is not valid JSON: {exc}") from exc
        if not isinstance(user, dict):
            raise ConfigError("config root must be an object")
        cfg = _merge(cfg, user)
    for text in overrides:
        cfg = _merge(cfg, _parse_override(text))
    return cfg


def _get(cfg: dict, key: str, kind=float, allow_none: bool = False):
    section, name = key.split(".")
    value = cfg[section][name]
    if value is None:
        if allow_none:
            return None
        raise ConfigError(f"{key!r} is required", key=key)
    try:
        if kind is float:
            out = float(value)
            if not math.isfinite(out):
                raise ValueError
            return out
        if kind is int:
            if isinstance(value, bool) or int(value) != value:
                raise ValueError
            return int(value)
        if kind is bool:
            if not isinstance(value, bool):
                raise ValueError
            return value
        return kind(value)
    except (TypeError, ValueError) as exc:
        raise ConfigError(f"{key!r} has invalid value {value!r}", key=key) from exc


def _check(cond: bool, key: str, message: str):
    if not cond:
        raise ConfigError(f"{key!r} {message}", key=key)


def config_hash(cfg: dict) -> str:
    return hashlib.sha256(json.dumps(cfg, sort_keys=True).encode()).hexdigest()


def build_device(cfg: dict) -> device.DeviceParams:
    length = _get(cfg, "device.length")
    diameter = _get(cfg, "device.diameter")
    regime = _get(cfg, "device.regime", str)
    density = _get(cfg, "device.sheet_density")
    tension = _get(cfg, "device.tension", allow_none=True)
    try:
        if regime == "tension" and tension is None:
            tension = device.tension_for_frequency(length, diameter, _get(cfg, "device.frequency_hz"), density)
        geom = device.MechGeometry(length, diameter, tension or 0.0, regime, density)
    except ConfigError:
        raise
    except ValueError as exc:
        raise ConfigError(str(exc), key="device") from exc
    try:
        squid = device.SquidParams(
            ej0=device.ghz_to_joule(_get(cfg, "device.ej0_ghz")),
            ec=device.ghz_to_joule(_get(cfg, "device.ec_ghz")),
            asymmetry=_get(cfg, "device.asymmetry"),
            b_parallel=_get(cfg, "device.b_parallel"),
            flux_bias=_get(cfg, "device.flux_bias"),
        )
        env = device.EnvironmentParams(
            _get(cfg, "device.temperature"), _get(cfg, "device.quality_factor"), _get(cfg, "device.t2")
        )
    except ConfigError:
        raise
    except ValueError as exc:
        raise ConfigError(str(exc), key="device") from exc
    return device.DeviceParams(geom, squid, env)


def device_summary(dev: device.DeviceParams) -> dict:
    mode = dev.mode
    lam = device.coupling_strength(mode, dev.geometry, dev.squid)
    fom = device.figures_of_merit(mode, lam, dev.environment)
    return {
        "omega_rad_s": mode.omega,
        "omega_over_2pi_hz": mode.omega_hz,
        "x_zp_m": mode.x_zp,
        "modal_mass_kg": mode.mass,
        "beta0": mode.beta0,
        "omega_q_max_over_2pi_hz": device.max_qubit_frequency(dev.squid) / (2 * math.pi),
        "omega_q_bias_over_2pi_hz": device.qubit_frequency(
            device.josephson_energy(dev.squid), dev.squid.ec) / (2 * math.pi),
        "lambda_rad_s": lam,
        "lambda_over_2pi_hz": lam / (2 * math.pi),
        "figures_of_merit": {
            "lambda_over_omega": fom.coupling_ratio,
            "lambda_over_kappa_th": fom.mechanical_ratio,
            "t2_lambda_over_2pi": fom.qubit_ratio,
            "kappa_th_per_s": fom.kappa_th,
            "nbar": fom.nbar,
            "min_quality_factor": fom.min_quality_factor,
            "min_t2_s": fom.min_t2,
        },
        "flags": {
            "strong_mechanical": fom.strong_mechanical,
            "strong_qubit": fom.strong_qubit,
            "strong": fom.strong,
            "ultrastrong": fom.ultrastrong,
        },
    }


# --- output ----------------------------------------------------------------

def _fmt(value) -> str:
    if isinstance(value, (float, np.floating)):
        return "%.17g" % value
    return str(value)


class OutputDir:
    """Collects artifacts; every write is temp-file + rename."""

    def __init__(self, path: Path, formats):
        self.path = path
        self.formats = set(formats)
        self.files: list = []
        try:
            path.mkdir(parents=True, exist_ok=True)
        except OSError as exc:
            raise OSError(f"cannot create output directory {path}: {exc}") from exc

    def _write(self, name: str, text: str) -> None:
        target = self.path / name
        fd, tmp = tempfile.mkstemp(dir=self.path, prefix=".tmp-", suffix=name)
        try:
            with os.fdopen(fd, "w", encoding="utf-8", newline="") as fh:
                fh.write(text)
            os.chmod(tmp, 0o644)
            os.replace(tmp, target)
        except BaseException:
            if os.path.exists(tmp):
                os.unlink(tmp)
            raise
        if name not in self.files:
            self.files.append(name)

    def csv(self, name: str, header, rows) -> None:
        if "csv" not in self.formats:
            return
        buf = io.StringIO()
        writer = csv.writer(buf, lineterminator="\n")
        writer.writerow(header)
        for row in rows:
            writer.writerow([_fmt(v) for v in row])
        self._write(name, buf.getvalue())

    def columns(self, name: str, columns: dict) -> None:
        keys = list(columns)
        self.csv(name, keys, zip(*(np.asarray(columns[k]) for k in keys)))

    def json(self, name: str, obj, force: bool = False) -> None:
        if "json" not in self.formats and not force:
            return
        self._write(name, json.dumps(_jsonable(obj), indent=2, sort_keys=True) + "\n")


def _jsonable(obj):
    if isinstance(obj, dict):
        return {str(k): _jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_jsonable(v) for v in obj]
    if isinstance(obj, complex):
        return {"re": obj.real, "im": obj.imag}
    if isinstance(obj, np.generic):
        return _jsonable(obj.item())
    if isinstance(obj, np.ndarray):
        return _jsonable(obj.tolist())
    if isinstance(obj, float) and not math.isfinite(obj):
        return str(obj)
    return obj


def _wigner_csv(out: OutputDir, name: str, wg: phasespace.WignerGrid) -> None:
    """Row-major grid: header 'x\\p' followed by the p axis, then one row per x."""
    rows = ([x, *row] for x, row in zip(wg.x, wg.values))
    out.csv(name, ["x\\p", *(_fmt(p) for p in wg.p)], rows)


# --- scenario helpers ----------------------------------------------------------

def _space(cfg: dict) -> hilbert.FockSpace:
    dim = _get(cfg, "numerics.dim", int)
    _check(dim >= 8, "numerics.dim", "must be at least 8")
    return hilbert.FockSpace(dim)


def _initial(space, nbar: float):
    return hilbert.vacuum(space) if nbar == 0 else hilbert.thermal_state(space, nbar)


def _alphas(cfg: dict, dev: device.DeviceParams) -> tuple:
    raw = cfg["protocol"]["alphas"]
    if raw is None:
        pulse = protocol.PulseEnvelope(
            2 * math.pi * _get(cfg, "protocol.lambda0_hz"), _get(cfg, "protocol.tau_lambda"),
            _get(cfg, "protocol.carrier", str))
        a = abs(protocol.pulse_alpha(pulse, dev.mode.omega))
        return a, a
    _check(isinstance(raw, list) and len(raw) > 0, "protocol.alphas", "must be a non-empty list [|alpha1|, |alpha2|]")
    _check(len(raw) == 2, "protocol.alphas", "needs exactly two entries")
    try:
        return float(raw[0]), float(raw[1])
    except (TypeError, ValueError) as exc:
        raise ConfigError("'protocol.alphas' entries must be numbers", key="protocol.alphas") from exc


def _theta2(cfg: dict) -> list:
    raw = cfg["protocol"]["theta2"]
    if not isinstance(raw, list):
        raw = [raw]
    _check(len(raw) > 0, "protocol.theta2", "must list at least one angle")
    return [float(v) for v in raw]


def _outcomes(cfg: dict) -> list:
    raw = cfg["protocol"]["outcomes"]
    _check(isinstance(raw, list) and len(raw) == 2 and all(o in ("+", "-") for o in raw),
           "protocol.outcomes", "must be two of '+'/'-'")
    return raw


def _grid(cfg: dict, state) -> phasespace.GridSpec:
    hw = _get(cfg, "numerics.grid_half_width", allow_none=True)
    if hw is None:
        hw = phasespace.default_half_width(state)
    points = _get(cfg, "numerics.grid_points", int)
    _check(points >= 3, "numerics.grid_points", "must be >= 3")
    # the p axis spans [-hw, hw] and must stay inside the pi/dx aliasing band
    points = max(points, int(math.ceil(1.25 * 2 * hw * hw / math.pi)) + 1)
    return phasespace.GridSpec(hw, points)


def _run_interferometer(cfg: dict, space, a1: float, a2: float):
    rec = protocol.interferometer(
        _initial(space, _get(cfg, "protocol.initial_nbar")),
        1j * a1, 1j * a2,
        theta1=_get(cfg, "protocol.theta1"), theta2=0.0,
        outcomes=_outcomes(cfg), phi1=_get(cfg, "protocol.phi1"), phi2=_get(cfg, "protocol.phi2"),
    )
    state = rec.state_at("grating2")
    nprime = _get(cfg, "decoherence.nprime")
    if nprime:
        state = decoherence.thermal_add(
            state, decoherence.ThermalAddSpec(nprime, _get(cfg, "decoherence.quadrature_points", int)))
    return rec, state


def _readout(cfg: dict, state, alpha3: float) -> float:
    return decoherence.pplus_dephased(state, 1j * alpha3, _get(cfg, "protocol.phi"),
                                      _get(cfg, "decoherence.gamma_t"))


def _spectrum_peaks(state, theta: float) -> list:
    curve = phasespace.marginal(state, theta, phasespace.default_axis(state, 4001))
    spec = phasespace.wavenumber_spectrum(curve, k_max=12.0)
    return [[k, m] for k, m in spec.peaks]


# --- subcommands -------------------------------------------------------------

def cmd_device_report(cfg: dict, out: OutputDir, log: dict) -> dict:
    dev = build_device(cfg)
    summary = device_summary(dev)
    points = _get(cfg, "device.sweep_points", int)
    _check(points >= 2, "device.sweep_points", "must be >= 2")
    sweep = device.flux_sweep(dev, n_points=points)
    out.columns("flux_sweep.csv", sweep.columns())
    out.json("device_report.json", summary)
    return {
        "omega_over_2pi_hz": summary["omega_over_2pi_hz"],
        "x_zp_m": summary["x_zp_m"],
        "omega_q_bias_over_2pi_hz": summary["omega_q_bias_over_2pi_hz"],
        "lambda_over_2pi_hz": summary["lambda_over_2pi_hz"],
        "nbar": summary["figures_of_merit"]["nbar"],
    }


def cmd_cool(cfg: dict, out: OutputDir, log: dict) -> dict:
    dev = build_device(cfg)
    space = _space(cfg)
    nbar = _get(cfg, "cooling.initial_nbar", allow_none=True)
    if nbar is None:
        nbar = device.bose_occupation(dev.mode.omega, dev.environment.temperature)
    mode = _get(cfg, "cooling.mode", str)
    _check(mode in ("frozen", "full"), "cooling.mode", "must be 'frozen' or 'full'")
    reps = _get(cfg, "cooling.repetitions", int)
    _check(reps >= 1, "cooling.repetitions", "must be >= 1")
    pulse = protocol.CoolingPulse(
        _get(cfg, "cooling.tau_pi"), 2 * math.pi * _get(cfg, "cooling.lambda0_hz"), dev.mode.omega,
        _get(cfg, "cooling.carrier", str))
    initial = hilbert.thermal_state(space, nbar)
    record = protocol.cool(initial, pulse, reps, mode)
    hw = _get(cfg, "cooling.filter_half_width")
    x = np.linspace(-hw, hw, _get(cfg, "cooling.filter_points", int))
    filt = protocol.cooling_filter(initial, pulse, mode, x)
    out.columns("cooling_filter.csv", {"x": x, "transmission": filt.transmission})
    keys = ["var_x", "var_p", "mean_n", "mean_x", "mean_p", "probability"]
    out.csv("cooling_stages.csv", ["stage", *keys],
            ([i, *(s[k] for k in keys)] for i, s in enumerate(record.stages)))
    log["probabilities"] = {f"filter{i}": s["probability"] for i, s in enumerate(record.stages[1:], 1)}
    result = {
        "initial_nbar": nbar,
        "filter_fwhm_x": filt.fwhm,
        "cumulative_probability": record.probability,
        "final": record.stages[-1],
        "stages": record.stages,
    }
    out.json("cooling_report.json", result)
    return {"initial_nbar": nbar, "filter_fwhm_x": filt.fwhm,
            "cumulative_probability": record.probability, "final_mean_n": record.stages[-1]["mean_n"]}


def cmd_interfere(cfg: dict, out: OutputDir, log: dict) -> dict:
    dev = build_device(cfg)
    space = _space(cfg)
    a1, a2 = _alphas(cfg, dev)
    alpha3 = _get(cfg, "protocol.alpha3", allow_none=True) or a2
    rec, state = _run_interferometer(cfg, space, a1, a2)
    tol = _get(cfg, "numerics.health_tol")
    for step in rec.steps:
        hilbert.check_health(step.state, tol)
    log["probabilities"] = rec.probabilities
    out.csv("steps.csv", ["label", "kind", "probability", "cumulative"],
            ([s.label, s.kind, s.probability, float(np.prod([t.probability for t in rec.steps[:i + 1]]))]
             for i, s in enumerate(rec.steps)))
    insets = {"before_grating1": rec.state_at("initial"), "before_grating2": rec.state_at("evolve1")}
    readouts = {}
    for theta in _theta2(cfg):
        label = f"theta2_{theta:.6f}"
        final = hilbert.rotate(state, theta)
        insets[label] = final
        readouts[label] = {"theta2": theta, "pplus": _readout(cfg, final, alpha3),
                           "peaks": _spectrum_peaks(final, 0.0)}
    for label, st in insets.items():
        st = st.normalized()
        wg = phasespace.wigner(st, _grid(cfg, st))
        _wigner_csv(out, f"wigner_{label}.csv", wg)
        out.columns(f"marginal_{label}.csv", {"x": wg.x, "P_x": wg.x_marginal(), "P_p": wg.p_marginal()})
    result = {
        "alpha1": a1, "alpha2": a2, "alpha3": alpha3,
        "probabilities": rec.probabilities,
        "cumulative_probability": rec.cumulative_probability,
        "readouts": readouts,
        "step_labels": [s.label for s in rec.steps],
    }
    if _get(cfg, "numerics.check_convergence", bool):
        result["convergence"] = _interfere_convergence(cfg, a1, a2, alpha3)
    out.json("interfere_report.json", result)
    return {"alpha": [a1, a2], "cumulative_probability": rec.cumulative_probability,
            "pplus": {k: v["pplus"] for k, v in readouts.items()},
            "peaks": {k: [round(p[0], 4) for p in v["peaks"]] for k, v in readouts.items()}}


def _interfere_convergence(cfg: dict, a1: float, a2: float, alpha3: float) -> dict:
    dim = _get(cfg, "numerics.dim", int)
    x = np.linspace(-10, 10, 201)

    def scenario(space):
        rec, state = _run_interferometer(cfg, space, a1, a2)
        return {"probabilities": np.array([s.probability for s in rec.steps]),
                "pplus": _readout(cfg, state, alpha3),
                "marginal": hilbert.position_density(state.normalized(), x)}

    report = hilbert.converge_check(scenario, (dim, 2 * dim), _get(cfg, "numerics.convergence_tol"))
    return {"dims": list(report.dims), "deviations": report.deviations, "passed": report.passed}


def cmd_pplus_map(cfg: dict, out: OutputDir, log: dict) -> dict:
    dev = build_device(cfg)
    space = _space(cfg)
    a1, a2 = _alphas(cfg, dev)
    thetas, ratios = _map_axes(cfg)
    nprime = _get(cfg, "decoherence.nprime")
    channel = decoherence.thermal_channel(nprime, _get(cfg, "decoherence.quadrature_points", int)) if nprime else None
    m = protocol.pplus_map(
        _initial(space, _get(cfg, "protocol.initial_nbar")), 1j * a1, 1j * a2, ratios, thetas,
        _get(cfg, "protocol.phi"), _outcomes(cfg), channel, _get(cfg, "decoherence.gamma_t"))
    rows = ([th, r, r * a2, m.values[i, j]] for i, th in enumerate(thetas) for j, r in enumerate(ratios))
    out.csv("pplus_map.csv", ["theta2", "ratio", "alpha3", "pplus"], rows)
    features = phasespace.find_map_features(m.values, thetas, ratios)
    feats = [[f.theta, f.ratio, f.amplitude] for f in features]
    out.json("pplus_map_report.json", {"alpha1": a1, "alpha2": a2, "features": feats,
                                       "shape": list(m.values.shape)})
    return {"alpha2": a2, "features": [[round(f[0], 4), round(f[1], 4)] for f in feats]}


def _map_axes(cfg: dict):
    nt = _get(cfg, "protocol.map_theta_points", int)
    nr = _get(cfg, "protocol.map_ratio_points", int)
    _check(nt >= 1, "protocol.map_theta_points", "must be >= 1")
    _check(nr >= 1, "protocol.map_ratio_points", "must be >= 1")
    return phasespace.map_grid(nt, nr, _get(cfg, "protocol.map_max_ratio"))


def cmd_classical_map(cfg: dict, out: OutputDir, log: dict) -> dict:
    sigma = _get(cfg, "classical.sigma")
    alpha = _get(cfg, "classical.alpha")
    _check(sigma > 0, "classical.sigma", "must be positive")
    _check(alpha > 0, "classical.alpha", "must be positive")
    cb = phasespace.ClassicalCheckerboard(sigma, alpha)
    thetas, ratios = _map_axes(cfg)
    phi = _get(cfg, "protocol.phi")
    values = phasespace.classical_pplus_map(cb, thetas, ratios, phi)
    rows = ([th, r, r * alpha, values[i, j]] for i, th in enumerate(thetas) for j, r in enumerate(ratios))
    out.csv("classical_map.csv", ["theta2", "ratio", "alpha3", "pplus"], rows)
    features = [[f.theta, f.ratio, f.amplitude] for f in phasespace.find_map_features(values, thetas, ratios)]
    out.json("classical_map_report.json", {"sigma": sigma, "alpha": alpha, "features": features})
    return {"features": [[round(f[0], 4), round(f[1], 4)] for f in features]}


def cmd_wigner(cfg: dict, out: OutputDir, log: dict) -> dict:
    dev = build_device(cfg)
    space = _space(cfg)
    a1, a2 = _alphas(cfg, dev)
    rec, state = _run_interferometer(cfg, space, a1, a2)
    log["probabilities"] = rec.probabilities
    minima = {}
    for theta in _theta2(cfg):
        label = f"theta2_{theta:.6f}"
        st = hilbert.rotate(state, theta).normalized()
        grid = _grid(cfg, st)
        wg = phasespace.wigner(st, grid)
        _wigner_csv(out, f"wigner_{label}.csv", wg)
        out.json(f"wigner_{label}.json", {
            "convention": wg.convention,
            "grid": {"half_width": grid.half_width, "points": grid.points},
            "state": {"initial_nbar": _get(cfg, "protocol.initial_nbar"), "alphas": [a1, a2],
                      "theta1": _get(cfg, "protocol.theta1"), "theta2": theta,
                      "nprime": _get(cfg, "decoherence.nprime")},
            "integral": wg.integral, "max": wg.maximum, "min": wg.minimum,
        }, force=True)
        minima[label] = wg.minimum
    return {"alpha": [a1, a2], "wigner_min": minima}


COMMANDS: dict = {
    "device-report": cmd_device_report,
    "cool": cmd_cool,
    "interfere": cmd_interfere,
    "pplus-map": cmd_pplus_map,
    "classical-map": cmd_classical_map,
    "wigner": cmd_wigner,
}


# --- entry point ---------------------------------------------------------------

def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="displacemon", description=__doc__.splitlines()[0])
    ap.add_argument("--version", action="version", version=__version__)
    sub = ap.add_subparsers(dest="command", required=True)
    for name in COMMANDS:
        p = sub.add_parser(name)
        p.add_argument("--config", help="JSON scenario file")
        p.add_argument("--set", dest="overrides", action="append", default=[], metavar="KEY=VALUE",
                       help="dotted-key override, e.g. numerics.dim=128 (value parsed as JSON)")
        p.add_argument("--out", help="output directory")
        p.add_argument("--summary", action="store_true", help="print key scalars as JSON")
    return ap


def _output_path(cfg: dict, command: str, cli_out: Optional[str]) -> Path:
    if cli_out:
        return Path(cli_out)
    if cfg["output"]["directory"]:
        return Path(cfg["output"]["directory"])
    base = os.environ.get(OUT_ENV)
    return Path(base or "displacemon_out") / command


def _fail(code: int, exc: BaseException) -> int:
    payload = {"error": type(exc).__name__, "message": str(exc), "exit_code": code}
    key = getattr(exc, "key", None)
    if key:
        payload["key"] = key
    print(json.dumps(payload), file=sys.stderr)
    return code


def run(argv=None) -> int:
    args = build_parser().parse_args(argv)
    start = time.perf_counter()
    try:
        cfg = load_config(args.config, args.overrides)
        formats = cfg["output"]["formats"]
        _check(isinstance(formats, list) and set(formats) <= {"csv", "json"},
               "output.formats", "must be a list drawn from 'csv', 'json'")
        effective = {k: cfg[k] for k in SECTIONS[args.command]}
        out = OutputDir(_output_path(cfg, args.command, args.out), formats)
        log: dict = {}
        summary = COMMANDS[args.command](cfg, out, log)
        manifest = {
            "command": args.command,
            "version": __version__,
            "config_sha256": config_hash(effective),
            "config": effective,
            "seed": cfg["decoherence"]["seed"],
            "probabilities": log.get("probabilities", {}),
            "wall_clock_s": time.perf_counter() - start,
            "files": sorted(out.files + ["manifest.json"]),
        }
        out.json("manifest.json", manifest, force=True)
    except ConfigError as exc:
        return _fail(EXIT_CONFIG, exc)
    except NumericsError as exc:
        return _fail(EXIT_NUMERICS, exc)
    except OSError as exc:
        return _fail(EXIT_IO, exc)
    if args.summary:
        print(json.dumps(_jsonable(summary), sort_keys=True))
    return EXIT_OK


def main() -> None:
    raise SystemExit(run())
