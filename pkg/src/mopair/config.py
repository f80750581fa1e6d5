"""Run configuration: JSON with includes, schema validation, hashing.

Configs are flat structured JSON.  A top-level "include" entry (string or
list) is merged first, later keys overriding recursively; the special
token "paper-defaults" resolves to the shipped device table.  Unknown keys
are rejected with their dotted path; parse errors carry line/column from
the JSON decoder.  The canonical hash of the merged config is embedded in
every output file.
"""

from __future__ import annotations

import hashlib
import json
import math
from importlib import resources
from pathlib import Path

import numpy as np

from .device import PulseProfile, SystemParams
from .engine import BathSchedule
from .errors import ConfigError
from .temporal import TemporalEnvelope

__all__ = [
    "load_config",
    "merged_config",
    "config_hash",
    "paper_defaults",
    "build_params",
    "build_pulse",
    "build_envelope",
    "build_gate",
    "resolve_baths",
]

_NUM = "num"
_NUM_OR_NULL = "num?"
_INT = "int"
_INT_OR_NULL = "int?"
_STR = "str"
_STR_OR_NULL = "str?"
_KNOTS = "knots"
_NUMLIST = "numlist"

SCHEMA = {
    "device": {
        "g_om_hz": _NUM, "g_pe_hz": _NUM,
        "kappa_e_a_hz": _NUM, "kappa_i_a_hz": _NUM, "kappa_i_b_hz": _NUM,
        "kappa_e_c_hz": _NUM, "kappa_i_c_hz": _NUM,
        "omega_b_hz": _NUM, "omega_c_hz": _NUM, "delta_a_hz": _NUM,
        "n_th_w": _NUM,
    },
    "pulse": {
        "t_p_fwhm_s": _NUM, "n_a_peak": _NUM, "t_center_s": _NUM, "rep_period_s": _NUM,
    },
    "baths": {
        "mode": _STR, "target_acoustic_occupation": _NUM,
        "knots_b": _KNOTS, "knots_c": _KNOTS, "n_th_w": _NUM,
        "power_law_exponent": _NUM, "reference_peak_occupation": _NUM,
    },
    "envelope": {"t_g_s": _NUM, "alpha": _NUM, "phi_o_rad": _NUM},
    "gate": {"center_s": _NUM_OR_NULL, "duration_s": _NUM},
    "budget": {
        "signal_rate_hz": _NUM, "thermal_rate_hz": _NUM,
        "dcr_hz": _NUM, "leak_rate_hz": _NUM,
    },
    "tomography": {
        "n_add": _NUM, "gain_db": _NUM, "n_conditional": _INT,
        "n_unconditional": _INT, "n_noise": _INT, "n_chunks": _INT,
    },
    "engine": {
        "fock_dim": _INT, "dt_s": _NUM_OR_NULL, "grid_nt": _INT, "grid_ntau": _INT,
        "jump_samples": _INT, "trace_start_s": _NUM, "trace_stop_s": _NUM,
        "trace_step_s": _NUM,
    },
    "fit": {
        "knot_times_s": _NUMLIST, "detuning_hz": _NUM, "fock_dim": _INT,
        "grid_nt": _INT, "grid_ntau": _INT,
    },
    "calibration": {
        "optical_rate_hz": _NUM, "single_phonon_rate_hz": _NUM,
        "detected_power_w": _NUM, "kappa_e_b_hz": _NUM, "kappa_i_b_hz": _NUM,
        "omega_b_hz": _NUM, "input_power_w": _NUM_OR_NULL,
    },
    "run": {"seed": _INT_OR_NULL, "out_dir": _STR, "bootstrap": _INT},
}


def paper_defaults() -> dict:
    with resources.files("mopair.data").joinpath("paper_device.json").open() as fh:
        return json.load(fh)


def _merge(base: dict, over: dict) -> dict:
    out = dict(base)
    for k, v in over.items():
        if isinstance(v, dict) and isinstance(out.get(k), dict):
            out[k] = _merge(out[k], v)
        else:
            out[k] = v
    return out


def _load_raw(path: Path, stack=()) -> dict:
    if str(path) in stack:
        raise ConfigError(f"circular include: {' -> '.join(stack)} -> {path}")
    try:
        text = path.read_text(encoding="utf-8")
    except OSError as exc:
        raise ConfigError(f"cannot read config {path}: {exc}") from exc
    try:
        data = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ConfigError(
            f"{path}: invalid JSON at line {exc.lineno}, column {exc.colno}: {exc.msg}"
        ) from exc
    if not isinstance(data, dict):
        raise ConfigError(f"{path}: top level must be an object")
    includes = data.pop("include", [])
    if isinstance(includes, str):
        includes = [includes]
    merged: dict = {}
    for inc in includes:
        if inc == "paper-defaults":
            merged = _merge(merged, paper_defaults())
        else:
            inc_path = (path.parent / inc).resolve()
            merged = _merge(merged, _load_raw(inc_path, stack + (str(path),)))
    return _merge(merged, data)


def _check_value(path: str, spec, value):
    if spec == _NUM:
        if not isinstance(value, (int, float)) or isinstance(value, bool) or not math.isfinite(value):
            raise ConfigError(f"config key {path}: expected a finite number, got {value!r}")
    elif spec == _NUM_OR_NULL:
        if value is not None:
            _check_value(path, _NUM, value)
    elif spec == _INT:
        if not isinstance(value, int) or isinstance(value, bool):
            raise ConfigError(f"config key {path}: expected an integer, got {value!r}")
    elif spec == _INT_OR_NULL:
        if value is not None:
            _check_value(path, _INT, value)
    elif spec == _STR:
        if not isinstance(value, str):
            raise ConfigError(f"config key {path}: expected a string, got {value!r}")
    elif spec == _STR_OR_NULL:
        if value is not None:
            _check_value(path, _STR, value)
    elif spec == _KNOTS:
        ok = isinstance(value, list) and all(
            isinstance(p, list) and len(p) == 2
            and all(isinstance(x, (int, float)) and not isinstance(x, bool) for x in p)
            for p in value
        )
        if not ok:
            raise ConfigError(f"config key {path}: expected a list of [time, occupation] pairs")
    elif spec == _NUMLIST:
        ok = isinstance(value, list) and all(
            isinstance(x, (int, float)) and not isinstance(x, bool) for x in value
        )
        if not ok:
            raise ConfigError(f"config key {path}: expected a list of numbers")
    elif isinstance(spec, dict):
        if not isinstance(value, dict):
            raise ConfigError(f"config key {path}: expected an object")
        for k, v in value.items():
            if k not in spec:
                raise ConfigError(f"unknown config key {path}.{k}")
            _check_value(f"{path}.{k}", spec[k], v)
    else:  # pragma: no cover
        raise ConfigError(f"internal schema error at {path}")


def validate(cfg: dict) -> None:
    for k, v in cfg.items():
        if k not in SCHEMA:
            raise ConfigError(f"unknown config key {k}")
        _check_value(k, SCHEMA[k], v)


def merged_config(path=None, overrides: dict | None = None) -> dict:
    """Defaults + optional file + optional overrides, validated."""
    cfg = paper_defaults()
    if path is not None:
        cfg = _merge(cfg, _load_raw(Path(path)))
    if overrides:
        cfg = _merge(cfg, overrides)
    validate(cfg)
    return cfg


def load_config(path) -> dict:
    cfg = _load_raw(Path(path))
    validate(cfg)
    return cfg


def config_hash(cfg: dict) -> str:
    blob = json.dumps(cfg, sort_keys=True, separators=(",", ":")).encode("utf-8")
    return hashlib.sha256(blob).hexdigest()[:16]


# -- constructors ------------------------------------------------------


def build_params(cfg: dict) -> SystemParams:
    d = cfg["device"]
    return SystemParams(
        g_om=d["g_om_hz"], g_pe=d["g_pe_hz"],
        kappa_e_a=d["kappa_e_a_hz"], kappa_i_a=d["kappa_i_a_hz"],
        kappa_i_b=d["kappa_i_b_hz"],
        kappa_e_c=d["kappa_e_c_hz"], kappa_i_c=d["kappa_i_c_hz"],
        omega_b=d["omega_b_hz"], omega_c=d["omega_c_hz"], delta_a=d["delta_a_hz"],
        n_th_w=d["n_th_w"],
    )


def build_pulse(cfg: dict) -> PulseProfile:
    p = cfg["pulse"]
    return PulseProfile(t_p_fwhm=p["t_p_fwhm_s"], n_a_peak=p["n_a_peak"],
                        t_center=p["t_center_s"], rep_period=p["rep_period_s"])


def build_envelope(cfg: dict) -> TemporalEnvelope:
    e = cfg["envelope"]
    return TemporalEnvelope.for_device(build_params(cfg), t_g=e["t_g_s"],
                                       alpha=e["alpha"], phi_o=e["phi_o_rad"])


def build_gate(cfg: dict) -> tuple:
    g = cfg["gate"]
    center = g["center_s"]
    if center is None:
        center = cfg["pulse"]["t_center_s"]
    half = 0.5 * g["duration_s"]
    return (center - half, center + half)


def resolve_baths(cfg: dict, params=None, pulse=None) -> BathSchedule:
    """Bath schedule from config: explicit knots or a constant level tuned
    to the configured gate-window acoustic occupation."""
    from .engine import tune_constant_bath

    b = cfg["baths"]
    mode = b["mode"]
    if mode == "knots":
        return BathSchedule(
            knots_b=tuple(map(tuple, b["knots_b"])),
            knots_c=tuple(map(tuple, b["knots_c"])),
            n_th_w=b["n_th_w"],
        )
    if mode == "constant-occupation":
        params = params if params is not None else build_params(cfg)
        pulse = pulse if pulse is not None else build_pulse(cfg)
        gate = build_gate(cfg)
        return tune_constant_bath(params, pulse, b["target_acoustic_occupation"],
                                  gate, n_th_w=b["n_th_w"])
    raise ConfigError(f"baths.mode must be 'knots' or 'constant-occupation', got {mode!r}")
