"""Experiment scenarios: TOML files with a per-kind validated parameter table.

A scenario file looks like::

    kind = "pareto"
    seed = 7
    output = "results/pareto"   # optional

    [params]
    n_t = 8
    rho = [0.2, 0.5, 0.9]

Every kind has a complete set of defaults; keys absent from ``[params]``
take their default and unknown keys are errors.
"""

from __future__ import annotations

import math
import sys
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Callable, Optional

import tomli_w

if sys.version_info >= (3, 11):
    import tomllib
else:
    import tomli as tomllib

from .comms import CONSTELLATION_KINDS

__all__ = [
    "ScenarioError",
    "Param",
    "SCHEMAS",
    "KINDS",
    "Scenario",
    "validate_params",
    "parse_scenario",
    "load_scenario",
    "dump_scenario",
    "describe_kinds",
]

_TOP_LEVEL = {"kind", "seed", "output", "params"}


class ScenarioError(ValueError):
    """Invalid scenario; ``key`` names the offending entry when there is one."""

    def __init__(self, message: str, key: Optional[str] = None):
        super().__init__(message)
        self.key = key


# value checks return an error message or None
def _positive(v):
    return None if v > 0 else "must be positive"


def _non_negative(v):
    return None if v >= 0 else "must be non-negative"


def _probability(v):
    return None if 0 < v < 1 else "must lie strictly between 0 and 1"


def _fraction(v):
    return None if 0 < v <= 1 else "must lie in (0, 1]"


def _each(check):
    def run(values):
        for x in values:
            msg = check(x)
            if msg:
                return f"entry {x!r} {msg}"
        return None
    return run


def _non_empty(values):
    return None if len(values) > 0 else "must not be empty"


def _all(*checks):
    def run(v):
        for c in checks:
            msg = c(v)
            if msg:
                return msg
        return None
    return run


def _one_of(options):
    def run(v):
        return None if v in options else f"must be one of {sorted(options)}"
    return run


def _even(v):
    return None if v > 0 and v % 2 == 0 else "must be a positive even integer"


def _unit_correlation(v):
    return None if 0 <= v <= 1 else "must lie in [0, 1]"


@dataclass(frozen=True)
class Param:
    type: str
    default: Any
    doc: str
    check: Optional[Callable] = None


_TARGET_KEYS = {"delay": float, "doppler": float, "amplitude_re": float, "amplitude_im": float}

SCHEMAS: dict[str, dict[str, Param]] = {
    "radar-detect": {
        "n_cells": Param("int", 100_000, "Monte Carlo cells per configuration", _positive),
        "ref_length": Param("int", 16, "matched-filter reference length (samples)", _positive),
        "noise_var": Param("float", 1.0, "noise variance per sample", _positive),
        "design_pfa": Param("float_list", [0.1, 0.01, 0.001], "NP design false-alarm probabilities",
                            _all(_non_empty, _each(_probability))),
        "snr_db": Param("float_list", [0.0, 5.0, 10.0, 13.0, 15.0], "post-matched-filter SNRs for P_D", _non_empty),
        "pd_pfa": Param("float", 0.01, "design P_FA used for the P_D curve", _probability),
        "cfar_train": Param("int", 16, "total CA-CFAR training cells", _even),
        "cfar_guard": Param("int", 2, "CA-CFAR guard cells per side", _non_negative),
        "cfar_pfa": Param("float", 0.01, "CA-CFAR design false-alarm probability", _probability),
    },
    "range-doppler": {
        "bandwidth": Param("float", 1e6, "LFM sweep bandwidth (Hz)", _positive),
        "pulse_width": Param("float", 20e-6, "pulse width (s)", _positive),
        "pri": Param("float", 100e-6, "pulse repetition interval (s)", _positive),
        "sample_rate": Param("float", 4e6, "sample rate (Hz)", _positive),
        "n_pulses": Param("int", 32, "pulses per CPI", _positive),
        "noise_var": Param("float", 0.01, "noise variance per sample", _non_negative),
        "window": Param("str", "rect", "range window", _one_of({"rect", "hamming", "blackman", "chebyshev", "taylor"})),
        "targets": Param("targets", [
            {"delay": 10e-6, "doppler": 625.0, "amplitude_re": 1.0, "amplitude_im": 0.0},
            {"delay": 40e-6, "doppler": -1250.0, "amplitude_re": 0.5, "amplitude_im": 0.5},
        ], "point targets: delay (s), doppler (Hz), amplitude_re, amplitude_im"),
        "detect_points": Param("int", 2, "number of strongest local maxima reported", _positive),
    },
    "sfw-omp": {
        "mode": Param("str", "random", "carrier plan", _one_of({"linear", "random"})),
        "max_index": Param("int", 63, "largest carrier index D", _positive),
        "n_pulses": Param("int", 32, "pulses (measurements) per burst", _positive),
        "keep_fraction": Param("float", 0.75, "fraction of [0, D] kept by the random plan", _fraction),
        "step": Param("float", 1e6, "frequency step (Hz)", _positive),
        "sparsity": Param("int", 3, "scatterers per trial", _positive),
        "max_sparsity": Param("int", 8, "OMP iteration cap", _positive),
        "snr_db": Param("float", 20.0, "per-measurement SNR (dB)"),
        "n_trials": Param("int", 200, "Monte Carlo trials", _positive),
    },
    "ofdm-ber": {
        "constellations": Param("str_list", ["BPSK", "QPSK", "16QAM"], "constellations",
                                _all(_non_empty, _each(_one_of(set(CONSTELLATION_KINDS))))),
        "snr_db": Param("float_list", [0.0, 2.0, 4.0, 6.0, 8.0], "symbol SNR Es/N0 (dB)", _non_empty),
        "n_bits": Param("int", 200_000, "bits per (constellation, SNR) point", _positive),
        "n_subcarriers": Param("int", 64, "subcarriers", _positive),
        "cp_length": Param("int", 16, "cyclic prefix (samples)", _non_negative),
        "channel_taps": Param("float_list", [1.0], "real multipath taps", _non_empty),
        "equalizer": Param("str", "perfect", "channel knowledge", _one_of({"perfect", "ls"})),
    },
    "ofdm-isac": {
        "n_subcarriers": Param("int", 64, "subcarriers N_c", _positive),
        "n_symbols": Param("int", 32, "OFDM symbols N_s", _positive),
        "subcarrier_spacing": Param("float", 120e3, "subcarrier spacing (Hz)", _positive),
        "cp_length": Param("int", 16, "cyclic prefix (samples)", _non_negative),
        "constellation": Param("str", "QPSK", "data constellation", _one_of(set(CONSTELLATION_KINDS))),
        "snr_db": Param("float", 20.0, "per-resource-element SNR |alpha|^2 / sigma^2 (dB)"),
        "n_targets": Param("int", 200, "random bin-centered targets", _positive),
        "noise_test_symbols": Param("int", 64, "OFDM symbols used by the noise-distribution tests", _positive),
        "noise_test_snr_db": Param("float", 10.0, "SNR for the noise and sidelobe tests (dB)"),
    },
    "im-isac": {
        "n_carriers": Param("int", 4, "carrier set size M", _positive),
        "n_selected": Param("int", 2, "active carriers / antennas K", _positive),
        "n_samples": Param("int", 16, "samples per pulse", _positive),
        "snr_db": Param("float_list", [0.0, 5.0, 10.0], "per-sample SNR (dB)", _non_empty),
        "n_trials": Param("int", 10_000, "messages per SNR point", _positive),
    },
    "pareto": {
        "n_t": Param("int", 8, "transmit antennas", _positive),
        "theta_deg": Param("float", 20.0, "target angle (degrees)"),
        "rho": Param("float_list", [0.2, 0.5, 0.9, 1.0], "subspace correlations",
                     _all(_non_empty, _each(_unit_correlation))),
        "energy": Param("float", 1.0, "transmit energy E_T", _positive),
        "radar_noise": Param("float", 0.1, "radar noise variance", _positive),
        "comm_noise": Param("float", 1.0, "user noise variance", _positive),
        "r0_bits": Param("float_list", [], "explicit rate thresholds (bits); empty = automatic"),
        "r0_points": Param("int", 20, "automatic thresholds spread over [0, 0.95 * max rate]", _positive),
        "n_angles": Param("int", 721, "rotation-angle grid size", _positive),
        "n_phases": Param("int", 180, "relative-phase grid size", _positive),
    },
    "hardening": {
        "n_t": Param("int_list", [4, 16, 64, 256], "transmit array sizes", _all(_non_empty, _each(_positive))),
        "n_r": Param("int", 4, "users / receive antennas", _positive),
        "n_trials": Param("int", 1000, "channel draws per size", lambda v: None if v >= 100 else "must be at least 100"),
    },
    "immse": {
        "snr_min": Param("float", 0.0, "first grid SNR (linear)", _non_negative),
        "snr_max": Param("float", 4.0, "last grid SNR (linear)", _positive),
        "snr_step": Param("float", 0.01, "grid step", _positive),
        "bpsk": Param("bool", True, "add BPSK-input mutual information and MMSE columns"),
    },
}

KINDS = tuple(SCHEMAS)


def _coerce(key: str, p: Param, value):
    def fail(expected):
        raise ScenarioError(f"params.{key}: expected {expected}, got {value!r}", key)

    if p.type == "int":
        if isinstance(value, bool) or not isinstance(value, int):
            fail("an integer")
        return value
    if p.type == "float":
        if isinstance(value, bool) or not isinstance(value, (int, float)) or not math.isfinite(value):
            fail("a finite number")
        return float(value)
    if p.type == "str":
        if not isinstance(value, str):
            fail("a string")
        return value
    if p.type == "bool":
        if not isinstance(value, bool):
            fail("true or false")
        return value
    if p.type in ("float_list", "int_list", "str_list"):
        if not isinstance(value, (list, tuple)):
            fail("a list")
        inner = Param(p.type.split("_")[0], None, "")
        return [_coerce(key, inner, v) for v in value]
    if p.type == "targets":
        if not isinstance(value, (list, tuple)):
            fail("a list of target tables")
        out = []
        for t in value:
            if not isinstance(t, dict):
                fail("a list of target tables")
            extra = set(t) - set(_TARGET_KEYS)
            if extra:
                raise ScenarioError(f"params.{key}: unknown target field {sorted(extra)[0]!r}", key)
            row = {}
            for name in _TARGET_KEYS:
                v = t.get(name, 0.0 if name != "amplitude_re" else 1.0)
                row[name] = _coerce(f"{key}.{name}", Param("float", None, ""), v)
            if row["delay"] < 0:
                raise ScenarioError(f"params.{key}.delay: must be non-negative", key)
            out.append(row)
        return out
    raise AssertionError(f"unhandled parameter type {p.type}")


def _cross_checks(kind: str, params: dict) -> None:
    if kind == "range-doppler":
        if params["pulse_width"] > params["pri"]:
            raise ScenarioError("params.pulse_width: must not exceed pri", "pulse_width")
        if params["sample_rate"] < 2 * params["bandwidth"]:
            raise ScenarioError("params.sample_rate: must be at least twice the bandwidth", "sample_rate")
        for t in params["targets"]:
            if t["delay"] >= params["pri"]:
                raise ScenarioError("params.targets.delay: exceeds the unambiguous range", "targets")
    elif kind == "sfw-omp":
        if params["n_pulses"] > math.ceil(params["keep_fraction"] * (params["max_index"] + 1)):
            raise ScenarioError("params.n_pulses: more pulses than available carriers", "n_pulses")
        if params["sparsity"] > params["max_sparsity"]:
            raise ScenarioError("params.sparsity: must not exceed max_sparsity", "sparsity")
    elif kind == "ofdm-ber":
        if len(params["channel_taps"]) - 1 > params["cp_length"]:
            raise ScenarioError("params.channel_taps: channel longer than the cyclic prefix", "channel_taps")
    elif kind == "im-isac":
        if params["n_selected"] > params["n_carriers"]:
            raise ScenarioError("params.n_selected: must not exceed n_carriers", "n_selected")
        if params["n_samples"] < params["n_carriers"]:
            raise ScenarioError("params.n_samples: must be at least n_carriers", "n_samples")
    elif kind == "immse":
        if params["snr_max"] <= params["snr_min"]:
            raise ScenarioError("params.snr_max: must exceed snr_min", "snr_max")
        if (params["snr_max"] - params["snr_min"]) / params["snr_step"] < 2:
            raise ScenarioError("params.snr_step: grid needs at least 3 points", "snr_step")
    elif kind == "pareto":
        for v in params["r0_bits"]:
            if v < 0:
                raise ScenarioError("params.r0_bits: thresholds must be non-negative", "r0_bits")


def validate_params(kind: str, params: Optional[dict] = None) -> dict:
    """Fill defaults and check every value; raises :class:`ScenarioError`."""
    if kind not in SCHEMAS:
        raise ScenarioError(f"unknown experiment kind {kind!r}; known kinds: {', '.join(KINDS)}", "kind")
    schema = SCHEMAS[kind]
    params = dict(params or {})
    unknown = sorted(set(params) - set(schema))
    if unknown:
        raise ScenarioError(f"params.{unknown[0]}: unknown key for kind {kind!r}", unknown[0])
    out = {}
    for key, p in schema.items():
        value = _coerce(key, p, params[key]) if key in params else _coerce(key, p, p.default)
        if p.check is not None:
            msg = p.check(value)
            if msg:
                raise ScenarioError(f"params.{key}: {msg}", key)
        out[key] = value
    _cross_checks(kind, out)
    return out


@dataclass(frozen=True)
class Scenario:
    kind: str
    params: dict = field(default_factory=dict)
    seed: int = 0
    output: Optional[str] = None

    def with_seed(self, seed: Optional[int]) -> "Scenario":
        if seed is None:
            return self
        return Scenario(self.kind, self.params, _check_seed(seed), self.output)


def _check_seed(seed) -> int:
    if isinstance(seed, bool) or not isinstance(seed, int) or not 0 <= seed < 2**64:
        raise ScenarioError("seed: must be an integer in [0, 2^64)", "seed")
    return seed


def parse_scenario(data: dict) -> Scenario:
    unknown = sorted(set(data) - _TOP_LEVEL)
    if unknown:
        raise ScenarioError(f"{unknown[0]}: unknown top-level key", unknown[0])
    if "kind" not in data:
        raise ScenarioError("kind: missing", "kind")
    kind = data["kind"]
    params = data.get("params", {})
    if not isinstance(params, dict):
        raise ScenarioError("params: must be a table", "params")
    output = data.get("output")
    if output is not None and not isinstance(output, str):
        raise ScenarioError("output: must be a string path", "output")
    return Scenario(kind, validate_params(kind, params), _check_seed(data.get("seed", 0)), output)


def load_scenario(path) -> Scenario:
    path = Path(path)
    try:
        with open(path, "rb") as fh:
            data = tomllib.load(fh)
    except FileNotFoundError:
        raise
    except tomllib.TOMLDecodeError as exc:
        raise ScenarioError(f"cannot parse {path}: {exc}") from exc
    return parse_scenario(data)


def dump_scenario(scenario: Scenario) -> str:
    data = {"kind": scenario.kind, "seed": scenario.seed}
    if scenario.output is not None:
        data["output"] = scenario.output
    data["params"] = scenario.params
    return tomli_w.dumps(data)


def describe_kinds() -> dict:
    """Schema of every kind: ``{kind: {key: {type, default, doc}}}``."""
    return {
        kind: {key: {"type": p.type, "default": p.default, "doc": p.doc} for key, p in schema.items()}
        for kind, schema in SCHEMAS.items()
    }
