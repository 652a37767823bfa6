"""Transmit waveforms: LFM pulses, stepped-frequency plans, pulse shaping and windows."""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Literal, Optional

import numpy as np
from scipy.signal import windows as _sigwin

from .signal_core import ComplexSignal, RngLike, as_generator

__all__ = [
    "PulseTrainSpec",
    "SfwPlan",
    "ShapingFilter",
    "RadarWindow",
    "gen_lfm",
    "gen_sfw_plan",
    "sfw_dictionary",
    "make_filter",
    "make_window",
]


@dataclass(frozen=True)
class PulseTrainSpec:
    pulse_width: float
    pri: float
    num_pulses: int
    bandwidth: float
    tx_power: float = 1.0

    def __post_init__(self):
        if not 0 < self.pulse_width <= self.pri:
            raise ValueError("need 0 < pulse_width <= pri")
        if self.bandwidth <= 0:
            raise ValueError("bandwidth must be positive")
        if self.num_pulses < 1:
            raise ValueError("num_pulses must be positive")
        if self.tx_power < 0:
            raise ValueError("tx_power must be non-negative")

    @property
    def duty_cycle(self) -> float:
        return self.pulse_width / self.pri


def gen_lfm(spec: PulseTrainSpec, sample_rate: float, full_pri: bool = False) -> ComplexSignal:
    """Baseband up-chirp ``sqrt(P) exp(j pi B t^2 / tau)`` sampled on ``[0, tau)``.

    With ``full_pri`` the pulse is zero-padded to one PRI of samples.
    """
    if sample_rate < 2 * spec.bandwidth:
        raise ValueError(
            f"sample_rate {sample_rate:g} Hz is below twice the bandwidth {spec.bandwidth:g} Hz"
        )
    n_pulse = int(round(spec.pulse_width * sample_rate))
    if n_pulse < 1:
        raise ValueError("pulse shorter than one sample")
    t = np.arange(n_pulse) / sample_rate
    x = math.sqrt(spec.tx_power) * np.exp(1j * np.pi * spec.bandwidth * t**2 / spec.pulse_width)
    if full_pri:
        n_pri = int(round(spec.pri * sample_rate))
        x = np.concatenate([x, np.zeros(max(n_pri - n_pulse, 0), dtype=complex)])
    return ComplexSignal(x, 1.0 / sample_rate)


@dataclass(frozen=True)
class SfwPlan:
    """Per-pulse carrier indices ``d_n`` for ``f_n = f_c + d_n * step``."""

    base_freq: float
    step: float
    indices: np.ndarray
    max_index: int
    bandwidth: float
    span_exceeds_bandwidth: bool = field(init=False)

    def __post_init__(self):
        indices = np.asarray(self.indices, dtype=int)
        if np.any(indices < 0) or np.any(indices > self.max_index):
            raise ValueError("carrier index outside [0, D]")
        indices.setflags(write=False)
        object.__setattr__(self, "indices", indices)
        object.__setattr__(self, "span_exceeds_bandwidth", bool(self.synthesized_span > self.bandwidth))

    @property
    def synthesized_span(self) -> float:
        return self.max_index * self.step

    @property
    def carriers(self) -> np.ndarray:
        return self.base_freq + self.indices * self.step


def gen_sfw_plan(
    mode: Literal["linear", "random"],
    D: int,
    n_pulses: int,
    keep_fraction: float = 1.0,
    rng: Optional[RngLike] = None,
    base_freq: float = 0.0,
    step: float = 1.0,
    bandwidth: Optional[float] = None,
) -> SfwPlan:
    """Stepped-frequency carrier plan.

    ``linear`` uses ``d_n = n``. ``random`` first keeps a random subset of
    ``ceil(keep_fraction * (D + 1))`` indices from ``[0, D]`` and then draws
    the ``n_pulses`` carriers from it without replacement. ``bandwidth``
    defaults to ``step`` (sub-pulse bandwidth equal to the frequency step).
    """
    if n_pulses < 1:
        raise ValueError("n_pulses must be positive")
    if D < 0:
        raise ValueError("D must be non-negative")
    if bandwidth is None:
        bandwidth = step
    if mode == "linear":
        if n_pulses > D + 1:
            raise ValueError(f"linear plan needs D >= n_pulses - 1, got D={D}")
        indices = np.arange(n_pulses)
    elif mode == "random":
        if not 0 < keep_fraction <= 1:
            raise ValueError("keep_fraction must lie in (0, 1]")
        n_keep = math.ceil(keep_fraction * (D + 1))
        if n_pulses > n_keep:
            raise ValueError(f"{n_pulses} pulses requested but only {n_keep} carriers available")
        if rng is None:
            raise ValueError("random mode needs an rng")
        gen = as_generator(rng)
        kept = gen.choice(D + 1, size=n_keep, replace=False)
        indices = gen.choice(kept, size=n_pulses, replace=False)
    else:
        raise ValueError(f"unknown SFW mode {mode!r}")
    return SfwPlan(base_freq, step, indices, D, bandwidth)


def sfw_dictionary(plan: SfwPlan, n_range_bins: Optional[int] = None) -> np.ndarray:
    """Frequency-domain sensing matrix of an SFW burst.

    Entry ``(n, k)`` is the phase ``exp(-j 2 pi d_n k / (D + 1))`` seen by
    pulse ``n`` from a point scatterer in range bin ``k`` (bin width
    ``1 / ((D + 1) * step)`` seconds of delay).
    """
    n_bins = plan.max_index + 1 if n_range_bins is None else n_range_bins
    k = np.arange(n_bins)
    return np.exp(-2j * np.pi * np.outer(plan.indices, k) / (plan.max_index + 1))


@dataclass(frozen=True)
class ShapingFilter:
    kind: Literal["rect", "raised-cosine", "root-raised-cosine", "gaussian"]
    rolloff: float = 0.35
    span: int = 8
    samples_per_symbol: int = 8

    def __post_init__(self):
        if self.kind not in ("rect", "raised-cosine", "root-raised-cosine", "gaussian"):
            raise ValueError(f"unknown filter kind {self.kind!r}")
        if not 0 <= self.rolloff <= 1:
            raise ValueError("rolloff must lie in [0, 1]")
        if self.span < 2:
            raise ValueError("span must be at least 2 symbols")
        if self.samples_per_symbol < 1:
            raise ValueError("samples_per_symbol must be positive")


def _raised_cosine(t: np.ndarray, beta: float) -> np.ndarray:
    out = np.sinc(t)
    if beta == 0:
        return out
    denom = 1.0 - (2.0 * beta * t) ** 2
    singular = np.isclose(denom, 0.0, atol=1e-12)
    with np.errstate(divide="ignore", invalid="ignore"):
        out = out * np.cos(np.pi * beta * t) / denom
    out[singular] = (np.pi / 4.0) * np.sinc(1.0 / (2.0 * beta))
    return out


def _root_raised_cosine(t: np.ndarray, beta: float) -> np.ndarray:
    if beta == 0:
        return np.sinc(t)
    out = np.empty_like(t)
    at_zero = np.isclose(t, 0.0, atol=1e-12)
    at_edge = np.isclose(np.abs(t), 1.0 / (4.0 * beta), atol=1e-12)
    regular = ~(at_zero | at_edge)
    tr = t[regular]
    num = np.sin(np.pi * tr * (1 - beta)) + 4 * beta * tr * np.cos(np.pi * tr * (1 + beta))
    den = np.pi * tr * (1 - (4 * beta * tr) ** 2)
    out[regular] = num / den
    out[at_zero] = 1 - beta + 4 * beta / np.pi
    out[at_edge] = (beta / np.sqrt(2)) * (
        (1 + 2 / np.pi) * np.sin(np.pi / (4 * beta)) + (1 - 2 / np.pi) * np.cos(np.pi / (4 * beta))
    )
    return out


def make_filter(spec: ShapingFilter, normalize: Literal["energy", "peak"] = "energy") -> np.ndarray:
    """Real pulse-shaping taps spanning ``span`` symbols (``span * sps + 1`` taps).

    ``rolloff`` is the excess bandwidth for the cosine filters and the
    bandwidth-time product BT for the Gaussian filter. The rect filter is one
    symbol of ones.
    """
    sps = spec.samples_per_symbol
    if spec.kind == "rect":
        taps = np.ones(sps)
    else:
        t = np.arange(-spec.span * sps // 2, spec.span * sps // 2 + 1) / sps
        if spec.kind == "raised-cosine":
            taps = _raised_cosine(t, spec.rolloff)
        elif spec.kind == "root-raised-cosine":
            taps = _root_raised_cosine(t, spec.rolloff)
        else:
            if spec.rolloff <= 0:
                raise ValueError("gaussian filter needs BT > 0")
            sigma = math.sqrt(math.log(2)) / (2 * np.pi * spec.rolloff)
            taps = np.exp(-(t**2) / (2 * sigma**2))
    if normalize == "energy":
        return taps / np.sqrt(np.sum(taps**2))
    if normalize == "peak":
        return taps / np.max(np.abs(taps))
    raise ValueError(f"unknown normalization {normalize!r}")


@dataclass(frozen=True)
class RadarWindow:
    kind: Literal["rect", "hamming", "blackman", "chebyshev", "taylor"]
    length: int
    sidelobe_db: Optional[float] = None
    taylor_nbar: int = 4

    def __post_init__(self):
        if self.length < 4:
            raise ValueError("window length must be at least 4")


def make_window(spec: RadarWindow) -> np.ndarray:
    """Symmetric amplitude taper with unit peak.

    ``sidelobe_db`` applies to ``chebyshev`` (default 60 dB) and ``taylor``
    (default 35 dB, ``nbar = 4``).
    """
    n = spec.length
    if spec.kind == "rect":
        w = np.ones(n)
    elif spec.kind == "hamming":
        w = _sigwin.hamming(n, sym=True)
    elif spec.kind == "blackman":
        w = _sigwin.blackman(n, sym=True)
    elif spec.kind == "chebyshev":
        at = 60.0 if spec.sidelobe_db is None else spec.sidelobe_db
        w = _sigwin.chebwin(n, at=at, sym=True)
    elif spec.kind == "taylor":
        sll = 35.0 if spec.sidelobe_db is None else spec.sidelobe_db
        w = _sigwin.taylor(n, nbar=spec.taylor_nbar, sll=sll, norm=False, sym=True)
    else:
        raise ValueError(f"unknown window kind {spec.kind!r}")
    return w / np.max(w)
