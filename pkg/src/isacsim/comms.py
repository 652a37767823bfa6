"""Communication chain: constellations, OFDM, LS channel estimation, BER and capacity.

Gray labels (label bits are MSB first; points carry unit average energy):

=========  =====================================================================
BPSK       0 -> +1, 1 -> -1
QPSK       b0 b1 -> ((1 - 2 b0) + j (1 - 2 b1)) / sqrt(2)
8PSK       point k at angle 2 pi k / 8 has label k ^ (k >> 1)
16QAM      b0 b1 -> in-phase level, b2 b3 -> quadrature level, each via
           00 -> -3, 01 -> -1, 11 -> +1, 10 -> +3, scaled by 1 / sqrt(10)
ASK-4      same 2-bit level map on the real axis, scaled by 1 / sqrt(5)
=========  =====================================================================
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Optional

import numpy as np
from scipy.special import erfc

from .signal_core import ComplexSignal, RngLike, add_awgn, as_generator

__all__ = [
    "CONSTELLATION_KINDS",
    "Constellation",
    "constellation",
    "modulate",
    "demap",
    "bpsk_ber_theory",
    "simulate_ber",
    "OfdmConfig",
    "ofdm_mod",
    "ofdm_demod",
    "apply_multipath",
    "ls_channel_estimate",
    "awgn_capacity",
    "ImmseTable",
    "immse_check",
    "bpsk_immse",
    "bpsk_mmse_monte_carlo",
]

CONSTELLATION_KINDS = ("BPSK", "QPSK", "8PSK", "16QAM", "ASK-4")

_PAM4_GRAY = {0b00: -3.0, 0b01: -1.0, 0b11: 1.0, 0b10: 3.0}


@dataclass(frozen=True)
class Constellation:
    """Alphabet indexed by label: ``points[label]`` is the symbol for that bit pattern."""

    kind: str
    points: np.ndarray
    bits_per_symbol: int

    @property
    def min_distance(self) -> float:
        d = np.abs(self.points[:, None] - self.points[None, :])
        return float(d[d > 0].min())


def constellation(kind: str) -> Constellation:
    kind = kind.upper()
    if kind == "BPSK":
        pts = np.array([1.0, -1.0], dtype=complex)
    elif kind == "QPSK":
        labels = np.arange(4)
        pts = ((1 - 2 * (labels >> 1)) + 1j * (1 - 2 * (labels & 1))) / math.sqrt(2)
    elif kind == "8PSK":
        pts = np.empty(8, dtype=complex)
        for k in range(8):
            pts[k ^ (k >> 1)] = np.exp(2j * np.pi * k / 8)
    elif kind == "16QAM":
        pts = np.array([complex(_PAM4_GRAY[lab >> 2], _PAM4_GRAY[lab & 3]) for lab in range(16)])
        pts = pts / math.sqrt(10)
    elif kind == "ASK-4":
        pts = np.array([_PAM4_GRAY[lab] for lab in range(4)], dtype=complex) / math.sqrt(5)
    else:
        raise ValueError(f"unknown constellation {kind!r}; choose from {CONSTELLATION_KINDS}")
    pts.setflags(write=False)
    return Constellation(kind, pts, int(math.log2(pts.size)))


def _bits_to_labels(bits: np.ndarray, bps: int) -> np.ndarray:
    weights = 1 << np.arange(bps - 1, -1, -1)
    return bits.reshape(-1, bps) @ weights


def _labels_to_bits(labels: np.ndarray, bps: int) -> np.ndarray:
    shifts = np.arange(bps - 1, -1, -1)
    return ((labels[:, None] >> shifts) & 1).astype(np.uint8).ravel()


def modulate(bits, c: Constellation) -> np.ndarray:
    bits = np.asarray(bits, dtype=np.int64).ravel()
    if bits.size % c.bits_per_symbol:
        raise ValueError(f"{bits.size} bits is not a multiple of {c.bits_per_symbol} bits per symbol")
    if np.any((bits != 0) & (bits != 1)):
        raise ValueError("bits must be 0 or 1")
    return c.points[_bits_to_labels(bits, c.bits_per_symbol)]


def demap(symbols, c: Constellation, noise_variance: Optional[float] = None, priors=None,
          chunk: int = 1 << 16) -> np.ndarray:
    """Hard decisions back to bits.

    Without ``priors`` this is the nearest-point (ML) rule. With ``priors``
    (one probability per label) the MAP metric
    ``|y - x|^2 / noise_variance - ln p(x)`` is minimized instead.
    """
    y = np.asarray(symbols, dtype=complex).ravel()
    penalty = None
    if priors is not None:
        priors = np.asarray(priors, dtype=float)
        if priors.shape != c.points.shape or np.any(priors <= 0) or not np.isclose(priors.sum(), 1.0):
            raise ValueError("priors must be a positive probability vector over the alphabet")
        if not noise_variance or noise_variance <= 0:
            raise ValueError("MAP detection needs a positive noise_variance")
        penalty = -np.log(priors) * noise_variance
    labels = np.empty(y.size, dtype=np.int64)
    for start in range(0, y.size, chunk):
        block = y[start:start + chunk]
        metric = np.abs(block[:, None] - c.points[None, :]) ** 2
        if penalty is not None:
            metric = metric + penalty
        labels[start:start + chunk] = np.argmin(metric, axis=1)
    return _labels_to_bits(labels, c.bits_per_symbol)


def bpsk_ber_theory(snr) -> np.ndarray:
    """``Q(sqrt(2 snr))`` for BPSK at linear SNR ``snr``."""
    return 0.5 * erfc(np.sqrt(np.asarray(snr, dtype=float)))


def simulate_ber(c: Constellation, snr_db: float, n_bits: int, rng: RngLike) -> tuple[int, int]:
    """Uncoded bit errors over AWGN at symbol SNR ``Es / N0 = snr_db``.

    Returns ``(bits, errors)``; ``n_bits`` is rounded down to whole symbols.
    """
    gen = as_generator(rng)
    n_bits -= n_bits % c.bits_per_symbol
    bits = gen.integers(0, 2, n_bits, dtype=np.int64)
    noise_variance = 10 ** (-snr_db / 10)
    rx = add_awgn(modulate(bits, c), noise_variance, gen)
    errors = int(np.count_nonzero(demap(rx, c) != bits))
    return n_bits, errors


@dataclass(frozen=True)
class OfdmConfig:
    n_subcarriers: int
    n_symbols: int = 1
    subcarrier_spacing: float = 15e3
    cp_length: int = 0
    tx_power: float = 1.0
    max_delay_spread: int = 0
    symbol_time: Optional[float] = None

    def __post_init__(self):
        if self.n_subcarriers < 1 or self.n_symbols < 1:
            raise ValueError("n_subcarriers and n_symbols must be positive")
        if self.cp_length < 0:
            raise ValueError("cp_length must be non-negative")
        if self.cp_length < self.max_delay_spread:
            raise ValueError(
                f"cp_length {self.cp_length} is shorter than the delay spread {self.max_delay_spread}"
            )
        if self.tx_power <= 0:
            raise ValueError("tx_power must be positive")
        if self.symbol_time is None:
            n = self.n_subcarriers + self.cp_length
            object.__setattr__(self, "symbol_time", n / (self.n_subcarriers * self.subcarrier_spacing))

    @property
    def sample_interval(self) -> float:
        return 1.0 / (self.n_subcarriers * self.subcarrier_spacing)

    @property
    def block_length(self) -> int:
        return self.n_subcarriers + self.cp_length


def ofdm_mod(X, cfg: OfdmConfig) -> ComplexSignal:
    """Unitary IDFT of each column of ``X`` (subcarriers x symbols), CP prepended."""
    X = np.asarray(X, dtype=complex)
    if X.ndim == 1:
        X = X[:, None]
    if X.shape != (cfg.n_subcarriers, cfg.n_symbols):
        raise ValueError(f"X has shape {X.shape}, config expects {(cfg.n_subcarriers, cfg.n_symbols)}")
    time = np.fft.ifft(X, axis=0, norm="ortho") * math.sqrt(cfg.tx_power)
    with_cp = np.concatenate([time[cfg.n_subcarriers - cfg.cp_length:, :], time], axis=0)
    return ComplexSignal(with_cp.T.ravel(), cfg.sample_interval)


def ofdm_demod(rx, cfg: OfdmConfig, channel_length: Optional[int] = None) -> np.ndarray:
    """Strip the CP from each block and apply the unitary DFT.

    ``channel_length`` (taps) is checked against the CP; extra trailing
    samples (a convolution tail) are ignored.
    """
    if channel_length is not None and channel_length - 1 > cfg.cp_length:
        raise ValueError(f"CP of {cfg.cp_length} samples cannot absorb a {channel_length}-tap channel")
    rx = np.asarray(rx, dtype=complex).ravel()
    need = cfg.block_length * cfg.n_symbols
    if rx.size < need:
        raise ValueError(f"received {rx.size} samples, need {need}")
    blocks = rx[:need].reshape(cfg.n_symbols, cfg.block_length).T
    return np.fft.fft(blocks[cfg.cp_length:, :], axis=0, norm="ortho") / math.sqrt(cfg.tx_power)


def apply_multipath(x, taps) -> np.ndarray:
    """Causal FIR channel, output truncated to the input length."""
    x = np.asarray(x, dtype=complex)
    return np.convolve(x, np.asarray(taps, dtype=complex))[: x.size]


def ls_channel_estimate(Y_pilot, X_pilot) -> np.ndarray:
    """Per-subcarrier least squares ``Y / X``, averaged over pilot symbols (columns)."""
    Y = np.asarray(Y_pilot, dtype=complex)
    X = np.asarray(X_pilot, dtype=complex)
    if Y.shape != X.shape:
        raise ValueError("pilot observation and pilot symbols must have the same shape")
    if np.any(X == 0):
        raise ValueError("pilots must be nonzero on every estimated subcarrier")
    H = Y / X
    return H.mean(axis=1) if H.ndim == 2 else H


def awgn_capacity(snr):
    """Complex AWGN capacity ``log2(1 + snr)`` in bits per channel use."""
    snr = np.asarray(snr, dtype=float)
    if np.any(snr < 0):
        raise ValueError("snr must be non-negative")
    cap = np.log2(1.0 + snr)
    return float(cap) if cap.ndim == 0 else cap


@dataclass(frozen=True)
class ImmseTable:
    snr: np.ndarray
    mutual_info: np.ndarray
    mmse: np.ndarray
    derivative: np.ndarray
    residual: np.ndarray

    def rows(self):
        return zip(self.snr, self.mutual_info, self.mmse, self.derivative, self.residual)


def immse_check(snr_grid) -> ImmseTable:
    """Numerical check of ``dI/dsnr = MMSE / 2`` for a real Gaussian-input channel.

    ``I = 0.5 ln(1 + snr)`` nats and ``MMSE = 1 / (1 + snr)``. The
    derivative is taken by central differences on the grid (second-order
    one-sided at the two ends); ``residual`` is the relative error against
    ``MMSE / 2``.
    """
    snr = np.asarray(snr_grid, dtype=float)
    if snr.size < 3 or np.any(np.diff(snr) <= 0):
        raise ValueError("snr_grid must be strictly increasing with at least 3 points")
    info = 0.5 * np.log1p(snr)
    mmse = 1.0 / (1.0 + snr)
    deriv = np.gradient(info, snr, edge_order=2)
    residual = np.abs(deriv - 0.5 * mmse) / (0.5 * mmse)
    return ImmseTable(snr, info, mmse, deriv, residual)


def bpsk_immse(snr_grid, n_nodes: int = 80) -> tuple[np.ndarray, np.ndarray]:
    """Mutual information (nats) and MMSE of equiprobable BPSK on ``Y = sqrt(snr) X + N``.

    Expectations over the unit Gaussian noise use Gauss-Hermite quadrature.
    ``E[X | Y] = tanh(sqrt(snr) Y)`` gives the MMSE.
    """
    snr = np.asarray(snr_grid, dtype=float)
    nodes, weights = np.polynomial.hermite.hermgauss(n_nodes)
    z = math.sqrt(2.0) * nodes
    w = weights / math.sqrt(np.pi)
    arg = snr[:, None] + np.sqrt(snr)[:, None] * z[None, :]
    logcosh = np.abs(arg) + np.log1p(np.exp(-2 * np.abs(arg))) - math.log(2.0)
    info = snr - logcosh @ w
    mmse = 1.0 - np.tanh(arg) @ w
    return info, mmse


def bpsk_mmse_monte_carlo(snr: float, n_samples: int, rng: RngLike) -> float:
    gen = as_generator(rng)
    x = 1.0 - 2.0 * gen.integers(0, 2, n_samples)
    y = math.sqrt(snr) * x + gen.standard_normal(n_samples)
    return float(np.mean((x - np.tanh(math.sqrt(snr) * y)) ** 2))
