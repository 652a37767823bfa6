"""Complex baseband signals, Toeplitz convolution and AWGN.

Sequences are indexed from 0. A transmit block written elsewhere as
``s(-N), ..., s(N)`` is stored here as ``s[0], ..., s[2N]``; the offset is
only a relabeling and every result below is shift-invariant.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Union

import numpy as np

__all__ = [
    "ComplexSignal",
    "ChannelMatrix",
    "LinearGaussianModel",
    "RngStream",
    "as_generator",
    "build_toeplitz",
    "convolve",
    "add_awgn",
]


def _frozen(array: np.ndarray) -> np.ndarray:
    array = np.array(array, copy=True)
    array.setflags(write=False)
    return array


@dataclass(frozen=True)
class ComplexSignal:
    """Finite complex baseband sequence with its sample interval in seconds."""

    samples: np.ndarray
    sample_interval: float = 1.0

    def __post_init__(self):
        samples = np.atleast_1d(np.asarray(self.samples, dtype=complex))
        if samples.ndim != 1:
            raise ValueError("samples must be one-dimensional")
        if samples.size < 1:
            raise ValueError("a signal needs at least one sample")
        if not np.all(np.isfinite(samples)):
            raise ValueError("samples must be finite")
        if not self.sample_interval > 0:
            raise ValueError("sample_interval must be positive")
        object.__setattr__(self, "samples", _frozen(samples))
        object.__setattr__(self, "sample_interval", float(self.sample_interval))

    def __len__(self) -> int:
        return self.samples.size

    def __array__(self, dtype=None, copy=None):
        return np.asarray(self.samples, dtype=dtype)

    @property
    def sample_rate(self) -> float:
        return 1.0 / self.sample_interval

    @property
    def energy(self) -> float:
        return float(np.vdot(self.samples, self.samples).real)


@dataclass(frozen=True)
class ChannelMatrix:
    """Complex channel matrix tagged with how it was produced.

    ``provenance`` is a free-form tag such as ``"geometric"``,
    ``"rayleigh"``, ``"distributed"`` or ``"toeplitz"``. ``params`` keeps the
    generating parameters (path gains, angles, target coordinates) when known.
    """

    values: np.ndarray
    provenance: str = "unspecified"
    params: dict = field(default_factory=dict, compare=False)

    def __post_init__(self):
        values = np.atleast_2d(np.asarray(self.values, dtype=complex))
        if values.ndim != 2:
            raise ValueError("channel must be a matrix")
        if not np.all(np.isfinite(values)):
            raise ValueError("channel entries must be finite")
        object.__setattr__(self, "values", _frozen(values))

    @property
    def shape(self) -> tuple[int, int]:
        return self.values.shape

    def __array__(self, dtype=None, copy=None):
        return np.asarray(self.values, dtype=dtype)

    def __matmul__(self, other):
        return self.values @ np.asarray(other)


@dataclass(frozen=True)
class LinearGaussianModel:
    """``Y = H S + Z`` with ``Z`` circular complex Gaussian of variance ``noise_variance``."""

    channel: ChannelMatrix
    tx: np.ndarray
    noise_variance: float

    def __post_init__(self):
        channel = self.channel
        if not isinstance(channel, ChannelMatrix):
            channel = ChannelMatrix(channel)
            object.__setattr__(self, "channel", channel)
        tx = np.asarray(self.tx, dtype=complex)
        if tx.ndim == 1:
            tx = tx[:, None]
        if channel.shape[1] != tx.shape[0]:
            raise ValueError(
                f"channel has {channel.shape[1]} columns but tx has {tx.shape[0]} rows"
            )
        if not (np.isfinite(self.noise_variance) and self.noise_variance >= 0):
            raise ValueError("noise_variance must be finite and non-negative")
        object.__setattr__(self, "tx", _frozen(tx))
        object.__setattr__(self, "noise_variance", float(self.noise_variance))

    @property
    def mean(self) -> np.ndarray:
        return self.channel.values @ self.tx

    def sample(self, rng: "RngLike") -> np.ndarray:
        return add_awgn(self.mean, self.noise_variance, rng)


@dataclass(frozen=True)
class RngStream:
    """Counter-based random stream keyed by ``(master_seed, stream_id)``.

    Every call to :meth:`generator` returns a fresh Philox generator at the
    start of the stream, so the draws depend only on the key and never on
    which other streams were used before.
    """

    master_seed: int
    stream_id: int = 0

    def __post_init__(self):
        if not 0 <= self.master_seed < 2**64:
            raise ValueError("master_seed must fit in 64 unsigned bits")
        if self.stream_id < 0:
            raise ValueError("stream_id must be non-negative")

    def generator(self) -> np.random.Generator:
        seq = np.random.SeedSequence([self.master_seed & 0xFFFFFFFF, self.master_seed >> 32, self.stream_id])
        return np.random.Generator(np.random.Philox(seq))

    def child(self, index: int) -> "RngStream":
        """Stream for sub-task ``index``; distinct indices never collide."""
        seq = np.random.SeedSequence([self.master_seed & 0xFFFFFFFF, self.master_seed >> 32, self.stream_id, index])
        return RngStream(int(seq.generate_state(2, np.uint64)[0]), 0)


RngLike = Union[RngStream, np.random.Generator, int]


def as_generator(rng: RngLike) -> np.random.Generator:
    if isinstance(rng, np.random.Generator):
        return rng
    if isinstance(rng, RngStream):
        return rng.generator()
    return RngStream(int(rng)).generator()


def _samples(x) -> np.ndarray:
    if isinstance(x, ComplexSignal):
        return x.samples
    return np.atleast_1d(np.asarray(x, dtype=complex))


def build_toeplitz(h, input_len: int) -> np.ndarray:
    """Convolution matrix of ``h`` acting on length-``input_len`` inputs.

    Column ``n`` holds ``h`` shifted down by ``n`` rows, so the result has
    shape ``(input_len + len(h) - 1, input_len)``.
    """
    h = _samples(h)
    if h.size < 1:
        raise ValueError("h must have at least one tap")
    if input_len < 1:
        raise ValueError("input_len must be a positive integer")
    out = np.zeros((input_len + h.size - 1, input_len), dtype=complex)
    for n in range(input_len):
        out[n:n + h.size, n] = h
    return out


def convolve(s, h) -> ComplexSignal:
    """Linear convolution ``s * h`` (full length)."""
    interval = s.sample_interval if isinstance(s, ComplexSignal) else 1.0
    s, h = _samples(s), _samples(h)
    if s.size < 1 or h.size < 1:
        raise ValueError("both sequences must be non-empty")
    return ComplexSignal(np.convolve(s, h), interval)


def add_awgn(x, noise_variance: float, rng: RngLike) -> np.ndarray:
    """Return ``x + Z`` with ``Z`` i.i.d. CN(0, noise_variance)."""
    if noise_variance < 0:
        raise ValueError("noise_variance must be non-negative")
    x = np.asarray(x, dtype=complex)
    if noise_variance == 0:
        return x.copy()
    gen = as_generator(rng)
    scale = np.sqrt(noise_variance / 2.0)
    noise = scale * (gen.standard_normal(x.shape) + 1j * gen.standard_normal(x.shape))
    return x + noise
