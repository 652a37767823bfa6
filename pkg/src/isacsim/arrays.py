"""Array responses, geometric/statistical channels and precoders.

Steering vectors use the progression ``a_n = exp(-j 2 pi n (d / lambda) sin(theta))``
for ``n = 0..N-1`` throughout, with element 0 as the phase reference.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Optional, Sequence

import numpy as np

from .signal_core import ChannelMatrix, RngLike, RngStream, add_awgn, as_generator

__all__ = [
    "UlaGeometry",
    "Path",
    "GeoChannelSpec",
    "HybridConfig",
    "DistributedGeometry",
    "steering",
    "steering_derivative",
    "geo_channel",
    "rayleigh_channel",
    "apply_phased",
    "zf_precoder",
    "mf_precoder",
    "hybrid_apply",
    "hardening_ratio",
    "favorable_propagation_gap",
    "hardening_stats",
    "distributed_response",
    "distributed_channel",
    "numerical_rank",
    "virtual_array_rank",
]

_UNIT_TOL = 1e-9


@dataclass(frozen=True)
class UlaGeometry:
    n_elements: int
    spacing: Optional[float] = None
    wavelength: float = 1.0

    def __post_init__(self):
        if self.n_elements < 1:
            raise ValueError("n_elements must be at least 1")
        if self.wavelength <= 0:
            raise ValueError("wavelength must be positive")
        if self.spacing is None:
            object.__setattr__(self, "spacing", self.wavelength / 2)
        if self.spacing <= 0:
            raise ValueError("spacing must be positive")

    @property
    def spacing_wavelengths(self) -> float:
        return self.spacing / self.wavelength


def steering(geom: UlaGeometry, theta) -> np.ndarray:
    """ULA response; a scalar angle gives shape ``(N,)``, an array ``(N, len(theta))``."""
    theta_arr = np.asarray(theta, dtype=float)
    n = np.arange(geom.n_elements)
    phase = -2j * np.pi * geom.spacing_wavelengths * np.multiply.outer(n, np.sin(theta_arr))
    return np.exp(phase)


def steering_derivative(geom: UlaGeometry, theta) -> np.ndarray:
    theta_arr = np.asarray(theta, dtype=float)
    n = np.arange(geom.n_elements)
    scale = -2j * np.pi * geom.spacing_wavelengths * np.multiply.outer(n, np.cos(theta_arr))
    return scale * steering(geom, theta_arr)


@dataclass(frozen=True)
class Path:
    gain: complex
    dod: float
    doa: float


@dataclass(frozen=True)
class GeoChannelSpec:
    paths: tuple
    tx_geom: UlaGeometry
    rx_geom: UlaGeometry

    def __post_init__(self):
        paths = tuple(self.paths)
        if len(paths) < 1:
            raise ValueError("a geometric channel needs at least one path")
        for p in paths:
            if abs(p.dod) > np.pi / 2 or abs(p.doa) > np.pi / 2:
                raise ValueError("path angles must lie in [-pi/2, pi/2]")
        object.__setattr__(self, "paths", paths)


def geo_channel(spec: GeoChannelSpec) -> ChannelMatrix:
    """``H = sum_l alpha_l b(theta_l) a(phi_l)^T`` of shape ``(N_r, N_t)``."""
    gains = np.array([p.gain for p in spec.paths], dtype=complex)
    a = steering(spec.tx_geom, [p.dod for p in spec.paths])
    b = steering(spec.rx_geom, [p.doa for p in spec.paths])
    H = (b * gains) @ a.T
    return ChannelMatrix(H, "geometric", {"paths": spec.paths})


def rayleigh_channel(n_r: int, n_t: int, rng: RngLike) -> ChannelMatrix:
    gen = as_generator(rng)
    H = (gen.standard_normal((n_r, n_t)) + 1j * gen.standard_normal((n_r, n_t))) / np.sqrt(2)
    return ChannelMatrix(H, "rayleigh")


def _check_unit_modulus(x: np.ndarray, name: str) -> None:
    if not np.allclose(np.abs(x), 1.0, rtol=0, atol=_UNIT_TOL):
        raise ValueError(f"{name} must have unit-modulus entries")


def apply_phased(H, f, w, s, noise_variance: float = 0.0, rng: Optional[RngLike] = None) -> np.ndarray:
    """Phased-array link ``y_n = w^H H f s_n + z_n`` for a scalar stream ``s``."""
    H = np.asarray(H, dtype=complex)
    f = np.atleast_1d(np.asarray(f, dtype=complex))
    w = np.atleast_1d(np.asarray(w, dtype=complex))
    _check_unit_modulus(f, "f")
    _check_unit_modulus(w, "w")
    gain = np.vdot(w, H @ f)
    y = gain * np.atleast_1d(np.asarray(s, dtype=complex))
    if noise_variance > 0:
        y = add_awgn(y, noise_variance, rng)
    return y


def _normalize_total_power(F: np.ndarray) -> np.ndarray:
    k_u = F.shape[1]
    return F * np.sqrt(k_u) / np.linalg.norm(F)


def zf_precoder(H) -> np.ndarray:
    """Zero-forcing precoder ``H^H (H H^H)^{-1}`` scaled so ``||F||_F^2 = K_u``."""
    H = np.asarray(H, dtype=complex)
    k_u = H.shape[0]
    if np.linalg.matrix_rank(H) < k_u:
        raise np.linalg.LinAlgError("zero-forcing needs a full-row-rank channel")
    F = H.conj().T @ np.linalg.inv(H @ H.conj().T)
    return _normalize_total_power(F)


def mf_precoder(H) -> np.ndarray:
    """Matched-filter (MRT) precoder ``H^H`` with the same total-power scaling."""
    H = np.asarray(H, dtype=complex)
    return _normalize_total_power(H.conj().T)


@dataclass(frozen=True)
class HybridConfig:
    f_rf: np.ndarray
    f_bb: np.ndarray

    def __post_init__(self):
        f_rf = np.atleast_2d(np.asarray(self.f_rf, dtype=complex))
        f_bb = np.atleast_2d(np.asarray(self.f_bb, dtype=complex))
        _check_unit_modulus(f_rf, "F_RF")
        if f_rf.shape[1] != f_bb.shape[0]:
            raise ValueError("F_RF columns must match F_BB rows (N_RF)")
        if f_bb.shape[1] > f_bb.shape[0]:
            raise ValueError(f"{f_bb.shape[1]} streams exceed {f_bb.shape[0]} RF chains")
        object.__setattr__(self, "f_rf", f_rf)
        object.__setattr__(self, "f_bb", f_bb)

    @property
    def n_rf(self) -> int:
        return self.f_rf.shape[1]

    @property
    def n_streams(self) -> int:
        return self.f_bb.shape[1]

    @property
    def equivalent(self) -> np.ndarray:
        return self.f_rf @ self.f_bb


def hybrid_apply(H, cfg: HybridConfig, s, noise_variance: float = 0.0, rng: Optional[RngLike] = None):
    """Return ``(y, F)`` with ``y = H F_RF F_BB s + z`` and ``F = F_RF F_BB``."""
    H = np.asarray(H, dtype=complex)
    F = cfg.equivalent
    s = np.asarray(s, dtype=complex)
    if s.shape[0] != cfg.n_streams:
        raise ValueError("stream vector length must equal the number of streams")
    y = H @ F @ s
    if noise_variance > 0:
        y = add_awgn(y, noise_variance, rng)
    return y, F


def hardening_ratio(channels) -> float:
    """``var(g) / E(g)`` of the normalized gain ``g = ||h||^2 / N``.

    ``channels`` has shape ``(..., N)``; every leading index is one draw.
    For i.i.d. unit-variance entries this equals ``1 / N``.
    """
    h = np.asarray(channels, dtype=complex)
    g = np.sum(np.abs(h) ** 2, axis=-1).ravel() / h.shape[-1]
    mean = g.mean()
    if mean == 0:
        return 0.0
    return float(g.var() / mean)


def favorable_propagation_gap(H) -> float:
    """``||H H^H / N_t - I||_F`` for one ``(K, N_t)`` channel."""
    H = np.asarray(H, dtype=complex)
    gram = H @ H.conj().T / H.shape[1]
    return float(np.linalg.norm(gram - np.eye(H.shape[0])))


def hardening_stats(n_t_list: Sequence[int], n_r: int, n_trials: int, rng: RngStream) -> list[dict]:
    """Channel-hardening and favorable-propagation statistics per array size."""
    if n_trials < 100:
        raise ValueError("n_trials must be at least 100")
    rows = []
    for i, n_t in enumerate(n_t_list):
        gen = rng.child(i).generator()
        H = (gen.standard_normal((n_trials, n_r, n_t)) + 1j * gen.standard_normal((n_trials, n_r, n_t))) / np.sqrt(2)
        gram = H @ np.conj(np.swapaxes(H, 1, 2)) / n_t
        gap = np.linalg.norm(gram - np.eye(n_r), axis=(1, 2))
        rows.append({
            "n_t": int(n_t),
            "n_r": int(n_r),
            "trials": int(n_trials),
            "hardening": hardening_ratio(H),
            "favorable_gap": float(gap.mean()),
        })
    return rows


@dataclass(frozen=True)
class DistributedGeometry:
    tx_positions: np.ndarray
    rx_positions: np.ndarray

    def __post_init__(self):
        for name in ("tx_positions", "rx_positions"):
            pos = np.atleast_2d(np.asarray(getattr(self, name), dtype=float))
            if pos.shape[1] != 2 or pos.shape[0] < 1:
                raise ValueError(f"{name} must be a non-empty list of 2-D points")
            if not np.all(np.isfinite(pos)):
                raise ValueError(f"{name} must be finite")
            object.__setattr__(self, name, pos)


def _element_response(positions: np.ndarray, q: np.ndarray, wavelength: float, amplitude: str) -> np.ndarray:
    dist = np.linalg.norm(positions - q, axis=1)
    if np.any(dist == 0):
        raise ValueError("target coincides with an array element")
    resp = np.exp(-2j * np.pi * dist / wavelength)
    if amplitude == "inverse":
        resp = resp / dist
    elif amplitude != "phase":
        raise ValueError(f"unknown amplitude model {amplitude!r}")
    return resp


def distributed_response(geom: DistributedGeometry, q, wavelength: float, amplitude: str = "phase"):
    """Tx and Rx responses ``(a(q), b(q))`` of widely separated elements to a point at ``q``.

    ``amplitude="inverse"`` adds the ``1 / distance`` spreading factor.
    """
    q = np.asarray(q, dtype=float)
    a = _element_response(geom.tx_positions, q, wavelength, amplitude)
    b = _element_response(geom.rx_positions, q, wavelength, amplitude)
    return a, b


def distributed_channel(geom: DistributedGeometry, targets, gains, wavelength: float,
                        amplitude: str = "phase") -> ChannelMatrix:
    H = np.zeros((len(geom.rx_positions), len(geom.tx_positions)), dtype=complex)
    for q, alpha in zip(targets, gains):
        a, b = distributed_response(geom, q, wavelength, amplitude)
        H += alpha * np.outer(b, a)
    return ChannelMatrix(H, "distributed", {"targets": [tuple(map(float, q)) for q in targets]})


def numerical_rank(H, tol: float = 1e-8) -> int:
    s = np.linalg.svd(np.asarray(H, dtype=complex), compute_uv=False)
    if s.size == 0 or s[0] == 0:
        return 0
    return int(np.sum(s > tol * s[0]))


def virtual_array_rank(n_t: int, n_r: int, angles, tol: float = 1e-8) -> int:
    """Rank of the colocated MIMO virtual-array system for targets at ``angles``.

    With orthogonal waveforms the receiver separates every Tx-Rx pair, so a
    target at ``theta`` contributes the column ``a(theta) kron b(theta)``. The
    Tx elements are spaced ``n_r`` half-wavelengths apart so the ``n_t * n_r``
    virtual elements form a filled ULA.
    """
    rx = UlaGeometry(n_r)
    tx = UlaGeometry(n_t, spacing=n_r * rx.spacing)
    angles = np.atleast_1d(np.asarray(angles, dtype=float))
    a = steering(tx, angles)
    b = steering(rx, angles)
    V = np.einsum("il,jl->ijl", a, b).reshape(n_t * n_r, angles.size)
    return numerical_rank(V, tol)
