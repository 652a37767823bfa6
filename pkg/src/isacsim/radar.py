"""Radar receive processing.

Echo synthesis, matched filtering and range-Doppler maps, Neyman-Pearson and
CA-CFAR detection, OMP sparse recovery, Fisher information / CRB, grid
maximum likelihood and MUSIC.
"""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass, field
from typing import Callable, Optional, Sequence

import numpy as np
from scipy import ndimage, signal

from .arrays import UlaGeometry, steering
from .signal_core import ComplexSignal, LinearGaussianModel, RngLike, add_awgn
from .waveforms import RadarWindow, make_window

__all__ = [
    "Scatterer",
    "TargetScene",
    "DetectionReport",
    "CrbResult",
    "OmpResult",
    "MusicResult",
    "synth_echo",
    "matched_filter",
    "local_maxima",
    "range_doppler_map",
    "strongest_points",
    "np_threshold",
    "np_detect",
    "ca_cfar_scale",
    "ca_cfar",
    "omp_tolerance",
    "omp_recover",
    "fisher_information",
    "fisher_crb",
    "grid_mle",
    "fractional_delay",
    "music_doa",
]


@dataclass(frozen=True)
class Scatterer:
    delay: float
    doppler: float = 0.0
    reflectivity: complex = 1.0
    angle: Optional[float] = None
    coords: Optional[tuple] = None

    def __post_init__(self):
        if self.delay < 0:
            raise ValueError("delay must be non-negative")
        if self.angle is not None and self.coords is not None:
            raise ValueError("give either an angle or coordinates, not both")


@dataclass(frozen=True)
class TargetScene:
    scatterers: tuple = ()

    def __post_init__(self):
        object.__setattr__(self, "scatterers", tuple(self.scatterers))

    def __len__(self) -> int:
        return len(self.scatterers)

    def __iter__(self):
        return iter(self.scatterers)


@dataclass(frozen=True)
class DetectionReport:
    """Per-cell statistics, thresholds and decisions.

    ``threshold`` is a scalar for NP detection and a per-cell array for
    CFAR (``inf`` where the reference window does not fit). The empirical
    rates are ``None`` when they cannot be computed from the given truth.
    """

    statistics: np.ndarray
    threshold: float | np.ndarray
    decisions: np.ndarray
    empirical_pfa: Optional[float]
    empirical_pd: Optional[float]


def _report(stats: np.ndarray, threshold, truth) -> DetectionReport:
    decisions = stats > threshold
    if truth is None:
        pfa = float(decisions.mean())
        pd = None
    else:
        truth = np.asarray(truth, dtype=bool)
        h0, h1 = ~truth, truth
        if isinstance(threshold, np.ndarray):
            valid = np.isfinite(threshold)
            h0, h1 = h0 & valid, h1 & valid
        pfa = float(decisions[h0].mean()) if h0.any() else None
        pd = float(decisions[h1].mean()) if h1.any() else None
    return DetectionReport(stats, threshold, decisions, pfa, pd)


def synth_echo(tx: ComplexSignal, scene: TargetScene, pri: float, n_pulses: int,
               noise_variance: float = 0.0, rng: Optional[RngLike] = None) -> np.ndarray:
    """Fast-time x slow-time echo matrix of a point-target scene.

    Each scatterer adds ``alpha * tx`` delayed by ``round(delay / Ts)``
    samples, rotated by ``exp(j 2 pi nu n PRI)`` on pulse ``n``. Echo tails
    running past the end of the PRI are dropped.
    """
    ts = tx.sample_interval
    n_fast = int(round(pri / ts))
    if n_fast < 1:
        raise ValueError("PRI shorter than one sample")
    echo = np.zeros((n_fast, n_pulses), dtype=complex)
    slow = np.arange(n_pulses) * pri
    for sc in scene:
        if sc.delay >= pri:
            raise ValueError(f"delay {sc.delay:g} s exceeds the unambiguous range (PRI {pri:g} s)")
        d = int(round(sc.delay / ts))
        seg = tx.samples[: max(n_fast - d, 0)]
        echo[d:d + seg.size, :] += sc.reflectivity * np.outer(seg, np.exp(2j * np.pi * sc.doppler * slow))
    if noise_variance > 0:
        echo = add_awgn(echo, noise_variance, rng)
    return echo


def _window_taps(window, n: int) -> np.ndarray:
    if window is None:
        return np.ones(n)
    if isinstance(window, RadarWindow):
        if window.length != n:
            window = RadarWindow(window.kind, n, window.sidelobe_db, window.taylor_nbar)
        return make_window(window)
    taps = np.asarray(window, dtype=float)
    if taps.size != n:
        raise ValueError("window length must match the reference length")
    return taps


def matched_filter(rx, ref, window=None) -> np.ndarray:
    """Correlate ``rx`` against the (optionally tapered) reference.

    ``out[k] = sum_m rx[k + m] * conj(ref[m] * w[m])`` for every lag where
    the reference fits inside ``rx``. ``rx`` may be 2-D, in which case each
    column is filtered.
    """
    ref = np.asarray(ref, dtype=complex)
    rx = np.asarray(rx, dtype=complex)
    if ref.size > rx.shape[0]:
        raise ValueError("reference is longer than the received signal")
    kernel = ref * _window_taps(window, ref.size)
    if rx.ndim == 1:
        return signal.correlate(rx, kernel, mode="valid")
    return signal.correlate(rx, kernel[:, None], mode="valid")


def local_maxima(x, rel_threshold: float = 0.0) -> np.ndarray:
    """Indices of strict 1-D local maxima of ``|x|`` above ``rel_threshold * max|x|``.

    A plateau counts once, at its first sample. End points count when they
    exceed their single neighbour.
    """
    mag = np.abs(np.asarray(x))
    if mag.size == 0:
        return np.array([], dtype=int)
    if mag.size == 1:
        return np.array([0]) if mag[0] > 0 else np.array([], dtype=int)
    padded = np.concatenate([[-np.inf], mag, [-np.inf]])
    peaks = []
    i = 1
    n = mag.size
    while i <= n:
        j = i
        while j < n and padded[j + 1] == padded[i]:
            j += 1
        if padded[i] > padded[i - 1] and padded[i] > padded[j + 1]:
            peaks.append(i - 1)
        i = j + 1
    peaks = np.array(peaks, dtype=int)
    return peaks[mag[peaks] > rel_threshold * mag.max()]


def range_doppler_map(echo, ref, window=None) -> np.ndarray:
    """Matched filter along fast time, FFT along slow time, magnitude squared.

    Row ``k`` is the delay of ``k`` samples; column ``m`` is Doppler
    ``m / (N * PRI)`` (FFT order, so negative Doppler wraps to the top).
    """
    echo = np.asarray(echo, dtype=complex)
    if echo.ndim != 2 or echo.shape[1] < 2:
        raise ValueError("echo must be fast-time x slow-time with at least 2 pulses")
    compressed = matched_filter(echo, ref, window)
    return np.abs(np.fft.fft(compressed, axis=1)) ** 2


def strongest_points(rd_map, m: int, min_separation: int = 1, rel_threshold: float = 1e-6) -> list:
    """The ``m`` strongest 2-D local maxima as ``(row, col, value)``, strongest first.

    A cell is a local maximum when it equals the maximum over its
    ``(2 * min_separation + 1)``-square neighbourhood; the Doppler axis wraps.
    """
    rd_map = np.asarray(rd_map, dtype=float)
    size = 2 * min_separation + 1
    peak_mask = rd_map == ndimage.maximum_filter(rd_map, size=size, mode=("nearest", "wrap"))
    peak_mask &= rd_map > rel_threshold * rd_map.max()
    rows, cols = np.nonzero(peak_mask)
    order = np.lexsort((cols, rows, -rd_map[rows, cols]))[:m]
    return [(int(rows[i]), int(cols[i]), float(rd_map[rows[i], cols[i]])) for i in order]


def np_threshold(noise_variance: float, design_pfa: float, ref_energy: float = 1.0) -> float:
    """Threshold on ``|s^H y|^2`` giving false-alarm probability ``design_pfa``.

    Under noise only the statistic is exponential with mean
    ``noise_variance * ||s||^2``.
    """
    if not 0 < design_pfa < 1:
        raise ValueError("design_pfa must lie in (0, 1)")
    if noise_variance <= 0:
        raise ValueError("noise_variance must be positive")
    return noise_variance * ref_energy * math.log(1.0 / design_pfa)


def np_detect(stat_cells, noise_variance: float, design_pfa: float, ref_energy: float = 1.0,
              truth=None) -> DetectionReport:
    """Neyman-Pearson test on matched-filter power cells.

    ``truth`` marks cells that contain a target; without it every cell is
    treated as noise-only and ``empirical_pd`` is ``None``.
    """
    stats = np.asarray(stat_cells, dtype=float)
    gamma = np_threshold(noise_variance, design_pfa, ref_energy)
    return _report(stats, gamma, truth)


def ca_cfar_scale(n_train: int, design_pfa: float) -> float:
    return n_train * (design_pfa ** (-1.0 / n_train) - 1.0)


def ca_cfar(stats, n_train: int, n_guard: int, design_pfa: float, truth=None) -> DetectionReport:
    """Cell-averaging CFAR on a 1-D power sequence.

    ``n_train`` counts all reference cells, split evenly into a lagging and
    a leading half on either side of ``n_guard`` guard cells. Cells whose
    window falls off either end get an infinite threshold.
    """
    if not 0 < design_pfa < 1:
        raise ValueError("design_pfa must lie in (0, 1)")
    if n_train < 2 or n_train % 2:
        raise ValueError("n_train must be a positive even number")
    if n_guard < 0:
        raise ValueError("n_guard must be non-negative")
    stats = np.asarray(stats, dtype=float)
    n = stats.size
    if n <= 2 * (n_train + n_guard) + 1:
        raise ValueError(f"{n} cells cannot hold a CFAR window of {n_train} train + {n_guard} guard cells")
    half = n_train // 2
    reach = n_guard + half
    csum = np.concatenate([[0.0], np.cumsum(stats)])
    idx = np.arange(reach, n - reach)
    lag = csum[idx - n_guard] - csum[idx - reach]
    lead = csum[idx + reach + 1] - csum[idx + n_guard + 1]
    threshold = np.full(n, np.inf)
    threshold[idx] = ca_cfar_scale(n_train, design_pfa) * (lag + lead) / n_train
    return _report(stats, threshold, truth)


def omp_tolerance(noise_variance: float, n: int) -> float:
    """Residual bound ``zeta`` with ``zeta^2 = sigma^2 (n + 2 sqrt(2 n))``."""
    return math.sqrt(noise_variance * (n + 2.0 * math.sqrt(2.0 * n)))


@dataclass(frozen=True)
class OmpResult:
    coefficients: np.ndarray
    support: tuple
    n_iter: int
    residual_norm: float
    converged: bool


def omp_recover(y, S, max_sparsity: int, zeta: float) -> OmpResult:
    """Orthogonal matching pursuit for ``min ||h||_0  s.t. ||y - S h||_2 <= zeta``.

    Atoms are chosen by normalized correlation with the residual; the
    coefficients are refit by least squares on the whole support after each
    pick. A warning is issued when ``max_sparsity`` atoms leave the residual
    above ``zeta``.
    """
    y = np.asarray(y, dtype=complex).ravel()
    S = np.asarray(S, dtype=complex)
    n_atoms = S.shape[1]
    norms = np.linalg.norm(S, axis=0)
    norms[norms == 0] = np.inf
    h = np.zeros(n_atoms, dtype=complex)
    support: list[int] = []
    residual = y.copy()
    res_norm = float(np.linalg.norm(residual))
    coef = np.zeros(0, dtype=complex)
    while res_norm > zeta and len(support) < min(max_sparsity, n_atoms):
        corr = np.abs(S.conj().T @ residual) / norms
        corr[support] = -1.0
        support.append(int(np.argmax(corr)))
        coef, *_ = np.linalg.lstsq(S[:, support], y, rcond=None)
        residual = y - S[:, support] @ coef
        res_norm = float(np.linalg.norm(residual))
    h[support] = coef
    converged = res_norm <= zeta
    if not converged:
        warnings.warn(
            f"OMP stopped at {len(support)} atoms with residual {res_norm:.3g} > zeta {zeta:.3g}",
            RuntimeWarning,
            stacklevel=2,
        )
    return OmpResult(h, tuple(sorted(support)), len(support), res_norm, converged)


@dataclass(frozen=True)
class CrbResult:
    """Fisher matrix and its inverse; ``crb`` is ``None`` when the FIM is singular."""

    fim: np.ndarray
    crb: Optional[np.ndarray]
    parameter_labels: tuple = field(default=())

    @property
    def singular(self) -> bool:
        return self.crb is None

    def bound(self, label) -> float:
        if self.crb is None:
            raise np.linalg.LinAlgError("Fisher information is singular")
        i = self.parameter_labels.index(label) if not isinstance(label, int) else label
        return float(self.crb[i, i])


def fisher_information(jacobians, noise_variance: float) -> np.ndarray:
    """``J_ik = (2 / sigma^2) Re tr(D_i^H D_k)`` for mean derivatives ``D_i``.

    ``jacobians`` has shape ``(..., P, M)`` with the mean flattened to ``M``
    entries; leading axes are batched, which lets a sweep evaluate many
    beamformers at once.
    """
    D = np.asarray(jacobians, dtype=complex)
    if noise_variance <= 0:
        raise ValueError("noise_variance must be positive")
    return _fim(D, noise_variance)


def _fim(D: np.ndarray, noise_variance: float) -> np.ndarray:
    return (2.0 / noise_variance) * np.real(np.einsum("...im,...km->...ik", D.conj(), D))


def fisher_crb(model: LinearGaussianModel, params, param_jacobian: Callable, labels: Sequence[str] = ()) -> CrbResult:
    """CRB of real parameters ``params`` of the mean ``H(eta) S`` in complex AWGN.

    ``param_jacobian(params)`` returns one array per parameter, each shaped
    like the model mean, holding ``d(H S) / d eta_i``.
    """
    sigma2 = model.noise_variance
    if sigma2 <= 0:
        raise ValueError("noise_variance must be positive")
    params = np.atleast_1d(np.asarray(params, dtype=float))
    D = np.array([np.asarray(d, dtype=complex).ravel() for d in param_jacobian(params)])
    if D.shape[0] != params.size:
        raise ValueError("jacobian count does not match the parameter count")
    if not np.all(np.isfinite(D)):
        raise ValueError("jacobian has non-finite entries")
    J = _fim(D, sigma2)
    labels = tuple(labels) if labels else tuple(f"eta{i}" for i in range(params.size))
    eig = np.linalg.eigvalsh(J)
    if eig[-1] <= 0 or eig[0] <= 1e-12 * eig[-1]:
        warnings.warn("Fisher information is singular; parameters are not identifiable",
                      RuntimeWarning, stacklevel=2)
        return CrbResult(J, None, labels)
    crb = np.linalg.inv(J)
    return CrbResult(J, 0.5 * (crb + crb.T), labels)


def grid_mle(y, model_fn: Callable, grid, return_index: bool = False):
    """Lattice point minimizing ``||y - model_fn(eta)||^2``.

    Ties go to the lowest grid index.
    """
    grid = list(grid)
    if not grid:
        raise ValueError("grid must be non-empty")
    y = np.asarray(y, dtype=complex)
    costs = np.array([np.sum(np.abs(y - np.asarray(model_fn(eta))) ** 2) for eta in grid])
    best = int(np.argmin(costs))
    return (grid[best], best) if return_index else grid[best]


def fractional_delay(x, delay: float) -> np.ndarray:
    """Circularly delay ``x`` by a real number of samples through the DFT."""
    x = np.asarray(x, dtype=complex)
    freqs = np.fft.fftfreq(x.size)
    return np.fft.ifft(np.fft.fft(x) * np.exp(-2j * np.pi * freqs * delay))


@dataclass(frozen=True)
class MusicResult:
    angles: np.ndarray
    spectrum: np.ndarray
    peaks: np.ndarray


def music_doa(snapshots, n_sources: int, angle_grid, geom: Optional[UlaGeometry] = None) -> MusicResult:
    """MUSIC pseudo-spectrum ``1 / ||E_n^H a(theta)||^2`` and its strongest peaks.

    The sample covariance uses 1/T normalization. Peaks are strict local
    maxima of the pseudo-spectrum; the ``n_sources`` largest are returned in
    ascending angle order.
    """
    X = np.asarray(snapshots, dtype=complex)
    n_r, n_snap = X.shape
    angle_grid = np.asarray(angle_grid, dtype=float)
    if n_sources == 0:
        return MusicResult(angle_grid, np.ones_like(angle_grid), np.array([]))
    if n_snap < n_sources or n_r <= n_sources:
        raise ValueError("MUSIC needs T >= n_sources and N_r > n_sources")
    geom = geom or UlaGeometry(n_r)
    R = X @ X.conj().T / n_snap
    eig = np.linalg.eigvalsh(R)
    rank = int(np.sum(eig > 1e-10 * max(eig[-1], np.finfo(float).tiny)))
    if rank < n_sources:
        warnings.warn(f"sample covariance rank {rank} is below n_sources={n_sources}",
                      RuntimeWarning, stacklevel=2)
    try:
        _, vecs = np.linalg.eigh(R)
    except np.linalg.LinAlgError:
        _, vecs = np.linalg.eigh(R + 1e-6 * np.trace(R).real / n_r * np.eye(n_r))
    noise_space = vecs[:, : n_r - n_sources]
    A = steering(geom, angle_grid)
    proj = np.sum(np.abs(noise_space.conj().T @ A) ** 2, axis=0)
    spectrum = 1.0 / np.maximum(proj, np.finfo(float).tiny)
    cand = local_maxima(spectrum)
    top = cand[np.argsort(-spectrum[cand], kind="stable")[:n_sources]]
    return MusicResult(angle_grid, spectrum, np.sort(angle_grid[top]))
