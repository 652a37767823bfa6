"""ISAC signalling: OFDM sensing with data symbols, index modulation, and the
joint-design CRB/rate tradeoff.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from math import comb, factorial
from typing import Optional, Sequence

import numpy as np
from scipy import stats
from scipy.optimize import linear_sum_assignment

from .comms import OfdmConfig
from .radar import fisher_information
from .signal_core import RngLike, add_awgn, as_generator

__all__ = [
    "DdProfile",
    "CcdResult",
    "ccd_echo",
    "ccd_process",
    "ccd_pipeline",
    "post_division_noise",
    "division_noise_tests",
    "mean_sidelobe_level",
    "ImCodebook",
    "im_encode",
    "im_decode",
    "im_waveforms",
    "is_orthogonal_codeword",
    "im_symbol_error_rate",
    "corr_coeff",
    "ParetoPoint",
    "JdProblem",
    "jd_pareto_sweep",
]


# -- communication-centric OFDM sensing -------------------------------------

@dataclass(frozen=True)
class DdProfile:
    """Delay-Doppler power map (``N_c x N_s``) and its peak cells."""

    magnitude: np.ndarray
    peaks: tuple


@dataclass(frozen=True)
class CcdResult:
    profile: DdProfile
    delay_bin: int
    doppler_bin: int
    delay: float
    doppler: float
    edge_flag: bool


def ccd_echo(X, cfg: OfdmConfig, delay: float, doppler: float, alpha: complex = 1.0,
             noise_variance: float = 0.0, rng: Optional[RngLike] = None) -> np.ndarray:
    """Frequency-domain echo of one point target carried by data grid ``X``.

    ``y[m, n] = alpha x[m, n] exp(-j 2 pi m df tau) exp(j 2 pi nu n T_c) + z``
    with subcarrier ``m`` on rows and OFDM symbol ``n`` on columns.
    """
    X = np.asarray(X, dtype=complex)
    m = np.arange(cfg.n_subcarriers)[:, None]
    n = np.arange(cfg.n_symbols)[None, :]
    phase = np.exp(-2j * np.pi * m * cfg.subcarrier_spacing * delay) * np.exp(2j * np.pi * doppler * n * cfg.symbol_time)
    y = alpha * X * phase
    if noise_variance > 0:
        y = add_awgn(y, noise_variance, rng)
    return y


def ccd_process(Y, X, cfg: OfdmConfig) -> CcdResult:
    """Remove the data by element-wise division, then 2-D FFT to a delay-Doppler map.

    IDFT across subcarriers gives delay bins of ``1 / (N_c df)`` seconds;
    DFT across symbols gives Doppler bins of ``1 / (N_s T_c)`` Hz, reported
    signed. ``edge_flag`` is set when the delay lands beyond the CP or the
    Doppler sits on the ambiguous Nyquist bin.
    """
    X = np.asarray(X, dtype=complex)
    if np.any(X == 0):
        raise ValueError("element-wise division needs nonzero data symbols")
    Yt = np.asarray(Y, dtype=complex) / X
    profile = np.abs(np.fft.fft(np.fft.ifft(Yt, axis=0), axis=1)) ** 2
    k_tau, k_nu = np.unravel_index(int(np.argmax(profile)), profile.shape)
    n_s = cfg.n_symbols
    signed_nu = k_nu - n_s if k_nu > n_s // 2 else k_nu
    edge = bool(k_tau > cfg.cp_length or (n_s % 2 == 0 and k_nu == n_s // 2 and n_s > 1))
    dd = DdProfile(profile, ((int(k_tau), int(k_nu)),))
    return CcdResult(
        dd,
        int(k_tau),
        int(signed_nu),
        k_tau / (cfg.n_subcarriers * cfg.subcarrier_spacing),
        signed_nu / (n_s * cfg.symbol_time),
        edge,
    )


def ccd_pipeline(X, cfg: OfdmConfig, delay: float, doppler: float, alpha: complex = 1.0,
                 noise_variance: float = 0.0, rng: Optional[RngLike] = None) -> CcdResult:
    X = np.asarray(X, dtype=complex)
    if np.any(X == 0):
        raise ValueError("element-wise division needs nonzero data symbols")
    if doppler * cfg.symbol_time > 0.5 or doppler * cfg.symbol_time < -0.5:
        raise ValueError("Doppler outside +-1/(2 T_c)")
    Y = ccd_echo(X, cfg, delay, doppler, alpha, noise_variance, rng)
    return ccd_process(Y, X, cfg)


def post_division_noise(X, noise_variance: float, rng: RngLike) -> np.ndarray:
    """``z / x`` for fresh CN(0, noise_variance) noise ``z`` on data grid ``X``."""
    X = np.asarray(X, dtype=complex)
    z = add_awgn(np.zeros_like(X), noise_variance, rng)
    return z / X


def division_noise_tests(X, scaled_noise, noise_variance: float) -> dict:
    """Distribution checks on post-division noise.

    ``ks_pvalue``: Kolmogorov-Smirnov of the real part against
    N(0, noise_variance / 2), i.e. the unchanged circular Gaussian.
    ``equal_var_pvalue``: Bartlett test of equal variance across groups of
    entries sharing the same ``|x|`` (``nan`` with a single group).
    """
    X = np.asarray(X, dtype=complex).ravel()
    w = np.asarray(scaled_noise, dtype=complex).ravel()
    ks = stats.kstest(w.real, "norm", args=(0.0, math.sqrt(noise_variance / 2))).pvalue
    mags = np.round(np.abs(X), 9)
    groups = [np.concatenate([w.real[mags == v], w.imag[mags == v]]) for v in np.unique(mags)]
    eq = stats.bartlett(*groups).pvalue if len(groups) > 1 else float("nan")
    return {"ks_pvalue": float(ks), "equal_var_pvalue": float(eq), "groups": len(groups)}


def mean_sidelobe_level(profile) -> float:
    """Mean of the map outside its peak cell, relative to the peak (linear)."""
    p = np.asarray(profile, dtype=float)
    k = int(np.argmax(p))
    flat = p.ravel()
    return float((flat.sum() - flat[k]) / (flat.size - 1) / flat[k])


# -- index modulation -------------------------------------------------------

@dataclass(frozen=True)
class ImCodebook:
    """Carrier selection plus antenna shuffling.

    Each of ``n_selected`` antennas radiates one distinct carrier out of
    ``n_carriers``; a message picks the carrier subset and its arrangement
    over the antennas, giving ``C(M, K) * K!`` messages.
    """

    n_carriers: int
    n_selected: int

    def __post_init__(self):
        if not 1 <= self.n_selected <= self.n_carriers:
            raise ValueError("need 1 <= n_selected <= n_carriers")
        if self.message_count < 2:
            raise ValueError("codebook must carry at least two messages")

    @property
    def n_antennas(self) -> int:
        return self.n_selected

    @property
    def message_count(self) -> int:
        return comb(self.n_carriers, self.n_selected) * factorial(self.n_selected)

    @property
    def bits_per_message(self) -> float:
        return math.log2(self.message_count)


def _unrank_subset(rank: int, n: int, k: int) -> tuple:
    """Lexicographic ``rank``-th k-subset of ``range(n)``."""
    out = []
    start = 0
    for slots in range(k, 0, -1):
        for c in range(start, n):
            block = comb(n - c - 1, slots - 1)
            if rank < block:
                out.append(c)
                start = c + 1
                break
            rank -= block
    return tuple(out)


def _rank_subset(subset: Sequence[int], n: int) -> int:
    rank = 0
    start = 0
    k = len(subset)
    for i, c in enumerate(subset):
        for skipped in range(start, c):
            rank += comb(n - skipped - 1, k - i - 1)
        start = c + 1
    return rank


def _unrank_permutation(rank: int, items: Sequence[int]) -> tuple:
    pool = list(items)
    out = []
    for i in range(len(pool), 0, -1):
        idx, rank = divmod(rank, factorial(i - 1))
        out.append(pool.pop(idx))
    return tuple(out)


def _rank_permutation(perm: Sequence[int]) -> int:
    pool = sorted(perm)
    rank = 0
    for i, p in enumerate(perm):
        idx = pool.index(p)
        rank += idx * factorial(len(perm) - i - 1)
        pool.pop(idx)
    return rank


def im_encode(msg: int, cb: ImCodebook) -> tuple[tuple, tuple]:
    """Message index to ``(carrier subset, carrier per antenna)``."""
    if not 0 <= msg < cb.message_count:
        raise ValueError(f"message {msg} outside [0, {cb.message_count})")
    subset_rank, perm_rank = divmod(msg, factorial(cb.n_selected))
    subset = _unrank_subset(subset_rank, cb.n_carriers, cb.n_selected)
    return subset, _unrank_permutation(perm_rank, subset)


def im_waveforms(assignment: Sequence[int], cb: ImCodebook, n_samples: int) -> np.ndarray:
    """Unit-amplitude tones, one row per antenna; carrier ``m`` is ``exp(j 2 pi m t / T)``."""
    if n_samples < cb.n_carriers:
        raise ValueError("need at least n_carriers samples for orthogonal tones")
    t = np.arange(n_samples)
    return np.exp(2j * np.pi * np.outer(assignment, t) / n_samples)


def is_orthogonal_codeword(assignment: Sequence[int], cb: ImCodebook, n_samples: Optional[int] = None) -> bool:
    """Distinct carriers per antenna, and (if ``n_samples``) a diagonal waveform Gram matrix."""
    if len(set(assignment)) != len(assignment):
        return False
    if n_samples is None:
        return True
    W = im_waveforms(assignment, cb, n_samples)
    G = W @ W.conj().T
    return bool(np.allclose(G, n_samples * np.eye(len(assignment)), atol=1e-9 * n_samples))


def im_decode(rx, cb: ImCodebook, tie_rtol: float = 1e-9) -> Optional[int]:
    """Recover the message from per-antenna observations (``n_antennas x T``).

    A matched-filter bank gives the energy of every carrier on every antenna;
    the jointly most energetic one-carrier-per-antenna assignment is chosen.
    Returns ``None`` (erasure) when an antenna's two strongest carriers tie.
    """
    rx = np.atleast_2d(np.asarray(rx, dtype=complex))
    if rx.shape[0] != cb.n_antennas:
        raise ValueError("one observation row per antenna is required")
    bank = im_waveforms(range(cb.n_carriers), cb, rx.shape[1])
    energy = np.abs(rx @ bank.conj().T) ** 2
    top2 = np.sort(energy, axis=1)[:, -2:]
    if np.any(np.isclose(top2[:, 0], top2[:, 1], rtol=tie_rtol, atol=0)):
        return None
    rows, cols = linear_sum_assignment(energy, maximize=True)
    assignment = tuple(int(c) for c in cols[np.argsort(rows)])
    subset = tuple(sorted(assignment))
    return _rank_subset(subset, cb.n_carriers) * factorial(cb.n_selected) + _rank_permutation(assignment)


def im_symbol_error_rate(cb: ImCodebook, snr_db: float, n_trials: int, n_samples: int, rng: RngLike) -> tuple[int, int]:
    """Message errors (erasures count as errors) at per-sample SNR ``snr_db``."""
    gen = as_generator(rng)
    noise_variance = 10 ** (-snr_db / 10)
    errors = 0
    for msg in gen.integers(0, cb.message_count, n_trials):
        _, assignment = im_encode(int(msg), cb)
        rx = add_awgn(im_waveforms(assignment, cb, n_samples), noise_variance, gen)
        errors += im_decode(rx, cb) != msg
    return n_trials, int(errors)


# -- joint design -----------------------------------------------------------

def corr_coeff(h_c, a_theta) -> float:
    """``|h^H a| / (||h|| ||a||)``, clipped into ``[0, 1]``."""
    h = np.asarray(h_c, dtype=complex).ravel()
    a = np.asarray(a_theta, dtype=complex).ravel()
    nh, na = np.linalg.norm(h), np.linalg.norm(a)
    if nh == 0 or na == 0:
        raise ValueError("correlation of a zero vector is undefined")
    return float(min(abs(np.vdot(h, a)) / (nh * na), 1.0))


@dataclass(frozen=True)
class ParetoPoint:
    """Minimum-CRB beamformer meeting rate threshold ``r0``.

    Infeasible thresholds keep ``feasible=False`` and ``None`` in the
    rate, CRB and beamformer fields.
    """

    r0: float
    feasible: bool
    rate: Optional[float] = None
    crb: Optional[float] = None
    beamformer: Optional[np.ndarray] = None
    power: Optional[float] = None
    angle_index: Optional[int] = None
    phase_index: Optional[int] = None
    rho: Optional[float] = None


class JdProblem:
    """Single-user, single-target joint design.

    The monostatic radar sees ``alpha a(theta) a(theta)^T w`` in noise of
    variance ``radar_noise`` and estimates ``(theta, Re alpha, Im alpha)``;
    the user receives ``h_c^H w`` in noise of variance ``comm_noise``. All
    beamformers use the full energy ``energy``.

    The sensing beam is ``conj(a(theta))``, so the subspace correlation is
    measured between ``h_c`` and that direction.
    """

    def __init__(self, a, a_dot, h_c, energy: float, radar_noise: float, comm_noise: float, alpha: complex = 1.0):
        self.a = np.asarray(a, dtype=complex).ravel()
        self.a_dot = np.asarray(a_dot, dtype=complex).ravel()
        self.h_c = np.asarray(h_c, dtype=complex).ravel()
        if not (self.a.size == self.a_dot.size == self.h_c.size):
            raise ValueError("a, a_dot and h_c must have the same length")
        if not np.any(self.a) or not np.any(self.h_c):
            raise ValueError("steering vector and channel must be nonzero")
        if energy <= 0 or radar_noise <= 0 or comm_noise <= 0:
            raise ValueError("energy and noise variances must be positive")
        self.energy = float(energy)
        self.radar_noise = float(radar_noise)
        self.comm_noise = float(comm_noise)
        self.alpha = complex(alpha)
        self.sensing_dir = self.a.conj() / np.linalg.norm(self.a)
        self._basis = self._orthonormal_complement()

    @property
    def rho(self) -> float:
        return corr_coeff(self.h_c, self.sensing_dir)

    @property
    def max_rate(self) -> float:
        return math.log2(1.0 + self.energy * np.vdot(self.h_c, self.h_c).real / self.comm_noise)

    def _orthonormal_complement(self) -> np.ndarray:
        u = self.sensing_dir
        c = np.vdot(u, self.h_c)
        v = self.h_c - c * u
        if np.linalg.norm(v) <= 1e-12 * np.linalg.norm(self.h_c):
            # channel lies on the sensing beam: any orthogonal direction spans the (degenerate) plane
            e = np.eye(u.size, dtype=complex)
            resid = e - np.outer(u, u.conj() @ e)
            v = resid[:, int(np.argmax(np.linalg.norm(resid, axis=0)))]
        v = v / np.linalg.norm(v)
        # rotate so the MRT beam sits at phase 0 of the grid
        if abs(c) > 0:
            v = v * (np.conj(c) / abs(c))
        return v

    def rate(self, W) -> np.ndarray:
        W = np.asarray(W, dtype=complex)
        gain = np.abs(W @ self.h_c.conj()) ** 2
        return np.log2(1.0 + gain / self.comm_noise)

    def jacobians(self, W) -> np.ndarray:
        """``d mu / d(theta, Re alpha, Im alpha)`` for a batch of beamformers, shape ``(..., 3, N)``."""
        W = np.asarray(W, dtype=complex)
        g = W @ self.a
        g_dot = W @ self.a_dot
        a, a_dot = self.a, self.a_dot
        d_theta = self.alpha * (a_dot * g[..., None] + a * g_dot[..., None])
        d_re = a * g[..., None]
        return np.stack([d_theta, d_re, 1j * d_re], axis=-2)

    def crb(self, W) -> np.ndarray:
        """``CRB(theta)``: the (theta, theta) entry of the inverse 3x3 FIM (``inf`` if singular)."""
        J = fisher_information(self.jacobians(W), self.radar_noise)
        det = np.linalg.det(J)
        scale = np.max(np.abs(J), axis=(-2, -1)) ** 3
        ok = det > 1e-12 * np.where(scale > 0, scale, 1.0)
        out = np.full(det.shape, np.inf)
        if np.any(ok):
            out[ok] = np.linalg.inv(J[ok])[..., 0, 0]
        return out

    def span_grid(self, n_angles: int = 721, n_phases: int = 180):
        """Full-power beamformers ``sqrt(E) (cos b u + sin b e^{j p} v)`` on the grid.

        ``b`` runs over ``n_angles`` points in ``[0, pi/2]`` and ``p`` over
        ``n_phases`` points in ``[0, 2 pi)``. Returns ``(W, angle_idx, phase_idx)``
        flattened in angle-major order.
        """
        beta, phi = self.grid_axes(n_angles, n_phases)
        bi, pj = np.meshgrid(np.arange(n_angles), np.arange(n_phases), indexing="ij")
        bi, pj = bi.ravel(), pj.ravel()
        return self.beam(beta[bi], phi[pj]), bi, pj

    @staticmethod
    def grid_axes(n_angles: int, n_phases: int):
        return np.linspace(0.0, np.pi / 2, n_angles), 2 * np.pi * np.arange(n_phases) / n_phases

    def beam(self, beta, phi) -> np.ndarray:
        """Full-power beamformer(s) at rotation angle ``beta`` and relative phase ``phi``."""
        cb = np.cos(beta)[..., None]
        sb = (np.sin(beta) * np.exp(1j * np.asarray(phi)))[..., None]
        return math.sqrt(self.energy) * (cb * self.sensing_dir + sb * self._basis)


class _Envelope:
    """Lowest CRB among grid points whose rate reaches a threshold."""

    def __init__(self, rates: np.ndarray, crbs: np.ndarray):
        # descending rate; ties resolved toward lower CRB, then lower grid index
        order = np.lexsort((np.arange(rates.size), crbs, -rates))
        self.rates = rates[order]
        crb_sorted = crbs[order]
        runmin = np.minimum.accumulate(crb_sorted)
        improved = np.concatenate([[True], crb_sorted[1:] < runmin[:-1]])
        self.best_pos = np.maximum.accumulate(np.where(improved, np.arange(order.size), 0))
        self.order = order
        self.crb_sorted = crb_sorted

    def query(self, r0: np.ndarray, tol: float):
        """Grid index of the optimum for each threshold, ``-1`` where infeasible."""
        r0 = np.asarray(r0, dtype=float)
        thresh = r0 - tol * np.maximum(1.0, np.abs(r0))
        # count of points with rate >= thresh (rates descending)
        count = np.searchsorted(-self.rates, -thresh, side="right")
        out = np.full(r0.shape, -1, dtype=int)
        ok = count > 0
        out[ok] = self.order[self.best_pos[count[ok] - 1]]
        return out


def jd_pareto_sweep(a_theta, a_dot, h_c, energy: float, radar_noise: float, comm_noise: float,
                    r0_grid, n_angles: int = 721, n_phases: int = 180, alpha: complex = 1.0,
                    rate_tol: float = 1e-12) -> list[ParetoPoint]:
    """CRB-minimizing beamformer for each rate threshold ``R0``.

    The search runs over full-power beamformers in
    ``span{conj(a(theta)), h_c}``; for each ``R0`` the grid point with the
    lowest CRB among those with ``rate >= R0`` is picked (ties to higher
    rate, then lower grid index). An active rate constraint puts the
    optimum on the rate boundary, between grid angles, so every phase
    column where an infeasible angle is followed by a feasible one is
    refined by bisection onto the boundary; the best refined beam replaces
    the grid pick when its CRB is lower. Reported indices are those of the
    grid point at (or just past) the returned beam. Thresholds with no
    feasible point come back with ``feasible=False``.
    """
    problem = JdProblem(a_theta, a_dot, h_c, energy, radar_noise, comm_noise, alpha)
    W, bi, pj = problem.span_grid(n_angles, n_phases)
    rates = problem.rate(W)
    crbs = problem.crb(W)
    env = _Envelope(rates, crbs)
    r0 = np.asarray(r0_grid, dtype=float)
    picks = env.query(r0, rate_tol)
    beta, phi = problem.grid_axes(n_angles, n_phases)
    rho = problem.rho
    points = []
    for r, k in zip(r0, picks):
        if k < 0:
            points.append(ParetoPoint(float(r), False, rho=rho))
            continue
        w, rate, crb = W[k], float(rates[k]), float(crbs[k])
        ai, pi_ = int(bi[k]), int(pj[k])
        # refinement targets R0 exactly; the tolerance only admits grid points
        refined = _refine_on_boundary(problem, rates.reshape(n_angles, n_phases) >= r, r, beta, phi)
        if refined is not None and refined[2] < crb:
            w, rate, crb, ai, pi_ = refined
        points.append(ParetoPoint(
            float(r), True, rate, crb, w.copy(), float(np.vdot(w, w).real), ai, pi_, rho,
        ))
    return points


def _refine_on_boundary(problem: JdProblem, feasible: np.ndarray, thresh: float, beta: np.ndarray,
                        phi: np.ndarray, n_iter: int = 60):
    """Lowest-CRB beam on the rate boundary over all grid crossings.

    ``feasible`` is the ``(n_angles, n_phases)`` feasibility mask. Each
    crossing from an infeasible to a feasible angle is bisected to the
    boundary, keeping the feasible end. Returns ``(w, rate, crb, angle_idx,
    phase_idx)`` or ``None`` when there is no crossing.
    """
    i, j = np.nonzero(~feasible[:-1] & feasible[1:])
    if i.size == 0:
        return None
    lo, hi, ph = beta[i].copy(), beta[i + 1].copy(), phi[j]
    for _ in range(n_iter):
        mid = 0.5 * (lo + hi)
        ok = problem.rate(problem.beam(mid, ph)) >= thresh
        hi = np.where(ok, mid, hi)
        lo = np.where(ok, lo, mid)
    W = problem.beam(hi, ph)
    rates, crbs = problem.rate(W), problem.crb(W)
    best = int(np.argmin(crbs))
    return W[best], float(rates[best]), float(crbs[best]), int(i[best] + 1), int(j[best])
