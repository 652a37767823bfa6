import math
from itertools import permutations, combinations

import numpy as np
import pytest

from isacsim.arrays import UlaGeometry, steering, steering_derivative
from isacsim.comms import OfdmConfig, constellation
from isacsim.experiments import pareto_channels
from isacsim.isac import (
    ImCodebook,
    JdProblem,
    ccd_echo,
    ccd_pipeline,
    ccd_process,
    corr_coeff,
    division_noise_tests,
    im_decode,
    im_encode,
    im_symbol_error_rate,
    im_waveforms,
    is_orthogonal_codeword,
    jd_pareto_sweep,
    mean_sidelobe_level,
    post_division_noise,
)
from isacsim.signal_core import RngStream


def _grid(kind, n_c, n_s, gen):
    pts = constellation(kind).points
    return pts[gen.integers(0, pts.size, (n_c, n_s))]


# -- CCD OFDM sensing -------------------------------------------------------

def test_ccd_bin_centered_target():
    cfg = OfdmConfig(64, 32, 120e3, 16)
    X = _grid("QPSK", 64, 32, RngStream(0).generator())
    tau = 3 / (64 * cfg.subcarrier_spacing)
    nu = 5 / (32 * cfg.symbol_time)
    res = ccd_pipeline(X, cfg, tau, nu)
    assert (res.delay_bin, res.doppler_bin) == (3, 5)
    assert res.delay == pytest.approx(tau) and res.doppler == pytest.approx(nu)
    assert not res.edge_flag


def test_ccd_zero_target_and_negative_doppler():
    cfg = OfdmConfig(32, 16, 15e3, 8)
    X = _grid("16QAM", 32, 16, RngStream(1).generator())
    res = ccd_pipeline(X, cfg, 0.0, 0.0)
    assert (res.delay_bin, res.doppler_bin) == (0, 0)
    res = ccd_pipeline(X, cfg, 0.0, -3 / (16 * cfg.symbol_time))
    assert res.doppler_bin == -3


def test_ccd_echo_model():
    cfg = OfdmConfig(8, 4, 1e3, 2)
    X = np.ones((8, 4), dtype=complex)
    Y = ccd_echo(X, cfg, 1e-4, 50.0, alpha=2.0)
    m, n = 5, 3
    expected = 2.0 * np.exp(-2j * np.pi * m * 1e3 * 1e-4) * np.exp(2j * np.pi * 50.0 * n * cfg.symbol_time)
    assert Y[m, n] == pytest.approx(expected)


def test_ccd_edge_flag_and_validation():
    cfg = OfdmConfig(16, 8, 1e3, 2)
    X = np.ones((16, 8), dtype=complex)
    assert ccd_pipeline(X, cfg, 5 / (16 * 1e3), 0.0).edge_flag
    with pytest.raises(ValueError):
        ccd_process(X, np.zeros_like(X), cfg)
    with pytest.raises(ValueError):
        ccd_pipeline(X, cfg, 0.0, 0.6 / cfg.symbol_time)


def test_post_division_noise_qpsk_vs_16qam():
    gen = RngStream(2).generator()
    sigma2 = 0.1
    X_q = _grid("QPSK", 64, 64, gen)
    X_16 = _grid("16QAM", 64, 64, gen)
    q = division_noise_tests(X_q, post_division_noise(X_q, sigma2, gen), sigma2)
    s = division_noise_tests(X_16, post_division_noise(X_16, sigma2, gen), sigma2)
    assert q["ks_pvalue"] > 0.01
    assert q["groups"] == 1
    assert s["groups"] == 3 and s["equal_var_pvalue"] < 0.01


def test_random_data_raises_sidelobes():
    gen = RngStream(3).generator()
    cfg = OfdmConfig(64, 64, 120e3, 16)
    levels = {}
    for kind in ("QPSK", "16QAM"):
        vals = []
        for _ in range(5):
            X = _grid(kind, 64, 64, gen)
            vals.append(mean_sidelobe_level(ccd_pipeline(X, cfg, 0.0, 0.0, 1.0, 0.1, gen).profile.magnitude))
        levels[kind] = np.mean(vals)
    assert levels["16QAM"] > levels["QPSK"]


def test_mean_sidelobe_level_of_delta():
    p = np.zeros((4, 4))
    p[1, 2] = 1.0
    assert mean_sidelobe_level(p) == 0.0


# -- index modulation -------------------------------------------------------

@pytest.mark.parametrize("m,k,size", [(4, 2, 12), (9, 2, 72), (6, 4, 360)])
def test_codebook_size_matches_enumeration(m, k, size):
    cb = ImCodebook(m, k)
    assert cb.message_count == size
    enumerated = {p for s in combinations(range(m), k) for p in permutations(s)}
    assert len(enumerated) == size
    encoded = {im_encode(msg, cb)[1] for msg in range(size)}
    assert encoded == enumerated


@pytest.mark.parametrize("m,k", [(4, 2), (9, 2), (6, 4)])
def test_codebook_round_trip_and_orthogonality(m, k):
    cb = ImCodebook(m, k)
    for msg in range(cb.message_count):
        subset, assignment = im_encode(msg, cb)
        assert tuple(sorted(assignment)) == subset
        assert is_orthogonal_codeword(assignment, cb, 2 * m)
        assert im_decode(im_waveforms(assignment, cb, 2 * m), cb) == msg


def test_im_msg_zero_and_validation():
    cb = ImCodebook(4, 2)
    _, assignment = im_encode(0, cb)
    assert im_decode(im_waveforms(assignment, cb, 8), cb) == 0
    with pytest.raises(ValueError):
        im_encode(12, cb)
    with pytest.raises(ValueError):
        ImCodebook(2, 3)
    with pytest.raises(ValueError):
        im_waveforms((0, 1), cb, 3)
    with pytest.raises(ValueError):
        im_decode(np.ones((3, 8)), cb)
    assert not is_orthogonal_codeword((1, 1), cb)


def test_im_decode_tie_is_erasure():
    cb = ImCodebook(4, 2)
    assert im_decode(np.zeros((2, 8)), cb) is None


def test_im_ser_at_10_db():
    trials, errors = im_symbol_error_rate(ImCodebook(4, 2), 10.0, 10_000, 16, RngStream(4))
    assert trials == 10_000 and errors / trials < 1e-2


# -- correlation ------------------------------------------------------------

def test_corr_coeff_cases():
    a = steering(UlaGeometry(8), 0.3)
    assert corr_coeff(a, a) == pytest.approx(1.0)
    e = np.zeros(8, dtype=complex)
    e[0], e[1] = 1.0, -np.conj(a[0] / a[1])
    assert corr_coeff(e, a) == pytest.approx(0.0, abs=1e-12)
    orth = e / np.linalg.norm(e) * np.linalg.norm(a)
    assert corr_coeff(a + orth, a) == pytest.approx(1 / math.sqrt(2), rel=1e-12)
    with pytest.raises(ValueError):
        corr_coeff(np.zeros(8), a)


def test_pareto_channels_have_requested_correlation():
    a, _, chans = pareto_channels(8, 0.35, [0.0, 0.2, 0.5, 1.0], RngStream(1))
    for rho, h in zip([0.0, 0.2, 0.5, 1.0], chans):
        assert corr_coeff(h, a.conj()) == pytest.approx(rho, abs=1e-12)
        assert np.linalg.norm(h) ** 2 == pytest.approx(8.0)


# -- joint design -----------------------------------------------------------

def _problem(rho, n=8, theta=math.radians(20)):
    a, a_dot, chans = pareto_channels(n, theta, [rho], RngStream(0))
    return a, a_dot, chans[0]


def test_crb_closed_form_matches_fim():
    a, a_dot, h = _problem(0.5)
    prob = JdProblem(a, a_dot, h, 1.0, 0.1, 1.0, alpha=0.8 - 0.3j)
    gen = np.random.default_rng(0)
    W = gen.standard_normal((50, 8)) + 1j * gen.standard_normal((50, 8))
    p_perp = a_dot - a * np.vdot(a, a_dot) / np.vdot(a, a)
    closed = 0.1 / (2 * abs(0.8 - 0.3j) ** 2 * np.abs(W @ a) ** 2 * np.vdot(p_perp, p_perp).real)
    np.testing.assert_allclose(prob.crb(W), closed, rtol=1e-9)


def test_crb_singular_beamformer_is_inf():
    a, a_dot, h = _problem(0.5)
    prob = JdProblem(a, a_dot, h, 1.0, 0.1, 1.0)
    e = np.zeros(8, dtype=complex)
    e[0], e[1] = 1.0, -a[0] / a[1]
    assert np.isinf(prob.crb(e[None, :])[0])


def test_sweep_zero_threshold_gives_radar_optimum():
    a, a_dot, h = _problem(0.5)
    pts = jd_pareto_sweep(a, a_dot, h, 1.0, 0.1, 1.0, [0.0])
    w = pts[0].beamformer
    assert corr_coeff(w, a.conj()) == pytest.approx(1.0, abs=1e-12)
    assert pts[0].rate > 0
    assert pts[0].power == pytest.approx(1.0)
    p_perp = a_dot - a * np.vdot(a, a_dot) / np.vdot(a, a)
    assert pts[0].crb == pytest.approx(0.1 / (2 * 8 * np.vdot(p_perp, p_perp).real), rel=1e-12)


def test_sweep_rho_one_both_optima_coincide():
    a, a_dot, h = _problem(1.0)
    prob = JdProblem(a, a_dot, h, 1.0, 0.1, 1.0)
    pts = jd_pareto_sweep(a, a_dot, h, 1.0, 0.1, 1.0, [0.0, prob.max_rate])
    assert all(p.feasible for p in pts)
    assert abs(pts[1].crb - pts[0].crb) / pts[0].crb < 1e-9


def test_sweep_infeasible_threshold_marked():
    a, a_dot, h = _problem(0.5)
    prob = JdProblem(a, a_dot, h, 1.0, 0.1, 1.0)
    pts = jd_pareto_sweep(a, a_dot, h, 1.0, 0.1, 1.0, [1.0, prob.max_rate + 0.1])
    assert pts[0].feasible and not pts[1].feasible
    assert pts[1].crb is None and pts[1].beamformer is None


def test_sweep_frontier_monotone_and_rho_ordered():
    r0 = np.linspace(0.0, 3.0, 13)
    fronts = {}
    for rho in (0.2, 0.5, 0.9):
        a, a_dot, h = _problem(rho)
        pts = jd_pareto_sweep(a, a_dot, h, 1.0, 0.1, 1.0, r0, n_angles=181, n_phases=60)
        crb = np.array([p.crb if p.feasible else np.nan for p in pts])
        rate = np.array([p.rate if p.feasible else np.nan for p in pts])
        ok = ~np.isnan(crb)
        assert np.all(np.diff(crb[ok]) >= 0) and np.all(np.diff(rate[ok]) >= 0)
        fronts[rho] = crb
    common = ~np.isnan(fronts[0.2])
    assert np.all(fronts[0.9][common] <= fronts[0.5][common] * (1 + 1e-12))
    assert np.all(fronts[0.5][common] <= fronts[0.2][common] * (1 + 1e-12))


def test_random_beamformers_do_not_beat_frontier():
    a, a_dot, h = _problem(0.5)
    prob = JdProblem(a, a_dot, h, 1.0, 0.1, 1.0)
    r0 = np.linspace(0.0, 0.99 * prob.max_rate, 15)
    pts = jd_pareto_sweep(a, a_dot, h, 1.0, 0.1, 1.0, r0)
    gen = RngStream(5).generator()
    W = gen.standard_normal((10_000, 8)) + 1j * gen.standard_normal((10_000, 8))
    W /= np.linalg.norm(W, axis=1, keepdims=True)
    rates, crbs = prob.rate(W), prob.crb(W)
    for p in pts:
        feas = rates >= p.r0
        if feas.any():
            assert crbs[feas].min() >= p.crb * (1 - 1e-3)


def test_jd_problem_validation():
    a, a_dot, h = _problem(0.5)
    with pytest.raises(ValueError):
        JdProblem(a, a_dot[:4], h, 1.0, 0.1, 1.0)
    with pytest.raises(ValueError):
        JdProblem(a, a_dot, np.zeros(8), 1.0, 0.1, 1.0)
    with pytest.raises(ValueError):
        JdProblem(a, a_dot, h, 0.0, 0.1, 1.0)


def test_steering_derivative_consistency_for_sweep():
    geom = UlaGeometry(8)
    h = 1e-6
    fd = (steering(geom, 0.4 + h) - steering(geom, 0.4 - h)) / (2 * h)
    np.testing.assert_allclose(steering_derivative(geom, 0.4), fd, atol=1e-7)


def test_grid_doubling_barely_moves_frontier():
    gen = RngStream(8).generator()
    a = steering(UlaGeometry(6), 0.3)
    a_dot = steering_derivative(UlaGeometry(6), 0.3)
    h = gen.standard_normal(6) + 1j * gen.standard_normal(6)
    prob = JdProblem(a, a_dot, h, 2.0, 0.1, 0.5)
    r0 = np.linspace(0.0, 0.98 * prob.max_rate, 12)
    coarse = jd_pareto_sweep(a, a_dot, h, 2.0, 0.1, 0.5, r0)
    fine = jd_pareto_sweep(a, a_dot, h, 2.0, 0.1, 0.5, r0, n_angles=1441, n_phases=360)
    for p, q in zip(coarse, fine):
        assert abs(p.crb - q.crb) / q.crb < 1e-3
        assert p.rate >= p.r0


def test_mrt_beam_sits_at_phase_zero():
    gen = RngStream(9).generator()
    a = steering(UlaGeometry(6), -0.4)
    h = gen.standard_normal(6) + 1j * gen.standard_normal(6)
    prob = JdProblem(a, steering_derivative(UlaGeometry(6), -0.4), h, 1.0, 0.1, 1.0)
    beta = np.linspace(0, np.pi / 2, 2001)
    assert prob.rate(prob.beam(beta, 0.0)).max() == pytest.approx(prob.max_rate, rel=1e-6)
