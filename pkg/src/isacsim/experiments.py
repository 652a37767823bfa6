"""Experiment pipelines behind each scenario kind.

Monte Carlo work is cut into fixed blocks, each with its own random stream
derived from the block's position, so the output does not depend on how
many workers run the blocks.
"""

from __future__ import annotations

import math
import warnings
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np
from scipy import stats

from . import arrays, comms, isac, radar, waveforms
from .io import waveform_rows
from .signal_core import RngStream, add_awgn

__all__ = ["Table", "Matrix", "EXPERIMENTS", "run_experiment", "pmap"]

_BLOCK = 10_000


@dataclass
class Table:
    name: str
    header: list
    rows: list = field(default_factory=list)


@dataclass
class Matrix:
    name: str
    values: np.ndarray


def pmap(fn: Callable, tasks: Sequence, workers: int = 1) -> list:
    """Order-preserving map, threaded when ``workers > 1``."""
    if workers <= 1 or len(tasks) <= 1:
        return [fn(t) for t in tasks]
    with ThreadPoolExecutor(max_workers=workers) as pool:
        return list(pool.map(fn, tasks))


def _blocks(total: int, size: int = _BLOCK) -> list[int]:
    return [min(size, total - start) for start in range(0, total, size)]


# -- radar detection --------------------------------------------------------

def _radar_detect(p: dict, rng: RngStream, workers: int):
    n_ref = p["ref_length"]
    spec = waveforms.PulseTrainSpec(n_ref / 2.0, n_ref / 2.0, 1, 1.0)
    ref = waveforms.gen_lfm(spec, 2.0).samples
    ref_energy = float(np.vdot(ref, ref).real)
    sigma2 = p["noise_var"]

    configs = [("np", pfa, None) for pfa in p["design_pfa"]]
    configs += [("np", p["pd_pfa"], snr) for snr in p["snr_db"]]
    configs.append(("ca-cfar", p["cfar_pfa"], None))
    sizes = _blocks(p["n_cells"])
    tasks = [(ci, bi, n) for ci in range(len(configs)) for bi, n in enumerate(sizes)]

    def run(task):
        ci, bi, n = task
        detector, pfa, snr_db = configs[ci]
        gen = rng.child(ci).child(bi).generator()
        if detector == "ca-cfar":
            reach = p["cfar_guard"] + p["cfar_train"] // 2
            cells = n + 2 * reach
            power = np.abs(add_awgn(np.zeros(cells), sigma2, gen)) ** 2
            rep = radar.ca_cfar(power, p["cfar_train"], p["cfar_guard"], pfa)
            valid = np.isfinite(rep.threshold)
            return int(valid.sum()), int(rep.decisions[valid].sum())
        amp = 0.0 if snr_db is None else math.sqrt(10 ** (snr_db / 10) * sigma2 / ref_energy)
        y = add_awgn(amp * np.tile(ref, (n, 1)), sigma2, gen)
        stat = np.abs(y @ ref.conj()) ** 2
        rep = radar.np_detect(stat, sigma2, pfa, ref_energy)
        return n, int(rep.decisions.sum())

    counts = pmap(run, tasks, workers)
    table = Table("detection.csv", ["detector", "design_pfa", "snr_db", "cells", "detections", "rate", "std_err", "theory"])
    for ci, (detector, pfa, snr_db) in enumerate(configs):
        cells = sum(c for (cj, _, _), (c, _) in zip(tasks, counts) if cj == ci)
        hits = sum(d for (cj, _, _), (_, d) in zip(tasks, counts) if cj == ci)
        rate = hits / cells
        if snr_db is None:
            theory = pfa
        else:
            thresh = 2 * math.log(1 / pfa)
            theory = float(stats.ncx2.sf(thresh, 2, 2 * 10 ** (snr_db / 10)))
        std_err = math.sqrt(theory * (1 - theory) / cells)
        table.rows.append([detector, pfa, snr_db, cells, hits, rate, std_err, theory])
    return [table]


# -- range-Doppler ----------------------------------------------------------

def _range_doppler(p: dict, rng: RngStream, workers: int):
    spec = waveforms.PulseTrainSpec(p["pulse_width"], p["pri"], p["n_pulses"], p["bandwidth"])
    tx = waveforms.gen_lfm(spec, p["sample_rate"])
    scene = radar.TargetScene([
        radar.Scatterer(t["delay"], t["doppler"], complex(t["amplitude_re"], t["amplitude_im"]))
        for t in p["targets"]
    ])
    echo = radar.synth_echo(tx, scene, p["pri"], p["n_pulses"], p["noise_var"], rng.child(0))
    # zero-pad so targets near the end of the PRI still have a full correlation window
    padded = np.vstack([echo, np.zeros((len(tx) - 1, echo.shape[1]), dtype=complex)])
    window = None if p["window"] == "rect" else waveforms.RadarWindow(p["window"], len(tx))
    rd = radar.range_doppler_map(padded, tx.samples, window)[: echo.shape[0]]
    ts = tx.sample_interval
    n = p["n_pulses"]
    det = Table("detections.csv", ["rank", "range_bin", "doppler_bin", "delay_s", "doppler_hz", "power"])
    for rank, (r, c, v) in enumerate(radar.strongest_points(rd, p["detect_points"]), start=1):
        signed = c - n if c > n // 2 else c
        det.rows.append([rank, r, c, r * ts, signed / (n * p["pri"]), v])
    wave = Table("waveform.csv", ["index", "re", "im"], waveform_rows(tx.samples))
    return [Matrix("rd_map.csv", rd), det, wave]


# -- SFW sparse recovery ----------------------------------------------------

def _sfw_omp(p: dict, rng: RngStream, workers: int):
    plan = waveforms.gen_sfw_plan(p["mode"], p["max_index"], p["n_pulses"], p["keep_fraction"],
                                  rng.child(0), step=p["step"])
    S = waveforms.sfw_dictionary(plan)
    n_bins = S.shape[1]
    snr = 10 ** (p["snr_db"] / 10)

    def run(trial):
        gen = rng.child(1).child(trial).generator()
        support = np.sort(gen.choice(n_bins, p["sparsity"], replace=False))
        h = np.zeros(n_bins, dtype=complex)
        h[support] = np.exp(2j * np.pi * gen.random(p["sparsity"]))
        clean = S @ h
        sigma2 = float(np.mean(np.abs(clean) ** 2)) / snr
        y = add_awgn(clean, sigma2, gen)
        zeta = radar.omp_tolerance(sigma2, y.size)
        with warnings.catch_warnings():
            warnings.simplefilter("ignore", RuntimeWarning)
            res = radar.omp_recover(y, S, p["max_sparsity"], zeta)
        exact = res.support == tuple(int(s) for s in support)
        return [trial, tuple(int(s) for s in support), res.support, exact, res.n_iter,
                res.residual_norm, zeta, res.converged]

    rows = pmap(run, list(range(p["n_trials"])), workers)
    table = Table("omp.csv", ["trial", "true_support", "recovered_support", "exact", "iterations",
                              "residual_norm", "zeta", "converged"], rows)
    plan_table = Table("plan.csv", ["pulse", "carrier_index", "carrier_hz"],
                       [[i, int(d), f] for i, (d, f) in enumerate(zip(plan.indices, plan.carriers))])
    return [table, plan_table]


# -- OFDM BER ---------------------------------------------------------------

def _ofdm_ber(p: dict, rng: RngStream, workers: int):
    n_c = p["n_subcarriers"]
    taps = np.asarray(p["channel_taps"], dtype=complex)
    freq_resp = np.fft.fft(taps, n_c)
    configs = [(c, s) for c in p["constellations"] for s in p["snr_db"]]
    block_bits = 1 << 16
    sizes = _blocks(p["n_bits"], block_bits)
    tasks = [(ci, bi, n) for ci in range(len(configs)) for bi, n in enumerate(sizes)]

    def run(task):
        ci, bi, n_bits = task
        kind, snr_db = configs[ci]
        const = comms.constellation(kind)
        gen = rng.child(ci).child(bi).generator()
        bps = const.bits_per_symbol
        n_sym_total = max(1, math.ceil(n_bits / bps / n_c))
        bits = gen.integers(0, 2, n_sym_total * n_c * bps, dtype=np.int64)
        X = comms.modulate(bits, const).reshape(n_sym_total, n_c).T
        cfg = comms.OfdmConfig(n_c, n_sym_total, cp_length=p["cp_length"], max_delay_spread=taps.size - 1)
        sigma2 = 10 ** (-snr_db / 10)
        rx = add_awgn(comms.apply_multipath(comms.ofdm_mod(X, cfg).samples, taps), sigma2, gen)
        Y = comms.ofdm_demod(rx, cfg, taps.size)
        if p["equalizer"] == "perfect":
            H = freq_resp
        else:
            pilot_cfg = comms.OfdmConfig(n_c, 1, cp_length=p["cp_length"], max_delay_spread=taps.size - 1)
            pilot = np.ones((n_c, 1), dtype=complex)
            prx = add_awgn(comms.apply_multipath(comms.ofdm_mod(pilot, pilot_cfg).samples, taps), sigma2, gen)
            H = comms.ls_channel_estimate(comms.ofdm_demod(prx, pilot_cfg, taps.size), pilot)
        est = (Y / H[:, None]).T.ravel()
        errors = int(np.count_nonzero(comms.demap(est, const) != bits))
        return bits.size, errors

    counts = pmap(run, tasks, workers)
    table = Table("ber.csv", ["snr_db", "constellation", "bits", "errors", "ber"])
    for ci, (kind, snr_db) in enumerate(configs):
        bits = sum(b for (cj, _, _), (b, _) in zip(tasks, counts) if cj == ci)
        errs = sum(e for (cj, _, _), (_, e) in zip(tasks, counts) if cj == ci)
        table.rows.append([snr_db, kind, bits, errs, errs / bits])
    return [table]


# -- OFDM ISAC --------------------------------------------------------------

def _random_grid(const, n_c, n_s, gen):
    labels = gen.integers(0, const.points.size, (n_c, n_s))
    return const.points[labels]


def _ofdm_isac(p: dict, rng: RngStream, workers: int):
    n_c, n_s = p["n_subcarriers"], p["n_symbols"]
    cfg = comms.OfdmConfig(n_c, n_s, p["subcarrier_spacing"], p["cp_length"])
    const = comms.constellation(p["constellation"])
    sigma2 = 10 ** (-p["snr_db"] / 10)

    def run(trial):
        gen = rng.child(0).child(trial).generator()
        k_tau = int(gen.integers(0, p["cp_length"] + 1))
        k_nu = int(gen.integers(-(n_s // 2) + 1, (n_s + 1) // 2))
        X = _random_grid(const, n_c, n_s, gen)
        tau = k_tau / (n_c * cfg.subcarrier_spacing)
        nu = k_nu / (n_s * cfg.symbol_time)
        res = isac.ccd_pipeline(X, cfg, tau, nu, 1.0, sigma2, gen)
        ok = res.delay_bin == k_tau and res.doppler_bin == k_nu
        return [trial, k_tau, k_nu, res.delay_bin, res.doppler_bin, ok, res.edge_flag], res

    results = pmap(run, list(range(p["n_targets"])), workers)
    table = Table("ccd.csv", ["trial", "true_delay_bin", "true_doppler_bin", "est_delay_bin",
                              "est_doppler_bin", "correct", "edge_flag"], [r for r, _ in results])
    profile = results[0][1].profile.magnitude

    tests = Table("noise_tests.csv", ["constellation", "ks_pvalue", "equal_var_pvalue", "groups", "sidelobe_db"])
    n_test = p["noise_test_symbols"]
    test_sigma2 = 10 ** (-p["noise_test_snr_db"] / 10)
    test_cfg = comms.OfdmConfig(n_c, n_test, p["subcarrier_spacing"], p["cp_length"])
    for i, kind in enumerate(("QPSK", "16QAM")):
        gen = rng.child(1).child(i).generator()
        X = _random_grid(comms.constellation(kind), n_c, n_test, gen)
        w = isac.post_division_noise(X, test_sigma2, gen)
        res = isac.division_noise_tests(X, w, test_sigma2)
        ccd = isac.ccd_pipeline(X, test_cfg, 0.0, 0.0, 1.0, test_sigma2, gen)
        sll = 10 * math.log10(isac.mean_sidelobe_level(ccd.profile.magnitude))
        tests.rows.append([kind, res["ks_pvalue"], res["equal_var_pvalue"], res["groups"], sll])
    return [table, Matrix("dd_profile.csv", profile), tests]


# -- index modulation -------------------------------------------------------

def _im_isac(p: dict, rng: RngStream, workers: int):
    cb = isac.ImCodebook(p["n_carriers"], p["n_selected"])
    T = p["n_samples"]
    book = Table("im_codebook.csv", ["message", "subset", "assignment", "roundtrip_ok", "orthogonal"])
    for msg in range(cb.message_count):
        subset, assignment = isac.im_encode(msg, cb)
        decoded = isac.im_decode(isac.im_waveforms(assignment, cb, T), cb)
        book.rows.append([msg, subset, assignment, decoded == msg, isac.is_orthogonal_codeword(assignment, cb, T)])

    sizes = _blocks(p["n_trials"], 1000)
    tasks = [(si, bi, n) for si in range(len(p["snr_db"])) for bi, n in enumerate(sizes)]

    def run(task):
        si, bi, n = task
        return isac.im_symbol_error_rate(cb, p["snr_db"][si], n, T, rng.child(si).child(bi))

    counts = pmap(run, tasks, workers)
    ser = Table("im_ser.csv", ["snr_db", "trials", "errors", "ser"])
    for si, snr_db in enumerate(p["snr_db"]):
        n = sum(c for (sj, _, _), (c, _) in zip(tasks, counts) if sj == si)
        e = sum(x for (sj, _, _), (_, x) in zip(tasks, counts) if sj == si)
        ser.rows.append([snr_db, n, e, e / n])
    return [book, ser]


# -- joint design Pareto sweep ----------------------------------------------

def pareto_channels(n_t: int, theta: float, rhos: Sequence[float], rng: RngStream):
    """Steering data and one user channel per correlation, sharing geometry and norm.

    ``h_c = sqrt(N) (rho u + sqrt(1 - rho^2) v)`` where ``u`` is the unit
    sensing beam and ``v`` a fixed random unit vector orthogonal to it.
    """
    geom = arrays.UlaGeometry(n_t)
    a = arrays.steering(geom, theta)
    a_dot = arrays.steering_derivative(geom, theta)
    u = a.conj() / np.linalg.norm(a)
    gen = rng.generator()
    v = gen.standard_normal(n_t) + 1j * gen.standard_normal(n_t)
    v = v - np.vdot(u, v) * u
    v = v / np.linalg.norm(v)
    channels = [math.sqrt(n_t) * (r * u + math.sqrt(max(1 - r * r, 0.0)) * v) for r in rhos]
    return a, a_dot, channels


def _pareto(p: dict, rng: RngStream, workers: int):
    theta = math.radians(p["theta_deg"])
    a, a_dot, channels = pareto_channels(p["n_t"], theta, p["rho"], rng.child(0))
    max_rate = math.log2(1 + p["energy"] * p["n_t"] / p["comm_noise"])
    r0 = list(p["r0_bits"]) or list(np.linspace(0.0, 0.95 * max_rate, p["r0_points"]))

    def run(i):
        return isac.jd_pareto_sweep(a, a_dot, channels[i], p["energy"], p["radar_noise"], p["comm_noise"],
                                    r0, p["n_angles"], p["n_phases"])

    sweeps = pmap(run, list(range(len(channels))), workers)
    table = Table("pareto.csv", ["rho", "r0", "rate_bits", "crb_rad2", "beamformer_angle_index",
                                 "phase_index", "feasible"])
    for rho, pts in zip(p["rho"], sweeps):
        for pt in pts:
            table.rows.append([rho, pt.r0, pt.rate, pt.crb, pt.angle_index, pt.phase_index, pt.feasible])
    return [table]


# -- massive MIMO -----------------------------------------------------------

def _hardening(p: dict, rng: RngStream, workers: int):
    def run(i):
        return arrays.hardening_stats([p["n_t"][i]], p["n_r"], p["n_trials"], rng.child(i))[0]

    rows = pmap(run, list(range(len(p["n_t"]))), workers)
    table = Table("hardening.csv", ["n_t", "n_r", "trials", "hardening_ratio", "favorable_gap"])
    for r in rows:
        table.rows.append([r["n_t"], r["n_r"], r["trials"], r["hardening"], r["favorable_gap"]])
    return [table]


# -- I-MMSE -----------------------------------------------------------------

def _immse(p: dict, rng: RngStream, workers: int):
    n = int(round((p["snr_max"] - p["snr_min"]) / p["snr_step"])) + 1
    grid = np.linspace(p["snr_min"], p["snr_max"], n)
    tab = comms.immse_check(grid)
    header = ["snr", "mutual_info_nats", "mmse", "dI_dsnr", "residual"]
    rows = [list(r) for r in tab.rows()]
    if p["bpsk"]:
        info_b, mmse_b = comms.bpsk_immse(grid)
        header += ["bpsk_mutual_info_nats", "bpsk_mmse"]
        rows = [r + [ib, mb] for r, ib, mb in zip(rows, info_b, mmse_b)]
    return [Table("immse.csv", header, rows)]


EXPERIMENTS: dict[str, Callable] = {
    "radar-detect": _radar_detect,
    "range-doppler": _range_doppler,
    "sfw-omp": _sfw_omp,
    "ofdm-ber": _ofdm_ber,
    "ofdm-isac": _ofdm_isac,
    "im-isac": _im_isac,
    "pareto": _pareto,
    "hardening": _hardening,
    "immse": _immse,
}


def run_experiment(kind: str, params: dict, seed: int, workers: int = 1) -> list:
    return EXPERIMENTS[kind](params, RngStream(seed), workers)
