"""Figures rendered from experiment outputs.

Optional companions to the CSV files; nothing here feeds back into the
numerical results.
"""

from __future__ import annotations

from pathlib import Path

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt  # noqa: E402
import numpy as np  # noqa: E402

__all__ = ["journal_style", "render"]

_STYLE = {
    "figure.figsize": (5.0, 3.4),
    "figure.dpi": 100,
    "savefig.dpi": 150,
    "savefig.bbox": "tight",
    "font.family": "serif",
    "font.size": 10,
    "axes.labelsize": 10,
    "axes.titlesize": 11,
    "axes.spines.right": False,
    "axes.spines.top": False,
    "legend.fontsize": 8,
    "legend.frameon": False,
    "lines.linewidth": 1.5,
    "lines.markersize": 4,
    "svg.hashsalt": "isacsim",
}


def journal_style() -> dict:
    return dict(_STYLE)


def _col(table, name):
    return [row[table.header.index(name)] for row in table.rows]


def _group(table, key):
    groups: dict = {}
    k = table.header.index(key)
    for row in table.rows:
        groups.setdefault(row[k], []).append(row)
    return groups


def _save(fig, path: Path) -> Path:
    fig.savefig(path, metadata={"Software": None})
    plt.close(fig)
    return path


def _by_name(outputs, name):
    for o in outputs:
        if o.name == name:
            return o
    raise KeyError(name)


def _radar_detect(outputs, out_dir):
    t = _by_name(outputs, "detection.csv")
    fig, ax = plt.subplots()
    rows = [r for r in t.rows if r[0] == "np" and r[2] is not None]
    snr = [r[2] for r in rows]
    ax.plot(snr, [r[7] for r in rows], "-", label="theory")
    ax.plot(snr, [r[5] for r in rows], "o", label="Monte Carlo")
    ax.set_xlabel("post-filter SNR (dB)")
    ax.set_ylabel("$P_D$")
    ax.legend()
    return [_save(fig, out_dir / "detection.png")]


def _signed_extent(shape):
    n = shape[1]
    lo = -(n // 2) - 0.5
    return (lo, lo + n, -0.5, shape[0] - 0.5)


def _range_doppler(outputs, out_dir):
    rd = _by_name(outputs, "rd_map.csv").values
    fig, ax = plt.subplots()
    img = 10 * np.log10(np.fft.fftshift(rd, axes=1) / rd.max() + 1e-12)
    im = ax.imshow(img, aspect="auto", origin="lower", vmin=-60, vmax=0, cmap="viridis",
                   extent=_signed_extent(img.shape))
    fig.colorbar(im, ax=ax, label="dB")
    ax.set_xlabel("Doppler bin")
    ax.set_ylabel("range bin")
    return [_save(fig, out_dir / "rd_map.png")]


def _sfw_omp(outputs, out_dir):
    t = _by_name(outputs, "omp.csv")
    fig, ax = plt.subplots()
    ax.hist(_col(t, "residual_norm"), bins=30)
    ax.axvline(_col(t, "zeta")[0], color="k", ls="--", label=r"$\zeta$")
    ax.set_xlabel("residual norm")
    ax.set_ylabel("trials")
    ax.legend()
    return [_save(fig, out_dir / "omp_residuals.png")]


def _ofdm_ber(outputs, out_dir):
    t = _by_name(outputs, "ber.csv")
    fig, ax = plt.subplots()
    for kind, rows in _group(t, "constellation").items():
        ax.semilogy([r[0] for r in rows], [max(r[4], 1e-7) for r in rows], "o-", label=kind)
    ax.set_xlabel("$E_s/N_0$ (dB)")
    ax.set_ylabel("BER")
    ax.legend()
    return [_save(fig, out_dir / "ber.png")]


def _ofdm_isac(outputs, out_dir):
    prof = _by_name(outputs, "dd_profile.csv").values
    fig, ax = plt.subplots()
    img = 10 * np.log10(np.fft.fftshift(prof, axes=1) / prof.max() + 1e-12)
    im = ax.imshow(img, aspect="auto", origin="lower", vmin=-40, vmax=0, cmap="viridis",
                   extent=_signed_extent(img.shape))
    fig.colorbar(im, ax=ax, label="dB")
    ax.set_xlabel("Doppler bin")
    ax.set_ylabel("delay bin")
    return [_save(fig, out_dir / "dd_profile.png")]


def _im_isac(outputs, out_dir):
    t = _by_name(outputs, "im_ser.csv")
    fig, ax = plt.subplots()
    ax.semilogy(_col(t, "snr_db"), [max(v, 1e-6) for v in _col(t, "ser")], "o-")
    ax.set_xlabel("per-sample SNR (dB)")
    ax.set_ylabel("message error rate")
    return [_save(fig, out_dir / "im_ser.png")]


def _pareto(outputs, out_dir):
    t = _by_name(outputs, "pareto.csv")
    fig, ax = plt.subplots()
    for rho, rows in _group(t, "rho").items():
        rows = [r for r in rows if r[6]]
        ax.semilogy([r[2] for r in rows], [r[3] for r in rows], "o-", label=rf"$\rho$ = {rho:g}")
    ax.set_xlabel("rate (bit/s/Hz)")
    ax.set_ylabel(r"CRB($\theta$) (rad$^2$)")
    ax.legend()
    return [_save(fig, out_dir / "pareto.png")]


def _hardening(outputs, out_dir):
    t = _by_name(outputs, "hardening.csv")
    fig, ax = plt.subplots()
    n_t = _col(t, "n_t")
    ax.loglog(n_t, _col(t, "hardening_ratio"), "o-", label="hardening ratio")
    ax.loglog(n_t, _col(t, "favorable_gap"), "s-", label="favorable-propagation gap")
    ax.set_xlabel("$N_t$")
    ax.legend()
    return [_save(fig, out_dir / "hardening.png")]


def _immse(outputs, out_dir):
    t = _by_name(outputs, "immse.csv")
    fig, ax = plt.subplots()
    snr = _col(t, "snr")
    ax.plot(snr, _col(t, "dI_dsnr"), label="dI/dsnr")
    ax.plot(snr, [0.5 * v for v in _col(t, "mmse")], "--", label="MMSE / 2")
    ax.set_xlabel("snr")
    ax.legend()
    return [_save(fig, out_dir / "immse.png")]


_RENDERERS = {
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


def render(kind: str, outputs, out_dir) -> list[Path]:
    """Write the figures for one experiment; returns their paths."""
    with plt.rc_context(_STYLE):
        return _RENDERERS[kind](outputs, Path(out_dir))
