"""Text exports: CSV tables, waveforms, real maps and complex channel matrices.

Floats are written with 17 significant digits so a file reloads to the
identical binary value.
"""

from __future__ import annotations

import csv
import hashlib
import io
from pathlib import Path
from typing import Iterable, Sequence

import numpy as np

__all__ = [
    "format_value",
    "table_text",
    "write_table",
    "waveform_rows",
    "matrix_text",
    "read_matrix",
    "channel_text",
    "write_channel",
    "read_channel",
    "sha256_file",
]


def format_value(v) -> str:
    if v is None:
        return ""
    if isinstance(v, (bool, np.bool_)):
        return "1" if v else "0"
    if isinstance(v, (int, np.integer)):
        return str(int(v))
    if isinstance(v, (float, np.floating)):
        v = float(v)
        if v == 0.0:
            return "0"
        return format(v, ".17g")
    if isinstance(v, (tuple, list)):
        return ";".join(format_value(x) for x in v)
    return str(v)


def table_text(header: Sequence[str], rows: Iterable[Sequence]) -> str:
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(header)
    for row in rows:
        if len(row) != len(header):
            raise ValueError(f"row has {len(row)} fields, header has {len(header)}")
        writer.writerow([format_value(v) for v in row])
    return buf.getvalue()


def write_table(path, header: Sequence[str], rows: Iterable[Sequence]) -> Path:
    path = Path(path)
    path.write_text(table_text(header, rows), encoding="utf-8", newline="")
    return path


def waveform_rows(samples) -> list:
    """``(index, re, im)`` rows of a complex sequence."""
    x = np.asarray(samples, dtype=complex).ravel()
    return [(i, v.real, v.imag) for i, v in enumerate(x)]


def matrix_text(M) -> str:
    """Real matrix as headerless CSV, one matrix row per line."""
    M = np.atleast_2d(np.asarray(M, dtype=float))
    return "".join(",".join(format_value(v) for v in row) + "\n" for row in M)


def read_matrix(path) -> np.ndarray:
    return np.loadtxt(path, delimiter=",", ndmin=2)


def channel_text(H) -> str:
    """Complex matrix, row-major, each entry as an adjacent ``re,im`` column pair."""
    H = np.atleast_2d(np.asarray(H, dtype=complex))
    pairs = np.empty((H.shape[0], 2 * H.shape[1]))
    pairs[:, 0::2] = H.real
    pairs[:, 1::2] = H.imag
    return matrix_text(pairs)


def write_channel(path, H) -> Path:
    path = Path(path)
    path.write_text(channel_text(np.asarray(H)), encoding="utf-8", newline="")
    return path


def read_channel(path) -> np.ndarray:
    pairs = read_matrix(path)
    if pairs.shape[1] % 2:
        raise ValueError("channel CSV needs an even number of columns (re/im pairs)")
    return pairs[:, 0::2] + 1j * pairs[:, 1::2]


def sha256_file(path) -> str:
    h = hashlib.sha256()
    with open(path, "rb") as fh:
        for chunk in iter(lambda: fh.read(1 << 16), b""):
            h.update(chunk)
    return h.hexdigest()
