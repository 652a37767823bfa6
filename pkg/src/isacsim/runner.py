"""Scenario execution: output files, run manifest and error records."""

from __future__ import annotations

import json
import os
import traceback
from dataclasses import dataclass
from pathlib import Path
from typing import Optional

from . import __version__
from .experiments import Matrix, Table, run_experiment
from .io import matrix_text, sha256_file, table_text
from .scenario import Scenario, ScenarioError

__all__ = ["OUTPUT_ENV", "DEFAULT_OUTPUT", "RunResult", "resolve_output_dir", "run", "error_record"]

OUTPUT_ENV = "ISACSIM_OUTPUT_DIR"
DEFAULT_OUTPUT = "isacsim-output"
MANIFEST = "manifest.json"
ERROR_FILE = "error.json"


@dataclass
class RunResult:
    exit_code: int
    out_dir: Path
    files: list
    error: Optional[dict] = None


def resolve_output_dir(cli_out: Optional[str], scenario: Scenario) -> Path:
    """``--out`` beats the environment variable, which beats the config entry."""
    for candidate in (cli_out, os.environ.get(OUTPUT_ENV), scenario.output):
        if candidate:
            return Path(candidate)
    return Path(DEFAULT_OUTPUT) / scenario.kind


def error_record(exc: BaseException, stage: str, kind: Optional[str] = None) -> dict:
    rec = {
        "status": "error",
        "stage": stage,
        "error_type": type(exc).__name__,
        "message": str(exc),
    }
    if kind is not None:
        rec["kind"] = kind
    if isinstance(exc, ScenarioError) and exc.key is not None:
        rec["key"] = exc.key
    return rec


def _write(path: Path, text: str) -> None:
    path.write_text(text, encoding="utf-8", newline="")


def _manifest(scenario: Scenario, files: list[Path], out_dir: Path) -> str:
    data = {
        "toolkit": "isacsim",
        "version": __version__,
        "kind": scenario.kind,
        "seed": scenario.seed,
        "params": scenario.params,
        "files": [
            {"path": f.relative_to(out_dir).as_posix(), "sha256": sha256_file(f), "bytes": f.stat().st_size}
            for f in files
        ],
    }
    return json.dumps(data, indent=2, sort_keys=True) + "\n"


def run(scenario: Scenario, out_dir, workers: int = 1, plot: bool = False) -> RunResult:
    """Execute a validated scenario and write its CSV files plus ``manifest.json``.

    A pipeline failure writes ``error.json`` instead of a manifest and
    returns exit code 1.
    """
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    for stale in (MANIFEST, ERROR_FILE):
        (out_dir / stale).unlink(missing_ok=True)
    try:
        outputs = run_experiment(scenario.kind, scenario.params, scenario.seed, workers)
        files = []
        for o in outputs:
            path = out_dir / o.name
            if isinstance(o, Table):
                _write(path, table_text(o.header, o.rows))
            elif isinstance(o, Matrix):
                _write(path, matrix_text(o.values))
            files.append(path)
        if plot:
            from .plotting import render

            files.extend(render(scenario.kind, outputs, out_dir))
    except Exception as exc:  # reported as a machine-readable record
        rec = error_record(exc, "pipeline", scenario.kind)
        rec["traceback"] = traceback.format_exc(limit=5)
        _write(out_dir / ERROR_FILE, json.dumps(rec, indent=2, sort_keys=True) + "\n")
        return RunResult(1, out_dir, [], rec)
    _write(out_dir / MANIFEST, _manifest(scenario, files, out_dir))
    return RunResult(0, out_dir, files + [out_dir / MANIFEST])
