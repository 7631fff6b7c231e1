"""Result files: results.csv, report.json and the run manifest.

Everything written here is a pure function of the config and the computed
numbers (no timestamps, host names or worker counts), so reruns are
byte-identical.
"""

from __future__ import annotations

import csv
import hashlib
import io
import json
import math
from dataclasses import astuple, dataclass, fields
from pathlib import Path

import numpy as np

from .. import __version__
from .config import ScenarioConfig
from .scenarios import REPORT_SCHEMA_VERSION, Row, ScenarioResult, execute

CSV_COLUMNS = tuple(f.name for f in fields(Row))
CSV_HEADER = ",".join(CSV_COLUMNS)
RESULTS_FILE, REPORT_FILE, MANIFEST_FILE = "results.csv", "report.json", "manifest.json"


def _cell(v) -> str:
    if v is None:
        return ""
    if isinstance(v, str):
        return v
    return "%.17g" % float(v)


def render_csv(rows) -> str:
    lines = [CSV_HEADER]
    lines.extend(",".join(_cell(v) for v in astuple(r)) for r in rows)
    return "\n".join(lines) + "\n"


def read_results(path) -> list[dict]:
    """Rows of a results.csv with numbers parsed and empty fields as ``None``."""
    text = Path(path).read_text()
    reader = csv.reader(io.StringIO(text))
    header = next(reader, None)
    if header is None or ",".join(header) != CSV_HEADER:
        raise ValueError(f"{path}: header does not match {CSV_HEADER!r}")
    out = []
    for n, rec in enumerate(reader, start=2):
        if len(rec) != len(CSV_COLUMNS):
            raise ValueError(f"{path}:{n}: expected {len(CSV_COLUMNS)} fields, got {len(rec)}")
        row = {"scenario": rec[0]}
        for name, val in zip(CSV_COLUMNS[1:], rec[1:]):
            row[name] = float(val) if val != "" else None
        out.append(row)
    return out


def _clean(obj):
    if isinstance(obj, dict):
        return {str(k): _clean(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_clean(v) for v in obj]
    if isinstance(obj, (np.floating, float)):
        v = float(obj)
        return v if math.isfinite(v) else None
    if isinstance(obj, np.integer):
        return int(obj)
    if isinstance(obj, np.bool_):
        return bool(obj)
    return obj


def render_json(obj) -> str:
    return json.dumps(_clean(obj), indent=2, sort_keys=True, allow_nan=False) + "\n"


def _sha256(data: bytes) -> str:
    return hashlib.sha256(data).hexdigest()


def source_digest() -> str:
    """Hash of the package sources, identifying the code that produced a run."""
    root = Path(__file__).resolve().parent.parent
    h = hashlib.sha256()
    for p in sorted(root.rglob("*.py")):
        h.update(p.relative_to(root).as_posix().encode())
        h.update(b"\0")
        h.update(p.read_bytes())
    return h.hexdigest()


@dataclass
class RunOutcome:
    status: int
    output_dir: Path
    result: ScenarioResult


def write_outputs(cfg: ScenarioConfig, result: ScenarioResult) -> Path:
    out = Path(cfg.output_dir)
    out.mkdir(parents=True, exist_ok=True)
    csv_bytes = render_csv(result.rows).encode()
    report = dict(result.report)
    report["status"] = result.status
    report_bytes = render_json(report).encode()
    manifest = {
        "schema_version": REPORT_SCHEMA_VERSION,
        "maxlab_version": __version__,
        "numpy_version": np.__version__,
        "source_sha256": source_digest(),
        "config": cfg.echo(),
        "files": {RESULTS_FILE: _sha256(csv_bytes), REPORT_FILE: _sha256(report_bytes)},
    }
    if "horizon" in result.report:
        manifest["horizon"] = result.report["horizon"]
    (out / RESULTS_FILE).write_bytes(csv_bytes)
    (out / REPORT_FILE).write_bytes(report_bytes)
    (out / MANIFEST_FILE).write_bytes(render_json(manifest).encode())
    return out


def run_scenario(cfg: ScenarioConfig) -> RunOutcome:
    """Execute ``cfg`` and write its three result files; returns the exit status."""
    result = execute(cfg)
    return RunOutcome(result.status, write_outputs(cfg, result), result)
