"""
Sweep result containers and their CSV/JSON serialization.

CSV layout: one header row, then one row per grid cell. Columns, in order::

    snr_db, num_users, cooperation, channel, trials,
    psnr_mean, psnr_std, ms_ssim_mean, ms_ssim_std, mse_mean, mse_std,
    effective_variance_mean, effective_variance_std, t_ch_mean,
    saturated_fraction, kind, seed, code_version, config

``mse_*`` is the per-feature MSE of the reconstructed semantic features;
``psnr_*`` and ``ms_ssim_*`` are measured on decoded images. ``config`` holds
the resolved experiment config as compact JSON. Floats are written in
positional notation with 17 significant digits, which round-trips float64.
The JSON form additionally carries the run timestamp.
"""

from __future__ import annotations

import csv
import io
import json
from dataclasses import asdict, dataclass, field, fields
from pathlib import Path

import numpy as np

__all__ = [
    "SweepRecord",
    "SweepResult",
    "emit_results",
    "parse_results",
    "format_float",
    "CSV_COLUMNS",
    "SCHEMA_VERSION",
]

SCHEMA_VERSION = 1


@dataclass
class SweepRecord:
    snr_db: float
    num_users: int
    cooperation: bool
    channel: str
    trials: int
    psnr_mean: float
    psnr_std: float
    ms_ssim_mean: float
    ms_ssim_std: float
    mse_mean: float
    mse_std: float
    effective_variance_mean: float
    effective_variance_std: float
    t_ch_mean: float
    saturated_fraction: float

    def __eq__(self, other):
        if not isinstance(other, SweepRecord):
            return NotImplemented
        for f in fields(self):
            a, b = getattr(self, f.name), getattr(other, f.name)
            if isinstance(a, float) and isinstance(b, float) and np.isnan(a) and np.isnan(b):
                continue
            if a != b:
                return False
        return True


_RECORD_FIELDS = [f.name for f in fields(SweepRecord)]
CSV_COLUMNS = _RECORD_FIELDS + ["kind", "seed", "code_version", "config"]


@dataclass
class SweepResult:
    kind: str
    records: list
    config: dict | None
    seed: int | None
    code_version: str | None
    timestamp: str | None = field(default=None, compare=False)
    # per-cell trial arrays, keyed by (snr_db, num_users, cooperation); not serialized
    trials: dict = field(default_factory=dict, compare=False, repr=False)


def format_float(x: float) -> str:
    x = float(x)
    if np.isnan(x):
        return "nan"
    if np.isinf(x):
        return "inf" if x > 0 else "-inf"
    return np.format_float_positional(x, precision=17, unique=False, fractional=False, trim="k")


def _fmt(v):
    if isinstance(v, bool):
        return "true" if v else "false"
    if isinstance(v, (float, np.floating)):
        return format_float(v)
    return str(v)


def _csv_text(result: SweepResult) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(CSV_COLUMNS)
    cfg = json.dumps(result.config, sort_keys=True, separators=(",", ":"))
    for rec in result.records:
        row = [_fmt(getattr(rec, k)) for k in _RECORD_FIELDS]
        row += [result.kind, _fmt(result.seed), result.code_version or "", cfg]
        w.writerow(row)
    return buf.getvalue()


def _json_text(result: SweepResult) -> str:
    doc = {
        "schema": "ctddiff.sweep",
        "schema_version": SCHEMA_VERSION,
        "kind": result.kind,
        "provenance": {"seed": result.seed, "code_version": result.code_version, "timestamp": result.timestamp},
        "config": result.config,
        "records": [asdict(r) for r in result.records],
    }
    return json.dumps(doc, indent=1, sort_keys=True)


def emit_results(result: SweepResult, fmt: str, path) -> None:
    """Write ``result`` as ``"csv"`` or ``"json"``; I/O errors name the path."""
    if fmt == "csv":
        text = _csv_text(result)
    elif fmt == "json":
        text = _json_text(result)
    else:
        raise ValueError(f"unknown result format {fmt!r}")
    try:
        Path(path).write_text(text)
    except OSError as exc:
        raise OSError(f"cannot write results to {path}: {exc}") from exc


def _parse_value(name, raw):
    kind = {f.name: f.type for f in fields(SweepRecord)}[name]
    if kind == "bool":
        return raw == "true"
    if kind == "int":
        return int(raw)
    if kind == "str":
        return raw
    return float(raw)


def parse_results(path, fmt: str | None = None) -> SweepResult:
    """Inverse of :func:`emit_results`. The format defaults to the file suffix."""
    path = Path(path)
    fmt = fmt or path.suffix.lstrip(".")
    text = path.read_text()
    if fmt == "json":
        doc = json.loads(text)
        if doc.get("schema") != "ctddiff.sweep":
            raise ValueError(f"{path}: not a sweep result")
        if doc.get("schema_version") != SCHEMA_VERSION:
            raise ValueError(f"{path}: unsupported schema version {doc.get('schema_version')}")
        prov = doc["provenance"]
        return SweepResult(
            kind=doc["kind"],
            records=[SweepRecord(**r) for r in doc["records"]],
            config=doc["config"],
            seed=prov["seed"],
            code_version=prov["code_version"],
            timestamp=prov.get("timestamp"),
        )
    if fmt != "csv":
        raise ValueError(f"unknown result format {fmt!r}")
    rows = list(csv.reader(io.StringIO(text)))
    if not rows or rows[0] != CSV_COLUMNS:
        raise ValueError(f"{path}: unexpected CSV header")
    body = rows[1:]
    records = [SweepRecord(**{k: _parse_value(k, row[i]) for i, k in enumerate(_RECORD_FIELDS)}) for row in body]
    if not body:
        return SweepResult(kind="", records=[], config=None, seed=None, code_version=None)
    first = dict(zip(CSV_COLUMNS, body[0]))
    return SweepResult(
        kind=first["kind"],
        records=records,
        config=json.loads(first["config"]),
        seed=int(first["seed"]) if first["seed"] not in ("", "None") else None,
        code_version=first["code_version"] or None,
    )
