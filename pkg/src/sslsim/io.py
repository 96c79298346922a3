"""CSV/JSON artifacts and the run manifest."""
from __future__ import annotations

import csv
import hashlib
import json
import math
from pathlib import Path

import numpy as np

from .calibration import TraceData
from .errors import ParseError
from .model import UnitSystem
from .results import FitResult, ScanResult

SCAN_HEADER = ("axis", "axis_SI", "T_A", "T_B")
TRACE_HEADER = ("t_Gamma", "t_us", "P_in_A", "P_out_A", "P_out_B")


def fmt(x) -> str:
    return format(float(x), ".12g")


def _write_rows(path: Path, header, rows) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w", newline="", encoding="utf-8") as f:
        w = csv.writer(f, lineterminator="\n")
        w.writerow(header)
        w.writerows(rows)
    return path


def write_scan_csv(path, scan: ScanResult, units: UnitSystem | None = None) -> Path:
    _, si = scan.axis_SI(units)
    rows = ([fmt(a), fmt(s), fmt(ta), fmt(tb)] for a, s, ta, tb in zip(scan.axis, si, scan.T_A, scan.T_B))
    return _write_rows(path, SCAN_HEADER, rows)


def write_trace_csv(path, data: TraceData, units: UnitSystem | None = None) -> Path:
    units = units or UnitSystem()
    t_us = units.time_to_us(data.t)
    pb = data.P_out_B if data.P_out_B is not None else [None] * data.t.size
    rows = ([fmt(t), fmt(tu), fmt(a), fmt(b), "" if c is None else fmt(c)]
            for t, tu, a, b, c in zip(data.t, t_us, data.P_in_A, data.P_out_A, pb))
    return _write_rows(path, TRACE_HEADER, rows)


def _read_table(path, header):
    path = Path(path)
    try:
        with open(path, newline="", encoding="utf-8") as f:
            rows = list(csv.reader(f))
    except (OSError, UnicodeDecodeError) as e:
        raise ParseError(f"cannot read {path}: {e}") from e
    if not rows or tuple(h.strip() for h in rows[0]) != header:
        raise ParseError(f"{path}: expected header {','.join(header)}")
    cols = [[] for _ in header]
    for n, row in enumerate(rows[1:], start=2):
        if not row:
            continue
        if len(row) != len(header):
            raise ParseError(f"{path}:{n}: expected {len(header)} fields, got {len(row)}")
        for c, v in zip(cols, row):
            try:
                c.append(float(v) if v.strip() else math.nan)
            except ValueError as e:
                raise ParseError(f"{path}:{n}: not a number: {v!r}") from e
    return [np.array(c) for c in cols]


def read_scan_csv(path, axis_name: str = "delta") -> ScanResult:
    ax, _, ta, tb = _read_table(path, SCAN_HEADER)
    return ScanResult(axis_name, ax, ta, tb, meta={"source": str(path)})


def read_trace_csv(path) -> TraceData:
    t, _, pin, pa, pb = _read_table(path, TRACE_HEADER)
    if np.all(np.isnan(pb)):
        pb = None
    elif np.any(np.isnan(pb)):
        raise ParseError(f"{path}: P_out_B is only partly filled")
    return TraceData(t, pin, pa, pb)


def _json_default(o):
    if isinstance(o, np.ndarray):
        return o.tolist()
    if isinstance(o, (np.floating, np.integer)):
        return o.item()
    if isinstance(o, complex):
        return [o.real, o.imag]
    return str(o)


def write_json(path, obj) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(json.dumps(obj, indent=2, sort_keys=True, default=_json_default) + "\n", encoding="utf-8")
    return path


def write_fit_json(path, fit: FitResult, extra: dict | None = None) -> Path:
    out = fit.to_json()
    if extra:
        out.update(extra)
    return write_json(path, out)


def sha256(path) -> str:
    h = hashlib.sha256()
    with open(path, "rb") as f:
        for chunk in iter(lambda: f.read(1 << 16), b""):
            h.update(chunk)
    return h.hexdigest()


def write_manifest(out_dir, files, *, config=None, version="", wall_time=0.0, status="ok",
                   error_code=None, error_message=None, exit_code=0, command=None) -> Path:
    """manifest.json listing every output file with its sha256."""
    out_dir = Path(out_dir)
    entries = {Path(p).name: {"sha256": sha256(p), "bytes": Path(p).stat().st_size} for p in files}
    body = {"version": version, "command": command, "config": config, "wall_time_s": round(wall_time, 3),
            "status": status, "exit_code": exit_code, "error": None, "files": entries}
    if error_code is not None:
        body["error"] = {"code": error_code, "message": error_message}
    return write_json(out_dir / "manifest.json", body)
