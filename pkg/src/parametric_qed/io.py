"""Deterministic CSV/JSON writers.  Every file starts with the resolved config."""
from __future__ import annotations

import json
from pathlib import Path

import numpy as np

FLOAT_FMT = "%.12g"


def _header(config: dict | None, unit: str | None) -> list[str]:
    lines = []
    if config is not None:
        lines.append("# config: " + json.dumps(config, sort_keys=True, separators=(",", ":")))
    if unit is not None:
        lines.append(f"# frequency_unit: {unit}")
    return lines


def _fmt(v):
    if isinstance(v, str):
        return v
    return FLOAT_FMT % v


def write_table(path, columns: dict, config=None, unit=None, fmt="csv") -> Path:
    """Write equal-length columns as CSV (with '#' header lines) or JSON."""
    path = Path(path)
    names = list(columns)
    cols = [np.asarray(columns[n]) for n in names]
    n = len(cols[0]) if cols else 0
    if any(len(c) != n for c in cols):
        raise ValueError("columns must have equal length")
    path.parent.mkdir(parents=True, exist_ok=True)
    if fmt == "json":
        path = path.with_suffix(".json")
        obj = {"config": config, "frequency_unit": unit,
               "columns": {k: [v if isinstance(v, str) else float(FLOAT_FMT % v) for v in c.tolist()]
                           for k, c in zip(names, cols)}}
        path.write_text(json.dumps(obj, indent=1, sort_keys=False) + "\n")
        return path
    lines = _header(config, unit)
    lines.append(",".join(names))
    for i in range(n):
        lines.append(",".join(_fmt(c[i]) for c in cols))
    path.write_text("\n".join(lines) + "\n")
    return path


def write_dat(path, x, y) -> Path:
    """Plain two-column whitespace-separated file."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    np.savetxt(path, np.column_stack([x, y]), fmt=FLOAT_FMT)
    return path


def write_json(path, obj, config=None) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    payload = {"config": config, **obj} if config is not None else obj
    path.write_text(json.dumps(payload, indent=1, default=_json_default) + "\n")
    return path


def _json_default(o):
    if isinstance(o, np.ndarray):
        return o.tolist()
    if isinstance(o, (np.floating, np.integer)):
        return o.item()
    if isinstance(o, complex):
        return [o.real, o.imag]
    raise TypeError(f"not JSON serialisable: {type(o)}")


def read_table(path) -> dict:
    """Read a CSV written by :func:`write_table` (or any CSV with a header row)."""
    path = Path(path)
    rows = [ln for ln in path.read_text().splitlines() if ln and not ln.startswith("#")]
    if not rows:
        raise ValueError(f"{path}: no data")
    names = rows[0].split(",")
    data = np.array([[float(x) for x in r.split(",")] for r in rows[1:]])
    return {n: data[:, k] for k, n in enumerate(names)}
