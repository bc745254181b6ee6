"""Text outputs: CSV with a header row and 17 significant digits, JSON Lines
with one record per line."""

from __future__ import annotations

import csv
import json
import math
from pathlib import Path


def fmt(x) -> str:
    if isinstance(x, (bool,)):
        return "true" if x else "false"
    if isinstance(x, int):
        return str(x)
    x = float(x)
    if math.isnan(x):
        return "nan"
    if math.isinf(x):
        return "inf" if x > 0 else "-inf"
    return f"{x:.17g}"


def write_csv(path, header, rows) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with path.open("w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(header)
        for row in rows:
            w.writerow([fmt(v) if not isinstance(v, str) else v for v in row])
    return path


def read_csv(path):
    with Path(path).open(newline="") as fh:
        r = csv.reader(fh)
        header = next(r)
        return header, [row for row in r]


def _clean(obj):
    if isinstance(obj, dict):
        return {str(k): _clean(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_clean(v) for v in obj]
    if hasattr(obj, "tolist"):
        return _clean(obj.tolist())
    if isinstance(obj, float) and not math.isfinite(obj):
        return None if math.isnan(obj) else ("inf" if obj > 0 else "-inf")
    return obj


def write_json(path, obj) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(json.dumps(_clean(obj), indent=2, sort_keys=True) + "\n")
    return path


def write_jsonl(path, records) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with path.open("w") as fh:
        for rec in records:
            fh.write(json.dumps(_clean(rec), sort_keys=True) + "\n")
    return path


def trajectory_rows(times, snapshots):
    """``(t, i, v_1, ..., v_d)`` rows for velocity snapshots."""
    for t, V in zip(times, snapshots):
        for i, v in enumerate(V):
            yield (float(t), i, *map(float, v))


def write_trajectory_csv(path, times, snapshots) -> Path:
    d = snapshots[0].shape[1]
    return write_csv(path, ["t", "i"] + [f"v_{m + 1}" for m in range(d)], trajectory_rows(times, snapshots))


def write_moment_csv(path, trace) -> Path:
    return write_csv(path, ["t", "k", "lambda_k"], trace.rows())
