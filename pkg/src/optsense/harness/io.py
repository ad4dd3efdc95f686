"""CSV output for sweeps and the plain-text matrix format used by ``solve-one``.

Matrix files hold one or more matrices back to back. Each starts with a
``rows cols`` line followed by ``rows * cols`` whitespace-separated entries
in row-major order. Lines starting with ``#`` are ignored.
"""

from __future__ import annotations

import csv
from pathlib import Path

import numpy as np

from optsense.errors import OptSenseError

CSV_HEADER = ["bound_factor", "window_step", "sensor_index", "precision",
              "status", "margin", "wall_time_ms"]


def _g9(x: float) -> str:
    return format(x, ".9g")


def emit_csv(result, path) -> Path:
    path = Path(path)
    rows = sorted(result.rows, key=lambda r: (-r.bound_factor, r.window_step, r.sensor_index))
    try:
        with open(path, "w", encoding="utf-8", newline="") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(CSV_HEADER)
            for r in rows:
                w.writerow([_g9(r.bound_factor), r.window_step, r.sensor_index,
                            _g9(r.precision), r.status, _g9(r.margin), _g9(r.wall_time_ms)])
    except OSError as exc:
        raise OSError(f"cannot write {path}: {exc}") from exc
    return path


def read_csv(path) -> list[dict]:
    with open(path, encoding="utf-8", newline="") as fh:
        out = []
        for rec in csv.DictReader(fh):
            out.append({
                "bound_factor": float(rec["bound_factor"]),
                "window_step": int(rec["window_step"]),
                "sensor_index": int(rec["sensor_index"]),
                "precision": float(rec["precision"]),
                "status": rec["status"],
                "margin": float(rec["margin"]),
                "wall_time_ms": float(rec["wall_time_ms"]),
            })
        return out


def read_matrices(path) -> list[np.ndarray]:
    text = Path(path).read_text(encoding="utf-8")
    tokens = []
    for line in text.splitlines():
        line = line.split("#", 1)[0]
        tokens.extend(line.split())
    mats = []
    pos = 0
    while pos < len(tokens):
        try:
            rows, cols = int(tokens[pos]), int(tokens[pos + 1])
        except (IndexError, ValueError) as exc:
            raise OptSenseError(f"{path}: bad matrix header at token {pos}") from exc
        pos += 2
        count = rows * cols
        if rows < 1 or cols < 1 or pos + count > len(tokens):
            raise OptSenseError(f"{path}: matrix {len(mats) + 1} is truncated")
        mats.append(np.array([float(t) for t in tokens[pos:pos + count]]).reshape(rows, cols))
        pos += count
    return mats


def write_matrices(path, *mats) -> None:
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        for m in mats:
            m = np.atleast_2d(np.asarray(m, dtype=float))
            fh.write(f"{m.shape[0]} {m.shape[1]}\n")
            for row in m:
                fh.write(" ".join(repr(float(v)) for v in row) + "\n")
