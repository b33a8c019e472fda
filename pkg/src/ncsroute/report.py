"""Serialized outputs: the JSON report document and CSV surfaces.

Floats are written with ``repr`` precision so every number survives a round
trip bit for bit. JSON has no spelling for infinities, so non-finite floats
are stored as the strings ``"inf"``, ``"-inf"`` and ``"nan"`` and restored on
load.
"""

from __future__ import annotations

import csv
import io
import json
import math
from dataclasses import dataclass, field
from typing import Any

import numpy as np

from .search import AxisSpec, SweepCell, SweepGrid

__all__ = [
    "ReportDocument",
    "SWEEP_HEADER",
    "TRAJECTORY_HEADER",
    "to_jsonable",
    "sweep_to_dict",
    "write_sweep_csv",
    "read_sweep_csv",
    "write_trajectory_csv",
    "read_trajectory_csv",
]

SWEEP_HEADER = ("R11", "R22", "stable", "ratio", "h2_perf_sq", "h2_resid_sq")
TRAJECTORY_HEADER = ("T", "ratio")
_NONFINITE = {"inf": math.inf, "-inf": -math.inf, "nan": math.nan}


def to_jsonable(obj: Any) -> Any:
    """Recursively convert arrays, numpy scalars and non-finite floats."""
    if isinstance(obj, dict):
        return {str(k): to_jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [to_jsonable(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return to_jsonable(obj.tolist())
    if isinstance(obj, (bool, np.bool_)):
        return bool(obj)
    if isinstance(obj, (int, np.integer)):
        return int(obj)
    if isinstance(obj, (float, np.floating)):
        x = float(obj)
        if math.isnan(x):
            return "nan"
        if math.isinf(x):
            return "inf" if x > 0 else "-inf"
        return x
    if isinstance(obj, complex):
        return {"re": to_jsonable(obj.real), "im": to_jsonable(obj.imag)}
    return obj


def _restore(obj: Any) -> Any:
    if isinstance(obj, dict):
        return {k: _restore(v) for k, v in obj.items()}
    if isinstance(obj, list):
        return [_restore(v) for v in obj]
    if isinstance(obj, str) and obj in _NONFINITE:
        return _NONFINITE[obj]
    return obj


@dataclass
class ReportDocument:
    command: str
    config_digest: str
    results: dict
    tool_version: str
    wall_time: float = 0.0
    extra: dict = field(default_factory=dict)

    def to_json(self) -> str:
        body = {
            "command": self.command,
            "config_digest": self.config_digest,
            "results": to_jsonable(self.results),
            "tool_version": self.tool_version,
            "wall_time": float(self.wall_time),
        }
        if self.extra:
            body["extra"] = to_jsonable(self.extra)
        return json.dumps(body, sort_keys=True, indent=2, allow_nan=False) + "\n"

    @classmethod
    def from_json(cls, text: str) -> "ReportDocument":
        doc = json.loads(text)
        return cls(command=doc["command"], config_digest=doc["config_digest"],
                   results=_restore(doc["results"]), tool_version=doc["tool_version"],
                   wall_time=float(doc["wall_time"]), extra=_restore(doc.get("extra", {})))


def sweep_to_dict(grid: SweepGrid) -> dict:
    def axis(a: AxisSpec):
        return {"min": a.min, "max": a.max, "step": a.step}

    stable = [c for c in grid.cells if c.stable]
    out = {
        "r11_axis": axis(grid.r11_axis),
        "r22_axis": axis(grid.r22_axis),
        "margin": grid.margin,
        "cells": len(grid.cells),
        "stable_cells": len(stable),
    }
    if stable:
        best = grid.maximizer()
        out["maximizer"] = {"R11": best.R11, "R22": best.R22, "ratio": best.ratio,
                            "h2_perf_sq": best.h2_perf_sq, "h2_resid_sq": best.h2_resid_sq}
    return out


def _fmt(x) -> str:
    return "" if x is None else repr(float(x))


def write_sweep_csv(grid: SweepGrid, stream) -> None:
    w = csv.writer(stream, lineterminator="\n")
    w.writerow(SWEEP_HEADER)
    for c in grid.cells:
        w.writerow([_fmt(c.R11), _fmt(c.R22), "1" if c.stable else "0",
                    _fmt(c.ratio), _fmt(c.h2_perf_sq), _fmt(c.h2_resid_sq)])


def read_sweep_csv(stream, r11_axis: AxisSpec | None = None, r22_axis: AxisSpec | None = None,
                   margin: float = 0.0) -> SweepGrid:
    """Rebuild a :class:`SweepGrid` from its CSV surface.

    Axis specs are inferred from the first, last and second distinct values
    when not supplied.
    """
    if isinstance(stream, str):
        stream = io.StringIO(stream)
    rows = list(csv.reader(stream))
    if not rows or tuple(rows[0]) != SWEEP_HEADER:
        raise ValueError(f"sweep CSV must start with header {','.join(SWEEP_HEADER)}")

    def opt(s):
        return None if s == "" else float(s)

    cells = tuple(SweepCell(float(r[0]), float(r[1]), r[2] == "1", opt(r[3]), opt(r[4]), opt(r[5]))
                  for r in rows[1:])

    def infer(vals):
        u = sorted(set(vals))
        step = round(u[1] - u[0], 12) if len(u) > 1 else 1.0
        return AxisSpec(u[0], u[-1], step)

    r11_axis = r11_axis or infer(c.R11 for c in cells)
    r22_axis = r22_axis or infer(c.R22 for c in cells)
    return SweepGrid(r11_axis, r22_axis, cells, float(margin))


def write_trajectory_csv(traj: np.ndarray, stream) -> None:
    w = csv.writer(stream, lineterminator="\n")
    w.writerow(TRAJECTORY_HEADER)
    for T, r in np.asarray(traj):
        w.writerow([repr(float(T)), repr(float(r))])


def read_trajectory_csv(stream) -> np.ndarray:
    if isinstance(stream, str):
        stream = io.StringIO(stream)
    rows = list(csv.reader(stream))
    if not rows or tuple(rows[0]) != TRAJECTORY_HEADER:
        raise ValueError("trajectory CSV must start with header T,ratio")
    return np.array([[float(a), float(b)] for a, b in rows[1:]]).reshape(-1, 2)
