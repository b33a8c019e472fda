"""Strict JSON configuration for plant, controller, defaults and detector.

Schema (unknown keys anywhere are rejected)::

    {
      "description": "...",                       optional
      "plant": {"A_p", "B_p", "B_w", "C_mo", "C_po", "D_po"},
      "controller": {"L", "K", "B_what" | "B_what_sigma"},
      "defaults": {"margin", "seed", "eta", "restarts", "max_evals",
                   "lmi_epsilon", "alpha_star", "verify_rel_tol"},   optional
      "detector": {"epsilon_tr"}                  optional
    }

Matrices are lists of rows of numbers. Every error names the offending field
path, e.g. ``plant.A_p[1][0]``.
"""

from __future__ import annotations

import hashlib
import json
import math
from dataclasses import dataclass, field
from importlib import resources
from pathlib import Path

import numpy as np

from .errors import ConfigError, DimensionError, ModelError
from .system import ControllerDesign, PlantModel, validate_design

__all__ = ["AnalysisConfig", "Defaults", "parse_config", "load_config", "bundled_config_path"]

_PLANT_KEYS = ("A_p", "B_p", "B_w", "C_mo", "C_po", "D_po")
_DEFAULT_TYPES = {
    "margin": float, "seed": int, "eta": float, "restarts": int, "max_evals": int,
    "lmi_epsilon": float, "alpha_star": float, "verify_rel_tol": float,
}


@dataclass(frozen=True)
class Defaults:
    margin: float = 0.0
    seed: int = 0
    eta: float = 1e-9
    restarts: int = 32
    max_evals: int = 2000
    lmi_epsilon: float = 1e-8
    alpha_star: float | None = None
    verify_rel_tol: float = 1e-9


@dataclass(frozen=True, eq=False)
class AnalysisConfig:
    plant: PlantModel
    controller: ControllerDesign
    defaults: Defaults = field(default_factory=Defaults)
    epsilon_tr: float | None = None
    description: str = ""
    digest: str = ""  # sha256 of the canonical JSON form of the parsed document


def _fail(path: str, message: str):
    raise ConfigError(path, message)


def _object(value, path: str, allowed: tuple[str, ...], required: tuple[str, ...] = ()) -> dict:
    if not isinstance(value, dict):
        _fail(path, f"expected an object, got {type(value).__name__}")
    for key in value:
        if key not in allowed:
            _fail(f"{path}.{key}" if path else key, "unknown key")
    for key in required:
        if key not in value:
            _fail(f"{path}.{key}" if path else key, "missing required key")
    return value


def _number(value, path: str) -> float:
    if isinstance(value, bool) or not isinstance(value, (int, float)):
        _fail(path, f"expected a number, got {type(value).__name__}")
    if not math.isfinite(value):
        _fail(path, "non-finite number")
    return float(value)


def _matrix(value, path: str) -> np.ndarray:
    if not isinstance(value, list) or not value:
        _fail(path, "expected a non-empty list of rows")
    rows = []
    for i, row in enumerate(value):
        if not isinstance(row, list) or not row:
            _fail(f"{path}[{i}]", "expected a non-empty list of numbers")
        rows.append([_number(v, f"{path}[{i}][{j}]") for j, v in enumerate(row)])
    width = len(rows[0])
    for i, row in enumerate(rows):
        if len(row) != width:
            _fail(f"{path}[{i}]", f"ragged matrix: row has {len(row)} entries, expected {width}")
    return np.array(rows, dtype=float)


def _reject_constant(token: str):
    raise ValueError(f"non-finite literal {token}")


def parse_config(text: str) -> AnalysisConfig:
    """Parse and validate a configuration document.

    Raises
    ------
    ConfigError
        Malformed JSON, schema violation, non-finite number, dimension
        inconsistency or a design whose gain loops are not both Hurwitz.
    """
    if not text or not text.strip():
        _fail("<document>", "empty document")
    try:
        doc = json.loads(text, parse_constant=_reject_constant)
    except ValueError as exc:
        _fail("<document>", f"malformed JSON: {exc}")
    _object(doc, "", ("description", "plant", "controller", "defaults", "detector"),
            ("plant", "controller"))

    description = doc.get("description", "")
    if not isinstance(description, str):
        _fail("description", "expected a string")

    plant_doc = _object(doc["plant"], "plant", _PLANT_KEYS, _PLANT_KEYS)
    mats = {k: _matrix(plant_doc[k], f"plant.{k}") for k in _PLANT_KEYS}
    n = mats["A_p"].shape[0]
    if mats["A_p"].shape != (n, n):
        _fail("plant.A_p", f"must be square, got {mats['A_p'].shape[0]}x{mats['A_p'].shape[1]}")
    try:
        plant = PlantModel(**mats)
    except DimensionError as exc:
        _fail(f"plant.{exc.pair[1]}", str(exc))
    except ModelError as exc:
        _fail("plant", str(exc))

    ctl_doc = _object(doc["controller"], "controller", ("L", "K", "B_what", "B_what_sigma"), ("L", "K"))
    if ("B_what" in ctl_doc) == ("B_what_sigma" in ctl_doc):
        _fail("controller", "give exactly one of B_what and B_what_sigma")
    L = _matrix(ctl_doc["L"], "controller.L")
    K = _matrix(ctl_doc["K"], "controller.K")
    if L.shape != (plant.n_u, plant.n_x):
        _fail("controller.L", f"must be {plant.n_u}x{plant.n_x}, got {L.shape[0]}x{L.shape[1]}")
    if K.shape != (plant.n_x, plant.n_y):
        _fail("controller.K", f"must be {plant.n_x}x{plant.n_y}, got {K.shape[0]}x{K.shape[1]}")
    if "B_what" in ctl_doc:
        B_what = _matrix(ctl_doc["B_what"], "controller.B_what")
        if B_what.shape != (n, n):
            _fail("controller.B_what", f"must be {n}x{n}, got {B_what.shape[0]}x{B_what.shape[1]}")
    else:
        B_what = _number(ctl_doc["B_what_sigma"], "controller.B_what_sigma") * np.eye(n)
    controller = ControllerDesign(L, K, B_what)
    try:
        validate_design(plant, controller)
    except ModelError as exc:
        _fail("controller", str(exc))

    defaults_doc = _object(doc.get("defaults", {}), "defaults", tuple(_DEFAULT_TYPES))
    values = {}
    for key, kind in _DEFAULT_TYPES.items():
        if key not in defaults_doc:
            continue
        raw = defaults_doc[key]
        if kind is int:
            if isinstance(raw, bool) or not isinstance(raw, int) or raw < 0:
                _fail(f"defaults.{key}", "expected a nonnegative integer")
            values[key] = raw
        else:
            values[key] = _number(raw, f"defaults.{key}")
            if values[key] < 0 or (key != "margin" and values[key] == 0):
                _fail(f"defaults.{key}", "must be positive" if key != "margin" else "must be nonnegative")
    defaults = Defaults(**values)

    epsilon_tr = None
    if "detector" in doc:
        det = _object(doc["detector"], "detector", ("epsilon_tr",), ("epsilon_tr",))
        epsilon_tr = _number(det["epsilon_tr"], "detector.epsilon_tr")
        if epsilon_tr <= 0:
            _fail("detector.epsilon_tr", "must be positive")

    canonical = json.dumps(doc, sort_keys=True, separators=(",", ":"))
    digest = hashlib.sha256(canonical.encode("utf-8")).hexdigest()
    return AnalysisConfig(plant, controller, defaults, epsilon_tr, description, digest)


def bundled_config_path(name: str = "paper_sec5.cfg") -> Path:
    """Path of a configuration shipped inside the package."""
    return Path(str(resources.files("ncsroute") / "data" / name))


def load_config(path: str | Path) -> AnalysisConfig:
    """Read and parse ``path``.

    A missing file whose name matches a bundled configuration resolves to the
    bundled copy, so ``paper_sec5.cfg`` works from any directory.
    """
    p = Path(path)
    if not p.exists() and bundled_config_path(p.name).exists():
        p = bundled_config_path(p.name)
    try:
        text = p.read_text(encoding="utf-8")
    except (OSError, UnicodeDecodeError) as exc:
        raise ConfigError(str(path), f"cannot read configuration: {exc}") from exc
    return parse_config(text)
