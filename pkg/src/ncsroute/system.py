"""Plant, controller, routing matrix and the attacked closed loop.

State ordering of the closed loop is ``x = [x_p; e]`` with ``e = x_p - xhat_p``,
noise ordering ``w = [w_p; what_p]``.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .errors import DimensionError, ModelError, NumericalError
from .numerics import spectral_abscissa

__all__ = [
    "PlantModel",
    "ControllerDesign",
    "ClosedLoopSystem",
    "AttackPerturbation",
    "StabilityVerdict",
    "RANK_TOL",
    "as_routing",
    "assemble_closed_loop",
    "attack_perturbation",
    "classify_stability",
    "validate_design",
    "is_controllable",
    "is_observable",
]

#: sigma_min / sigma_max below this declares rank deficiency
RANK_TOL = 1e-10


def _mat(value, name: str) -> np.ndarray:
    arr = np.array(value, dtype=float)
    if arr.ndim == 1:
        arr = arr.reshape(1, -1)
    if arr.ndim != 2:
        raise DimensionError(name, name, f"expected a 2-D matrix, got shape {arr.shape}")
    if not np.all(np.isfinite(arr)):
        raise ModelError(f"{name} has non-finite entries")
    arr.setflags(write=False)
    return arr


def _full_row_rank(M: np.ndarray) -> bool:
    s = np.linalg.svd(M, compute_uv=False)
    return s[0] > 0 and s[-1] / s[0] >= RANK_TOL


def is_controllable(A: np.ndarray, B: np.ndarray) -> bool:
    n = A.shape[0]
    blocks = [B]
    for _ in range(n - 1):
        blocks.append(A @ blocks[-1])
    return _full_row_rank(np.hstack(blocks))


def is_observable(A: np.ndarray, C: np.ndarray) -> bool:
    return is_controllable(A.T, C.T)


@dataclass(frozen=True, eq=False)
class PlantModel:
    """Open-loop plant ``x' = A_p x + B_p u + B_w w``, ``y_m = C_mo x``,
    ``y_p = C_po x + D_po u``.

    Controllability of ``(A_p, B_p)`` and observability of ``(A_p, C_mo)`` are
    checked on construction unless ``check_structure=False``.
    """

    A_p: np.ndarray
    B_p: np.ndarray
    B_w: np.ndarray
    C_mo: np.ndarray
    C_po: np.ndarray
    D_po: np.ndarray
    check_structure: bool = field(default=True, repr=False, compare=False)

    def __post_init__(self):
        for name in ("A_p", "B_p", "B_w", "C_mo", "C_po", "D_po"):
            object.__setattr__(self, name, _mat(getattr(self, name), name))
        n = self.A_p.shape[0]
        if self.A_p.shape != (n, n):
            raise DimensionError("A_p", "A_p", f"must be square, got {self.A_p.shape}")
        if self.B_p.shape[0] != n:
            raise DimensionError("A_p", "B_p", f"B_p has {self.B_p.shape[0]} rows, expected {n}")
        if self.B_w.shape != (n, n):
            raise DimensionError("A_p", "B_w", f"B_w must be {n}x{n}, got {self.B_w.shape}")
        if self.C_mo.shape[1] != n:
            raise DimensionError("A_p", "C_mo", f"C_mo has {self.C_mo.shape[1]} columns, expected {n}")
        if self.C_po.shape[1] != n:
            raise DimensionError("A_p", "C_po", f"C_po has {self.C_po.shape[1]} columns, expected {n}")
        if self.D_po.shape != (self.C_po.shape[0], self.B_p.shape[1]):
            raise DimensionError("C_po", "D_po",
                                 f"D_po must be {self.C_po.shape[0]}x{self.B_p.shape[1]}, got {self.D_po.shape}")
        if min(n, self.n_u, self.n_y, self.n_yp) < 1:
            raise DimensionError("A_p", "C_mo", "all dimensions must be at least 1")
        if self.check_structure:
            if not is_controllable(self.A_p, self.B_p):
                raise ModelError("(A_p, B_p) is not controllable")
            if not is_observable(self.A_p, self.C_mo):
                raise ModelError("(A_p, C_mo) is not observable")

    @property
    def n_x(self) -> int:
        return self.A_p.shape[0]

    @property
    def n_u(self) -> int:
        return self.B_p.shape[1]

    @property
    def n_y(self) -> int:
        return self.C_mo.shape[0]

    @property
    def n_yp(self) -> int:
        return self.C_po.shape[0]


@dataclass(frozen=True, eq=False)
class ControllerDesign:
    """Observer-based state feedback ``u = L xhat`` with observer gain ``K`` and
    estimator-noise map ``B_what``."""

    L: np.ndarray
    K: np.ndarray
    B_what: np.ndarray

    def __post_init__(self):
        for name in ("L", "K", "B_what"):
            object.__setattr__(self, name, _mat(getattr(self, name), name))
        n = self.L.shape[1]
        if self.K.shape[0] != n:
            raise DimensionError("L", "K", f"K has {self.K.shape[0]} rows, L has {n} columns")
        if self.B_what.shape != (n, n):
            raise DimensionError("L", "B_what", f"B_what must be {n}x{n}, got {self.B_what.shape}")

    @classmethod
    def with_sigma(cls, L, K, sigma: float) -> "ControllerDesign":
        n = np.atleast_2d(np.asarray(L, dtype=float)).shape[1]
        return cls(L, K, float(sigma) * np.eye(n))


def as_routing(R, n_y: int | None = None) -> np.ndarray:
    """Coerce a routing matrix (array or scalar for ``n_y = 1``)."""
    arr = np.array(R, dtype=float)
    if arr.ndim == 0:
        arr = arr.reshape(1, 1)
    if arr.ndim != 2 or arr.shape[0] != arr.shape[1]:
        raise DimensionError("R", "R", f"routing matrix must be square, got shape {arr.shape}")
    if n_y is not None and arr.shape[0] != n_y:
        raise DimensionError("R", "C_mo", f"R is {arr.shape[0]}x{arr.shape[0]}, expected {n_y}x{n_y}")
    if not np.all(np.isfinite(arr)):
        raise ModelError("R has non-finite entries")
    arr.setflags(write=False)
    return arr


def _check_pair(model: PlantModel, controller: ControllerDesign):
    if controller.L.shape != (model.n_u, model.n_x):
        raise DimensionError("B_p", "L", f"L must be {model.n_u}x{model.n_x}, got {controller.L.shape}")
    if controller.K.shape != (model.n_x, model.n_y):
        raise DimensionError("C_mo", "K", f"K must be {model.n_x}x{model.n_y}, got {controller.K.shape}")


@dataclass(frozen=True, eq=False)
class ClosedLoopSystem:
    """Attacked closed loop ``x' = A_R x + B w``, ``y_r = C_rR x``, ``y_p = C_p x``."""

    A_R: np.ndarray
    B: np.ndarray
    C_rR: np.ndarray
    C_p: np.ndarray
    spectral_abscissa: float

    @property
    def order(self) -> int:
        return self.A_R.shape[0]

    @classmethod
    def from_matrices(cls, A_R, B, C_rR, C_p) -> "ClosedLoopSystem":
        """Wrap arbitrary state-space data (no block structure imposed)."""
        A_R, B, C_rR, C_p = (_mat(M, n) for M, n in ((A_R, "A_R"), (B, "B"), (C_rR, "C_rR"), (C_p, "C_p")))
        m = A_R.shape[0]
        if A_R.shape != (m, m):
            raise DimensionError("A_R", "A_R", "must be square")
        if B.shape[0] != m:
            raise DimensionError("A_R", "B", f"B has {B.shape[0]} rows, expected {m}")
        for name, C in (("C_rR", C_rR), ("C_p", C_p)):
            if C.shape[1] != m:
                raise DimensionError("A_R", name, f"{name} has {C.shape[1]} columns, expected {m}")
        return cls(A_R, B, C_rR, C_p, spectral_abscissa(A_R))


@dataclass(frozen=True, eq=False)
class AttackPerturbation:
    E_R: np.ndarray
    Delta_A_R: np.ndarray
    Delta_C_rR: np.ndarray
    C_r_nominal: np.ndarray


def assemble_closed_loop(model: PlantModel, controller: ControllerDesign, R) -> ClosedLoopSystem:
    """Build ``(A_R, B, C_rR, C_p)`` for routing matrix ``R``."""
    _check_pair(model, controller)
    R = as_routing(R, model.n_y)
    Ap, Bp, Cm = model.A_p, model.B_p, model.C_mo
    L, K = controller.L, controller.K
    n = model.n_x
    I_y = np.eye(model.n_y)
    BL = Bp @ L
    A_R = np.block([[Ap + BL, -BL],
                    [K @ (I_y - R) @ Cm, Ap - K @ Cm]])
    B = np.block([[model.B_w, np.zeros((n, n))],
                   [model.B_w, -controller.B_what]])
    C_rR = np.hstack([(R - I_y) @ Cm, Cm])
    DL = model.D_po @ L
    C_p = np.hstack([model.C_po + DL, -DL])
    for M in (A_R, B, C_rR, C_p):
        M.setflags(write=False)
    return ClosedLoopSystem(A_R, B, C_rR, C_p, spectral_abscissa(A_R))


def attack_perturbation(model: PlantModel, controller: ControllerDesign, R) -> AttackPerturbation:
    """Split the attacked loop into nominal part plus routing-induced perturbation."""
    _check_pair(model, controller)
    R = as_routing(R, model.n_y)
    n = model.n_x
    E_R = (np.eye(model.n_y) - R) @ model.C_mo
    dA = np.zeros((2 * n, 2 * n))
    dA[n:, :n] = controller.K @ E_R
    # C_rR carries (R - I) C_mo, so the residual perturbation is -E_R (same Frobenius norm)
    dC = np.hstack([-E_R, np.zeros((model.n_y, n))])
    C_r = np.hstack([np.zeros((model.n_y, n)), model.C_mo])
    return AttackPerturbation(E_R=E_R, Delta_A_R=dA, Delta_C_rR=dC, C_r_nominal=C_r)


@dataclass(frozen=True, eq=False)
class StabilityVerdict:
    stable: bool
    abscissa: float
    margin: float

    def __bool__(self) -> bool:
        return self.stable


def classify_stability(sys: ClosedLoopSystem, margin: float = 0.0) -> StabilityVerdict:
    """Stable iff the spectral abscissa of ``A_R`` is below ``-margin``."""
    if margin < 0:
        raise ValueError("margin must be nonnegative")
    a = sys.spectral_abscissa
    if not np.isfinite(a):
        raise NumericalError("spectral abscissa is not finite")
    return StabilityVerdict(stable=bool(a < -margin), abscissa=float(a), margin=float(margin))


def validate_design(model: PlantModel, controller: ControllerDesign) -> None:
    """Check that ``A_p + B_p L`` and ``A_p - K C_mo`` are both Hurwitz."""
    _check_pair(model, controller)
    a_fb = spectral_abscissa(model.A_p + model.B_p @ controller.L)
    a_obs = spectral_abscissa(model.A_p - controller.K @ model.C_mo)
    if a_fb >= 0:
        raise ModelError(f"A_p + B_p L is not Hurwitz (spectral abscissa {a_fb:.6g})")
    if a_obs >= 0:
        raise ModelError(f"A_p - K C_mo is not Hurwitz (spectral abscissa {a_obs:.6g})")
