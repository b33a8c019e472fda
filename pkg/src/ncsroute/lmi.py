"""Analytic LMI certificates for the H2 norm and the ratio level.

No SDP solver is involved. The H2 certificate is built from the slacked
Lyapunov solution ``A X + X A^T + B B^T + eps I = 0`` (so that every strict
inequality holds with margin of order ``eps``) and then re-verified from
scratch by eigenvalue tests.

The two 2x2 block inequalities are verified through their Schur complements,
which is an exact equivalence. The smallest eigenvalue of the assembled output
block is of order ``eps / (1 + ||C||^2)`` while its norm grows with ``||X||``,
so a relative eigenvalue test on the assembled block cannot resolve a small
``eps`` once ``X`` is large.
"""

from __future__ import annotations

import enum
from dataclasses import dataclass, field, replace

import numpy as np

from .errors import PreconditionError, UnstableSystemError
from .h2 import DEGENERATE_RESIDUAL, output_energies
from .numerics import definiteness, solve_lyapunov, symmetrize
from .system import ClosedLoopSystem

__all__ = [
    "Output",
    "ConstraintCheck",
    "H2Certificate",
    "AlphaCertificate",
    "VERIFY_REL_TOL",
    "build_h2_certificate",
    "verify_h2_certificate",
    "alpha_feasibility",
    "ratio_by_bisection",
]

#: strictness threshold for block eigenvalues, relative to each block's 2-norm
VERIFY_REL_TOL = 1e-9
_EPS = np.finfo(float).eps


class Output(str, enum.Enum):
    PERFORMANCE = "performance"
    RESIDUAL = "residual"


@dataclass(frozen=True)
class ConstraintCheck:
    name: str
    margin: float  # min eigenvalue (or scalar slack) in the "must be > 0" orientation
    tolerance: float
    passed: bool


@dataclass(frozen=True, eq=False)
class H2Certificate:
    X: np.ndarray
    Z: np.ndarray
    gamma: float
    epsilon: float
    output: Output
    checks: tuple[ConstraintCheck, ...] = field(default=())

    @property
    def passed(self) -> bool:
        return bool(self.checks) and all(c.passed for c in self.checks)


@dataclass(frozen=True, eq=False)
class AlphaCertificate:
    alpha: float
    X: np.ndarray
    trace_slack: float
    feasible: bool


def _output_map(sys: ClosedLoopSystem, output: Output) -> np.ndarray:
    return sys.C_p if Output(output) is Output.PERFORMANCE else sys.C_rR


def _strict_positive(name: str, M: np.ndarray, rel_tol: float, scale: float = 0.0) -> ConstraintCheck:
    # scale: magnitude of the terms M was formed from; one rounding unit of it is the noise floor
    M = symmetrize(np.asarray(M, dtype=float))
    tol = max(rel_tol * np.linalg.norm(M, 2), _EPS * scale, np.finfo(float).tiny)
    v = definiteness(M, tolerance=tol, symmetry_tol=np.inf)
    return ConstraintCheck(name, v.min_eigenvalue, tol, v.positive_definite)


def verify_h2_certificate(sys: ClosedLoopSystem, cert: H2Certificate,
                          rel_tol: float = VERIFY_REL_TOL) -> tuple[ConstraintCheck, ...]:
    """Re-evaluate every constraint of the H2 LMI from the raw data.

    Stored ``cert.checks`` are ignored. Returns one record per constraint;
    failures are reported, never raised.

    Given ``X > 0``, the output block ``[[Z, CX], [XC^T, X]] > 0`` holds iff
    ``Z - C X C^T > 0``, and ``[[XA^T + AX, B], [B^T, -I]] < 0`` holds iff
    ``-(XA^T + AX + BB^T) > 0``. Each reduced block passes when its smallest
    eigenvalue exceeds ``rel_tol`` times its own 2-norm and one rounding unit
    of the products it was formed from. The trace test uses the rounding bound
    of the trace sum.
    """
    C = _output_map(sys, cert.output)
    A, B = sys.A_R, sys.B
    X, Z, gamma = np.asarray(cert.X, float), np.asarray(cert.Z, float), float(cert.gamma)
    p, m = C.shape[0], A.shape[0]
    if X.shape != (m, m) or Z.shape != (p, p):
        return (ConstraintCheck("shape", -np.inf, 0.0, False),)

    X = symmetrize(X)
    checks = [ConstraintCheck("gamma > 0", gamma, 0.0, gamma > 0)]
    checks.append(_strict_positive("X > 0", X, rel_tol))
    slack = gamma - float(np.trace(Z))
    tr_tol = (p + 1) * _EPS * (abs(gamma) + float(np.sum(np.abs(np.diag(Z)))))
    checks.append(ConstraintCheck("tr(Z) < gamma", slack, tr_tol, slack > tr_tol))
    CXC = C @ X @ C.T
    checks.append(_strict_positive("[[Z, CX], [XC^T, X]] > 0", Z - CXC, rel_tol,
                                   scale=np.linalg.norm(Z, 2) + np.linalg.norm(CXC, 2)))
    AX = A @ X
    BB = B @ B.T
    checks.append(_strict_positive("[[XA^T + AX, B], [B^T, -I]] < 0", -(AX + AX.T + BB), rel_tol,
                                   scale=2 * np.linalg.norm(AX, 2) + np.linalg.norm(BB, 2)))
    return tuple(checks)


def build_h2_certificate(sys: ClosedLoopSystem, output: Output | str = Output.PERFORMANCE,
                         epsilon: float = 1e-8, rel_tol: float = VERIFY_REL_TOL) -> H2Certificate:
    """Feasible point of the H2 LMI with ``gamma -> ||G||_H2^2`` as ``epsilon -> 0``.

    ``X`` solves ``A X + X A^T = -(B B^T + eps I)``, ``Z = C X C^T + eps I`` and
    ``gamma = tr Z + eps``. Since ``X - P_R`` is the Gramian of ``eps I`` it is
    positive definite, hence ``gamma`` over-bounds the squared norm.
    """
    if not epsilon > 0:
        raise PreconditionError(f"epsilon must be positive, got {epsilon}")
    if sys.spectral_abscissa >= 0:
        raise UnstableSystemError(sys.spectral_abscissa)
    output = Output(output)
    C = _output_map(sys, output)
    m = sys.order
    X = solve_lyapunov(sys.A_R, sys.B @ sys.B.T + epsilon * np.eye(m)).X
    Z = symmetrize(C @ X @ C.T) + epsilon * np.eye(C.shape[0])
    gamma = float(np.trace(Z)) + epsilon
    cert = H2Certificate(X=X, Z=Z, gamma=gamma, epsilon=float(epsilon), output=output)
    return replace(cert, checks=verify_h2_certificate(sys, cert, rel_tol))


def alpha_feasibility(sys: ClosedLoopSystem, alpha: float, X: np.ndarray | None = None) -> AlphaCertificate:
    """Check ``tr{X (C_p^T C_p - alpha C_rR^T C_rR)} >= 0`` with ``X = P_R``.

    Feasible exactly when ``alpha`` does not exceed the energy ratio (up to
    the rounding allowance ``1e-10 ||X||_F (||C_p||_F^2 + alpha ||C_rR||_F^2)``).
    A precomputed Gramian may be passed as ``X``.
    """
    if alpha < 0:
        raise PreconditionError("alpha must be nonnegative")
    if sys.spectral_abscissa >= 0:
        raise UnstableSystemError(sys.spectral_abscissa)
    if X is None:
        X = solve_lyapunov(sys.A_R, sys.B @ sys.B.T).X
    W = sys.C_p.T @ sys.C_p - alpha * (sys.C_rR.T @ sys.C_rR)
    slack = float(np.sum(X * W))  # tr(X W) for symmetric X, W
    allowance = 1e-10 * np.linalg.norm(X, "fro") * (
        np.linalg.norm(sys.C_p, "fro") ** 2 + alpha * np.linalg.norm(sys.C_rR, "fro") ** 2)
    return AlphaCertificate(float(alpha), X, slack, slack >= -allowance)


def ratio_by_bisection(sys: ClosedLoopSystem, tol: float = 1e-8, max_iter: int = 200) -> float:
    """Largest feasible ``alpha`` located by bisection on :func:`alpha_feasibility`.

    The bisection follows the sign of the computed trace slack. The rounding
    allowance of the feasibility flag is left out here because it shifts the
    boundary by a relative amount that grows with the ratio itself.
    """
    X = solve_lyapunov(sys.A_R, sys.B @ sys.B.T).X
    perf, resid = output_energies(sys, X)
    hi = perf / max(resid, DEGENERATE_RESIDUAL)
    lo = 0.0
    # the bracket top sits on the boundary itself; widen until it is infeasible
    hi = hi * (1 + 1e-6) + 1e-12
    def feasible(a):
        return alpha_feasibility(sys, a, X).trace_slack >= 0.0

    while feasible(hi):
        lo, hi = hi, 2 * hi
    for _ in range(max_iter):
        if hi - lo <= tol * max(hi, 1.0):
            break
        mid = 0.5 * (lo + hi)
        if feasible(mid):
            lo = mid
        else:
            hi = mid
    return 0.5 * (lo + hi)
