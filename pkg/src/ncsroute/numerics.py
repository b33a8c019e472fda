"""Dense linear-algebra kernels: Lyapunov solves, matrix exponential,
definiteness tests, norms and condition numbers.

All routines take and return float64 ndarrays and never mutate inputs.
"""

from __future__ import annotations

import enum
from dataclasses import dataclass

import numpy as np
import scipy.linalg as sla

from .errors import NumericalError, PreconditionError, SingularSystemError, UnstableSystemError

__all__ = [
    "LyapunovMethod",
    "LyapunovSolution",
    "Definiteness",
    "DefinitenessVerdict",
    "MatrixNorms",
    "solve_lyapunov",
    "matrix_exponential",
    "definiteness",
    "norms_and_condition",
    "spectral_abscissa",
    "symmetrize",
]


class LyapunovMethod(str, enum.Enum):
    KRONECKER = "KroneckerVectorized"
    SCHUR = "SchurBartelsStewart"


class Definiteness(str, enum.Enum):
    POSITIVE_DEFINITE = "PositiveDefinite"
    NEGATIVE_DEFINITE = "NegativeDefinite"
    INDEFINITE = "Indefinite"
    SEMIDEFINITE = "Semidefinite"


@dataclass(frozen=True)
class LyapunovSolution:
    """Solution of ``A X + X A^T + Q = 0``."""

    X: np.ndarray
    residual_norm: float
    method: LyapunovMethod


@dataclass(frozen=True)
class DefinitenessVerdict:
    min_eigenvalue: float
    max_eigenvalue: float
    verdict: Definiteness
    tolerance: float

    @property
    def positive_definite(self) -> bool:
        return self.verdict is Definiteness.POSITIVE_DEFINITE

    @property
    def negative_definite(self) -> bool:
        return self.verdict is Definiteness.NEGATIVE_DEFINITE


@dataclass(frozen=True)
class MatrixNorms:
    frobenius: float
    spectral: float
    sigma_min: float
    condition_number: float


def _as_matrix(M, name: str = "M") -> np.ndarray:
    arr = np.array(M, dtype=float, copy=True)
    if arr.ndim == 0:
        arr = arr.reshape(1, 1)
    if arr.ndim != 2:
        raise PreconditionError(f"{name} must be a 2-D matrix, got shape {arr.shape}")
    if not np.all(np.isfinite(arr)):
        raise PreconditionError(f"{name} has non-finite entries")
    return arr


def symmetrize(M: np.ndarray) -> np.ndarray:
    return 0.5 * (M + M.T)


def spectral_abscissa(A: np.ndarray) -> float:
    """Largest real part over the eigenvalues of ``A``."""
    try:
        eig = np.linalg.eigvals(A)
    except np.linalg.LinAlgError as exc:
        raise NumericalError(f"eigenvalue computation failed: {exc}") from exc
    return float(np.max(eig.real))


def _lyapunov_residual(A, X, Q) -> float:
    return float(np.linalg.norm(A @ X + X @ A.T + Q, "fro"))


def _kron_sum(A: np.ndarray) -> np.ndarray:
    # (A kron I) + (I kron A) by broadcasting; np.kron is slow for small m
    m = A.shape[0]
    I = np.eye(m)
    return (A[:, None, :, None] * I[None, :, None, :] + I[:, None, :, None] * A[None, :, None, :]).reshape(m * m, m * m)


def solve_lyapunov(A, Q, method: LyapunovMethod | str = LyapunovMethod.KRONECKER,
                   pairing_tol: float = 1e-12, residual_tol: float = 1e-10,
                   check_stable: bool = True, eigenvalues: np.ndarray | None = None) -> LyapunovSolution:
    """Solve the continuous Lyapunov equation ``A X + X A^T = -Q``.

    Parameters
    ----------
    A : (m, m) array_like
        Hurwitz matrix.
    Q : (m, m) array_like
        Symmetric right-hand side.
    method : LyapunovMethod
        ``KRONECKER`` solves the m^2 x m^2 vectorized system with one step of
        iterative refinement; ``SCHUR`` uses Bartels-Stewart.
    pairing_tol : float
        Relative threshold on ``min |lambda_i + lambda_j|`` below which the
        operator is declared singular.
    residual_tol : float
        Relative residual target ``||AX + XA^T + Q|| <= tol (||A|| ||X|| + ||Q||)``.
    eigenvalues : ndarray, optional
        Precomputed spectrum of ``A`` (saves one eigensolve in tight loops).

    Returns
    -------
    LyapunovSolution
    """
    A = _as_matrix(A, "A")
    Q = _as_matrix(Q, "Q")
    m = A.shape[0]
    if A.shape != (m, m) or Q.shape != (m, m):
        raise PreconditionError(f"A {A.shape} and Q {Q.shape} must be square and equal-sized")
    if np.max(np.abs(Q - Q.T)) > 1e-12 * max(1.0, np.max(np.abs(Q))):
        raise PreconditionError("Q must be symmetric")
    Q = symmetrize(Q)

    eig = np.linalg.eigvals(A) if eigenvalues is None else np.asarray(eigenvalues)
    if check_stable and np.max(eig.real) >= 0.0:
        raise UnstableSystemError(np.max(eig.real), "Lyapunov solve needs a Hurwitz A "
                                  f"(spectral abscissa {np.max(eig.real):.6g})")
    scale = max(np.max(np.abs(eig)), np.finfo(float).tiny)
    pair_sums = np.abs(eig[:, None] + eig[None, :])
    if np.min(pair_sums) <= pairing_tol * scale:
        raise SingularSystemError(
            f"Lyapunov operator singular: min |lambda_i + lambda_j| = {np.min(pair_sums):.3e}")

    method = LyapunovMethod(method)
    if method is LyapunovMethod.KRONECKER:
        # row-major vec: vec(A X) = (A kron I) vec(X), vec(X A^T) = (I kron A) vec(X)
        op = _kron_sum(A)
        rhs = -Q.reshape(-1)
        try:
            lu = sla.lu_factor(op, check_finite=False)
        except (np.linalg.LinAlgError, ValueError) as exc:
            raise SingularSystemError(str(exc)) from exc
        x = sla.lu_solve(lu, rhs, check_finite=False)
        x = x + sla.lu_solve(lu, rhs - op @ x, check_finite=False)
        X = x.reshape(m, m)
    else:
        X = sla.solve_continuous_lyapunov(A, -Q)
    X = symmetrize(X)

    res = _lyapunov_residual(A, X, Q)
    bound = residual_tol * (np.linalg.norm(A, "fro") * np.linalg.norm(X, "fro") + np.linalg.norm(Q, "fro"))
    if not np.isfinite(res) or res > bound:
        raise NumericalError(f"Lyapunov residual {res:.3e} exceeds tolerance {bound:.3e}")
    return LyapunovSolution(X=X, residual_norm=res, method=method)


def matrix_exponential(A, t: float = 1.0) -> np.ndarray:
    """``exp(A t)`` by Pade scaling and squaring.

    Raises NumericalError rather than returning overflowed entries.
    """
    A = _as_matrix(A, "A")
    if A.shape[0] != A.shape[1]:
        raise PreconditionError(f"A must be square, got {A.shape}")
    M = A * float(t)
    # exp(||M||_1) overflows float64 beyond ~709, so the Pade squaring phase would too
    if np.linalg.norm(M, 1) > 700.0 and spectral_abscissa(M) > 700.0:
        raise NumericalError("matrix exponential overflows: spectral abscissa of A*t exceeds 700")
    with np.errstate(over="raise", invalid="raise"):
        try:
            E = sla.expm(M)
        except FloatingPointError as exc:
            raise NumericalError(f"matrix exponential overflow: {exc}") from exc
    if not np.all(np.isfinite(E)):
        raise NumericalError("matrix exponential produced non-finite entries")
    return E


def definiteness(M, tolerance: float = 1e-9, symmetry_tol: float = 1e-12) -> DefinitenessVerdict:
    """Classify a symmetric matrix by the sign of its spectrum.

    ``PositiveDefinite`` iff ``lambda_min > tolerance``; ``NegativeDefinite`` iff
    ``lambda_max < -tolerance``; ``Semidefinite`` when the spectrum lies on one
    side of zero up to ``tolerance``; otherwise ``Indefinite``.
    """
    M = _as_matrix(M)
    if M.shape[0] != M.shape[1]:
        raise PreconditionError(f"matrix must be square, got {M.shape}")
    asym = np.max(np.abs(M - M.T)) if M.size else 0.0
    if asym > symmetry_tol * max(1.0, np.max(np.abs(M))):
        raise PreconditionError(f"matrix is not symmetric (max asymmetry {asym:.3e})")
    w = np.linalg.eigvalsh(symmetrize(M))
    lo, hi = float(w[0]), float(w[-1])
    if lo > tolerance:
        verdict = Definiteness.POSITIVE_DEFINITE
    elif hi < -tolerance:
        verdict = Definiteness.NEGATIVE_DEFINITE
    elif lo >= -tolerance or hi <= tolerance:
        verdict = Definiteness.SEMIDEFINITE
    else:
        verdict = Definiteness.INDEFINITE
    return DefinitenessVerdict(lo, hi, verdict, tolerance)


def norms_and_condition(M, symmetric_pd: bool | None = None) -> MatrixNorms:
    """Frobenius and spectral norms, smallest singular value, condition number.

    For symmetric positive definite input the eigenvalues are used directly
    (``kappa = lambda_max / lambda_min``); otherwise an SVD. ``symmetric_pd=None``
    auto-detects.
    """
    M = _as_matrix(M)
    fro = float(np.linalg.norm(M, "fro"))
    sv = None
    if symmetric_pd is None:
        symmetric_pd = M.shape[0] == M.shape[1] and np.array_equal(M, M.T)
    if symmetric_pd:
        w = np.linalg.eigvalsh(M)
        if w[0] > 0.0:
            sv = w[::-1]
    if sv is None:
        sv = np.linalg.svd(M, compute_uv=False)
    smax, smin = float(sv[0]), float(sv[-1])
    cond = np.inf if smin < 1e-300 else smax / smin
    return MatrixNorms(frobenius=fro, spectral=smax, sigma_min=smin, condition_number=cond)
