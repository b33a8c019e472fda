"""Analytic upper bounds on the energy ratio and hidden-mode diagnostics.

``theorem1_bound`` is the small-perturbation bound built from the condition
number of the nominal Gramian and a relative Gramian perturbation ``delta_R``.
``theorem2_bound`` trades the smallness assumption for a decay margin
``alpha_*`` and a semigroup constant ``M_*`` estimated numerically.
Spectral norms are used throughout, including for the semigroup envelope.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy.optimize import minimize_scalar

from .errors import (DefectiveEigenstructureError, MarginError, PreconditionError,
                     UnstableSystemError)
from .numerics import matrix_exponential, norms_and_condition, solve_lyapunov
from .system import (ClosedLoopSystem, ControllerDesign, PlantModel, assemble_closed_loop,
                     attack_perturbation)

__all__ = [
    "Theorem1Report",
    "Theorem2Report",
    "SemigroupEstimate",
    "ModeVisibility",
    "StealthDiagnostic",
    "theorem1_bound",
    "theorem2_bound",
    "estimate_semigroup",
    "stealth_diagnostic",
]

SEMIGROUP_SAFETY = 1.05


@dataclass(frozen=True)
class Theorem1Report:
    kappa_P: float
    H_norm: float
    delta_A_norm: float
    delta_R: float
    admissible: bool
    bound: float
    norm_E_R_F_sq: float
    norm_Cr_F_sq: float
    norm_Cp_F_sq: float
    mode: str = "derived"  # or "given-delta"

    def to_dict(self) -> dict:
        return dict(self.__dict__)


@dataclass(frozen=True)
class Theorem2Report:
    alpha_star: float
    M_star: float
    A_R_norm: float
    B_norm: float
    sigma_min_B: float
    bound: float
    norm_E_R_F_sq: float
    norm_Cr_F_sq: float
    norm_Cp_F_sq: float
    lambda_max_upper: float  # M^2 ||B||^2 / (2 alpha)
    lambda_min_lower: float  # sigma_min(B)^2 / (16 ||A_R||)

    def to_dict(self) -> dict:
        return dict(self.__dict__)


@dataclass(frozen=True, eq=False)
class SemigroupEstimate:
    M_star: float
    alpha_star: float
    T_cap: float
    samples: np.ndarray  # rows (t, ||exp(A t)|| exp(alpha t))


@dataclass(frozen=True)
class ModeVisibility:
    eigenvalue: complex
    residual_visibility: float
    performance_visibility: float
    score: float


@dataclass(frozen=True)
class StealthDiagnostic:
    modes: tuple[ModeVisibility, ...]
    stealth_score: float
    top_mode: int
    eta: float
    eigvec_condition: float


def _fro2(M) -> float:
    return float(np.sum(np.asarray(M) ** 2))


def theorem1_bound(model: PlantModel, controller: ControllerDesign, R,
                   delta_R: float | None = None) -> Theorem1Report:
    """Small-perturbation upper bound on the energy ratio.

    By default ``delta_R = 2||H|| ||dA|| / (1 - 2||H|| ||dA||)`` with
    ``A H + H A^T = -I`` at the nominal loop, and the report is admissible
    when ``||dA|| <= 1 / (2||H|| (1 + kappa(P)))`` and ``delta_R kappa(P) < 1``.
    Passing ``delta_R`` skips that construction ("given-delta" mode); the
    caller then vouches for ``||P_R - P|| <= delta_R ||P||``.

    Inadmissible reports carry ``bound = inf``.
    """
    n_y = model.n_y
    nominal = assemble_closed_loop(model, controller, np.eye(n_y))
    if nominal.spectral_abscissa >= 0:
        raise UnstableSystemError(nominal.spectral_abscissa, "nominal loop (R = I) is unstable")
    A = nominal.A_R
    P = solve_lyapunov(A, nominal.B @ nominal.B.T).X
    w = np.linalg.eigvalsh(P)
    kappa = w[-1] / w[0] if w[0] > 0 else math.inf
    H = solve_lyapunov(A, np.eye(A.shape[0])).X
    H_norm = float(np.linalg.norm(H, 2))

    pert = attack_perturbation(model, controller, R)
    dA = float(np.linalg.norm(pert.Delta_A_R, 2))
    e2, cr2 = _fro2(pert.E_R), _fro2(pert.C_r_nominal)
    cp2 = _fro2(nominal.C_p)

    if delta_R is None:
        mode = "derived"
        x = 2.0 * H_norm * dA
        if x >= 1.0 or not math.isfinite(kappa):
            delta, admissible = math.inf, False
        else:
            delta = x / (1.0 - x)
            admissible = dA <= 1.0 / (2.0 * H_norm * (1.0 + kappa)) and delta * kappa < 1.0
    else:
        mode = "given-delta"
        delta = float(delta_R)
        if delta < 0:
            raise PreconditionError("delta_R must be nonnegative")
        admissible = delta < 1.0 and delta * kappa < 1.0

    if admissible:
        bound = kappa * (1.0 + delta) / (1.0 - delta * kappa) * cp2 / (e2 + cr2)
    else:
        bound = math.inf
    return Theorem1Report(kappa_P=float(kappa), H_norm=H_norm, delta_A_norm=dA, delta_R=float(delta),
                          admissible=bool(admissible), bound=float(bound), norm_E_R_F_sq=e2,
                          norm_Cr_F_sq=cr2, norm_Cp_F_sq=cp2, mode=mode)


def _envelope(A: np.ndarray, alpha: float, t: float) -> float:
    return float(np.linalg.norm(matrix_exponential(A, t), 2) * math.exp(alpha * t))


def estimate_semigroup(sys: ClosedLoopSystem, alpha_star: float, probe_grid=None,
                       safety: float = SEMIGROUP_SAFETY) -> SemigroupEstimate:
    """Estimate ``M_*`` with ``||exp(A_R t)||_2 <= M_* exp(-alpha_* t)``.

    The envelope ``||exp(A_R t)|| exp(alpha_* t)`` is sampled on ``[0, 20/alpha_*]``
    (a default uniform grid fine enough to resolve ``A_R``, or ``probe_grid``
    augmented with both endpoints), refined by a bounded scalar search around
    the grid maximizer, and inflated by ``safety``.
    """
    if not alpha_star > 0:
        raise PreconditionError("alpha_star must be positive")
    A = sys.A_R
    eig = np.linalg.eigvals(A)
    worst = eig[np.argmax(eig.real)]
    if not worst.real < -alpha_star + 1e-9:
        raise MarginError(worst.real, alpha_star, worst)

    T_cap = 20.0 / alpha_star
    if probe_grid is None:
        n = int(min(max(2001, math.ceil(10 * T_cap * np.linalg.norm(A, 2))), 20001))
        grid = np.linspace(0.0, T_cap, n)
    else:
        grid = np.asarray(probe_grid, dtype=float).ravel()
        grid = np.unique(np.concatenate([[0.0, T_cap], grid[(grid >= 0) & (grid <= T_cap)]]))

    # march exp(A t) along the grid, reusing the step exponential for equal spacings
    phis = np.empty((grid.size,) + A.shape)
    phis[0] = np.eye(A.shape[0])
    cache: dict[float, np.ndarray] = {}
    for i in range(1, grid.size):
        dt = round(grid[i] - grid[i - 1], 12)
        step = cache.get(dt)
        if step is None:
            step = cache[dt] = matrix_exponential(A, dt)
        phis[i] = phis[i - 1] @ step
    vals = np.linalg.svd(phis, compute_uv=False)[:, 0] * np.exp(alpha_star * grid)

    i = int(np.argmax(vals))
    best = float(vals[i])
    lo, hi = grid[max(i - 1, 0)], grid[min(i + 1, grid.size - 1)]
    if hi > lo:
        res = minimize_scalar(lambda t: -_envelope(A, alpha_star, t), bounds=(lo, hi),
                              method="bounded", options={"xatol": 1e-10 * max(hi, 1.0)})
        best = max(best, -float(res.fun))
    M = max(best, 1.0) * safety
    return SemigroupEstimate(M_star=float(M), alpha_star=float(alpha_star), T_cap=T_cap,
                             samples=np.column_stack([grid, vals]))


def theorem2_bound(model: PlantModel, controller: ControllerDesign, R, alpha_star: float,
                   probe_grid=None) -> Theorem2Report:
    """Decay-margin upper bound ``8 M^2 ||A_R|| ||B||^2 / (sigma_min(B)^2 alpha) * ||C_p||_F^2 / ||C_rR||_F^2``.

    Raises
    ------
    PreconditionError
        ``B`` is not of full column rank (``sigma_min(B) <= 1e-10``).
    MarginError
        ``A_R`` does not decay at rate ``alpha_star``.
    """
    sys = assemble_closed_loop(model, controller, R)
    nb = norms_and_condition(sys.B, symmetric_pd=False)
    if sys.B.shape[0] < sys.B.shape[1] or nb.sigma_min <= 1e-10:
        raise PreconditionError(f"B must have full column rank (sigma_min(B) = {nb.sigma_min:.3e})")
    sg = estimate_semigroup(sys, alpha_star, probe_grid)
    a_norm = float(np.linalg.norm(sys.A_R, 2))
    pert = attack_perturbation(model, controller, R)
    e2, cr2, cp2 = _fro2(pert.E_R), _fro2(pert.C_r_nominal), _fro2(sys.C_p)
    kappa_bound = 8.0 * sg.M_star ** 2 * a_norm * nb.spectral ** 2 / (nb.sigma_min ** 2 * alpha_star)
    return Theorem2Report(
        alpha_star=float(alpha_star), M_star=sg.M_star, A_R_norm=a_norm, B_norm=nb.spectral,
        sigma_min_B=nb.sigma_min, bound=float(kappa_bound * cp2 / (e2 + cr2)),
        norm_E_R_F_sq=e2, norm_Cr_F_sq=cr2, norm_Cp_F_sq=cp2,
        lambda_max_upper=float(sg.M_star ** 2 * nb.spectral ** 2 / (2 * alpha_star)),
        lambda_min_lower=float(nb.sigma_min ** 2 / (16 * a_norm)),
    )


def stealth_diagnostic(sys: ClosedLoopSystem, eta: float = 1e-9,
                       max_condition: float = 1e8) -> StealthDiagnostic:
    """Residual and performance visibility of every closed-loop eigenmode.

    For unit right eigenvectors ``v`` of ``A_R`` the residual visibility is
    ``||C_rR v||`` and the performance visibility ``||C_p v||``; a mode scores
    ``perf / (resid + eta)``. Complex pairs are reported once (``Im >= 0``).
    """
    if not eta > 0:
        raise PreconditionError("eta must be positive")
    lam, V = np.linalg.eig(sys.A_R)
    V = V / np.linalg.norm(V, axis=0)
    cond = float(np.linalg.cond(V))
    if not cond <= max_condition:
        raise DefectiveEigenstructureError(cond)
    modes = []
    for k in range(lam.size):
        if lam[k].imag < 0 and np.any(np.isclose(lam, np.conj(lam[k]), rtol=1e-10, atol=1e-12)
                                      & (np.arange(lam.size) != k)):
            continue
        v = V[:, k]
        r = float(np.linalg.norm(sys.C_rR @ v))
        p = float(np.linalg.norm(sys.C_p @ v))
        modes.append(ModeVisibility(complex(lam[k]), r, p, p / (r + eta)))
    top = int(np.argmax([m.score for m in modes]))
    return StealthDiagnostic(tuple(modes), modes[top].score, top, float(eta), cond)
