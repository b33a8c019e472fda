"""Gramians, H2 energies and the performance-to-residual ratio.

The infinite-horizon Gramian comes from a Lyapunov solve; finite horizons use
the Van Loan block exponential on a short base interval followed by exact
doubling, which avoids forming ``exp(-A T)`` for large ``T``.
"""

from __future__ import annotations

import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass

import numpy as np

from .errors import DegenerateResidualError, PreconditionError, UnstableSystemError
from .numerics import matrix_exponential, solve_lyapunov, symmetrize
from .system import ClosedLoopSystem

__all__ = [
    "GramianResult",
    "ImpactReport",
    "SimulationTrace",
    "MonteCarloResult",
    "DEGENERATE_RESIDUAL",
    "gramian",
    "impact",
    "output_energies",
    "ratio_trajectory",
    "monte_carlo_energy",
]

DEGENERATE_RESIDUAL = 1e-14


@dataclass(frozen=True, eq=False)
class GramianResult:
    P: np.ndarray
    horizon: float  # math.inf for the infinite horizon
    method: str  # "Lyapunov" | "VanLoanBlockExp" | "Quadrature"

    @property
    def infinite(self) -> bool:
        return math.isinf(self.horizon)


@dataclass(frozen=True, eq=False)
class ImpactReport:
    h2_performance_sq: float
    h2_residual_sq: float
    ratio: float
    spectral_abscissa: float
    R: np.ndarray | None = None

    def to_dict(self) -> dict:
        return {
            "h2_performance_sq": self.h2_performance_sq,
            "h2_residual_sq": self.h2_residual_sq,
            "ratio": self.ratio,
            "spectral_abscissa": self.spectral_abscissa,
            "R": None if self.R is None else np.asarray(self.R).tolist(),
        }


@dataclass(frozen=True, eq=False)
class SimulationTrace:
    """One recorded sample path (path index 0) of the Monte-Carlo run."""

    time_grid: np.ndarray
    states: np.ndarray  # (len(time_grid), 2 n_x): [x_p, e]
    y_p: np.ndarray
    y_r: np.ndarray
    noise_seed: int
    num_paths: int


@dataclass(frozen=True, eq=False)
class MonteCarloResult:
    performance_energy: float
    residual_energy: float
    performance_stderr: float
    residual_stderr: float
    trace: SimulationTrace


def _van_loan(A: np.ndarray, Q: np.ndarray, T: float) -> np.ndarray:
    m = A.shape[0]
    nrm = np.linalg.norm(A, 1) * T
    k = max(0, math.ceil(math.log2(nrm))) if nrm > 1.0 else 0
    h = T / 2.0 ** k
    M = np.block([[-A, Q], [np.zeros((m, m)), A.T]])
    E = matrix_exponential(M, h)
    phi = E[m:, m:].T  # exp(A h)
    P = phi @ E[:m, m:]
    # P(2t) = P(t) + exp(At) P(t) exp(At)^T
    for _ in range(k):
        P = P + phi @ P @ phi.T
        phi = phi @ phi
    return symmetrize(P)


def gramian(sys: ClosedLoopSystem, horizon: float = math.inf) -> GramianResult:
    """Controllability Gramian of ``(A_R, B)`` over ``[0, horizon]``.

    ``horizon=math.inf`` requires a Hurwitz ``A_R``; any finite ``horizon > 0``
    is accepted regardless of stability.
    """
    Q = sys.B @ sys.B.T
    if math.isinf(horizon):
        if sys.spectral_abscissa >= 0:
            raise UnstableSystemError(sys.spectral_abscissa)
        return GramianResult(solve_lyapunov(sys.A_R, Q).X, math.inf, "Lyapunov")
    if not horizon > 0:
        raise PreconditionError(f"finite horizon must be positive, got {horizon}")
    return GramianResult(_van_loan(sys.A_R, Q, float(horizon)), float(horizon), "VanLoanBlockExp")


def output_energies(sys: ClosedLoopSystem, P: np.ndarray) -> tuple[float, float]:
    """``(tr C_p P C_p^T, tr C_rR P C_rR^T)``."""
    perf = float(np.einsum("ij,jk,ik->", sys.C_p, P, sys.C_p))
    resid = float(np.einsum("ij,jk,ik->", sys.C_rR, P, sys.C_rR))
    return perf, resid


def impact(sys: ClosedLoopSystem, R=None) -> ImpactReport:
    """Steady-state energies of ``y_p`` and ``y_r`` and their ratio.

    Raises
    ------
    UnstableSystemError
        ``A_R`` is not Hurwitz.
    DegenerateResidualError
        Residual energy below 1e-14.
    """
    if sys.spectral_abscissa >= 0:
        raise UnstableSystemError(sys.spectral_abscissa)
    P = gramian(sys).P
    perf, resid = output_energies(sys, P)
    if resid < DEGENERATE_RESIDUAL:
        raise DegenerateResidualError(resid)
    R = None if R is None else np.array(R, dtype=float)
    return ImpactReport(perf, resid, perf / resid, sys.spectral_abscissa, R)


def ratio_trajectory(sys: ClosedLoopSystem, time_grid) -> np.ndarray:
    """Finite-horizon ratio for each ``T`` in ``time_grid``.

    Returns an ``(N, 2)`` array of ``(T, ratio(T))`` rows.
    """
    grid = np.asarray(time_grid, dtype=float).ravel()
    if grid.size == 0 or grid[0] <= 0 or np.any(np.diff(grid) <= 0):
        raise PreconditionError("time grid must be positive and strictly increasing")
    out = np.empty((grid.size, 2))
    for i, T in enumerate(grid):
        perf, resid = output_energies(sys, gramian(sys, T).P)
        out[i] = T, perf / resid
    return out


def _path_stream(seed: int, path: int) -> np.random.Generator:
    # counter-based stream keyed on (seed, path): independent of block layout
    return np.random.Generator(np.random.Philox(key=(int(seed) << 64) | int(path)))


def _simulate_block(sys, paths, n_steps, step, burn, chunk, record):
    m = sys.order
    q = sys.B.shape[1]
    F = (np.eye(m) + step * sys.A_R).T
    G = math.sqrt(step) * sys.B.T
    gens = [_path_stream(*p) for p in paths]
    X = np.zeros((len(paths), m))
    acc_p = np.zeros(len(paths))
    acc_r = np.zeros(len(paths))
    rec = [X[0].copy()] if record else None
    k = 0
    while k < n_steps:
        n = min(chunk, n_steps - k)
        xi = np.stack([g.standard_normal((n, q)) for g in gens], axis=1)  # (n, paths, q)
        noise = xi @ G
        for j in range(n):
            X = X @ F + noise[j]
            k += 1
            if k >= burn:
                yp = X @ sys.C_p.T
                yr = X @ sys.C_rR.T
                acc_p += np.einsum("ij,ij->i", yp, yp)
                acc_r += np.einsum("ij,ij->i", yr, yr)
            if record:
                rec.append(X[0].copy())
    return acc_p, acc_r, (np.array(rec) if record else None)


def monte_carlo_energy(sys: ClosedLoopSystem, step: float, T_end: float, num_paths: int,
                       seed: int = 0, block_size: int = 2048, workers: int = 1,
                       chunk: int = 256) -> MonteCarloResult:
    """Euler-Maruyama estimate of stationary ``E{y^T y}`` for both outputs.

    Simulates ``dx = A_R x dt + B dW`` from ``x(0) = 0`` with unit-intensity
    white noise (per-step covariance ``I / step``) and averages ``y^T y`` over
    time samples in ``[T_end / 2, T_end]`` and over paths. Path ``i`` draws its
    noise from a Philox stream keyed by ``(seed, i)`` so results do not depend
    on ``block_size`` or ``workers``.
    """
    if not step > 0:
        raise PreconditionError(f"step must be positive, got {step}")
    if sys.spectral_abscissa >= 0:
        raise UnstableSystemError(sys.spectral_abscissa)
    if step * np.linalg.norm(sys.A_R, 2) >= 0.1:
        raise PreconditionError("step too large: need step * ||A_R||_2 < 0.1")
    if num_paths < 1 or not T_end > 0:
        raise PreconditionError("need num_paths >= 1 and T_end > 0")
    if not 0 <= seed < 2 ** 64:
        raise PreconditionError("seed must fit in 64 bits")

    n_steps = int(round(T_end / step))
    burn = (n_steps + 1) // 2
    window = n_steps - burn + 1
    blocks = [[(seed, p) for p in range(s, min(s + block_size, num_paths))]
              for s in range(0, num_paths, block_size)]

    def run(i):
        return _simulate_block(sys, blocks[i], n_steps, step, burn, chunk, record=(i == 0))

    if workers > 1:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            parts = list(pool.map(run, range(len(blocks))))
    else:
        parts = [run(i) for i in range(len(blocks))]

    per_p = np.concatenate([p[0] for p in parts]) / window
    per_r = np.concatenate([p[1] for p in parts]) / window
    rec = parts[0][2]
    t = step * np.arange(n_steps + 1)
    trace = SimulationTrace(time_grid=t, states=rec, y_p=rec @ sys.C_p.T, y_r=rec @ sys.C_rR.T,
                            noise_seed=int(seed), num_paths=int(num_paths))
    den = math.sqrt(num_paths) if num_paths > 1 else math.inf
    return MonteCarloResult(
        performance_energy=float(per_p.mean()),
        residual_energy=float(per_r.mean()),
        performance_stderr=float(per_p.std(ddof=1) / den) if num_paths > 1 else math.inf,
        residual_stderr=float(per_r.std(ddof=1) / den) if num_paths > 1 else math.inf,
        trace=trace,
    )
