"""Search over routing matrices: diagonal sweeps, worst-case and stealthy attacks.

The objective is smooth on the stabilizing set but that set is nonconvex, so
the searches run Nelder-Mead from many starting points. Iterates that leave
the stabilizing set receive a sentinel value that only affects simplex
ordering and never reaches a report.
"""

from __future__ import annotations

import enum
import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

import numpy as np
from scipy.linalg import lapack
from scipy.optimize import minimize

from .errors import (CapUnattainableError, DegenerateResidualError, NumericalError, PreconditionError,
                     UnstableSystemError)
from .h2 import DEGENERATE_RESIDUAL, impact
from .numerics import _kron_sum
from .system import ControllerDesign, PlantModel, assemble_closed_loop, classify_stability

__all__ = [
    "AxisSpec",
    "SweepCell",
    "SweepGrid",
    "SearchOptions",
    "SearchResult",
    "StealthMode",
    "RoutingEvaluator",
    "diagonal_sweep",
    "worst_case_search",
    "stealthy_search",
]

SENTINEL = -1e300


@dataclass(frozen=True)
class AxisSpec:
    min: float
    max: float
    step: float

    def __post_init__(self):
        if not self.step > 0:
            raise PreconditionError(f"grid step must be positive, got {self.step}")
        if not self.min < self.max:
            raise PreconditionError(f"grid needs min < max, got {self.min} >= {self.max}")

    @classmethod
    def parse(cls, text: str) -> "AxisSpec":
        try:
            lo, hi, st = (float(p) for p in text.split(":"))
        except ValueError as exc:
            raise PreconditionError(f"grid spec must be min:max:step, got {text!r}") from exc
        return cls(lo, hi, st)

    def values(self) -> np.ndarray:
        n = int(math.floor((self.max - self.min) / self.step + 1e-9)) + 1
        return np.round(self.min + self.step * np.arange(n), 12)


@dataclass(frozen=True)
class SweepCell:
    R11: float
    R22: float
    stable: bool
    ratio: float | None = None
    h2_perf_sq: float | None = None
    h2_resid_sq: float | None = None
    abscissa: float | None = field(default=None, compare=False)


@dataclass(frozen=True)
class SweepGrid:
    r11_axis: AxisSpec
    r22_axis: AxisSpec
    cells: tuple[SweepCell, ...]
    margin: float = 0.0

    def surfaces(self) -> dict[str, np.ndarray]:
        """Ratio and energy surfaces as (len(R11), len(R22)) arrays, NaN where unstable."""
        n1, n2 = len(self.r11_axis.values()), len(self.r22_axis.values())
        out = {k: np.full((n1, n2), np.nan) for k in ("ratio", "h2_perf_sq", "h2_resid_sq")}
        stable = np.zeros((n1, n2), dtype=bool)
        for idx, c in enumerate(self.cells):
            i, j = divmod(idx, n2)
            stable[i, j] = c.stable
            if c.stable:
                out["ratio"][i, j] = c.ratio
                out["h2_perf_sq"][i, j] = c.h2_perf_sq
                out["h2_resid_sq"][i, j] = c.h2_resid_sq
        out["stable"] = stable
        return out

    def maximizer(self) -> SweepCell:
        stable = [c for c in self.cells if c.stable]
        if not stable:
            raise UnstableSystemError(min(c.abscissa or 0.0 for c in self.cells), "no stable cell in sweep")
        return max(stable, key=lambda c: c.ratio)


class RoutingEvaluator:
    """Fast ratio/energy evaluation for many routing matrices of one design.

    Only the lower-left block ``K (I - R) C_mo`` of ``A_R`` and the first block
    of ``C_rR`` depend on ``R``. The vectorized Lyapunov operator is assembled
    once at ``R = I`` and the routing-dependent entries are written in place,
    then solved with a single LU. Results used in reports are always
    recomputed through :func:`ncsroute.h2.impact`.
    """

    def __init__(self, model: PlantModel, controller: ControllerDesign, margin: float = 0.0):
        self.model, self.controller = model, controller
        self.n_y = model.n_y
        self.margin = float(margin)
        nominal = assemble_closed_loop(model, controller, np.eye(model.n_y))
        n, m, ny = model.n_x, 2 * model.n_x, model.n_y
        self.n_x = n
        K, C = controller.K, model.C_mo
        self._A0 = np.array(nominal.A_R)
        self._q = -(nominal.B @ nominal.B.T).reshape(-1)
        self._wp = (nominal.C_p.T @ nominal.C_p).reshape(-1)
        self._C = C
        # vec(K (I - R) C) = kc - M vec(R)
        self._kc = (K @ C).reshape(-1)
        self._M = np.einsum("ia,bk->ikab", K, C).reshape(n * n, ny * ny)
        self._op0 = _kron_sum(self._A0)
        i, k, j = np.meshgrid(np.arange(n), np.arange(n), np.arange(m), indexing="ij")
        # entry A[n+i, k] feeds (A kron I) at ((n+i)m + j, km + j) and (I kron A) at (jm + n+i, jm + k)
        rows = np.concatenate([((n + i) * m + j).ravel(), (j * m + n + i).ravel()])
        cols = np.concatenate([(k * m + j).ravel(), (j * m + k).ravel()])
        self._flat = rows * (m * m) + cols
        self._src = np.tile((i * n + k).ravel(), 2)
        self.evaluations = 0

    def system_matrices(self, R: np.ndarray):
        n = self.n_x
        A = self._A0.copy()
        A[n:, :n] = (self._kc - self._M @ np.ravel(R)).reshape(n, n)
        Cr = np.hstack([(np.asarray(R).reshape(self.n_y, self.n_y) - np.eye(self.n_y)) @ self._C, self._C])
        return A, Cr

    def __call__(self, R) -> tuple[float, float, float] | None:
        """``(ratio, perf, resid)`` or ``None`` outside the (margin-)stable set."""
        self.evaluations += 1
        r = np.asarray(R, dtype=float).ravel()
        if not np.all(np.isfinite(r)):
            return None
        n = self.n_x
        block = self._kc - self._M @ r
        A = self._A0.copy()
        A[n:, :n] = block.reshape(n, n)
        wr, _, _, _, info = lapack.dgeev(A, compute_vl=0, compute_vr=0)
        if info != 0 or wr.max() >= -self.margin:
            return None
        op = self._op0.copy()
        op.flat[self._flat] = block[self._src]
        _, _, x, info = lapack.dgesv(op, self._q)
        if info != 0:
            return None
        E = (r.reshape(self.n_y, self.n_y) - np.eye(self.n_y)) @ self._C
        Cr = np.hstack([E, self._C])
        perf = float(self._wp @ x)
        resid = float((Cr.T @ Cr).ravel() @ x)
        if not (np.isfinite(perf) and resid >= DEGENERATE_RESIDUAL):
            return None
        return perf / resid, perf, resid


def diagonal_sweep(model: PlantModel, controller: ControllerDesign, r11: AxisSpec,
                   r22: AxisSpec | None = None, margin: float = 0.0) -> SweepGrid:
    """Evaluate the loop on the grid ``R = diag(R11, R22)``.

    Cells are ordered R11-major. Unstable cells are recorded without energies.
    """
    if model.n_y != 2:
        raise PreconditionError(f"diagonal sweep needs n_y = 2, got {model.n_y}")
    r22 = r22 or r11
    cells = []
    for a in r11.values():
        for b in r22.values():
            R = np.diag([a, b])
            sys = assemble_closed_loop(model, controller, R)
            verdict = classify_stability(sys, margin)
            if verdict.stable:
                try:
                    rep = impact(sys)
                    cells.append(SweepCell(float(a), float(b), True, rep.ratio, rep.h2_performance_sq,
                                           rep.h2_residual_sq, abscissa=verdict.abscissa))
                except DegenerateResidualError as exc:
                    cells.append(SweepCell(float(a), float(b), True, math.inf, None, exc.residual,
                                           abscissa=verdict.abscissa))
            else:
                cells.append(SweepCell(float(a), float(b), False, abscissa=verdict.abscissa))
    return SweepGrid(r11, r22, tuple(cells), float(margin))


class StealthMode(str, enum.Enum):
    MAX_RATIO = "max-ratio-under-cap"
    MAX_PERFORMANCE = "max-performance"


@dataclass(frozen=True)
class SearchOptions:
    restarts: int = 32
    seed: int = 0
    max_evals: int = 2000
    margin: float = 0.0
    spread: float = 0.3
    sweep_step: float = 0.05
    workers: int = 1
    starts: tuple = ()  # extra warm-start routing matrices, appended after the defaults


@dataclass(frozen=True, eq=False)
class SearchResult:
    best_R: np.ndarray
    best_ratio: float
    performance_energy: float
    residual_energy: float
    epsilon_tr: float | None  # None: unconstrained
    mode: str
    evaluations: int
    restarts: int
    feasible_starts: int
    converged: bool
    nominal_residual_energy: float

    def to_dict(self) -> dict:
        return {
            "best_R": np.asarray(self.best_R).tolist(),
            "best_ratio": self.best_ratio,
            "performance_energy": self.performance_energy,
            "residual_energy": self.residual_energy,
            "constraint": None if self.epsilon_tr is None else {"ResidualCap": {"epsilon_tr": self.epsilon_tr}},
            "mode": self.mode,
            "evaluations": self.evaluations,
            "restarts": self.restarts,
            "feasible_starts": self.feasible_starts,
            "converged": self.converged,
            "nominal_residual_energy": self.nominal_residual_energy,
        }


def _start_points(model, controller, opts: SearchOptions) -> list[np.ndarray]:
    n_y = model.n_y
    I = np.eye(n_y)
    starts = [I]
    if opts.restarts >= 2:
        axis = AxisSpec(0.0, 1.5, opts.sweep_step)
        ev = RoutingEvaluator(model, controller, opts.margin)
        best, best_val = None, -math.inf
        if n_y == 2:
            cands = (np.diag([a, b]) for a in axis.values() for b in axis.values())
        elif n_y == 1:
            cands = (np.array([[a]]) for a in axis.values())
        else:
            cands = ()
        for R in cands:
            out = ev(R)
            if out is not None and out[0] > best_val:
                best, best_val = R, out[0]
        if best is not None:
            starts.append(best)
    idx = len(starts)
    while len(starts) < opts.restarts:
        rng = np.random.default_rng([opts.seed, idx])
        starts.append(I + opts.spread * rng.standard_normal((n_y, n_y)))
        idx += 1
    starts.extend(np.array(s, dtype=float).reshape(n_y, n_y) for s in opts.starts)
    return starts


@dataclass
class _Run:
    x: np.ndarray
    value: float
    evals: int
    converged: bool
    records: list = field(default_factory=list)


def _nelder_mead(fun, x0, max_evals, scale):
    n = x0.size
    simplex = np.vstack([x0] + [x0 + 0.05 * np.eye(n)[i] for i in range(n)])
    return minimize(fun, x0, method="Nelder-Mead",
                    options={"maxfev": max_evals, "initial_simplex": simplex,
                             "fatol": 1e-9 * max(abs(scale), 1e-300), "xatol": np.inf})


def _pick_best(runs: list[_Run]):
    # max value; ties broken by lexicographically smallest vec(R)
    return max(runs, key=lambda r: (r.value, tuple(-v for v in r.x)))


def _map(fn, items, workers):
    if workers > 1:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            return list(pool.map(fn, items))
    return [fn(i) for i in items]


def _finish(model, controller, R, margin, epsilon_tr, mode, runs, n_starts, feasible, nominal_resid):
    sys = assemble_closed_loop(model, controller, R)
    verdict = classify_stability(sys, margin)
    if not verdict.stable:
        raise UnstableSystemError(verdict.abscissa, "search returned a non-stabilizing routing matrix")
    rep = impact(sys, R)
    best = _pick_best(runs)
    return SearchResult(best_R=np.array(R), best_ratio=rep.ratio, performance_energy=rep.h2_performance_sq,
                        residual_energy=rep.h2_residual_sq, epsilon_tr=epsilon_tr, mode=mode,
                        evaluations=sum(r.evals for r in runs), restarts=n_starts,
                        feasible_starts=feasible, converged=best.converged,
                        nominal_residual_energy=nominal_resid)


def _nominal(model, controller) -> float:
    sys = assemble_closed_loop(model, controller, np.eye(model.n_y))
    if sys.spectral_abscissa >= 0:
        raise UnstableSystemError(sys.spectral_abscissa, "nominal loop (R = I) is unstable")
    return impact(sys).h2_residual_sq


def worst_case_search(model: PlantModel, controller: ControllerDesign,
                      options: SearchOptions | None = None) -> SearchResult:
    """Maximize the energy ratio over stabilizing routing matrices.

    Multi-start Nelder-Mead over the ``n_y^2`` entries of ``R``. Start points:
    ``I``, the maximizer of a coarse diagonal sweep, then Gaussian perturbations
    of ``I`` (restart ``i`` seeded by ``(seed, i)``), then ``options.starts``.
    """
    opts = options or SearchOptions()
    nominal_resid = _nominal(model, controller)
    n_y = model.n_y
    starts = _start_points(model, controller, opts)

    def run(R0):
        ev = RoutingEvaluator(model, controller, opts.margin)
        first = ev(R0)
        if first is None:
            return None
        if opts.max_evals <= 0:
            return _Run(R0.ravel().copy(), first[0], ev.evaluations, True)

        def neg(x):
            out = ev(x)
            return -SENTINEL if out is None else -out[0]

        res = _nelder_mead(neg, R0.ravel().copy(), opts.max_evals, first[0])
        x, val = res.x, -float(res.fun)
        if val < first[0]:
            x, val = R0.ravel().copy(), first[0]
        return _Run(np.array(x), val, ev.evaluations, bool(res.success))

    runs = [r for r in _map(run, starts, opts.workers) if r is not None]
    if not runs:
        raise PreconditionError("no feasible start point; seed the search with R = I, "
                                "which is stabilizing whenever the nominal design is")
    best = _pick_best(runs)
    return _finish(model, controller, best.x.reshape(n_y, n_y), opts.margin, None, "max-ratio",
                   runs, len(starts), len(runs), nominal_resid)


def stealthy_search(model: PlantModel, controller: ControllerDesign, epsilon_tr: float,
                    mode: StealthMode | str = StealthMode.MAX_RATIO, options: SearchOptions | None = None,
                    mu0: float = 1.0, mu_growth: float = 10.0, max_rounds: int = 10) -> SearchResult:
    """Maximize ratio (or performance energy) subject to residual energy <= ``epsilon_tr``.

    Exterior quadratic penalty ``f - mu * max(0, resid - eps)^2``; each restart
    re-runs Nelder-Mead with ``mu`` grown by ``mu_growth`` until its iterate meets
    the cap to 1e-9. The reported point is the best evaluated point that
    satisfies the cap exactly, after a bisection toward the cap boundary.

    Raises
    ------
    CapUnattainableError
        No stabilizing point met the cap; carries the minimum residual seen.
    """
    if not epsilon_tr > 0:
        raise PreconditionError("epsilon_tr must be positive")
    mode = StealthMode(mode)
    opts = options or SearchOptions()
    if math.isinf(epsilon_tr) and mode is StealthMode.MAX_RATIO:
        return worst_case_search(model, controller, opts)

    nominal_resid = _nominal(model, controller)
    n_y = model.n_y
    starts = _start_points(model, controller, opts)
    use_ratio = mode is StealthMode.MAX_RATIO

    def run(R0):
        ev = RoutingEvaluator(model, controller, opts.margin)
        best_feas = [None, -math.inf]  # x, objective
        min_resid = [math.inf]

        def score(x):
            out = ev(x)
            if out is None:
                return None
            ratio, perf, resid = out
            min_resid[0] = min(min_resid[0], resid)
            obj = ratio if use_ratio else perf
            if resid <= epsilon_tr and obj > best_feas[1]:
                best_feas[0], best_feas[1] = np.array(x, dtype=float), obj
            return obj, resid

        first = score(R0.ravel())
        if first is None:
            return None, min_resid[0]
        x = R0.ravel().copy()
        mu = mu0 * max(abs(first[0]), 1.0)
        converged = False
        resid = first[1]
        for _ in range(max_rounds if opts.max_evals > 0 else 0):
            def neg(z, mu=mu):
                s = score(z)
                if s is None:
                    return -SENTINEL
                return -(s[0] - mu * max(0.0, s[1] - epsilon_tr) ** 2)

            res = _nelder_mead(neg, x, opts.max_evals, first[0])
            x = np.array(res.x)
            converged = bool(res.success)
            s = score(x)
            if s is None:
                break
            resid = s[1]
            if resid <= epsilon_tr + 1e-9:
                break
            mu *= mu_growth

        # pull an infeasible end point back to the cap along the segment to the best feasible one
        if best_feas[0] is not None and resid > epsilon_tr:
            lo, hi = best_feas[0], x
            for _ in range(60):
                mid = 0.5 * (lo + hi)
                s = score(mid)
                if s is not None and s[1] <= epsilon_tr:
                    lo = mid
                else:
                    hi = mid
                if np.max(np.abs(hi - lo)) < 1e-13:
                    break
        if best_feas[0] is None:
            return None, min_resid[0]
        return _Run(best_feas[0], best_feas[1], ev.evaluations, converged), min_resid[0]

    outs = _map(run, starts, opts.workers)
    runs = [r for r, _ in outs if r is not None]
    if not runs:
        raise CapUnattainableError(epsilon_tr, min(m for _, m in outs))
    best = _pick_best(runs)
    result = _finish(model, controller, best.x.reshape(n_y, n_y), opts.margin, float(epsilon_tr), mode.value,
                     runs, len(starts), len(runs), nominal_resid)
    if result.residual_energy > epsilon_tr + 1e-9:
        raise NumericalError("stealthy result violates the residual cap on re-check")
    return result
