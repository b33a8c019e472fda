"""Random problem instances shared by the test modules."""

from __future__ import annotations

import numpy as np
from scipy.linalg import solve_continuous_are

from ncsroute.system import ClosedLoopSystem, ControllerDesign, PlantModel, assemble_closed_loop

EXAMPLE_PLANT = dict(
    A_p=[[1.0, -2.0, -1.0], [0.0, -0.5, 0.0], [0.0, 0.0, -0.1]],
    B_p=[[0.0], [1.0], [1.0]],
    B_w=np.eye(3),
    C_mo=[[1.0, 0.0, 0.0], [0.0, 0.0, 1.0]],
    C_po=[[0.0, 1.0, 0.0]],
    D_po=[[0.0]],
)
EXAMPLE_L = [[2.43, -3.24, -0.66]]
EXAMPLE_K = [[3.0, -1.0], [0.0, 0.0], [0.0, 0.9]]


def example(sigma: float = 0.01):
    return PlantModel(**EXAMPLE_PLANT), ControllerDesign.with_sigma(EXAMPLE_L, EXAMPLE_K, sigma)


def random_design(rng: np.random.Generator, n_x: int | None = None, n_y: int | None = None,
                  n_u: int | None = None, n_yp: int | None = None):
    """Random plant with LQR/Kalman-style gains, so both gain loops are Hurwitz."""
    n_x = n_x or int(rng.integers(1, 5))
    n_y = n_y or int(rng.integers(1, min(n_x, 2) + 1))
    n_u = n_u or int(rng.integers(1, min(n_x, 2) + 1))
    n_yp = n_yp or int(rng.integers(1, 3))
    A = rng.standard_normal((n_x, n_x))
    Bp = rng.standard_normal((n_x, n_u))
    C = rng.standard_normal((n_y, n_x))
    model = PlantModel(A_p=A, B_p=Bp, B_w=np.eye(n_x) + 0.3 * rng.standard_normal((n_x, n_x)), C_mo=C,
                       C_po=rng.standard_normal((n_yp, n_x)), D_po=rng.standard_normal((n_yp, n_u)))
    X = solve_continuous_are(A, Bp, np.eye(n_x), np.eye(n_u))
    L = -Bp.T @ X
    Y = solve_continuous_are(A.T, C.T, np.eye(n_x), np.eye(n_y))
    K = Y @ C.T
    sigma = float(rng.uniform(0.1, 1.0))
    return model, ControllerDesign.with_sigma(L, K, sigma)


def random_stable_instance(rng: np.random.Generator, spread: float = 0.3, max_tries: int = 200, **dims):
    """``(model, controller, R, sys)`` with a stabilizing random ``R`` near the identity."""
    for _ in range(max_tries):
        model, ctl = random_design(rng, **dims)
        for _ in range(20):
            R = np.eye(model.n_y) + spread * rng.standard_normal((model.n_y, model.n_y))
            sys_ = assemble_closed_loop(model, ctl, R)
            if sys_.spectral_abscissa < -1e-3:
                return model, ctl, R, sys_
    raise RuntimeError("no stable instance found")


def random_hurwitz(rng: np.random.Generator, m: int) -> np.ndarray:
    G = rng.standard_normal((m, m))
    return G - (np.linalg.norm(G, 2) + 1.0) * np.eye(m)


def random_system(rng: np.random.Generator, m: int, q: int | None = None, p: int = 2) -> ClosedLoopSystem:
    q = q or m
    return ClosedLoopSystem.from_matrices(random_hurwitz(rng, m), rng.standard_normal((m, q)),
                                          rng.standard_normal((p, m)), rng.standard_normal((p, m)))


def mild_stable_instance(rng: np.random.Generator, n_x: int, spread: float = 0.15,
                         max_stiffness: float = 6.0, max_tries: int = 500):
    """Stable instance whose closed loop is not stiff: ``||A_R|| <= max_stiffness |abscissa|``.

    Monte-Carlo needs a step that resolves the fastest mode while the run
    must last several slowest time constants, so stiffness sets its cost.
    """
    for _ in range(max_tries):
        n_y = int(rng.integers(1, min(n_x, 2) + 1))
        n_u = int(rng.integers(1, min(n_x, 2) + 1))
        A = 0.5 * rng.standard_normal((n_x, n_x)) - 0.5 * np.eye(n_x)
        Bp = rng.standard_normal((n_x, n_u))
        C = rng.standard_normal((n_y, n_x))
        model = PlantModel(A_p=A, B_p=Bp, B_w=np.eye(n_x) + 0.3 * rng.standard_normal((n_x, n_x)),
                           C_mo=C, C_po=rng.standard_normal((1, n_x)), D_po=rng.standard_normal((1, n_u)))
        L = -Bp.T @ solve_continuous_are(A, Bp, np.eye(n_x), np.eye(n_u))
        K = solve_continuous_are(A.T, C.T, np.eye(n_x), np.eye(n_y)) @ C.T
        ctl = ControllerDesign.with_sigma(L, K, float(rng.uniform(0.3, 1.0)))
        R = np.eye(n_y) + spread * rng.standard_normal((n_y, n_y))
        sys_ = assemble_closed_loop(model, ctl, R)
        a = sys_.spectral_abscissa
        if a < -1e-2 and np.linalg.norm(sys_.A_R, 2) <= max_stiffness * abs(a):
            return model, ctl, R, sys_
    raise RuntimeError("no mild instance found")
