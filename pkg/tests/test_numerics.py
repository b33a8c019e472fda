import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from scipy.integrate import quad_vec
from scipy.linalg import expm

from helpers import random_hurwitz
from ncsroute.errors import NumericalError, PreconditionError, SingularSystemError, UnstableSystemError
from ncsroute.numerics import (Definiteness, LyapunovMethod, definiteness, matrix_exponential,
                               norms_and_condition, solve_lyapunov)
from ncsroute.system import assemble_closed_loop


def eig_lyapunov(A, Q):
    """Modal oracle: X = V (Qt / -(l_i + conj l_j)) V^H with Qt = V^-1 Q V^-H."""
    lam, V = np.linalg.eig(A)
    Vi = np.linalg.inv(V)
    Qt = Vi @ Q @ Vi.conj().T
    Xt = -Qt / (lam[:, None] + lam.conj()[None, :])
    return (V @ Xt @ V.conj().T).real


class TestLyapunov:
    def test_scalar(self):
        sol = solve_lyapunov([[-1.0]], [[1.0]])
        assert sol.X[0, 0] == pytest.approx(0.5, abs=1e-15)

    def test_decoupled(self):
        np.testing.assert_allclose(solve_lyapunov(-np.eye(2), np.eye(2)).X, 0.5 * np.eye(2), atol=1e-15)

    @pytest.mark.parametrize("method", list(LyapunovMethod))
    def test_matches_modal_oracle(self, rng, method):
        for m in (1, 3, 6):
            A = random_hurwitz(rng, m)
            B = rng.standard_normal((m, 2))
            X = solve_lyapunov(A, B @ B.T, method=method).X
            np.testing.assert_allclose(X, eig_lyapunov(A, B @ B.T), rtol=1e-9, atol=1e-12)

    def test_gramian_against_quadrature(self, example_design):
        model, ctl = example_design
        sys_ = assemble_closed_loop(model, ctl, np.eye(2))
        A, Q = sys_.A_R, sys_.B @ sys_.B.T
        X = solve_lyapunov(A, Q).X
        ref, _ = quad_vec(lambda t: expm(A * t) @ Q @ expm(A.T * t), 0.0, 100.0, epsrel=1e-11, epsabs=0)
        assert np.linalg.norm(X - ref) / np.linalg.norm(ref) < 1e-6

    def test_residual_over_random_systems(self):
        rng = np.random.default_rng(7)
        for _ in range(1000):
            m = int(rng.integers(1, 11))
            A = random_hurwitz(rng, m)
            B = rng.standard_normal((m, m))
            Q = B @ B.T
            sol = solve_lyapunov(A, Q)
            res = np.linalg.norm(A @ sol.X + sol.X @ A.T + Q) / np.linalg.norm(Q)
            assert res <= 1e-10
            assert np.linalg.eigvalsh(sol.X)[0] >= -1e-10
            np.testing.assert_array_equal(sol.X, sol.X.T)

    def test_unstable_rejected(self):
        with pytest.raises(UnstableSystemError) as err:
            solve_lyapunov(np.diag([-1.0, 0.5]), np.eye(2))
        assert err.value.abscissa == pytest.approx(0.5)

    def test_singular_pairing(self):
        with pytest.raises(SingularSystemError):
            solve_lyapunov(np.diag([1.0, -1.0]), np.eye(2), check_stable=False)

    def test_asymmetric_q(self):
        with pytest.raises(PreconditionError):
            solve_lyapunov(-np.eye(2), [[1.0, 0.5], [0.0, 1.0]])


class TestExponential:
    def test_zero(self):
        np.testing.assert_array_equal(matrix_exponential(np.zeros((3, 3))), np.eye(3))

    def test_diagonal(self):
        np.testing.assert_allclose(matrix_exponential(np.diag([-1.0, -2.0])),
                                   np.diag(np.exp([-1.0, -2.0])), rtol=1e-14)

    def test_inverse_identity(self, rng):
        for _ in range(20):
            A = rng.standard_normal((4, 4))
            np.testing.assert_allclose(matrix_exponential(A) @ matrix_exponential(-A), np.eye(4), atol=1e-10)

    @settings(max_examples=50, deadline=None)
    @given(seed=st.integers(0, 2**32 - 1), s=st.floats(0, 2), t=st.floats(0, 2))
    def test_semigroup(self, seed, s, t):
        A = random_hurwitz(np.random.default_rng(seed), 4)
        lhs = matrix_exponential(A, s + t)
        rhs = matrix_exponential(A, s) @ matrix_exponential(A, t)
        np.testing.assert_allclose(lhs, rhs, atol=1e-9)

    def test_overflow(self):
        with pytest.raises(NumericalError):
            matrix_exponential(1000.0 * np.eye(2))


class TestDefiniteness:
    def test_identity(self):
        v = definiteness(np.eye(3), 1e-9)
        assert v.verdict is Definiteness.POSITIVE_DEFINITE and v.min_eigenvalue == pytest.approx(1.0)

    def test_indefinite(self):
        assert definiteness(np.diag([1.0, -1.0])).verdict is Definiteness.INDEFINITE

    def test_negative(self):
        assert definiteness(-np.eye(2)).negative_definite

    def test_rank_one_gram(self, example_design):
        model, ctl = example_design
        Cp = assemble_closed_loop(model, ctl, np.eye(2)).C_p
        G = Cp.T @ Cp
        assert np.sum(np.linalg.svd(G, compute_uv=False) > 1e-12) == 1
        assert definiteness(G).verdict is Definiteness.SEMIDEFINITE

    def test_asymmetric(self):
        with pytest.raises(PreconditionError):
            definiteness([[1.0, 1.0], [0.0, 1.0]])


class TestNorms:
    def test_identity(self):
        n = norms_and_condition(np.eye(5))
        assert n.frobenius == pytest.approx(np.sqrt(5)) and n.spectral == 1 and n.condition_number == 1

    def test_diag(self):
        n = norms_and_condition(np.diag([2.0, 1.0]))
        assert (n.spectral, n.sigma_min, n.condition_number) == (2.0, 1.0, 2.0)

    def test_sigma_min_against_gram(self, example_design):
        model, ctl = example_design
        B = assemble_closed_loop(model, ctl, np.eye(2)).B
        ref = np.sqrt(np.linalg.eigvalsh(B.T @ B)[0])
        n = norms_and_condition(B)
        assert n.sigma_min > 0
        assert n.sigma_min == pytest.approx(ref, rel=1e-8)

    def test_singular(self):
        assert norms_and_condition(np.zeros((2, 2))).condition_number == np.inf

    def test_nonfinite(self):
        with pytest.raises(PreconditionError):
            norms_and_condition([[np.nan]])
