import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from sdprelax import symmat
from sdprelax.errors import CornerMismatch, NonFinite, NotPsd, ShapeMismatch


def rand_sym(n, seed):
    M = np.random.default_rng(seed).standard_normal((n, n))
    return 0.5 * (M + M.T)


class TestSymEig:
    def test_identity(self):
        vals, vecs = symmat.sym_eig(np.eye(3))
        assert np.allclose(vals, [1, 1, 1])

    def test_diag_descending(self):
        vals, vecs = symmat.sym_eig(np.diag([2.0, -1.0]))
        assert np.allclose(vals, [2.0, -1.0])
        assert abs(abs(vecs[0, 0]) - 1.0) < 1e-12
        assert abs(abs(vecs[1, 1]) - 1.0) < 1e-12

    def test_reconstruction_random(self):
        M = rand_sym(5, 7)
        vals, vecs = symmat.sym_eig(M)
        err = np.linalg.norm((vecs * vals) @ vecs.T - M)
        assert err <= 1e-10 * (1 + np.linalg.norm(M))
        assert np.linalg.norm(vecs.T @ vecs - np.eye(5)) <= 1e-12 * 5

    def test_nonfinite_raises(self):
        M = np.eye(2)
        M[0, 1] = np.nan
        with pytest.raises(NonFinite):
            symmat.sym_eig(M)

    def test_nonsquare_raises(self):
        with pytest.raises(ShapeMismatch):
            symmat.sym_eig(np.zeros((2, 3)))


class TestPsdProject:
    def test_identity_fixed(self):
        assert np.allclose(symmat.psd_project(np.eye(2)), np.eye(2))

    def test_clip_negative(self):
        out = symmat.psd_project(np.diag([1.0, -1.0]))
        assert np.allclose(out, np.diag([1.0, 0.0]))

    def test_offdiag_example(self):
        # eigenvalues +-1; the +1 eigenvector is (1,1)/sqrt(2)
        out = symmat.psd_project(np.array([[0.0, 1.0], [1.0, 0.0]]))
        assert np.allclose(out, np.full((2, 2), 0.5), atol=1e-14)

    @settings(max_examples=25, deadline=None)
    @given(st.integers(0, 10_000), st.integers(2, 8))
    def test_idempotent_and_lipschitz(self, seed, n):
        A = rand_sym(n, seed)
        B = rand_sym(n, seed + 1)
        PA = symmat.psd_project(A)
        PB = symmat.psd_project(B)
        assert np.linalg.norm(symmat.psd_project(PA) - PA) <= 1e-10 * (1 + np.linalg.norm(PA))
        assert np.linalg.norm(PA - PB) <= np.linalg.norm(A - B) + 1e-10


class TestFactorizeHat:
    def test_corner_only(self):
        Y = np.zeros((2, 2))
        Y[0, 0] = 1.0
        R = symmat.psd_factorize_hat(Y)
        assert R.shape == (1, 1)
        assert np.allclose(R, [[0.0]])

    def test_all_ones(self):
        R = symmat.psd_factorize_hat(np.ones((2, 2)))
        assert R.shape == (1, 1)
        assert np.allclose(R, [[1.0]])

    @pytest.mark.parametrize("seed", range(5))
    def test_round_trip_random(self, seed):
        rng = np.random.default_rng(seed)
        n, r = 6, 3
        R0 = rng.standard_normal((n, r))
        Y = symmat.gram_hat(R0)
        R = symmat.psd_factorize_hat(Y)
        assert np.linalg.norm(symmat.gram_hat(R) - Y) <= 1e-10 * (1 + np.linalg.norm(Y))
        # first hat row is exactly e1
        H = symmat.hat(R)
        assert H[0, 0] == 1.0 and np.all(H[0, 1:] == 0.0)

    def test_rank_detection(self):
        rng = np.random.default_rng(3)
        R0 = rng.standard_normal((5, 2))
        Y = symmat.gram_hat(R0)
        R = symmat.psd_factorize_hat(Y)
        assert R.shape[1] == np.linalg.matrix_rank(Y, tol=1e-8)

    def test_corner_mismatch(self):
        with pytest.raises(CornerMismatch):
            symmat.psd_factorize_hat(2.0 * np.ones((2, 2)))

    def test_not_psd(self):
        Y = np.array([[1.0, 2.0], [2.0, 1.0]])  # eigenvalues 3, -1
        with pytest.raises(NotPsd):
            symmat.psd_factorize_hat(Y)

    def test_deterministic(self):
        Y = symmat.gram_hat(np.random.default_rng(11).standard_normal((4, 2)))
        R1 = symmat.psd_factorize_hat(Y)
        R2 = symmat.psd_factorize_hat(Y.copy())
        assert np.array_equal(R1, R2)


class TestCongruence:
    def test_identity_transform(self):
        M = rand_sym(4, 0)
        assert np.allclose(symmat.congruence(M, np.eye(4)), M)

    def test_diag_example(self):
        out = symmat.congruence(np.eye(2), np.diag([2.0, 3.0]))
        assert np.allclose(out, np.diag([4.0, 9.0]))

    def test_trace_pairing(self):
        rng = np.random.default_rng(5)
        C = rand_sym(4, 1)
        K = rng.standard_normal((4, 4))
        Y = rand_sym(4, 2)
        lhs = np.sum(symmat.congruence(C, K) * Y)
        rhs = np.sum(C * (K.T @ Y @ K))
        assert abs(lhs - rhs) <= 1e-12 * (1 + abs(lhs))

    def test_inverse_round_trip(self):
        rng = np.random.default_rng(9)
        M = rand_sym(5, 4)
        K = rng.standard_normal((5, 5)) + 5 * np.eye(5)
        out = symmat.congruence(symmat.congruence(M, K), np.linalg.inv(K))
        assert np.linalg.norm(out - M) <= 1e-10 * (1 + np.linalg.norm(M))

    def test_shape_mismatch(self):
        with pytest.raises(ShapeMismatch):
            symmat.congruence(np.eye(3), np.zeros((2, 2)))
