import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from cdl_saliency import coding
from cdl_saliency.errors import ConvergenceError, DimensionError, InputError
from oracles import lasso_pg, lasso_value, random_instance, soft

METHODS = coding.METHODS


class TestKKT:
    def test_zero_everything(self):
        D = np.eye(3)
        assert coding.kkt_residual(np.zeros(3), D, np.zeros(3), 0.5) == 0.0

    def test_slack_off_support(self):
        lam = 0.3
        D = np.eye(4)[:, :2]
        x = np.array([lam + 0.2, 0.0, 0.0, 0.0])
        assert coding.kkt_residual(x, D, np.zeros(2), lam) == pytest.approx(0.2, abs=1e-15)

    def test_on_support(self):
        # alpha = 1 on an identity atom with x = 2: g = -1, violation |-1 + 0.5| = 0.5
        D = np.eye(1)
        assert coding.kkt_residual(np.array([2.0]), D, np.array([1.0]), 0.5) == pytest.approx(0.5)

    def test_exact_minimizer(self):
        rng = np.random.default_rng(4)
        Q, _ = np.linalg.qr(rng.standard_normal((6, 6)))
        x = rng.standard_normal(6)
        a = soft(Q.T @ x, 0.2)
        assert coding.kkt_residual(x, Q, a, 0.2) <= 1e-8

    def test_dimension_mismatch(self):
        with pytest.raises(DimensionError):
            coding.kkt_residual(np.zeros(3), np.eye(3), np.zeros(2), 0.1)


@pytest.mark.parametrize("method", METHODS)
class TestLassoSolve:
    def test_zero_signal(self, method):
        D = np.random.default_rng(0).standard_normal((5, 8))
        code = coding.lasso_solve(np.zeros(5), D, 0.1, method=method)
        assert code.nnz == 0 and not code.alpha.any()

    def test_orthonormal_closed_form(self, method):
        rng = np.random.default_rng(1)
        Q, _ = np.linalg.qr(rng.standard_normal((8, 8)))
        D = Q[:, :5]
        x = rng.standard_normal(8)
        code = coding.lasso_solve(x, D, 0.3, method=method)
        np.testing.assert_allclose(code.alpha, soft(D.T @ x, 0.3), atol=1e-10, rtol=0)

    def test_small_instance_against_oracle(self, method):
        rng = np.random.default_rng(2)
        D = rng.standard_normal((4, 6))
        x = rng.standard_normal(4)
        oracle = lasso_pg(x, D, 0.1)
        code = coding.lasso_solve(x, D, 0.1, method=method)
        np.testing.assert_allclose(code.alpha, oracle, atol=1e-6)

    def test_large_lambda_gives_zero(self, method):
        rng = np.random.default_rng(3)
        D = rng.standard_normal((6, 10))
        x = rng.standard_normal(6)
        lam = np.max(np.abs(D.T @ x))
        for scale in (1.0, 1.5):
            assert coding.lasso_solve(x, D, lam * scale, method=method).nnz == 0

    def test_objective_trace_monotone(self, method):
        rng = np.random.default_rng(5)
        D = rng.standard_normal((12, 30))
        D /= np.linalg.norm(D, axis=0)
        x = rng.standard_normal(12)
        code = coding.lasso_solve(x, D, 0.05, method=method, trace=True)
        tr = np.array(code.trace)
        assert tr[0] == pytest.approx(0.5 * x @ x)
        assert np.all(np.diff(tr) <= 1e-12 * (1 + np.abs(tr[:-1])))
        assert tr[-1] == pytest.approx(lasso_value(x, D, code.alpha, 0.05), abs=1e-12)

    def test_certificate(self, method):
        rng = np.random.default_rng(6)
        for _ in range(20):
            x, D, lam = random_instance(rng, 16, 24)
            code = coding.lasso_solve(x, D, lam, method=method)
            assert code.kkt <= coding.DEFAULT_TOL
            assert coding.kkt_residual(x, D, code.alpha, lam) <= coding.DEFAULT_TOL
            assert code.nnz == np.count_nonzero(code.alpha)


class TestErrors:
    def test_non_finite_signal(self):
        with pytest.raises(InputError):
            coding.lasso_solve(np.array([np.nan, 0.0]), np.eye(2), 0.1)

    def test_non_finite_dictionary(self):
        with pytest.raises(InputError):
            coding.lasso_solve(np.zeros(2), np.array([[np.inf, 0], [0, 1]]), 0.1)

    def test_negative_lambda(self):
        with pytest.raises(InputError):
            coding.lasso_solve(np.zeros(2), np.eye(2), -0.1)

    def test_wrong_length(self):
        with pytest.raises(DimensionError):
            coding.lasso_solve(np.zeros(3), np.eye(2), 0.1)

    def test_budget_exhausted_carries_residual(self):
        rng = np.random.default_rng(7)
        D = rng.standard_normal((20, 60))
        x = rng.standard_normal(20)
        with pytest.raises(ConvergenceError) as err:
            coding.lasso_solve(x, D, 0.01, max_iter=1)
        assert err.value.residual > coding.DEFAULT_TOL
        assert err.value.iterations == 1

    def test_unknown_method(self):
        with pytest.raises(ValueError):
            coding.lasso_solve(np.zeros(2), np.eye(2), 0.1, method="lars")


class TestDegenerate:
    def test_duplicate_and_negated_atoms(self):
        rng = np.random.default_rng(8)
        D = rng.standard_normal((5, 4))
        D = np.hstack([D, D[:, :2], -D[:, :1]])
        x = rng.standard_normal(5)
        code = coding.lasso_solve(x, D, 0.05)
        ref = lasso_pg(x, D, 0.05)
        assert code.kkt <= 1e-6
        assert lasso_value(x, D, code.alpha, 0.05) == pytest.approx(lasso_value(x, D, ref, 0.05), abs=1e-9)

    def test_highly_overcomplete(self):
        rng = np.random.default_rng(9)
        for _ in range(30):
            D = rng.standard_normal((5, 60))
            D /= np.linalg.norm(D, axis=0)
            x = rng.standard_normal(5)
            lam = 0.05 * np.max(np.abs(D.T @ x))
            code = coding.lasso_solve(x, D, lam)
            assert code.kkt <= 1e-6
            assert code.nnz <= 5

    def test_lambda_zero_exact_fit(self):
        rng = np.random.default_rng(10)
        Q, _ = np.linalg.qr(rng.standard_normal((6, 6)))
        x = rng.standard_normal(6)
        code = coding.lasso_solve(x, Q, 0.0)
        np.testing.assert_allclose(Q @ code.alpha, x, atol=1e-10)


class TestSolveMany:
    def test_matches_single(self):
        rng = np.random.default_rng(11)
        D = rng.standard_normal((10, 25))
        D /= np.linalg.norm(D, axis=0)
        X = rng.standard_normal((10, 7))
        A = coding.lasso_solve_many(X, D, 0.1)
        for i in range(7):
            single = coding.lasso_solve(X[:, i], D, 0.1).alpha
            np.testing.assert_allclose(A[:, i], single, atol=1e-9)


@settings(max_examples=40, deadline=None)
@given(st.integers(0, 10_000))
def test_l1_norm_non_increasing_in_lambda(seed):
    rng = np.random.default_rng(seed)
    x, D, _ = random_instance(rng, 10, 20)
    top = np.max(np.abs(D.T @ x))
    norms = [np.abs(coding.lasso_solve(x, D, lam).alpha).sum() for lam in np.linspace(0.02, 1.1, 12) * top]
    assert np.all(np.diff(norms) <= 1e-7)
    assert norms[-1] == 0.0


def test_soft_threshold():
    np.testing.assert_array_equal(coding.soft_threshold(np.array([-2.0, -0.5, 0.0, 0.5, 2.0]), 1.0),
                                  [-1.0, 0.0, 0.0, 0.0, 1.0])
