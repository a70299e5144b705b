import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from simdiag import linalg as la
from simdiag.estimators import (
    MatrixEstimate,
    estimate_from_moments,
    markov_transition_estimator,
    mean_estimator,
    stationary_from_transition,
    var_ls_estimator,
)


def test_matrix_estimate_validates():
    with pytest.raises(ValueError):
        MatrixEstimate(np.eye(2), np.eye(3), 1.0, 10)
    with pytest.raises(ValueError):
        MatrixEstimate(np.eye(2), np.eye(4), 0.0, 10)
    e = MatrixEstimate(np.eye(2), np.triu(np.ones((4, 4))), 2.0, 4)
    np.testing.assert_array_equal(e.sigma_hat, e.sigma_hat.T)


def test_mean_estimator_matches_vec_moments(rng):
    X = rng.standard_normal((50, 3, 3))
    e = mean_estimator(X)
    np.testing.assert_allclose(e.a, X.mean(axis=0))
    flat = np.array([la.vec(x) for x in X])
    np.testing.assert_allclose(e.sigma_hat, np.cov(flat.T, ddof=1))
    assert e.c_n == pytest.approx(np.sqrt(50))
    assert e.n == 50


def test_mean_estimator_needs_two_samples():
    with pytest.raises(ValueError):
        mean_estimator(np.zeros((1, 2, 2)))


def test_estimate_from_moments_layout():
    e = estimate_from_moments([1.0, 2.0, 3.0, 4.0], np.eye(4), 9)
    np.testing.assert_array_equal(e.a, [[1.0, 3.0], [2.0, 4.0]])
    assert e.c_n == 3.0


def _simulate_var(Phi, T, rng):
    d = Phi.shape[0]
    Y = np.zeros((T, d))
    for t in range(1, T):
        Y[t] = Phi @ Y[t - 1] + rng.standard_normal(d)
    return Y


def test_var_ls_matches_statsmodels(rng):
    sm = pytest.importorskip("statsmodels.tsa.api")
    Phi = np.array([[0.5, 0.1], [-0.2, 0.3]])
    Y = _simulate_var(Phi, 400, rng)
    fit = var_ls_estimator(Y, order=2)
    ref = sm.VAR(Y).fit(2, trend="c")
    # params: rows (const, lag1 y1, lag1 y2, lag2 y1, lag2 y2), columns equations
    np.testing.assert_allclose(fit.coefs[0], ref.params[1:3].T, atol=1e-10)
    np.testing.assert_allclose(fit.coefs[1], ref.params[3:5].T, atol=1e-10)
    np.testing.assert_allclose(fit.intercept, ref.params[0], atol=1e-10)
    np.testing.assert_allclose(fit.sigma_e, ref.sigma_u, atol=1e-10)
    for j, est in enumerate(fit.estimates):
        se = np.sqrt(np.diag(est.sigma_hat)) / est.c_n
        ref_se = ref.stderr[1 + 2 * j : 3 + 2 * j].T  # d x d, entry (r, s)
        np.testing.assert_allclose(la.mat(se), ref_se, rtol=1e-8)


def test_var_ls_too_short():
    with pytest.raises(ValueError, match="too short"):
        var_ls_estimator(np.zeros((3, 2)), order=1)


def test_var_ls_singular_moment():
    Y = np.ones((20, 2))
    with pytest.raises(ValueError, match="singular"):
        var_ls_estimator(Y, order=1)


def test_markov_estimator_hand_computed():
    fit = markov_transition_estimator([1, 2, 1, 1, 2], 2)
    np.testing.assert_allclose(fit.p_hat, [[1 / 3, 2 / 3], [1.0, 0.0]])
    np.testing.assert_allclose(fit.pi_hat, [0.75, 0.25])
    expected = np.zeros((4, 4))
    block = np.array([[2 / 9, -2 / 9], [-2 / 9, 2 / 9]]) / 0.75
    expected[np.ix_([0, 2], [0, 2])] = block  # row 1 of P sits at vec slots 0 and 2
    np.testing.assert_allclose(fit.estimate.sigma_hat, expected, atol=1e-15)
    assert fit.estimate.n == 4


def test_markov_estimator_errors():
    with pytest.raises(ValueError, match="never visited"):
        markov_transition_estimator([1, 1, 1, 2], 3)
    with pytest.raises(ValueError):
        markov_transition_estimator([1, 4, 1], 3)
    with pytest.raises(ValueError):
        markov_transition_estimator([1.5, 1, 2], 2)


def test_stationary_two_state_closed_form():
    pi = stationary_from_transition(np.array([[0.9, 0.1], [0.5, 0.5]]))
    np.testing.assert_allclose(pi, [5 / 6, 1 / 6], atol=1e-12)


def test_stationary_reducible_raises():
    with pytest.raises(ValueError):
        stationary_from_transition(np.eye(2))


@given(st.integers(2, 5), st.integers(0, 2**32 - 1))
def test_stationary_is_fixed_point(d, seed):
    rng = np.random.default_rng(seed)
    P = rng.dirichlet(np.ones(d), size=d)
    pi = stationary_from_transition(P)
    np.testing.assert_allclose(P.T @ pi, pi, atol=1e-10)
    assert pi.sum() == pytest.approx(1.0)
    assert np.all(pi >= 0)
