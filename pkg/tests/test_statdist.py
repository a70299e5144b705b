import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from simdiag import statdist as sd


def test_chi2_sf_closed_forms():
    # df = 2 is exponential with mean 2
    assert sd.chi2_sf(2.0, 2) == pytest.approx(math.exp(-1.0), abs=1e-15)
    # df = 1: P(|Z| > sqrt(x)) = erfc(sqrt(x / 2))
    assert sd.chi2_sf(3.0, 1) == pytest.approx(math.erfc(math.sqrt(1.5)), abs=1e-14)
    # df = 4: exp(-x/2)(1 + x/2)
    assert sd.chi2_sf(5.0, 4) == pytest.approx(math.exp(-2.5) * 3.5, abs=1e-14)
    # the textbook 5% point of chi2(1)
    assert sd.chi2_sf(3.841458820694124, 1) == pytest.approx(0.05, abs=1e-12)


def test_chi2_sf_zero_df_is_point_mass():
    assert sd.chi2_sf(0.0, 0) == 1.0
    assert sd.chi2_sf(1e-9, 0) == 0.0


def test_chi2_sf_rejects_negative():
    with pytest.raises(ValueError):
        sd.chi2_sf(-1.0, 2)
    with pytest.raises(ValueError):
        sd.chi2_sf(1.0, -1)


def test_gamma_sf_exponential():
    assert sd.gamma_sf(1.0, sd.GammaParams(1.0, 2.0)) == pytest.approx(math.exp(-2.0), abs=1e-15)


def test_gamma_params_validate():
    with pytest.raises(ValueError):
        sd.GammaParams(0.0, 1.0)
    with pytest.raises(ValueError):
        sd.GammaParams(1.0, float("inf"))


@given(st.integers(1, 6), st.integers(0, 2**32 - 1))
def test_box_gamma_matches_first_two_moments(d, seed):
    rng = np.random.default_rng(seed)
    L = rng.standard_normal((d, d))
    Theta = L @ L.T
    params = sd.box_gamma_params(Theta)
    tr = np.trace(Theta)
    tr2 = np.trace(Theta @ Theta)
    assert params.mean == pytest.approx(tr, rel=1e-10)
    assert params.variance == pytest.approx(2 * tr2, rel=1e-10)


def test_box_gamma_frozen():
    params = sd.box_gamma_params(np.diag([1.0, 3.0]))
    # tr = 4, tr(Theta^2) = 10
    assert params.shape == pytest.approx(0.8)
    assert params.rate == pytest.approx(0.2)


def test_box_gamma_zero_trace_degenerate():
    assert isinstance(sd.box_gamma_params(np.zeros((3, 3))), sd.Degenerate)
    assert sd.Degenerate().sf(0.0) == 1.0


def test_distribution_dict_roundtrip():
    for dist in (sd.ChiSquared(3), sd.Gamma(sd.GammaParams(2.0, 0.5)), sd.Degenerate()):
        assert sd.distribution_from_dict(dist.to_dict()) == dist
    with pytest.raises(ValueError):
        sd.distribution_from_dict({"kind": "normal"})


def test_mvn_sample_moments(rng):
    cov = np.array([[2.0, 0.5, 0.0], [0.5, 1.0, 0.3], [0.0, 0.3, 0.5]])
    draws = sd.mvn_sample(np.array([1.0, -1.0, 0.0]), cov, rng, size=200_000)
    np.testing.assert_allclose(draws.mean(axis=0), [1.0, -1.0, 0.0], atol=0.02)
    np.testing.assert_allclose(np.cov(draws, rowvar=False), cov, atol=0.03)


def test_mvn_sample_singular_covariance(rng):
    v = np.array([1.0, 2.0])
    draws = sd.mvn_sample(np.zeros(2), np.outer(v, v), rng, size=1000)
    # every draw lies on the line spanned by v
    np.testing.assert_allclose(draws[:, 1], 2 * draws[:, 0], atol=1e-10)
    assert sd.mvn_sample(np.zeros(2), np.eye(2), rng).shape == (2,)


def test_mvn_sample_rejects_indefinite(rng):
    with pytest.raises(ValueError):
        sd.mvn_sample(np.zeros(2), np.diag([1.0, -1.0]), rng)
