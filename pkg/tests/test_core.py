"""Test core module."""
import numpy as np
import pytest
from numpy.testing import assert_allclose

from factorlens import core
from factorlens.exceptions import InputError


def test_sample_covariance_no_mean_subtraction():
    """Test that the mean is never subtracted."""
    data = np.array([[1.0, 1.0], [1.0, 1.0]])
    assert_allclose(core.sample_covariance(data), np.ones((2, 2)))


def test_dataset_rejects_nonfinite():
    """ """
    with pytest.raises(InputError):
        core.Dataset(np.array([[1.0, np.nan]]))
    with pytest.raises(InputError):
        core.Dataset(np.zeros((0, 3)))


def test_dataset_rows():
    """ """
    data = core.Dataset(np.arange(12.0).reshape(6, 2))
    assert data.n == 6 and data.m == 2
    assert_allclose(data.prefix(2).samples, [[0, 1], [2, 3]])
    assert_allclose(data.rows(4, 6).samples, [[8, 9], [10, 11]])
    assert_allclose(data.take([5, 0]).samples, [[10, 11], [0, 1]])


def test_covmatrix_validation():
    """ """
    with pytest.raises(InputError):
        core.CovMatrix(np.array([[1.0, 0.5], [0.0, 1.0]]))
    with pytest.raises(InputError):
        core.CovMatrix(np.array([[1.0, 2.0], [2.0, 1.0]]))
    assert core.CovMatrix(np.eye(3), n=4).m == 3


def test_eigh_desc():
    """Test order, reconstruction and sign convention."""
    rng = np.random.default_rng(0)
    a = rng.standard_normal((5, 5))
    matrix = a @ a.T
    eig = core.eigh_desc(matrix)
    assert np.all(np.diff(eig.values) <= 0)
    assert_allclose(eig.reconstruct(), matrix, atol=1e-10)
    assert_allclose(eig.basis.T @ eig.basis, np.eye(5), atol=1e-12)
    for col in eig.basis.T:
        assert col[np.flatnonzero(np.abs(col) > 1e-12)[0]] > 0


def test_as_covariance():
    """Test that arrays are samples without n and covariances with n."""
    samples = np.array([[1.0, 0.0], [0.0, 2.0], [1.0, 2.0]])
    cov, n = core.as_covariance(samples)
    assert n == 3
    assert_allclose(cov, samples.T @ samples / 3)

    cov, n = core.as_covariance(np.eye(2), n=7)
    assert n == 7
    assert_allclose(cov, np.eye(2))

    cov, n = core.as_covariance(core.CovMatrix(2 * np.eye(2), n=5))
    assert n == 5


def test_logdet():
    """ """
    assert core.logdet(np.diag([2.0, 3.0])) == pytest.approx(np.log(6.0))
    assert core.logdet(np.diag([1.0, 0.0])) == -np.inf


def test_avg_loglik():
    """Test closed form for identity covariance and the singular sentinel."""
    data = core.Dataset(np.array([[1.0, 0.0], [0.0, 2.0]]))
    expected = -0.5 * (2 * np.log(2 * np.pi) + 2.5)
    assert core.avg_loglik(np.eye(2), data) == pytest.approx(expected)
    assert core.avg_loglik(np.diag([1.0, 0.0]), data) == -np.inf


def test_loglik_per_sample():
    """ """
    rng = np.random.default_rng(1)
    data = core.Dataset(rng.standard_normal((20, 3)))
    sigma = np.array([[2.0, 0.3, 0.0], [0.3, 1.0, 0.2], [0.0, 0.2, 1.5]])
    per_sample = core.loglik_per_sample(sigma, data)
    assert per_sample.shape == (20,)
    assert np.mean(per_sample) == pytest.approx(core.avg_loglik(sigma, data))


def test_kl_divergence():
    """ """
    sigma_star = np.array([[2.0, 0.5], [0.5, 1.0]])
    assert core.kl_divergence(sigma_star, sigma_star) == pytest.approx(0.0, abs=1e-12)
    assert core.kl_divergence(np.eye(2), sigma_star) > 0


def test_expected_loglik_maximized_at_truth():
    """ """
    sigma_star = np.array([[2.0, 0.5], [0.5, 1.0]])
    best = core.expected_loglik(sigma_star, sigma_star)
    assert core.expected_loglik(1.1 * sigma_star, sigma_star) < best
    assert best == pytest.approx(-0.5 * (2 * np.log(2 * np.pi) + np.log(1.75) + 2))


def test_factor_model_estimate():
    """ """
    estimate = core.FactorModelEstimate.from_parts(
        np.array([[1.0], [2.0]]), np.array([0.5, 0.5]), {"estimator": "test"}
    )
    assert estimate.rank == 1 and estimate.m == 2
    assert_allclose(estimate.sigma, [[1.5, 2.0], [2.0, 4.5]])
    assert_allclose(estimate.precision @ estimate.sigma, np.eye(2), atol=1e-12)
    estimate.add_warning("something")
    assert estimate.metadata["warnings"] == ["something"]

    singular = core.FactorModelEstimate.from_parts(np.zeros((2, 0)), np.zeros(2))
    assert singular.precision is None
    with pytest.raises(InputError):
        core.FactorModelEstimate.from_parts(np.zeros((2, 0)), np.array([1.0, -1.0]))


def test_singularity_is_relative_to_scale():
    """Test that a well-conditioned matrix with tiny entries is not reported as singular."""
    a = np.array([[2.0, 0.5, 0.0], [0.5, 1.0, 0.2], [0.0, 0.2, 3.0]])
    small = 1e-12 * a
    assert_allclose(core.inverse_or_none(small), 1e12 * np.linalg.inv(a), rtol=1e-10)
    assert core.logdet(small) == pytest.approx(np.log(np.linalg.det(a)) + 3 * np.log(1e-12))
    estimate = core.FactorModelEstimate.from_parts(np.zeros((3, 0)), [1e-12, 2e-12, 3e-12])
    assert estimate.precision is not None

    assert core.inverse_or_none(np.zeros((2, 2))) is None
    assert core.inverse_or_none(1e-12 * np.ones((2, 2))) is None
    assert core.logdet(1e-12 * np.ones((2, 2))) == -np.inf
