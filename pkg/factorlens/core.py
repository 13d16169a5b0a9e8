"""Shared numerics: data containers, eigendecomposition and Gaussian log-likelihoods.

All models are zero-mean, so the sample covariance is the second moment of the samples
and no mean is ever subtracted.
"""
import logging
from dataclasses import dataclass, field

import numpy as np
from scipy import linalg

from .exceptions import InputError, ParameterError

L = logging.getLogger(__name__)

LOG_2PI = np.log(2.0 * np.pi)
SYMMETRY_TOL = 1e-12
PSD_TOL = 1e-10


def _frozen_array(values, ndim):
    """Return a read-only float copy of values with the given dimension."""
    array = np.array(values, dtype=float)
    if array.ndim != ndim:
        raise InputError(f"Expected an array of dimension {ndim}, got shape {array.shape}")
    array.setflags(write=False)
    return array


def check_symmetric(matrix, tol=SYMMETRY_TOL):
    """Raise InputError if matrix is not square and symmetric to a relative tolerance."""
    matrix = np.asarray(matrix, dtype=float)
    if matrix.ndim != 2 or matrix.shape[0] != matrix.shape[1]:
        raise InputError(f"Expected a square matrix, got shape {matrix.shape}")
    if not np.all(np.isfinite(matrix)):
        raise InputError("Matrix has non-finite entries")
    scale = max(1.0, np.abs(matrix).max(initial=0.0))
    if np.abs(matrix - matrix.T).max(initial=0.0) > tol * scale:
        raise InputError("Matrix is not symmetric")
    return matrix


def symmetrize(matrix):
    """Return the symmetric part of a square matrix."""
    return 0.5 * (matrix + matrix.T)


@dataclass(frozen=True)
class Dataset:
    """N x M sample matrix, one row per observation."""

    samples: np.ndarray

    def __post_init__(self):
        samples = _frozen_array(self.samples, 2)
        if samples.shape[0] < 1 or samples.shape[1] < 1:
            raise InputError(f"Dataset needs at least one row and one column, got {samples.shape}")
        if not np.all(np.isfinite(samples)):
            raise InputError("Dataset has non-finite entries")
        object.__setattr__(self, "samples", samples)

    @property
    def n(self):
        """Number of samples."""
        return self.samples.shape[0]

    @property
    def m(self):
        """Dimension."""
        return self.samples.shape[1]

    def rows(self, start, stop):
        """Dataset made of rows start..stop-1 (0-indexed)."""
        return Dataset(self.samples[start:stop])

    def take(self, indices):
        """Dataset made of the given rows."""
        return Dataset(self.samples[np.asarray(indices)])

    def prefix(self, n_rows):
        """First n_rows samples."""
        return self.rows(0, n_rows)


@dataclass(frozen=True)
class CovMatrix:
    """Symmetric PSD matrix, optionally tagged with the sample count it was estimated from."""

    entries: np.ndarray
    n: int = None

    def __post_init__(self):
        entries = check_symmetric(self.entries)
        scale = max(1.0, np.abs(entries).max(initial=0.0))
        if linalg.eigvalsh(entries)[0] < -PSD_TOL * scale:
            raise InputError("Covariance matrix is not positive semidefinite")
        object.__setattr__(self, "entries", _frozen_array(symmetrize(entries), 2))
        if self.n is not None and self.n < 1:
            raise ParameterError(f"Sample count must be >= 1, got {self.n}")

    @property
    def m(self):
        """Dimension."""
        return self.entries.shape[0]


@dataclass(frozen=True)
class EigenSystem:
    """Orthonormal basis (columns) and descending eigenvalues of a symmetric matrix."""

    basis: np.ndarray
    values: np.ndarray

    @property
    def m(self):
        """Dimension."""
        return len(self.values)

    def reconstruct(self):
        """Return B diag(s) B^T."""
        return symmetrize((self.basis * self.values) @ self.basis.T)


@dataclass(frozen=True)
class FactorModelEstimate:
    """Factor model Sigma = loadings loadings^T + diag(residual).

    ``precision`` is the inverse of ``sigma`` or None if sigma is singular.
    ``metadata`` holds estimator name, parameters, warnings and solver traces.
    """

    loadings: np.ndarray
    residual: np.ndarray
    sigma: np.ndarray
    precision: np.ndarray = None
    metadata: dict = field(default_factory=dict)

    @property
    def rank(self):
        """Number of factors K."""
        return self.loadings.shape[1]

    @property
    def m(self):
        """Dimension."""
        return len(self.residual)

    @property
    def factor(self):
        """Low-rank part F."""
        return self.loadings @ self.loadings.T

    @classmethod
    def from_parts(cls, loadings, residual, metadata=None):
        """Assemble sigma and its inverse from loadings and residual variances."""
        residual = np.asarray(residual, dtype=float)
        loadings = np.asarray(loadings, dtype=float).reshape(len(residual), -1)
        if np.any(residual < 0):
            raise InputError("Residual variances must be nonnegative")
        sigma = loadings @ loadings.T
        sigma[np.diag_indices_from(sigma)] += residual
        sigma = symmetrize(sigma)
        return cls(
            loadings=_frozen_array(loadings, 2),
            residual=_frozen_array(residual, 1),
            sigma=_frozen_array(sigma, 2),
            precision=inverse_or_none(sigma),
            metadata=dict(metadata or {}),
        )

    def add_warning(self, message):
        """Record a recoverable numerical event."""
        self.metadata.setdefault("warnings", []).append(message)


def inverse_or_none(sigma):
    """Inverse of a positive definite matrix, None if it is singular."""
    try:
        factor = linalg.cho_factor(sigma, lower=True)
    except linalg.LinAlgError:
        return None
    scale = np.abs(sigma).max(initial=0.0)
    if scale == 0 or np.min(np.abs(np.diag(factor[0]))) <= np.sqrt(PSD_TOL * scale):
        return None
    return symmetrize(linalg.cho_solve(factor, np.eye(len(sigma))))


def sample_covariance(data):
    """Return (1/N) sum_n x_n x_n^T, without mean subtraction.

    Args:
        data (Dataset|ndarray): samples, one row per observation
    """
    if not isinstance(data, Dataset):
        data = Dataset(data)
    return symmetrize(data.samples.T @ data.samples / data.n)


def eigh_desc(matrix):
    """Eigendecomposition of a symmetric matrix with eigenvalues in descending order.

    Each eigenvector has its first nonzero component positive. Equal eigenvalues keep the
    order returned by the solver, which follows the input order for diagonal matrices.
    """
    if isinstance(matrix, CovMatrix):
        matrix = matrix.entries
    matrix = check_symmetric(matrix)
    values, basis = linalg.eigh(symmetrize(matrix))
    order = np.argsort(-values, kind="stable")
    values = values[order]
    basis = basis[:, order]

    tol = 1e-12 * max(1.0, np.abs(basis).max(initial=0.0))
    for col in range(basis.shape[1]):
        nonzero = np.flatnonzero(np.abs(basis[:, col]) > tol)
        if len(nonzero) and basis[nonzero[0], col] < 0:
            basis[:, col] *= -1
    return EigenSystem(basis=_frozen_array(basis, 2), values=_frozen_array(values, 1))


def as_covariance(data_or_cov, n=None):
    """Return (sample covariance array, sample count) from any supported input.

    A Dataset or a 2d array without ``n`` is read as samples. A CovMatrix, an EigenSystem or
    a square array given together with ``n`` is read as a covariance matrix.
    """
    if isinstance(data_or_cov, Dataset):
        return sample_covariance(data_or_cov), data_or_cov.n
    if isinstance(data_or_cov, CovMatrix):
        return np.array(data_or_cov.entries), n if n is not None else data_or_cov.n
    if isinstance(data_or_cov, EigenSystem):
        return data_or_cov.reconstruct(), n
    if n is None:
        dataset = Dataset(data_or_cov)
        return sample_covariance(dataset), dataset.n
    cov = CovMatrix(data_or_cov, n=n)
    return np.array(cov.entries), n


def as_eigensystem(data_or_cov, n=None):
    """Return (EigenSystem, sample count), reusing a precomputed EigenSystem."""
    if isinstance(data_or_cov, EigenSystem):
        return data_or_cov, n
    cov, n = as_covariance(data_or_cov, n=n)
    return eigh_desc(cov), n


def logdet(sigma):
    """Log-determinant of a PSD matrix, -inf if it is singular.

    Uses a Cholesky factorisation, with an eigenvalue fallback when it fails.
    """
    try:
        factor, _ = linalg.cho_factor(sigma, lower=True)
        diag = np.diag(factor)
        if np.min(diag) > 0 and np.min(diag) ** 2 > PSD_TOL * np.abs(sigma).max():
            return 2.0 * np.sum(np.log(diag))
    except linalg.LinAlgError:
        L.debug("Cholesky failed, using eigenvalues for log-determinant")
    values = linalg.eigvalsh(symmetrize(sigma))
    if values[-1] <= 0 or values[0] <= PSD_TOL * values[-1]:
        return -np.inf
    return float(np.sum(np.log(values)))


def gaussian_loglik(sigma, second_moment):
    """Return -1/2 (M log 2 pi + log det sigma + tr(sigma^-1 second_moment)), -inf if singular."""
    sigma = np.asarray(sigma, dtype=float)
    log_det = logdet(sigma)
    if not np.isfinite(log_det):
        return -np.inf
    trace = np.trace(linalg.solve(sigma, second_moment, assume_a="pos"))
    return -0.5 * (len(sigma) * LOG_2PI + log_det + trace)


def avg_loglik(sigma, data):
    """Average log-likelihood log p(X|sigma) / N of zero-mean Gaussian samples.

    Returns -inf when sigma is singular, so that model selection ranks it last.
    """
    if isinstance(sigma, FactorModelEstimate):
        sigma = sigma.sigma
    return gaussian_loglik(sigma, sample_covariance(data))


def expected_loglik(sigma, sigma_star):
    """Expected log-density of fresh N(0, sigma_star) data under N(0, sigma)."""
    if isinstance(sigma, FactorModelEstimate):
        sigma = sigma.sigma
    return gaussian_loglik(sigma, np.asarray(sigma_star, dtype=float))


def loglik_per_sample(sigma, data):
    """Log-density of each sample under N(0, sigma), -inf everywhere if sigma is singular."""
    if not isinstance(data, Dataset):
        data = Dataset(data)
    log_det = logdet(sigma)
    if not np.isfinite(log_det):
        return np.full(data.n, -np.inf)
    factor = linalg.cholesky(sigma, lower=True)
    whitened = linalg.solve_triangular(factor, data.samples.T, lower=True)
    return -0.5 * (data.m * LOG_2PI + log_det + np.sum(whitened**2, axis=0))


def kl_divergence(sigma, sigma_star):
    """KL(N(0, sigma_star) || N(0, sigma))."""
    return expected_loglik(sigma_star, sigma_star) - expected_loglik(sigma, sigma_star)
