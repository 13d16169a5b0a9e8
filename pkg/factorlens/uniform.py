"""Uniform-residual estimators: rank-constrained URM and trace-penalized UTM."""
import logging
from dataclasses import dataclass

import numpy as np

from .core import FactorModelEstimate, as_eigensystem
from .exceptions import ParameterError

L = logging.getLogger(__name__)


@dataclass(frozen=True)
class UtmSolution:
    """UTM estimate with its spectral description.

    Args:
        estimate (FactorModelEstimate): the estimate
        v_hat (float): reciprocal residual variance, 1/v_hat is the flat eigenvalue level
        k_effective (int): number of eigenvalues kept above the flat level
        eigenvalues (ndarray): eigenvalues h_1 >= ... >= h_M of the estimate
    """

    estimate: FactorModelEstimate
    v_hat: float
    k_effective: int
    eigenvalues: np.ndarray


def check_k(k, m):
    """Raise ParameterError unless 0 <= k <= m - 1."""
    if not 0 <= k <= m - 1:
        raise ParameterError(f"Number of factors must satisfy 0 <= K <= M-1 = {m - 1}, got {k}")


def check_n(n):
    """Raise ParameterError unless the sample count is known and positive."""
    if n is None:
        raise ParameterError("The sample count n is needed with a precomputed covariance")
    if n < 1:
        raise ParameterError(f"Sample count must be >= 1, got {n}")


def _factor_loadings(eig, coefficients):
    """Loadings B_K diag(sqrt(c)) for the top len(coefficients) eigenvectors."""
    k = len(coefficients)
    return eig.basis[:, :k] * np.sqrt(coefficients)


def urm_coefficients(values, k):
    """Return (factor coefficients s_k - sigma2 clamped at 0, sigma2, clamped count)."""
    sigma2 = float(np.mean(values[k:]))
    coefficients = values[:k] - sigma2
    n_clamped = int(np.sum(coefficients < 0))
    return np.maximum(coefficients, 0.0), sigma2, n_clamped


def _urm_from_eig(eig, k, n=None):
    check_k(k, eig.m)
    coefficients, sigma2, n_clamped = urm_coefficients(eig.values, k)
    estimate = FactorModelEstimate.from_parts(
        _factor_loadings(eig, coefficients),
        np.full(eig.m, sigma2),
        metadata={"estimator": "urm", "k": int(k), "sigma2": sigma2, "n": n},
    )
    if n_clamped:
        L.warning("URM clamped %s negative factor coefficients to 0 (K=%s)", n_clamped, k)
        estimate.add_warning(f"clamped {n_clamped} negative factor coefficients")
    return estimate


def urm_fit(data_or_cov, k, n=None):
    """Rank-constrained uniform-residual maximum likelihood estimate.

    The residual variance is the average of the last M-K sample eigenvalues, and the top K
    eigenvalues are kept unchanged.

    Args:
        data_or_cov (Dataset|CovMatrix|EigenSystem|ndarray): samples or sample covariance
        k (int): number of factors, 0 <= k <= M-1
        n (int): sample count, only recorded when a covariance is given
    """
    eig, n = as_eigensystem(data_or_cov, n=n)
    return _urm_from_eig(eig, k, n)


def urm_path(data_or_cov, ks, n=None):
    """URM estimates for several K sharing one eigendecomposition."""
    eig, n = as_eigensystem(data_or_cov, n=n)
    return [_urm_from_eig(eig, k, n) for k in ks]


def utm_eigenvalues(values, tau):
    """Soft-threshold descending eigenvalues with trace preservation.

    Args:
        values (ndarray): descending sample eigenvalues s_1..s_M
        tau (float): threshold 2 lambda / N

    Returns:
        tuple: (eigenvalues h, flat level 1/v_hat, number K of thresholded eigenvalues)
    """
    values = np.asarray(values, dtype=float)
    m = len(values)
    ks = np.arange(m)
    # tails[k] = s_{k+1} + ... + s_M
    tails = np.cumsum(values[::-1])[::-1]
    flat_levels = (ks * tau + tails) / (m - ks)

    # condition at k uses s_k (1-indexed), s_0 = inf makes k = 0 always valid
    above = np.empty(m, dtype=bool)
    above[0] = True
    above[1:] = values[: m - 1] - tau > flat_levels[1:]
    k_eff = int(np.flatnonzero(above)[-1])

    flat = flat_levels[k_eff]
    eigenvalues = np.full(m, flat)
    eigenvalues[:k_eff] = values[:k_eff] - tau
    return eigenvalues, flat, k_eff


def _utm_from_eig(eig, lam, n):
    if lam < 0:
        raise ParameterError(f"lambda must be >= 0, got {lam}")
    check_n(n)
    tau = 2.0 * lam / n
    eigenvalues, flat, k_eff = utm_eigenvalues(eig.values, tau)
    estimate = FactorModelEstimate.from_parts(
        _factor_loadings(eig, eigenvalues[:k_eff] - flat),
        np.full(eig.m, flat),
        metadata={
            "estimator": "utm",
            "lambda": float(lam),
            "n": int(n),
            "tau": tau,
            "k_effective": k_eff,
            "trace_sample": float(np.sum(eig.values)),
            "trace_estimate": float(np.sum(eigenvalues)),
        },
    )
    v_hat = 1.0 / flat if flat > 0 else np.inf
    return UtmSolution(estimate=estimate, v_hat=v_hat, k_effective=k_eff, eigenvalues=eigenvalues)


def utm_fit(data_or_cov, lam, n=None):
    """Trace-penalized uniform-residual estimate.

    The estimate shares the eigenvectors and the trace of the sample covariance; its
    eigenvalues are max(s_m - 2 lambda / N, 1/v_hat).

    Args:
        data_or_cov (Dataset|CovMatrix|EigenSystem|ndarray): samples or sample covariance
        lam (float): trace penalty lambda >= 0
        n (int): sample count, required with a precomputed covariance
    """
    eig, n = as_eigensystem(data_or_cov, n=n)
    return _utm_from_eig(eig, lam, n)


def utm_path(data_or_cov, lambdas, n=None):
    """UTM solutions along a lambda grid, from a single eigendecomposition."""
    eig, n = as_eigensystem(data_or_cov, n=n)
    return [_utm_from_eig(eig, lam, n) for lam in lambdas]


def lambda_search_center(data_or_cov, k_ref, n=None):
    """Return M sigma2, with sigma2 the URM residual variance at K = k_ref.

    Cross-validated lambda grids are best centered around this value.
    """
    estimate = urm_fit(data_or_cov, k_ref, n=n)
    return estimate.m * estimate.metadata["sigma2"]


def lambda_grid_around(center, width=0.5, n_points=11):
    """Evenly spaced positive lambdas in [(1 - width) center, (1 + width) center]."""
    if center <= 0 or not 0 < width < 1 or n_points < 2:
        raise ParameterError("Need center > 0, 0 < width < 1 and n_points >= 2")
    return tuple(float(value) for value in np.linspace(1 - width, 1 + width, n_points) * center)
