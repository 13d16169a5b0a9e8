"""Synthetic factor-model data with uniform or lognormal residual variances."""
import logging
from dataclasses import dataclass, field

import numpy as np

from .core import Dataset, symmetrize
from .exceptions import ParameterError
from .utils import derive_rng

L = logging.getLogger(__name__)

GENERATOR_NAME = "PCG64"


@dataclass(frozen=True)
class SynthSpec:
    """Settings of a synthetic draw.

    Args:
        m (int): dimension M
        k_star (int): number of true factors
        sigma_f (float): standard deviation of the factor magnitudes
        n (int): number of samples
        sigma_r (float): standard deviation of the log residual variances, 0 for uniform
        seed (int): base seed
        replication (int): replication index, mixed into the seed
    """

    m: int
    k_star: int
    sigma_f: float
    n: int
    sigma_r: float = 0.0
    seed: int = 0
    replication: int = 0

    def __post_init__(self):
        if self.m < 1 or self.n < 1:
            raise ParameterError(f"Need m >= 1 and n >= 1, got m={self.m}, n={self.n}")
        if not 0 <= self.k_star <= self.m:
            raise ParameterError(f"Need 0 <= k_star <= m, got k_star={self.k_star}, m={self.m}")
        if self.sigma_f <= 0:
            raise ParameterError(f"sigma_f must be > 0, got {self.sigma_f}")
        if self.sigma_r < 0:
            raise ParameterError(f"sigma_r must be >= 0, got {self.sigma_r}")


@dataclass(frozen=True)
class GroundTruth:
    """True covariance sigma_star = loadings_star loadings_star^T + diag(residual_star)."""

    sigma_star: np.ndarray
    loadings_star: np.ndarray
    residual_star: np.ndarray
    metadata: dict = field(default_factory=dict)

    def to_dict(self):
        """JSON-friendly representation."""
        return {
            "sigma_star": self.sigma_star.tolist(),
            "loadings_star": self.loadings_star.tolist(),
            "residual_star": self.residual_star.tolist(),
            "metadata": self.metadata,
        }


def sample_orthonormal(rng, m, k):
    """Haar-distributed M x K frame, from the QR decomposition of a Gaussian matrix."""
    if k == 0:
        return np.zeros((m, 0))
    q, r = np.linalg.qr(rng.standard_normal((m, k)))
    return q * np.sign(np.where(np.diag(r) == 0, 1.0, np.diag(r)))


def _generate(spec, sigma_r):
    rng = derive_rng(spec.seed, spec.replication)
    frame = sample_orthonormal(rng, spec.m, spec.k_star)
    magnitudes = spec.sigma_f * rng.standard_normal(spec.k_star)
    log_residual = sigma_r * rng.standard_normal(spec.m)

    loadings = frame * magnitudes
    residual = np.exp(log_residual)
    sigma_star = symmetrize(loadings @ loadings.T + np.diag(residual))

    factors = rng.standard_normal((spec.n, spec.k_star))
    noise = rng.standard_normal((spec.n, spec.m))
    samples = factors @ loadings.T + noise * np.sqrt(residual)

    truth = GroundTruth(
        sigma_star=sigma_star,
        loadings_star=loadings,
        residual_star=residual,
        metadata={
            "generator": GENERATOR_NAME,
            "numpy_version": np.__version__,
            "seed": int(spec.seed),
            "replication": int(spec.replication),
            "m": spec.m,
            "k_star": spec.k_star,
            "sigma_f": spec.sigma_f,
            "sigma_r": sigma_r,
            "n": spec.n,
        },
    )
    return Dataset(samples), truth


def gen_uniform(spec):
    """Samples from sigma_star = sum_k f_k^2 phi_k phi_k^T + I, with f_k ~ N(0, sigma_f^2).

    ``spec.sigma_r`` is ignored.
    """
    return _generate(spec, 0.0)


def gen_nonuniform(spec):
    """Samples from a factor model with residual variances exp(r_i), r_i ~ N(0, sigma_r^2)."""
    if spec.sigma_r <= 0:
        raise ParameterError("Nonuniform residuals need sigma_r > 0")
    return _generate(spec, spec.sigma_r)


def generate(spec):
    """Uniform or nonuniform draw depending on sigma_r."""
    if spec.sigma_r > 0:
        return gen_nonuniform(spec)
    return gen_uniform(spec)
