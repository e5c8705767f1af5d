"""
Frechet distance between Gaussian fits of image features.

Moments use the unbiased (N - 1) covariance. The matrix square root goes
through symmetric eigendecompositions (``scipy.linalg.eigh``) instead of a
general ``sqrtm``, so the result stays real for singular covariances.
"""
from dataclasses import dataclass

import numpy as np
import scipy.linalg

from ..core.errors import DimensionError
from ..core.types import ImageBatch
from ..losses.features import FeatureMapExtractor, extract_features

SYMMETRY_TOLERANCE = 1e-8
EIGEN_TOLERANCE = 1e-6


@dataclass(frozen=True)
class GaussianMoments:
    """Mean vector [D] and covariance matrix [D, D] of a feature set."""
    mean: np.ndarray
    cov: np.ndarray

    def __post_init__(self):
        mean = np.atleast_1d(np.asarray(self.mean, dtype=np.float64))
        cov = np.atleast_2d(np.asarray(self.cov, dtype=np.float64))
        if mean.ndim != 1 or mean.shape[0] < 1:
            raise DimensionError(f"mean must be a non-empty vector, got shape {mean.shape}")
        if cov.shape != (mean.shape[0], mean.shape[0]):
            raise DimensionError(f"cov shape {cov.shape} does not match mean dimension {mean.shape[0]}")
        if not np.allclose(cov, cov.T, rtol=0.0, atol=SYMMETRY_TOLERANCE):
            raise ValueError("cov must be symmetric")
        object.__setattr__(self, "mean", mean)
        object.__setattr__(self, "cov", cov)

    @property
    def dim(self) -> int:
        return self.mean.shape[0]


def fit_moments(features: np.ndarray) -> GaussianMoments:
    """
    Sample mean and unbiased covariance of a feature matrix.

    Args:
        features: Array [N, D] with N >= 2

    Returns:
        GaussianMoments
    """
    features = np.asarray(features, dtype=np.float64)
    if features.ndim != 2:
        raise DimensionError(f"features must be [N, D], got shape {features.shape}")
    if features.shape[0] < 2:
        raise ValueError(f"At least 2 samples are needed to fit moments, got {features.shape[0]}")
    cov = np.atleast_2d(np.cov(features, rowvar=False, ddof=1))
    return GaussianMoments(features.mean(axis=0), (cov + cov.T) / 2.0)


def _clamped_eigenvalues(matrix: np.ndarray, what: str) -> np.ndarray:
    values = scipy.linalg.eigh((matrix + matrix.T) / 2.0, eigvals_only=True)
    tolerance = EIGEN_TOLERANCE * max(1.0, float(np.abs(values).max(initial=0.0)))
    if values.min(initial=0.0) < -tolerance:
        raise ValueError(f"{what} has a negative eigenvalue {values.min():.3e}; not positive semi-definite")
    return np.clip(values, 0.0, None)


def _psd_sqrt(matrix: np.ndarray) -> np.ndarray:
    values, vectors = scipy.linalg.eigh((matrix + matrix.T) / 2.0)
    tolerance = EIGEN_TOLERANCE * max(1.0, float(np.abs(values).max(initial=0.0)))
    if values.min(initial=0.0) < -tolerance:
        raise ValueError(f"Covariance has a negative eigenvalue {values.min():.3e}")
    return (vectors * np.sqrt(np.clip(values, 0.0, None))) @ vectors.T


def frechet_distance(a: GaussianMoments, b: GaussianMoments) -> float:
    """
    ||mu_a - mu_b||^2 + Tr(S_a + S_b - 2 (S_a S_b)^(1/2)).

    The trace of (S_a S_b)^(1/2) is the sum of square roots of the eigenvalues
    of the symmetric product sqrt(S_a) S_b sqrt(S_a).

    Raises:
        DimensionError: if the dimensions differ
        ValueError: if a covariance or the product is not positive semi-definite
    """
    if a.dim != b.dim:
        raise DimensionError(f"Feature dimensions differ: {a.dim} vs {b.dim}")
    root_a = _psd_sqrt(a.cov)
    product = root_a @ b.cov @ root_a
    trace_sqrt = np.sqrt(_clamped_eigenvalues(product, "Covariance product")).sum()
    mean_term = float(np.sum((a.mean - b.mean) ** 2))
    distance = mean_term + float(np.trace(a.cov) + np.trace(b.cov) - 2.0 * trace_sqrt)
    return max(distance, 0.0)


def fid(set_a: ImageBatch, set_b: ImageBatch, extractor: FeatureMapExtractor) -> float:
    """
    Frechet distance between the extractor features of two image sets.

    Args:
        set_a: First set (N >= 2)
        set_b: Second set (N >= 2)
        extractor: Feature extractor; its pooled ``extract`` output is used

    Returns:
        FID value, lower is closer
    """
    features_a = extract_features(extractor, set_a)
    features_b = extract_features(extractor, set_b)
    return frechet_distance(fit_moments(features_a), fit_moments(features_b))
