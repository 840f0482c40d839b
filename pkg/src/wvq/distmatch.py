"""Gaussian moment matching between a feature set and a codebook.

The training signal is the closed-form quadratic Wasserstein distance between
the Gaussians fitted to the two point sets:

    W2^2 = |mu1 - mu2|^2 + tr(S1 + S2 - 2 (S1^1/2 S2 S1^1/2)^1/2)

KL and Bhattacharyya closed forms are included for comparison only; both need
full-rank covariances, which a collapsed codebook does not have.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .errors import DegenerateGradient, InsufficientData, InvalidInput, SingularCovariance
from .linalg import as_sym, invsqrtm_psd, sqrtm_psd
from .quantizer import as_points, check_pair

DEFAULT_JITTER = 1e-6
# W2^2 below this fraction of the total second moment is treated as zero
W2_CLAMP = 1e-12
MIN_LOSS = 1e-9


@dataclass(frozen=True)
class GaussianMoments:
    mean: np.ndarray
    cov: np.ndarray

    def __post_init__(self):
        mean = np.asarray(self.mean, dtype=np.float64).reshape(-1)
        cov = as_sym(np.atleast_2d(self.cov))
        if cov.shape != (len(mean), len(mean)):
            raise InvalidInput(f"mean has {len(mean)} entries but covariance is {cov.shape}")
        if not np.all(np.isfinite(mean)):
            raise InvalidInput("mean has non-finite entries")
        object.__setattr__(self, "mean", mean)
        object.__setattr__(self, "cov", cov)

    @property
    def dim(self) -> int:
        return len(self.mean)


@dataclass(frozen=True)
class WassersteinGrad:
    d_codebook: np.ndarray  # dL/de_k, same shape as the codebook
    loss: float


def estimate_moments(points) -> GaussianMoments:
    """Row mean and population (1/n) covariance."""
    x = as_points(points)
    if len(x) < 2:
        raise InsufficientData(f"need at least 2 points to estimate moments, got {len(x)}")
    mu = x.mean(axis=0)
    xc = x - mu
    return GaussianMoments(mu, (xc.T @ xc) / len(x))


def _check_dims(a: GaussianMoments, b: GaussianMoments) -> None:
    if a.dim != b.dim:
        raise InvalidInput(f"dimension mismatch: {a.dim} vs {b.dim}")


def _w2_squared(a: GaussianMoments, b: GaussianMoments, jitter: float) -> float:
    eye = np.eye(a.dim)
    s1 = a.cov + jitter * eye
    s2 = b.cov + jitter * eye
    root1 = sqrtm_psd(s1)
    cross_trace = float(np.trace(sqrtm_psd(root1 @ s2 @ root1)))
    dmu = a.mean - b.mean
    mean_term = float(dmu @ dmu)
    trace_a, trace_b = float(np.trace(s1)), float(np.trace(s2))
    q = mean_term + trace_a + trace_b - 2.0 * cross_trace
    if q <= W2_CLAMP * (trace_a + trace_b + float(a.mean @ a.mean) + float(b.mean @ b.mean)):
        return 0.0
    return q


def w2_gaussian(a: GaussianMoments, b: GaussianMoments, jitter: float = 0.0) -> float:
    """Quadratic Wasserstein distance between N(a.mean, a.cov) and N(b.mean, b.cov).

    ``jitter`` is added to both covariance diagonals. The squared distance is
    clamped at zero when it falls within roundoff of the total second moment.
    """
    _check_dims(a, b)
    if jitter < 0:
        raise InvalidInput("jitter must be >= 0")
    if np.array_equal(a.mean, b.mean) and np.array_equal(a.cov, b.cov):
        return 0.0
    return math.sqrt(_w2_squared(a, b, jitter))


def w2_empirical(features, codebook, jitter: float = 0.0) -> float:
    """W2 between the Gaussians fitted to the features and to the codebook."""
    z, e = check_pair(features, codebook)
    return w2_gaussian(estimate_moments(z), estimate_moments(e), jitter)


def grad_w2_codebook(features, codebook, jitter: float = DEFAULT_JITTER) -> WassersteinGrad:
    """Analytic gradient of the empirical W2 loss with respect to each code vector.

    Features are treated as constants. With A = S1^1/2 S2 S1^1/2 (jittered
    covariances), dL/dmu2 = (mu2 - mu1)/L and
    dL/dS2 = (I - S1^1/2 A^-1/2 S1^1/2) / (2L); both flow back to the codes
    through mu2 = mean(e) and S2 = mean((e - mu2)(e - mu2)^T).
    """
    z, e = check_pair(features, codebook)
    if jitter <= 0:
        raise InvalidInput("jitter must be > 0 for the gradient")
    m1, m2 = estimate_moments(z), estimate_moments(e)
    q = _w2_squared(m1, m2, jitter)
    loss = math.sqrt(q)
    if loss < MIN_LOSS:
        raise DegenerateGradient(f"W2 loss {loss:.3e} is too small to differentiate")
    d = m1.dim
    k = len(e)
    root1 = sqrtm_psd(m1.cov, jitter)
    a = root1 @ (m2.cov + jitter * np.eye(d)) @ root1
    g_cov = (np.eye(d) - root1 @ invsqrtm_psd(a) @ root1) / (2.0 * loss)
    g_cov = 0.5 * (g_cov + g_cov.T)
    g_mean = (m2.mean - m1.mean) / loss
    grad = g_mean[None, :] / k + (2.0 / k) * (e - m2.mean) @ g_cov
    return WassersteinGrad(grad, loss)


def _logdet_pd(cov: np.ndarray, what: str) -> float:
    sign, logdet = np.linalg.slogdet(cov)
    vals = np.linalg.eigvalsh(cov)
    if sign <= 0 or vals[0] <= 1e-12 * max(vals[-1], 1e-300):
        raise SingularCovariance(f"{what} covariance is singular or not positive definite")
    return float(logdet)


def kl_gaussian(a: GaussianMoments, b: GaussianMoments) -> float:
    """KL(N_a || N_b); both covariances must be positive definite."""
    _check_dims(a, b)
    logdet_a = _logdet_pd(a.cov, "first")
    logdet_b = _logdet_pd(b.cov, "second")
    dmu = a.mean - b.mean
    inv_b = np.linalg.inv(b.cov)
    val = 0.5 * (dmu @ inv_b @ dmu + np.trace(inv_b @ a.cov) - a.dim + logdet_b - logdet_a)
    return max(float(val), 0.0)


def bhattacharyya_gaussian(a: GaussianMoments, b: GaussianMoments) -> float:
    _check_dims(a, b)
    avg = 0.5 * (a.cov + b.cov)
    logdet_avg = _logdet_pd(avg, "average")
    logdet_a = _logdet_pd(a.cov, "first")
    logdet_b = _logdet_pd(b.cov, "second")
    dmu = a.mean - b.mean
    val = dmu @ np.linalg.solve(avg, dmu) / 8.0 + 0.5 * (logdet_avg - 0.5 * (logdet_a + logdet_b))
    return max(float(val), 0.0)
