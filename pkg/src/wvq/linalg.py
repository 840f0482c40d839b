"""Small dense symmetric linear algebra.

Eigendecompositions, PSD square roots and inverse square roots for the
d <= 64 covariance matrices that appear in the Wasserstein computations.
Two eigensolvers are available: LAPACK (``numpy.linalg.eigh``, the default)
and a cyclic Jacobi solver kept as an independent route for cross-checks.
"""

from __future__ import annotations

import math
from typing import NamedTuple

import numpy as np

from .errors import InvalidInput, NotPSD

# relative off-diagonal threshold for Jacobi convergence
JACOBI_TOL = 1e-12
# relative tolerance on negative eigenvalues before a matrix counts as not PSD
PSD_TOL = 1e-6
# asymmetry accepted (and removed) when building a symmetric matrix
SYM_TOL = 1e-8


class EigenPair(NamedTuple):
    values: np.ndarray  # descending
    vectors: np.ndarray  # orthonormal columns


def as_sym(m) -> np.ndarray:
    """Validate ``m`` as a finite square matrix and return an exactly symmetric copy."""
    a = np.array(m, dtype=np.float64)
    if a.ndim != 2 or a.shape[0] != a.shape[1] or a.shape[0] < 1:
        raise InvalidInput(f"expected a non-empty square matrix, got shape {a.shape}")
    if not np.all(np.isfinite(a)):
        raise InvalidInput("matrix has non-finite entries")
    scale = max(np.abs(a).max(), 1.0)
    if np.abs(a - a.T).max() > SYM_TOL * scale:
        raise InvalidInput("matrix is not symmetric")
    return 0.5 * (a + a.T)


def jacobi_eigh(a: np.ndarray, tol: float = JACOBI_TOL, max_sweeps: int = 100) -> EigenPair:
    """Cyclic Jacobi eigendecomposition of a symmetric matrix.

    Sweeps over all (p, q) pairs in row order, annihilating each off-diagonal
    entry with a plane rotation, until every off-diagonal magnitude is at most
    ``tol * ||a||_F``.
    """
    a = as_sym(a)
    n = a.shape[0]
    v = np.eye(n)
    thresh = tol * np.linalg.norm(a)
    for _ in range(max_sweeps):
        off = np.abs(a - np.diag(np.diag(a))).max() if n > 1 else 0.0
        if off <= thresh:
            break
        for p in range(n - 1):
            for q in range(p + 1, n):
                apq = a[p, q]
                if abs(apq) <= thresh:
                    continue
                tau = (a[q, q] - a[p, p]) / (2.0 * apq)
                t = math.copysign(1.0, tau) / (abs(tau) + math.hypot(1.0, tau))
                c = 1.0 / math.sqrt(1.0 + t * t)
                s = t * c
                ap, aq = a[:, p].copy(), a[:, q].copy()
                a[:, p] = c * ap - s * aq
                a[:, q] = s * ap + c * aq
                ap, aq = a[p, :].copy(), a[q, :].copy()
                a[p, :] = c * ap - s * aq
                a[q, :] = s * ap + c * aq
                a[p, q] = a[q, p] = 0.0
                vp, vq = v[:, p].copy(), v[:, q].copy()
                v[:, p] = c * vp - s * vq
                v[:, q] = s * vp + c * vq
    else:
        raise ArithmeticError("Jacobi iteration did not converge")
    values = np.diag(a).copy()
    order = np.argsort(-values, kind="stable")
    return EigenPair(values[order], v[:, order])


def eigh_sym(m, method: str = "lapack") -> EigenPair:
    """Eigendecomposition of a symmetric matrix with eigenvalues in descending order.

    ``method`` is ``"lapack"`` or ``"jacobi"``.
    """
    a = as_sym(m)
    if method == "jacobi":
        return jacobi_eigh(a)
    if method != "lapack":
        raise InvalidInput(f"unknown eigensolver {method!r}")
    values, vectors = np.linalg.eigh(a)
    return EigenPair(values[::-1].copy(), vectors[:, ::-1].copy())


def _shifted_spectrum(m, jitter: float, method: str) -> tuple[EigenPair, float]:
    if jitter < 0 or not math.isfinite(jitter):
        raise InvalidInput(f"jitter must be a finite non-negative number, got {jitter}")
    a = as_sym(m)
    pair = eigh_sym(a, method)
    floor = -PSD_TOL * np.linalg.norm(a)
    lam = pair.values + jitter
    if lam[-1] < floor:
        raise NotPSD(f"smallest eigenvalue {lam[-1]:.3e} is below {floor:.3e}")
    return EigenPair(np.maximum(lam, 0.0), pair.vectors), floor


def _recompose(vectors: np.ndarray, values: np.ndarray) -> np.ndarray:
    r = (vectors * values) @ vectors.T
    return 0.5 * (r + r.T)


def sqrtm_psd(m, jitter: float = 0.0, method: str = "lapack") -> np.ndarray:
    """Symmetric PSD square root of ``m + jitter*I``.

    Eigenvalues within ``-1e-6*||m||_F`` of zero are clamped to zero; anything
    more negative raises :class:`NotPSD`.
    """
    pair, _ = _shifted_spectrum(m, jitter, method)
    return _recompose(pair.vectors, np.sqrt(pair.values))


def invsqrtm_psd(m, jitter: float = 0.0, method: str = "lapack") -> np.ndarray:
    """Inverse square root of ``m + jitter*I``; the shifted matrix must be positive definite."""
    pair, _ = _shifted_spectrum(m, jitter, method)
    if pair.values[-1] <= 0.0:
        raise NotPSD("matrix is singular; add jitter to take an inverse square root")
    return _recompose(pair.vectors, 1.0 / np.sqrt(pair.values))
