"""Nearest-code assignment and Voronoi cell occupancy."""

from __future__ import annotations

import os
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass

import numpy as np

from .errors import CorruptAssignment, InvalidInput

# distance-matrix entries per block (float64), ~16 MB
_BLOCK_ENTRIES = 1 << 21
# candidates within this relative band of the expanded-form minimum are re-ranked exactly
_TIE_BAND = 1e-12


@dataclass(frozen=True)
class Assignment:
    indices: np.ndarray  # (N,) int64, nearest code per feature
    counts: np.ndarray  # (K,) int64, Voronoi cell occupancy

    @property
    def k(self) -> int:
        return len(self.counts)

    @property
    def n(self) -> int:
        return len(self.indices)


def as_points(x, name: str = "points") -> np.ndarray:
    a = np.asarray(x, dtype=np.float64)
    if a.ndim != 2 or a.shape[0] < 1 or a.shape[1] < 1:
        raise InvalidInput(f"{name} must be a non-empty 2-D array, got shape {a.shape}")
    if not np.all(np.isfinite(a)):
        raise InvalidInput(f"{name} contain non-finite values")
    return a


def check_pair(features, codebook) -> tuple[np.ndarray, np.ndarray]:
    z = as_points(features, "features")
    e = as_points(codebook, "codebook")
    if z.shape[1] != e.shape[1]:
        raise InvalidInput(f"dimension mismatch: features d={z.shape[1]}, codebook d={e.shape[1]}")
    return z, e


def _assign_block(z: np.ndarray, e: np.ndarray, zc: np.ndarray, ec_aug: np.ndarray,
                  ec_max: float) -> np.ndarray:
    # |z - e|^2 - |z|^2 on centred copies, as one product with [z, 1] @ [-2e, |e|^2]^T
    zc_aug = np.empty((len(zc), zc.shape[1] + 1))
    zc_aug[:, :-1] = zc
    zc_aug[:, -1] = 1.0
    dist = zc_aug @ ec_aug
    rows = np.arange(len(zc))
    idx = dist.argmin(axis=1)
    best = dist[rows, idx]
    if dist.shape[1] == 1:
        return idx
    dist[rows, idx] = np.inf
    runner_up = dist.min(axis=1)
    dist[rows, idx] = best
    zc_sq = np.einsum("ij,ij->i", zc, zc)
    band = _TIE_BAND * (np.sqrt(zc_sq) + ec_max) ** 2
    for i in np.flatnonzero(runner_up <= best + band):
        ks = np.flatnonzero(dist[i] <= best[i] + band[i])
        diff = z[i] - e[ks]
        idx[i] = ks[np.argmin(np.einsum("ij,ij->i", diff, diff))]
    return idx


def quantize(features, codebook, workers: int | None = None) -> Assignment:
    """Assign every feature to its nearest code (squared Euclidean distance).

    Ties go to the smallest code index. The search is brute force over row
    blocks; ``workers`` threads process blocks in parallel (default: one per
    CPU, capped at 8). Results do not depend on the worker count.
    """
    z, e = check_pair(features, codebook)
    n, k = len(z), len(e)
    shift = e.mean(axis=0)
    zc, ec = z - shift, e - shift
    ec_sq = np.einsum("ij,ij->i", ec, ec)
    ec_max = float(np.sqrt(ec_sq.max()))
    ec_aug = np.ascontiguousarray(np.vstack([-2.0 * ec.T, ec_sq[None, :]]))
    rows = max(1, _BLOCK_ENTRIES // k)
    starts = range(0, n, rows)

    def run(s: int) -> np.ndarray:
        sl = slice(s, s + rows)
        return _assign_block(z[sl], e, zc[sl], ec_aug, ec_max)

    if workers is None:
        workers = min(8, os.cpu_count() or 1)
    if workers > 1 and len(starts) > 1:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            parts = list(pool.map(run, starts))
    else:
        parts = [run(s) for s in starts]
    indices = np.concatenate(parts).astype(np.int64)
    return Assignment(indices, np.bincount(indices, minlength=k).astype(np.int64))


def quantized_vectors(features, codebook, a: Assignment) -> np.ndarray:
    """Replace each feature by its assigned code vector."""
    z, e = check_pair(features, codebook)
    idx = np.asarray(a.indices)
    if idx.shape != (len(z),):
        raise CorruptAssignment(f"assignment covers {idx.shape} rows, features have {len(z)}")
    if idx.size and (idx.min() < 0 or idx.max() >= len(e)):
        raise CorruptAssignment("assignment index out of range for codebook")
    return e[idx]
