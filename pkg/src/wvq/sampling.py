"""Seeded samplers for the synthetic feature and codebook distributions."""

from __future__ import annotations

import enum
from dataclasses import dataclass, field

import numpy as np

from .errors import InvalidSpec

MAX_SEED = 2**64 - 1


class SourceKind(str, enum.Enum):
    GAUSSIAN_ISO = "GaussianIso"
    UNIFORM_CUBE = "UniformCube"
    UNIFORM_DISK = "UniformDisk"


@dataclass(frozen=True)
class SourceSpec:
    """A point source.

    GaussianIso draws N(mean_shift * 1, scale^2 I); UniformCube draws each
    coordinate from Unif(mean_shift - scale, mean_shift + scale); UniformDisk
    draws uniformly from the disk of radius ``scale`` around ``center``.
    A zero scale collapses the source to a point mass.
    """

    kind: SourceKind
    dim: int
    mean_shift: float = 0.0
    scale: float = 1.0
    center: tuple[float, ...] = field(default=())

    def __post_init__(self):
        object.__setattr__(self, "kind", SourceKind(self.kind))
        object.__setattr__(self, "center", tuple(float(c) for c in self.center))
        if self.dim < 1:
            raise InvalidSpec(f"dim must be >= 1, got {self.dim}")
        if not (self.scale >= 0 and np.isfinite(self.scale)):
            raise InvalidSpec(f"scale must be finite and >= 0, got {self.scale}")
        if self.kind is SourceKind.UNIFORM_DISK:
            if self.dim != 2:
                raise InvalidSpec("UniformDisk requires dim == 2")
            if not self.center:
                object.__setattr__(self, "center", (0.0, 0.0))
            if len(self.center) != 2:
                raise InvalidSpec("disk center must have two coordinates")


def gaussian(dim: int, mean_shift: float = 0.0, scale: float = 1.0) -> SourceSpec:
    return SourceSpec(SourceKind.GAUSSIAN_ISO, dim, mean_shift, scale)


def cube(dim: int, mean_shift: float = 0.0, scale: float = 1.0) -> SourceSpec:
    return SourceSpec(SourceKind.UNIFORM_CUBE, dim, mean_shift, scale)


def disk(radius: float = 1.0, center=(0.0, 0.0)) -> SourceSpec:
    return SourceSpec(SourceKind.UNIFORM_DISK, 2, 0.0, radius, tuple(center))


def check_seed(seed: int) -> int:
    seed = int(seed)
    if not 0 <= seed <= MAX_SEED:
        raise InvalidSpec(f"seed must be an unsigned 64-bit integer, got {seed}")
    return seed


def derive_seed(base: int, *keys: int) -> int:
    """Deterministically derive an independent 64-bit seed from ``base`` and a key path."""
    ss = np.random.SeedSequence(check_seed(base), spawn_key=tuple(int(k) for k in keys))
    return int(ss.generate_state(1, dtype=np.uint64)[0])


def make_rng(seed: int) -> np.random.Generator:
    return np.random.Generator(np.random.PCG64(np.random.SeedSequence(check_seed(seed))))


def draw(spec: SourceSpec, n: int, rng: np.random.Generator) -> np.ndarray:
    """Draw ``n`` points from ``spec`` using an existing generator."""
    if n < 1:
        raise InvalidSpec(f"n must be >= 1, got {n}")
    d = spec.dim
    if spec.kind is SourceKind.GAUSSIAN_ISO:
        return spec.mean_shift + spec.scale * rng.standard_normal((n, d))
    if spec.kind is SourceKind.UNIFORM_CUBE:
        return spec.mean_shift + spec.scale * rng.uniform(-1.0, 1.0, (n, d))
    # rejection from the bounding square, acceptance ~ pi/4
    out = np.empty((n, 2))
    filled = 0
    while filled < n:
        need = n - filled
        cand = rng.uniform(-1.0, 1.0, (int(need / 0.78) + 16, 2))
        cand = cand[np.einsum("ij,ij->i", cand, cand) <= 1.0][:need]
        out[filled:filled + len(cand)] = cand
        filled += len(cand)
    return np.asarray(spec.center) + spec.scale * out


def sample(spec: SourceSpec, n: int, seed: int) -> np.ndarray:
    """Draw an ``n x dim`` batch from ``spec`` on a fresh stream seeded by ``seed``."""
    return draw(spec, n, make_rng(seed))
