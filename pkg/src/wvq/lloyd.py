"""One-dimensional optimal quantizers via Lloyd's algorithm.

The density is discretised on a fine grid as a piecewise-constant density
(cell masses from the trapezoid rule), and all cell integrals of 1, x and x^2
are exact for that measure. Lloyd steps are therefore exact coordinate-descent
steps on the discretised distortion, with no sampling noise.
"""

from __future__ import annotations

import enum
from dataclasses import dataclass, field

import numpy as np

from .errors import InsufficientResolution, InvalidSpec


class DensityKind(str, enum.Enum):
    GAUSSIAN = "Gaussian"
    UNIFORM = "Uniform"


@dataclass(frozen=True)
class Density1D:
    """A Gaussian (truncated to ``mean +- truncation*sigma``) or uniform density."""

    kind: DensityKind
    mean: float = 0.0
    sigma: float = 1.0
    lo: float | None = None
    hi: float | None = None
    grid: int = 100_000
    truncation: float = 5.0

    def __post_init__(self):
        object.__setattr__(self, "kind", DensityKind(self.kind))
        if self.kind is DensityKind.GAUSSIAN:
            if not self.sigma > 0:
                raise InvalidSpec("sigma must be positive")
            if self.lo is None:
                object.__setattr__(self, "lo", self.mean - self.truncation * self.sigma)
            if self.hi is None:
                object.__setattr__(self, "hi", self.mean + self.truncation * self.sigma)
        elif self.lo is None or self.hi is None:
            raise InvalidSpec("uniform density needs lo and hi")
        if not self.lo < self.hi:
            raise InvalidSpec("lo must be below hi")
        if self.grid < 1000:
            raise InvalidSpec("grid must have at least 1000 points")

    def pdf(self, x) -> np.ndarray:
        """Unnormalised density on [lo, hi]."""
        x = np.asarray(x, dtype=np.float64)
        inside = (x >= self.lo) & (x <= self.hi)
        if self.kind is DensityKind.UNIFORM:
            return np.where(inside, 1.0, 0.0)
        u = (x - self.mean) / self.sigma
        return np.where(inside, np.exp(-0.5 * u * u), 0.0)


def gaussian_density(mean: float = 0.0, sigma: float = 1.0, **kw) -> Density1D:
    return Density1D(DensityKind.GAUSSIAN, mean=mean, sigma=sigma, **kw)


def uniform_density(lo: float = 0.0, hi: float = 1.0, **kw) -> Density1D:
    return Density1D(DensityKind.UNIFORM, lo=lo, hi=hi, **kw)


class _Tables:
    """Exact partial moments of the piecewise-constant discretisation."""

    def __init__(self, f: Density1D):
        self.x = np.linspace(f.lo, f.hi, f.grid + 1)
        self.h = self.x[1] - self.x[0]
        y = f.pdf(self.x)
        mass = 0.5 * (y[1:] + y[:-1]) * self.h
        self.rho = mass / (mass.sum() * self.h)  # normalised density per cell
        x0, x1 = self.x[:-1], self.x[1:]
        zero = np.zeros(1)
        self.m0 = np.concatenate([zero, np.cumsum(self.rho * (x1 - x0))])
        self.m1 = np.concatenate([zero, np.cumsum(self.rho * (x1**2 - x0**2) / 2)])
        self.m2 = np.concatenate([zero, np.cumsum(self.rho * (x1**3 - x0**3) / 3)])

    def at(self, b: np.ndarray):
        """Cumulative integrals of (1, x, x^2) times the density up to each point in ``b``."""
        b = np.clip(b, self.x[0], self.x[-1])
        j = np.clip(np.searchsorted(self.x, b, side="right") - 1, 0, len(self.rho) - 1)
        xj, r = self.x[j], self.rho[j]
        return (
            self.m0[j] + r * (b - xj),
            self.m1[j] + r * (b * b - xj * xj) / 2,
            self.m2[j] + r * (b**3 - xj**3) / 3,
        )

    def quantile(self, p: np.ndarray) -> np.ndarray:
        return np.interp(p, self.m0, self.x)


@dataclass
class LloydResult:
    centers: np.ndarray
    distortions: list[float] = field(default_factory=list)
    iterations: int = 0
    converged: bool = False


def _cells(tables: _Tables, centers: np.ndarray):
    b = np.concatenate([[tables.x[0]], 0.5 * (centers[1:] + centers[:-1]), [tables.x[-1]]])
    m0, m1, m2 = tables.at(b)
    return np.diff(m0), np.diff(m1), np.diff(m2)


def _distortion(cells, centers: np.ndarray) -> float:
    w0, w1, w2 = cells
    return float(np.sum(w2 - 2 * centers * w1 + centers * centers * w0))


def lloyd(f: Density1D, k: int, tol: float = 1e-10, max_iter: int = 200_000) -> LloydResult:
    """Lloyd iteration from density quantiles, recording the distortion at every iterate."""
    if k < 1:
        raise InvalidSpec("k must be >= 1")
    tables = _Tables(f)
    centers = tables.quantile((2 * np.arange(k) + 1) / (2 * k))
    res = LloydResult(centers)
    for it in range(1, max_iter + 1):
        cells = _cells(tables, centers)
        res.distortions.append(_distortion(cells, centers))
        w0, w1, _ = cells
        new = np.where(w0 > 0, w1 / np.where(w0 > 0, w0, 1.0), centers)
        move = float(np.abs(new - centers).max())
        centers = new
        res.iterations = it
        if move <= tol:
            res.converged = True
            break
    res.distortions.append(_distortion(_cells(tables, centers), centers))
    res.centers = np.sort(centers)
    return res


def lloyd_optimal_centers(f: Density1D, k: int, tol: float = 1e-10,
                          max_iter: int = 200_000) -> np.ndarray:
    """Sorted optimal centers of a 1-D density (fixed point of Lloyd's iteration)."""
    return lloyd(f, k, tol, max_iter).centers


def center_density_check(centers, f: Density1D, bins: int = 16,
                         exponent: float | None = None) -> float:
    """Pearson correlation between binned center counts and f^exponent at bin midpoints.

    ``exponent`` defaults to (d+2)/d with d = 1. When the target is flat (a
    uniform density) the correlation is undefined; the check then returns 1.0
    if every bin frequency is within 2/k of uniform and 0.0 otherwise.
    """
    c = np.sort(np.asarray(centers, dtype=np.float64))
    k = len(c)
    if k < 32:
        raise InsufficientResolution(f"need at least 32 centers, got {k}")
    if exponent is None:
        exponent = 3.0
    edges = np.linspace(f.lo, f.hi, bins + 1)
    counts, _ = np.histogram(c, edges)
    if np.count_nonzero(counts) < 2:
        raise InsufficientResolution("fewer than two bins contain a center")
    mids = 0.5 * (edges[1:] + edges[:-1])
    target = f.pdf(mids) ** exponent
    target = target / target.sum()
    freq = counts / k
    if np.ptp(target) <= 1e-12 * target.max():
        return 1.0 if np.abs(freq - target).max() <= 2.0 / k else 0.0
    return float(np.corrcoef(freq, target)[0, 1])


def cell_masses(f: Density1D, centers) -> np.ndarray:
    """Probability mass of each center's Voronoi cell under ``f`` (centers sorted first)."""
    c = np.sort(np.asarray(centers, dtype=np.float64))
    return _cells(_Tables(f), c)[0]


def uniform_lattice(lo: float, hi: float, k: int) -> np.ndarray:
    """Optimal k-level quantizer of Unif(lo, hi): cell midpoints of an even split."""
    return lo + (hi - lo) * (2 * np.arange(k) + 1) / (2 * k)


def optimal_point_density_exponent(d: int = 1) -> float:
    """Exponent of the asymptotic optimal-center density for squared error in dimension d.

    The classical result (Bennett / Zador / Graf-Luschgy) is f^(d/(d+2)).
    """
    return d / (d + 2.0)


__all__ = [
    "Density1D", "DensityKind", "LloydResult", "cell_masses", "center_density_check",
    "gaussian_density",
    "lloyd", "lloyd_optimal_centers", "optimal_point_density_exponent", "uniform_density",
    "uniform_lattice",
]
