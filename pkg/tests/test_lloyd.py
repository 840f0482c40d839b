import math

import numpy as np
import pytest
from hypothesis import given, strategies as st

from wvq.errors import InsufficientResolution, InvalidSpec
from wvq.lloyd import (cell_masses, center_density_check, gaussian_density, lloyd,
                       lloyd_optimal_centers, optimal_point_density_exponent, uniform_density,
                       uniform_lattice)


def test_uniform_small_k():
    f = uniform_density(0.0, 1.0)
    assert lloyd_optimal_centers(f, 1) == pytest.approx([0.5])
    assert lloyd_optimal_centers(f, 2) == pytest.approx([0.25, 0.75])


@given(st.integers(1, 40), st.floats(-5, 5), st.floats(0.1, 10))
def test_uniform_lattice(k, lo, width):
    f = uniform_density(lo, lo + width, grid=2000)
    c = lloyd_optimal_centers(f, k)
    assert np.abs(c - uniform_lattice(lo, lo + width, k)).max() <= 1e-9 * max(1.0, width)


def test_monotone_descent_and_symmetry():
    f = gaussian_density(0.0, 1.0, grid=20000)
    res = lloyd(f, 24, tol=1e-12)
    d = np.array(res.distortions)
    assert np.all(np.diff(d) <= 1e-12 * d[0])  # summation roundoff only
    assert res.converged
    c = res.centers
    assert np.all(np.diff(c) > 0)
    assert np.allclose(c, -c[::-1], atol=1e-9)
    # fixed point: every center is the mean of its cell
    w = cell_masses(f, c)
    assert w.sum() == pytest.approx(1.0)


def test_small_k_gaussian_known_values():
    # optimal 2-level quantizer of N(0, 1) truncated to [-5, 5]: +-E[X | 0 < X < 5]
    phi = lambda x: math.exp(-x * x / 2) / math.sqrt(2 * math.pi)
    mass = math.erf(5 / math.sqrt(2))  # P(|X| < 5)
    half_mean = (phi(0) - phi(5)) / (mass / 2)
    second = 1 - 10 * phi(5) / mass
    res = lloyd(gaussian_density(grid=200000), 2)
    assert res.centers == pytest.approx([-half_mean, half_mean], abs=1e-8)
    assert res.distortions[-1] == pytest.approx(second - half_mean**2, abs=1e-8)
    assert half_mean == pytest.approx(math.sqrt(2 / math.pi), abs=1e-5)


def test_center_density_matches_classical_exponent():
    f = gaussian_density()
    c = lloyd_optimal_centers(f, 128)
    assert center_density_check(c, f, 16, optimal_point_density_exponent(1)) >= 0.98


def test_negative_control_random_centers():
    f = gaussian_density()
    c = np.sort(np.random.default_rng(5).uniform(-5, 5, 256))
    assert center_density_check(c, f, 16) < 0.9


def test_uniform_fallback():
    f = uniform_density(0.0, 1.0)
    assert center_density_check(uniform_lattice(0, 1, 64), f, 16) == 1.0
    skewed = np.concatenate([np.full(48, 0.01), np.linspace(0.1, 0.9, 16)])
    assert center_density_check(skewed, f, 16) == 0.0


def test_insufficient_resolution():
    f = gaussian_density()
    with pytest.raises(InsufficientResolution):
        center_density_check(np.linspace(-1, 1, 16), f)
    with pytest.raises(InsufficientResolution):
        center_density_check(np.full(64, 0.01), f)


def test_density_validation():
    with pytest.raises(InvalidSpec):
        gaussian_density(0, 0)
    with pytest.raises(InvalidSpec):
        uniform_density(1, 1)
    with pytest.raises(InvalidSpec):
        uniform_density(0, 1, grid=10)
    with pytest.raises(InvalidSpec):
        lloyd(uniform_density(), 0)
    assert optimal_point_density_exponent(1) == pytest.approx(1 / 3)
