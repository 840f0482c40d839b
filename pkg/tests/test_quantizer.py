import numpy as np
import pytest
from hypothesis import given, strategies as st
from hypothesis.extra.numpy import arrays
from scipy.spatial.distance import cdist

from wvq.errors import CorruptAssignment, InvalidInput
from wvq.quantizer import Assignment, quantize, quantized_vectors


def brute_force(z, e):
    return cdist(z, e, "sqeuclidean").argmin(axis=1)


@st.composite
def point_sets(draw):
    d = draw(st.integers(1, 5))
    n = draw(st.integers(1, 40))
    k = draw(st.integers(1, 12))
    el = st.floats(-100, 100, allow_nan=False)
    return draw(arrays(np.float64, (n, d), elements=el)), draw(arrays(np.float64, (k, d), elements=el))


@given(point_sets())
def test_assignment_is_nearest(pair):
    z, e = pair
    a = quantize(z, e)
    d2 = cdist(z, e, "sqeuclidean")
    chosen = d2[np.arange(len(z)), a.indices]
    assert np.all(chosen <= d2.min(axis=1) * (1 + 1e-12) + 1e-12)
    assert a.counts.sum() == len(z) and len(a.counts) == len(e)
    assert np.array_equal(np.bincount(a.indices, minlength=len(e)), a.counts)


def test_matches_cdist_oracle(rng):
    z = rng.standard_normal((3000, 6))
    e = rng.standard_normal((300, 6))
    assert np.array_equal(quantize(z, e).indices, brute_force(z, e))


def test_ties_go_to_smallest_index():
    e = np.array([[1.0, 0.0], [-1.0, 0.0], [1.0, 0.0]])
    z = np.array([[0.0, 0.0], [1.0, 0.0], [0.0, 5.0]])
    assert quantize(z, e).indices.tolist() == [0, 0, 0]
    same = np.zeros((400, 2))
    a = quantize(np.random.default_rng(0).standard_normal((50, 2)), same)
    assert a.indices.max() == 0 and a.counts[0] == 50


def test_far_from_origin_ties():
    # large offsets make the expanded-form distances lose precision
    e = 1e6 + np.array([[0.0], [2.0]])
    z = 1e6 + np.array([[1.0], [0.9999999], [1.0000001]])
    assert quantize(z, e).indices.tolist() == [0, 0, 1]


def test_worker_count_invariant(rng):
    z = rng.standard_normal((20000, 4))
    e = rng.standard_normal((700, 4))
    assert np.array_equal(quantize(z, e, workers=1).indices, quantize(z, e, workers=4).indices)


def test_single_code():
    a = quantize(np.ones((5, 3)), np.zeros((1, 3)))
    assert a.counts.tolist() == [5]


def test_quantized_vectors(rng):
    z = rng.standard_normal((10, 2))
    e = rng.standard_normal((4, 2))
    a = quantize(z, e)
    assert np.array_equal(quantized_vectors(z, e, a), e[a.indices])
    with pytest.raises(CorruptAssignment):
        quantized_vectors(z, e, Assignment(np.full(10, 4), np.zeros(4, int)))
    with pytest.raises(CorruptAssignment):
        quantized_vectors(z, e, Assignment(np.zeros(9, int), np.zeros(4, int)))


def test_invalid_inputs():
    with pytest.raises(InvalidInput):
        quantize(np.ones((3, 2)), np.ones((3, 3)))
    with pytest.raises(InvalidInput):
        quantize(np.ones((0, 2)), np.ones((3, 2)))
    with pytest.raises(InvalidInput):
        quantize(np.array([[np.inf, 0.0]]), np.ones((3, 2)))
