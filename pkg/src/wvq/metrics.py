"""Quantization error, codebook utilization and codebook perplexity."""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .quantizer import Assignment, check_pair, quantize, quantized_vectors


@dataclass(frozen=True)
class CriterionTriple:
    quant_error: float
    utilization: float
    perplexity: float


def quantization_error(features, codebook, a: Assignment) -> float:
    """Mean squared distance between each feature and its assigned code."""
    z, _ = check_pair(features, codebook)
    diff = z - quantized_vectors(z, codebook, a)
    return float(np.einsum("ij,ij->i", diff, diff).mean())


def utilization(a: Assignment) -> float:
    """Fraction of codes assigned at least one feature."""
    return float(np.count_nonzero(a.counts)) / len(a.counts)


def usage_histogram(a: Assignment) -> np.ndarray:
    counts = np.asarray(a.counts, dtype=np.float64)
    return counts / counts.sum()


def perplexity(probs) -> float:
    """exp of the Shannon entropy of the usage distribution (0 log 0 = 0).

    The result is clipped to [1, number of non-zero entries] to absorb
    roundoff at the two extremes.
    """
    p = np.asarray(probs, dtype=np.float64)
    p = p[p > 0]
    h = -float(np.sum(p * np.log(p)))
    return min(max(math.exp(h), 1.0), float(len(p)))


def criterion_triple(features, codebook, a: Assignment | None = None) -> CriterionTriple:
    if a is None:
        a = quantize(features, codebook)
    return CriterionTriple(
        quantization_error(features, codebook, a),
        utilization(a),
        perplexity(usage_histogram(a)),
    )
