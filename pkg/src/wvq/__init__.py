"""Vector quantization with Gaussian Wasserstein distribution matching."""

from .distmatch import (GaussianMoments, bhattacharyya_gaussian, estimate_moments, grad_w2_codebook,
                        kl_gaussian, w2_empirical, w2_gaussian)
from .errors import (WVQError, InvalidInput, NotPSD, InvalidSpec, CorruptAssignment,
                     InsufficientData, DegenerateGradient, SingularCovariance, DivergedTraining,
                     InsufficientResolution, ReportWriteError, ConfigError)
from .metrics import CriterionTriple, criterion_triple, perplexity, quantization_error, utilization
from .quantizer import Assignment, quantize, quantized_vectors
from .sampling import SourceKind, SourceSpec, derive_seed, sample
from .trainers import Strategy, TrainerConfig, train

__version__ = "0.1.0"
