"""Codebook update strategies for the encoder-free ("atomic") setting.

Features are sampled from a fixed distribution; only the codebook, or for
Linear VQ an affine map of a frozen codebook, is trained. Every step function
mutates the :class:`TrainerState` in place and returns a :class:`StepReport`
measured on the training batch against the codebook *before* the update.
"""

from __future__ import annotations

import enum
import math
from dataclasses import dataclass, field, replace

import numpy as np

from . import distmatch, sampling
from .errors import DegenerateGradient, DivergedTraining, InvalidInput, InvalidSpec, NotPSD
from .metrics import CriterionTriple, criterion_triple
from .quantizer import Assignment, as_points, quantize
from .sampling import SourceSpec


class Strategy(str, enum.Enum):
    VANILLA = "Vanilla"
    EMA = "EMA"
    ONLINE = "Online"
    LINEAR = "Linear"
    WASSERSTEIN = "Wasserstein"


@dataclass(frozen=True)
class TrainerConfig:
    """Hyper-parameters for one training run.

    ``w2_code_scaling`` multiplies the W2 gradient of every code by K. The
    moment estimates average over codes, so the raw per-code gradient shrinks
    as 1/K and would barely move a large codebook under plain SGD.
    ``eval_size`` is the size of the held-out evaluation batch (defaults to
    ``batch_size``). ``lr_schedule`` is ``"constant"`` or ``"cosine"``.
    """

    strategy: Strategy = Strategy.WASSERSTEIN
    codebook_size: int = 2048
    learning_rate: float = 0.1
    ema_decay: float = 0.99
    gamma: float = 0.5
    steps: int = 200
    batch_size: int = 5000
    jitter: float = distmatch.DEFAULT_JITTER
    dead_reinit_threshold: float = 1.0
    eval_size: int | None = None
    w2_code_scaling: bool = True
    freeze_projection: bool = False
    lr_schedule: str = "constant"

    def __post_init__(self):
        object.__setattr__(self, "strategy", Strategy(self.strategy))
        if self.codebook_size < 1 or self.batch_size < 1 or self.steps < 0:
            raise InvalidSpec("codebook_size and batch_size must be >= 1 and steps >= 0")
        if not self.learning_rate > 0:
            raise InvalidSpec("learning_rate must be positive")
        if not 0.0 <= self.ema_decay <= 1.0:
            raise InvalidSpec("ema_decay must lie in [0, 1]")
        if self.gamma < 0 or self.dead_reinit_threshold < 0:
            raise InvalidSpec("gamma and dead_reinit_threshold must be non-negative")
        if not self.jitter > 0:
            raise InvalidSpec("jitter must be positive")
        if self.eval_size is not None and self.eval_size < 2:
            raise InvalidSpec("eval_size must be >= 2")
        if self.lr_schedule not in ("constant", "cosine"):
            raise InvalidSpec(f"unknown lr_schedule {self.lr_schedule!r}")

    def lr_at(self, step: int) -> float:
        """Learning rate for a 0-based step; ``cosine`` decays half a cycle to 0 over ``steps``."""
        if self.lr_schedule == "constant" or self.steps == 0:
            return self.learning_rate
        return self.learning_rate * 0.5 * (1.0 + math.cos(math.pi * min(step, self.steps) / self.steps))

    @property
    def held_out_size(self) -> int:
        return self.eval_size if self.eval_size is not None else self.batch_size


@dataclass
class TrainerState:
    codebook: np.ndarray
    ema_cluster_size: np.ndarray
    ema_cluster_sum: np.ndarray
    base: np.ndarray  # frozen codes (Linear VQ)
    projection: np.ndarray
    bias: np.ndarray
    rng: np.random.Generator = field(repr=False)
    step: int = 0


@dataclass(frozen=True)
class StepReport:
    triple: CriterionTriple
    w2: float
    step: int
    held_out: bool = False


def init_state(codebook, cfg: TrainerConfig, seed: int = 0) -> TrainerState:
    """Fresh state around an initial codebook.

    Running usage starts at the uniform share batch_size / K, so no code is
    considered dead before it has had a chance to be selected.
    """
    e = as_points(codebook, "codebook").copy()
    k, d = e.shape
    usage = np.full(k, cfg.batch_size / k)
    return TrainerState(
        codebook=e,
        ema_cluster_size=usage,
        ema_cluster_sum=usage[:, None] * e,
        base=e.copy(),
        projection=np.eye(d),
        bias=np.zeros(d),
        rng=sampling.make_rng(seed),
    )


def cluster_sums(batch: np.ndarray, a: Assignment) -> np.ndarray:
    """Per-code sum of assigned features, shape (K, d)."""
    k = a.k
    return np.stack(
        [np.bincount(a.indices, weights=batch[:, j], minlength=k) for j in range(batch.shape[1])],
        axis=1,
    )


def vanilla_grad(batch: np.ndarray, codebook: np.ndarray, a: Assignment) -> np.ndarray:
    """Gradient of (1/N) sum_i |z_i - e_{r_i}|^2 with respect to each code."""
    counts = a.counts.astype(np.float64)
    return (2.0 / len(batch)) * (counts[:, None] * codebook - cluster_sums(batch, a))


def _safe_w2(batch: np.ndarray, codebook: np.ndarray, jitter: float) -> float:
    if len(batch) < 2 or len(codebook) < 2:
        return math.nan
    return distmatch.w2_empirical(batch, codebook, jitter)


def _report(batch, codebook, a: Assignment, cfg: TrainerConfig, step: int,
            held_out: bool = False, w2: float | None = None) -> StepReport:
    if w2 is None:
        w2 = _safe_w2(batch, codebook, cfg.jitter)
    return StepReport(criterion_triple(batch, codebook, a), w2, step, held_out)


# magnitudes beyond this overflow once squared (distances, covariances)
_MAX_MAGNITUDE = 1e150


def _check_finite(*arrays: np.ndarray) -> None:
    for arr in arrays:
        if not np.all(np.isfinite(arr)) or np.abs(arr).max(initial=0.0) > _MAX_MAGNITUDE:
            raise DivergedTraining("non-finite or overflowing values after update")


def _prepare(state: TrainerState, batch, cfg: TrainerConfig, expected: Strategy):
    if cfg.strategy is not expected:
        raise InvalidInput(f"config strategy is {cfg.strategy.value}, step is for {expected.value}")
    z = as_points(batch, "batch")
    if z.shape[1] != state.codebook.shape[1]:
        raise InvalidInput("batch dimension does not match the codebook")
    return z, quantize(z, state.codebook)


def vanilla_step(state: TrainerState, batch, cfg: TrainerConfig) -> StepReport:
    z, a = _prepare(state, batch, cfg, Strategy.VANILLA)
    report = _report(z, state.codebook, a, cfg, state.step)
    new = state.codebook - cfg.lr_at(state.step) * vanilla_grad(z, state.codebook, a)
    _check_finite(new)
    state.codebook = new
    state.step += 1
    return report


def _ema_update(state: TrainerState, z: np.ndarray, a: Assignment, alpha: float) -> None:
    counts = a.counts.astype(np.float64)
    sums = cluster_sums(z, a)
    used = counts > 0
    new = state.codebook.copy()
    new[used] = alpha * new[used] + (1.0 - alpha) * (sums[used] / counts[used, None])
    _check_finite(new)
    state.codebook = new
    state.ema_cluster_size = alpha * state.ema_cluster_size + (1.0 - alpha) * counts
    state.ema_cluster_sum = alpha * state.ema_cluster_sum + (1.0 - alpha) * sums


def ema_step(state: TrainerState, batch, cfg: TrainerConfig) -> StepReport:
    """Move every selected code toward its cluster mean: e <- a*e + (1-a)*mean."""
    z, a = _prepare(state, batch, cfg, Strategy.EMA)
    report = _report(z, state.codebook, a, cfg, state.step)
    _ema_update(state, z, a, cfg.ema_decay)
    state.step += 1
    return report


def kmeanspp_pick(points: np.ndarray, anchors: np.ndarray, m: int,
                  rng: np.random.Generator) -> np.ndarray:
    """Pick ``m`` rows of ``points`` by k-means++ D^2 sampling.

    Distances are measured to ``anchors`` (possibly empty) plus every row
    already picked. Returns row indices; rows are never picked twice.
    """
    n = len(points)
    m = min(m, n)
    if len(anchors):
        diff = points - anchors[quantize(points, anchors).indices]
        d2 = np.einsum("ij,ij->i", diff, diff)
    else:
        d2 = np.full(n, np.inf)
    taken = np.zeros(n, dtype=bool)
    picks = np.empty(m, dtype=np.int64)
    for j in range(m):
        if np.isinf(d2).any():
            weights = np.where(taken, 0.0, 1.0)
        else:
            weights = np.where(taken, 0.0, d2)
            if weights.sum() <= 0.0:
                weights = np.where(taken, 0.0, 1.0)
        cdf = np.cumsum(weights)
        pick = int(np.searchsorted(cdf, rng.random() * cdf[-1], side="right"))
        pick = min(pick, n - 1)
        while weights[pick] == 0.0:  # guard against landing on a zero-width slot
            pick -= 1
        picks[j] = pick
        taken[pick] = True
        diff = points - points[pick]
        d2 = np.minimum(d2, np.einsum("ij,ij->i", diff, diff))
    return picks


def online_step(state: TrainerState, batch, cfg: TrainerConfig) -> StepReport:
    """EMA update, then re-seed dead codes from the batch with k-means++ sampling.

    A code is dead when its decayed usage (EMA of per-batch counts, decay
    ``ema_decay``) drops below ``dead_reinit_threshold``. Dead codes are
    replaced in order of increasing usage; at most one code per batch point.
    """
    z, a = _prepare(state, batch, cfg, Strategy.ONLINE)
    report = _report(z, state.codebook, a, cfg, state.step)
    _ema_update(state, z, a, cfg.ema_decay)
    usage = state.ema_cluster_size
    dead = np.flatnonzero(usage < cfg.dead_reinit_threshold)
    if dead.size:
        dead = dead[np.argsort(usage[dead], kind="stable")][: len(z)]
        live = np.ones(len(usage), dtype=bool)
        live[dead] = False
        picks = kmeanspp_pick(z, state.codebook[live], len(dead), state.rng)
        fresh = len(z) / len(usage)
        state.codebook[dead] = z[picks]
        state.ema_cluster_size[dead] = fresh
        state.ema_cluster_sum[dead] = fresh * z[picks]
    state.step += 1
    return report


def effective_codebook(state: TrainerState) -> np.ndarray:
    return state.base @ state.projection.T + state.bias


def linear_grads(batch: np.ndarray, state: TrainerState, a: Assignment):
    """Gradients of the vanilla loss on W e_k + b with respect to (W, b)."""
    g = vanilla_grad(batch, effective_codebook(state), a)
    return g.T @ state.base, g.sum(axis=0)


def linear_step(state: TrainerState, batch, cfg: TrainerConfig) -> StepReport:
    """Gradient step on the affine map (W, b) applied to the frozen base codes."""
    z, a = _prepare(state, batch, cfg, Strategy.LINEAR)
    report = _report(z, state.codebook, a, cfg, state.step)
    d_w, d_b = linear_grads(z, state, a)
    lr = cfg.lr_at(state.step)
    if not cfg.freeze_projection:
        state.projection = state.projection - lr * d_w
    state.bias = state.bias - lr * d_b
    _check_finite(state.projection, state.bias)
    new = effective_codebook(state)
    _check_finite(new)
    state.codebook = new
    state.step += 1
    return report


def wasserstein_step(state: TrainerState, batch, cfg: TrainerConfig) -> StepReport:
    """SGD on the vanilla loss plus gamma times the empirical W2 loss.

    When W2 is too close to zero to differentiate, the step falls back to the
    vanilla gradient alone.
    """
    z, a = _prepare(state, batch, cfg, Strategy.WASSERSTEIN)
    grad = vanilla_grad(z, state.codebook, a)
    w2 = None
    if cfg.gamma > 0:
        try:
            wg = distmatch.grad_w2_codebook(z, state.codebook, cfg.jitter)
        except DegenerateGradient:
            w2 = 0.0
        except NotPSD as exc:
            # the jitter no longer registers against the codebook spread
            raise DivergedTraining(f"W2 gradient broke down: {exc}") from exc
        else:
            w2 = wg.loss
            scale = len(state.codebook) if cfg.w2_code_scaling else 1.0
            grad = grad + (cfg.gamma * scale) * wg.d_codebook
    report = _report(z, state.codebook, a, cfg, state.step, w2=w2)
    new = state.codebook - cfg.lr_at(state.step) * grad
    _check_finite(new)
    state.codebook = new
    state.step += 1
    return report


STEP_FUNCTIONS = {
    Strategy.VANILLA: vanilla_step,
    Strategy.EMA: ema_step,
    Strategy.ONLINE: online_step,
    Strategy.LINEAR: linear_step,
    Strategy.WASSERSTEIN: wasserstein_step,
}


def evaluate(state: TrainerState, features: np.ndarray, cfg: TrainerConfig) -> StepReport:
    a = quantize(features, state.codebook)
    return _report(features, state.codebook, a, cfg, state.step, held_out=True)


def train(cfg: TrainerConfig, feature_spec: SourceSpec, init_spec: SourceSpec,
          seed: int) -> tuple[TrainerState, list[StepReport]]:
    """Run ``cfg.steps`` updates on fresh batches and return the final state and reports.

    Reports are: a held-out evaluation of the initial codebook, one report per
    step, and (when steps > 0) a held-out evaluation of the final codebook.
    All randomness derives from ``seed`` through independent streams.
    """
    if feature_spec.dim != init_spec.dim:
        raise InvalidSpec("feature and codebook sources must share a dimension")
    seed = sampling.check_seed(seed)
    codebook = sampling.sample(init_spec, cfg.codebook_size, sampling.derive_seed(seed, 0))
    batch_rng = sampling.make_rng(sampling.derive_seed(seed, 1))
    held_out = sampling.sample(feature_spec, cfg.held_out_size, sampling.derive_seed(seed, 2))
    state = init_state(codebook, cfg, sampling.derive_seed(seed, 3))
    step_fn = STEP_FUNCTIONS[cfg.strategy]
    reports = [evaluate(state, held_out, cfg)]
    for _ in range(cfg.steps):
        batch = sampling.draw(feature_spec, cfg.batch_size, batch_rng)
        reports.append(step_fn(state, batch, cfg))
    if cfg.steps:
        reports.append(evaluate(state, held_out, cfg))
    return state, reports


def run_training(cfg: TrainerConfig, feature_spec: SourceSpec, init_spec: SourceSpec,
                 seed: int) -> list[StepReport]:
    return train(cfg, feature_spec, init_spec, seed)[1]


def with_strategy(cfg: TrainerConfig, strategy: Strategy | str) -> TrainerConfig:
    return replace(cfg, strategy=Strategy(strategy))
