"""Training-time numeric procedures: mixup with a folded Beta coefficient,
label-smoothed cross-entropy, cosine learning-rate schedule, proportional
two-axis SpecAugment masking, AdamW with bias-exempt decoupled weight decay,
and global L2 gradient clipping.

Everything is a pure numpy kernel; the caller owns all state and passes
RNGs explicitly.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field, fields
from pathlib import Path
from typing import Sequence

import numpy as np

from .errors import CapkitError


@dataclass(frozen=True)
class TrainConfig:
    """Training and decoding hyperparameters.  Defaults follow the AC setup;
    ``TrainConfig.for_dataset("cl")`` gives the CL column."""

    batch_size: int = 512
    lr0: float = 5e-4
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8
    weight_decay: float = 2.0
    clip_norm: float = 10.0
    label_smoothing: float = 0.1
    epochs: int = 100
    mixup_alpha: float = 0.4
    min_len: int = 3
    max_len: int = 30
    beam_size: int = 2

    def __post_init__(self) -> None:
        for name in ("batch_size", "lr0", "beta1", "beta2", "eps", "weight_decay",
                     "clip_norm", "epochs", "mixup_alpha", "beam_size"):
            if getattr(self, name) <= 0:
                raise CapkitError(f"TrainConfig: {name} must be positive")
        if not 0.0 <= self.label_smoothing < 1.0:
            raise CapkitError("TrainConfig: label_smoothing must be in [0, 1)")
        if not 1 <= self.min_len <= self.max_len:
            raise CapkitError("TrainConfig: need 1 <= min_len <= max_len")

    @classmethod
    def for_dataset(cls, tag: str) -> "TrainConfig":
        tag = tag.lower()
        if tag == "ac":
            return cls()
        if tag == "cl":
            return cls(epochs=400, clip_norm=1.0, label_smoothing=0.2,
                       max_len=20, beam_size=3)
        raise CapkitError(f"TrainConfig: no preset for dataset {tag!r}")

    @classmethod
    def from_file(cls, path: str | Path) -> "TrainConfig":
        """Plain ``key = value`` file; ``#`` starts a comment.  Unknown keys
        are rejected."""
        kinds = {f.name: f.type for f in fields(cls)}
        values: dict = {}
        with open(path, encoding="utf-8") as fh:
            for lineno, line in enumerate(fh, 1):
                line = line.split("#", 1)[0].strip()
                if not line:
                    continue
                if "=" not in line:
                    raise CapkitError(f"{path}:{lineno}: expected 'key = value'")
                key, _, raw = line.partition("=")
                key = key.strip()
                if key not in kinds:
                    raise CapkitError(f"{path}:{lineno}: unknown key {key!r}")
                caster = int if kinds[key] == "int" else float
                try:
                    values[key] = caster(raw.strip())
                except ValueError as exc:
                    raise CapkitError(f"{path}:{lineno}: bad value for {key}: {exc}") from exc
        return cls(**values)

    def as_dict(self) -> dict:
        return {f.name: getattr(self, f.name) for f in fields(self)}


@dataclass(frozen=True)
class MixupDraw:
    """A folded Beta(alpha, alpha) coefficient, always >= 0.5 so the first
    item of the pair dominates and keeps its target."""

    lam: float
    alpha: float

    def __post_init__(self) -> None:
        if self.lam < 0.5:
            raise CapkitError(f"MixupDraw: lambda {self.lam} < 0.5 after folding")


def draw_mixup(alpha: float, rng: np.random.Generator) -> MixupDraw:
    if alpha <= 0:
        raise CapkitError(f"draw_mixup: alpha must be > 0, got {alpha}")
    lam = float(rng.beta(alpha, alpha))
    return MixupDraw(max(lam, 1.0 - lam), alpha)


def mixup_pair(
    x1: np.ndarray,
    x2: np.ndarray,
    w1: np.ndarray,
    w2: np.ndarray,
    alpha: float,
    rng: np.random.Generator,
) -> tuple[np.ndarray, np.ndarray, float]:
    """Convex-combine an (audio embedding, word-embedding sequence) pair with
    one shared folded-Beta lambda; the training target stays the first
    item's."""
    x1 = np.asarray(x1, dtype=np.float64)
    x2 = np.asarray(x2, dtype=np.float64)
    w1 = np.asarray(w1, dtype=np.float64)
    w2 = np.asarray(w2, dtype=np.float64)
    if x1.shape != x2.shape:
        raise CapkitError(f"mixup_pair: audio shape mismatch {x1.shape} vs {x2.shape}")
    if w1.shape != w2.shape:
        raise CapkitError(f"mixup_pair: word shape mismatch {w1.shape} vs {w2.shape}")
    lam = draw_mixup(alpha, rng).lam
    return lam * x1 + (1.0 - lam) * x2, lam * w1 + (1.0 - lam) * w2, lam


def log_softmax(logits: np.ndarray) -> np.ndarray:
    z = np.asarray(logits, dtype=np.float64)
    shifted = z - z.max()
    return shifted - math.log(np.exp(shifted).sum())


def smoothed_targets(vocab_size: int, target_id: int, epsilon: float) -> np.ndarray:
    """The smoothed one-hot: 1 - eps + eps/V on the target, eps/V elsewhere."""
    if not 0.0 <= epsilon < 1.0:
        raise CapkitError(f"smoothing epsilon must be in [0, 1), got {epsilon}")
    if not 0 <= target_id < vocab_size:
        raise CapkitError(f"target id {target_id} outside vocabulary of {vocab_size}")
    q = np.full(vocab_size, epsilon / vocab_size)
    q[target_id] += 1.0 - epsilon
    return q


def label_smoothed_ce(logits: np.ndarray, target_id: int, epsilon: float) -> float:
    """Cross-entropy of softmax(logits) against the smoothed one-hot."""
    z = np.asarray(logits, dtype=np.float64)
    if not np.all(np.isfinite(z)):
        raise CapkitError("label_smoothed_ce: non-finite logits")
    q = smoothed_targets(z.size, target_id, epsilon)
    return float(-(q * log_softmax(z)).sum())


def cosine_lr(k: int, total_epochs: int, lr0: float) -> float:
    """lr_k = 0.5 * (1 + cos(k * pi / K)) * lr0 for k in [0, K]."""
    if total_epochs < 1:
        raise CapkitError(f"cosine_lr: total_epochs must be >= 1, got {total_epochs}")
    if not 0 <= k <= total_epochs:
        raise CapkitError(f"cosine_lr: epoch {k} outside [0, {total_epochs}]")
    return 0.5 * (1.0 + math.cos(k * math.pi / total_epochs)) * lr0


def spec_augment_embed(
    embeddings: np.ndarray,
    rng: np.random.Generator,
    time_proportion: float = 0.1,
    feature_proportion: float = 0.1,
    masks_per_axis: int = 2,
    fill_value: float = 0.0,
) -> np.ndarray:
    """Mask contiguous spans on both axes of a (T, d) embedding matrix.

    Each axis is masked ``masks_per_axis`` times; every mask length is a
    uniform integer in [0, floor(proportion * axis_size)] (inclusive) and the
    start is uniform over the valid range.  Unmasked cells are untouched.
    Draw order (time masks first, then feature masks; length before start)
    is fixed for reproducibility.
    """
    x = np.array(embeddings, dtype=np.float64, copy=True)
    if x.ndim != 2 or x.shape[0] < 1 or x.shape[1] < 1:
        raise CapkitError(f"spec_augment_embed: need a (T, d) matrix, got {x.shape}")
    n_time, n_feat = x.shape
    for _ in range(masks_per_axis):
        span = int(rng.integers(0, math.floor(time_proportion * n_time) + 1))
        start = int(rng.integers(0, n_time - span + 1))
        x[start : start + span, :] = fill_value
    for _ in range(masks_per_axis):
        span = int(rng.integers(0, math.floor(feature_proportion * n_feat) + 1))
        start = int(rng.integers(0, n_feat - span + 1))
        x[:, start : start + span] = fill_value
    return x


@dataclass
class ParamGroup:
    """One parameter tensor with its gradient and AdamW moment buffers."""

    name: str
    values: np.ndarray
    grads: np.ndarray = field(default=None)  # type: ignore[assignment]
    m: np.ndarray = field(default=None)  # type: ignore[assignment]
    v: np.ndarray = field(default=None)  # type: ignore[assignment]
    is_bias: bool = False

    def __post_init__(self) -> None:
        self.values = np.asarray(self.values, dtype=np.float64)
        if self.grads is None:
            self.grads = np.zeros_like(self.values)
        if self.m is None:
            self.m = np.zeros_like(self.values)
        if self.v is None:
            self.v = np.zeros_like(self.values)
        for name in ("grads", "m", "v"):
            arr = getattr(self, name)
            if arr.shape != self.values.shape:
                raise CapkitError(
                    f"ParamGroup {self.name!r}: {name} shape {arr.shape} != "
                    f"values shape {self.values.shape}"
                )


def adamw_step(
    groups: Sequence[ParamGroup],
    cfg: TrainConfig,
    t: int,
    lr: float | None = None,
) -> Sequence[ParamGroup]:
    """One decoupled-weight-decay Adam step (bias-corrected moments); the
    decay term is dropped for groups flagged ``is_bias``.  ``lr`` defaults to
    ``cfg.lr0`` and is the scheduler's job to vary."""
    if t < 1:
        raise CapkitError(f"adamw_step: step index must be >= 1, got {t}")
    step_lr = cfg.lr0 if lr is None else lr
    bc1 = 1.0 - cfg.beta1**t
    bc2 = 1.0 - cfg.beta2**t
    for g in groups:
        if np.isnan(g.grads).any():
            raise CapkitError(f"adamw_step: NaN gradient in group {g.name!r}")
        g.m[...] = cfg.beta1 * g.m + (1.0 - cfg.beta1) * g.grads
        g.v[...] = cfg.beta2 * g.v + (1.0 - cfg.beta2) * g.grads**2
        m_hat = g.m / bc1
        v_hat = g.v / bc2
        update = step_lr * (m_hat / (np.sqrt(v_hat) + cfg.eps))
        if not g.is_bias:
            update = update + step_lr * cfg.weight_decay * g.values
        g.values[...] = g.values - update
    return groups


def clip_grad_l2(groups: Sequence[ParamGroup], max_norm: float) -> float:
    """Scale all gradients so the global L2 norm is at most ``max_norm``;
    mutates in place and returns the pre-clip global norm."""
    if max_norm <= 0:
        raise CapkitError(f"clip_grad_l2: max_norm must be > 0, got {max_norm}")
    total = math.sqrt(sum(float(np.sum(g.grads**2)) for g in groups))
    if total > max_norm:
        scale = max_norm / total
        for g in groups:
            g.grads[...] = g.grads * scale
    return total
