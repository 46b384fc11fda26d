"""A minimal hand-differentiated captioner exercising the full training and
decoding contracts: mean-pooled audio features plus the mean embedding of
the previous tokens feed a log-linear next-token distribution, trained by
teacher forcing with mixup, SpecAugment, label smoothing, AdamW, gradient
clipping and the cosine schedule.

Binary side formats:

* AEMB audio features: magic ``AEMB``, u32 version=1, u32 T, u32 d_a,
  then T*d_a row-major little-endian f32 (integers little-endian too).
* Checkpoint: magic ``TOYC``, u32 version=1, u32 d_a, u32 d, u32 V, then
  the four parameter tensors (w_audio, embed, w_out, b_out) as row-major
  little-endian f32.
"""

from __future__ import annotations

import struct
from dataclasses import dataclass
from pathlib import Path
from typing import Mapping, Sequence

import numpy as np

from .corpus import ClipRecord, RejectedCaption, preprocess_caption, select_caption
from .decode import DecodeConfig, ScorerInterface, Vocabulary, greedy_decode
from .errors import CapkitError, FormatError
from .trainkit import (
    ParamGroup,
    TrainConfig,
    adamw_step,
    clip_grad_l2,
    cosine_lr,
    draw_mixup,
    log_softmax,
    smoothed_targets,
    spec_augment_embed,
)

AEMB_MAGIC = b"AEMB"
AEMB_VERSION = 1
CHECKPOINT_MAGIC = b"TOYC"
CHECKPOINT_VERSION = 1

INIT_SCALE = 0.1


@dataclass
class ToyParams:
    """w_audio: (d_a, d) audio projection; embed: (V, d) word embeddings
    (doubling as the input layer); w_out: (d, V) output matrix; b_out: (V,)."""

    w_audio: np.ndarray
    embed: np.ndarray
    w_out: np.ndarray
    b_out: np.ndarray

    def __post_init__(self) -> None:
        self.w_audio = np.asarray(self.w_audio, dtype=np.float64)
        self.embed = np.asarray(self.embed, dtype=np.float64)
        self.w_out = np.asarray(self.w_out, dtype=np.float64)
        self.b_out = np.asarray(self.b_out, dtype=np.float64)
        d_a, d = self.w_audio.shape
        vocab, d_e = self.embed.shape
        d_o, vocab_o = self.w_out.shape
        if d_e != d or d_o != d or vocab_o != vocab or self.b_out.shape != (vocab,):
            raise CapkitError(
                "ToyParams: inconsistent shapes "
                f"w_audio{self.w_audio.shape} embed{self.embed.shape} "
                f"w_out{self.w_out.shape} b_out{self.b_out.shape}"
            )
        if not all(
            np.all(np.isfinite(a))
            for a in (self.w_audio, self.embed, self.w_out, self.b_out)
        ):
            raise CapkitError("ToyParams: non-finite values")

    @classmethod
    def init(
        cls, d_audio: int, d_model: int, vocab_size: int, rng: np.random.Generator
    ) -> "ToyParams":
        def u(*shape):
            return rng.uniform(-INIT_SCALE, INIT_SCALE, size=shape)

        return cls(
            u(d_audio, d_model),
            u(vocab_size, d_model),
            u(d_model, vocab_size),
            u(vocab_size),
        )

    @classmethod
    def zeros_like(cls, other: "ToyParams") -> "ToyParams":
        return cls(
            np.zeros_like(other.w_audio),
            np.zeros_like(other.embed),
            np.zeros_like(other.w_out),
            np.zeros_like(other.b_out),
        )

    def copy(self) -> "ToyParams":
        return ToyParams(
            self.w_audio.copy(), self.embed.copy(), self.w_out.copy(), self.b_out.copy()
        )

    @property
    def d_audio(self) -> int:
        return self.w_audio.shape[0]

    @property
    def d_model(self) -> int:
        return self.w_audio.shape[1]

    @property
    def vocab_size(self) -> int:
        return self.embed.shape[0]


@dataclass(frozen=True)
class AudioContext:
    """Frame-level audio features (T, d_a); ``pooled`` is the time mean and
    is derived on access so it can never go stale."""

    features: np.ndarray

    def __post_init__(self) -> None:
        feats = np.asarray(self.features, dtype=np.float64)
        if feats.ndim != 2 or feats.shape[0] < 1:
            raise CapkitError(f"AudioContext: need a (T, d_a) matrix, got {feats.shape}")
        object.__setattr__(self, "features", feats)

    @property
    def pooled(self) -> np.ndarray:
        return self.features.mean(axis=0)


def forward(params: ToyParams, audio: AudioContext, prefix_ids: Sequence[int]) -> np.ndarray:
    """Next-token logits: w_out^T (w_audio^T pooled + mean(embed[prefix])) + b_out."""
    ids = np.asarray(prefix_ids, dtype=np.int64)
    if ids.size == 0:
        raise CapkitError("forward: prefix must be non-empty (starts at bos)")
    if ids.min() < 0 or ids.max() >= params.vocab_size:
        raise CapkitError(
            f"forward: token id outside vocabulary of size {params.vocab_size}"
        )
    if audio.pooled.shape != (params.d_audio,):
        raise CapkitError(
            f"forward: audio dim {audio.pooled.shape} != ({params.d_audio},)"
        )
    h = params.w_audio.T @ audio.pooled + params.embed[ids].mean(axis=0)
    return params.w_out.T @ h + params.b_out


class ToyScorer(ScorerInterface):
    """ScorerInterface adapter: log-softmax over the toy model's logits."""

    def __init__(self, params: ToyParams):
        self.params = params

    def next_logprobs(self, audio_context, prefix_token_ids) -> np.ndarray:
        return log_softmax(forward(self.params, audio_context, prefix_token_ids))


@dataclass(frozen=True)
class TrainExample:
    """One teacher-forcing example: the full token sequence [bos/TE, words,
    eos] with optional mixup partner (the partner's targets are unused)."""

    audio: AudioContext
    token_ids: tuple[int, ...]
    mix_audio: AudioContext | None = None
    mix_token_ids: tuple[int, ...] | None = None
    mix_lambda: float = 1.0

    def __post_init__(self) -> None:
        if len(self.token_ids) < 2:
            raise CapkitError("TrainExample: need at least [bos, eos]")
        if (self.mix_audio is None) != (self.mix_token_ids is None):
            raise CapkitError("TrainExample: mixup partner needs audio and tokens")


def backward(
    params: ToyParams, batch: Sequence[TrainExample], label_smoothing: float
) -> tuple[float, ToyParams]:
    """Loss (mean smoothed CE over all teacher-forcing steps in the batch)
    plus exact analytic gradients, shaped like the parameters.

    For a step with prefix p, pooled audio a and smoothed target q:
    h = w_audio^T a + mean(embed[p]); z = w_out^T h + b_out; dz = softmax(z) - q;
    grad b_out = dz, grad w_out = h dz^T, dh = w_out dz, grad w_audio = a dh^T,
    and each prefix row of embed receives dh / len(p) (scaled by lambda for
    mixed prefixes).
    """
    grads = ToyParams.zeros_like(params)
    total_loss = 0.0
    n_steps = 0
    for ex in batch:
        mixed = ex.mix_audio is not None
        lam = ex.mix_lambda if mixed else 1.0
        if mixed:
            pooled = lam * ex.audio.pooled + (1.0 - lam) * ex.mix_audio.pooled
        else:
            pooled = ex.audio.pooled
        audio_h = params.w_audio.T @ pooled
        for t in range(1, len(ex.token_ids)):
            prefix = np.asarray(ex.token_ids[:t], dtype=np.int64)
            target = ex.token_ids[t]
            u = params.embed[prefix].mean(axis=0)
            if mixed:
                partner = np.asarray(
                    ex.mix_token_ids[: min(t, len(ex.mix_token_ids))], dtype=np.int64
                )
                u = lam * u + (1.0 - lam) * params.embed[partner].mean(axis=0)
            h = audio_h + u
            logp = log_softmax(params.w_out.T @ h + params.b_out)
            q = smoothed_targets(params.vocab_size, target, label_smoothing)
            total_loss += float(-(q * logp).sum())
            n_steps += 1

            dz = np.exp(logp) - q
            grads.b_out += dz
            grads.w_out += np.outer(h, dz)
            dh = params.w_out @ dz
            grads.w_audio += np.outer(pooled, dh)
            np.add.at(grads.embed, prefix, lam * dh / prefix.size)
            if mixed:
                np.add.at(grads.embed, partner, (1.0 - lam) * dh / partner.size)
    if n_steps == 0:
        raise CapkitError("backward: empty batch")
    grads.w_audio /= n_steps
    grads.embed /= n_steps
    grads.w_out /= n_steps
    grads.b_out /= n_steps
    return total_loss / n_steps, grads


# --- binary formats ---------------------------------------------------------


def write_aemb(path: str | Path, features: np.ndarray) -> None:
    feats = np.asarray(features, dtype=np.float64)
    if feats.ndim != 2:
        raise CapkitError(f"write_aemb: need a (T, d_a) matrix, got {feats.shape}")
    with open(path, "wb") as fh:
        fh.write(AEMB_MAGIC)
        fh.write(struct.pack("<III", AEMB_VERSION, feats.shape[0], feats.shape[1]))
        fh.write(np.ascontiguousarray(feats, dtype="<f4").tobytes())


def read_aemb(path: str | Path) -> np.ndarray:
    with open(path, "rb") as fh:
        data = fh.read()
    if data[:4] != AEMB_MAGIC:
        raise FormatError(f"{path}: not an AEMB file (bad magic)")
    if len(data) < 16:
        raise FormatError(f"{path}: truncated AEMB header")
    version, n_time, dim = struct.unpack_from("<III", data, 4)
    if version != AEMB_VERSION:
        raise FormatError(f"{path}: unsupported AEMB version {version}")
    expected = 16 + 4 * n_time * dim
    if len(data) != expected:
        raise FormatError(f"{path}: expected {expected} bytes, got {len(data)}")
    payload = np.frombuffer(data, dtype="<f4", offset=16)
    return payload.reshape(n_time, dim).astype(np.float64)


def save_checkpoint(path: str | Path, params: ToyParams) -> None:
    with open(path, "wb") as fh:
        fh.write(CHECKPOINT_MAGIC)
        fh.write(
            struct.pack(
                "<IIII",
                CHECKPOINT_VERSION,
                params.d_audio,
                params.d_model,
                params.vocab_size,
            )
        )
        for tensor in (params.w_audio, params.embed, params.w_out, params.b_out):
            fh.write(np.ascontiguousarray(tensor, dtype="<f4").tobytes())


def load_checkpoint(path: str | Path) -> ToyParams:
    with open(path, "rb") as fh:
        data = fh.read()
    if data[:4] != CHECKPOINT_MAGIC:
        raise FormatError(f"{path}: not a toy checkpoint (bad magic)")
    version, d_a, d, vocab = struct.unpack_from("<IIII", data, 4)
    if version != CHECKPOINT_VERSION:
        raise FormatError(f"{path}: unsupported checkpoint version {version}")
    sizes = [(d_a, d), (vocab, d), (d, vocab), (vocab,)]
    expected = 20 + 4 * sum(int(np.prod(s)) for s in sizes)
    if len(data) != expected:
        raise FormatError(f"{path}: expected {expected} bytes, got {len(data)}")
    offset = 20
    tensors = []
    for shape in sizes:
        count = int(np.prod(shape))
        arr = np.frombuffer(data, dtype="<f4", offset=offset, count=count)
        tensors.append(arr.reshape(shape).astype(np.float64))
        offset += 4 * count
    return ToyParams(*tensors)


# --- training loop ----------------------------------------------------------


@dataclass(frozen=True)
class EpochMetrics:
    epoch: int
    lr: float
    train_loss: float
    val_metric: float | None
    val_metric_name: str | None


@dataclass
class TrainResult:
    params: ToyParams  # best checkpoint per the selection metric
    final_params: ToyParams
    vocab: Vocabulary
    best_epoch: int
    trace: list[EpochMetrics]


def _features_for(
    record: ClipRecord, features: Mapping[str, np.ndarray] | None
) -> np.ndarray:
    if features is not None and record.id in features:
        return np.asarray(features[record.id], dtype=np.float64)
    if record.embedding_path is not None:
        path = Path(record.embedding_path)
        if path.is_file():
            return read_aemb(path)
    raise CapkitError(f"train_toy: no audio features for clip {record.id!r}")


def build_vocabulary(
    records: Sequence[ClipRecord], tasks: Sequence[str] = ()
) -> Vocabulary:
    """Sorted unique tokens over every caption of every record."""
    tokens: set[str] = set()
    for record in records:
        for raw in record.captions:
            cap = preprocess_caption(raw)
            if isinstance(cap, RejectedCaption):
                raise CapkitError(f"clip {record.id!r}: unusable caption {raw!r}")
            tokens.update(cap.tokens)
    return Vocabulary(sorted(tokens), tasks)


def _encode_caption(vocab: Vocabulary, caption: str, bos_id: int) -> tuple[int, ...]:
    cap = preprocess_caption(caption)
    if isinstance(cap, RejectedCaption):
        raise CapkitError(f"unusable caption {caption!r}")
    return (bos_id,) + vocab.encode(cap.tokens) + (vocab.eos_id,)


def _validation_loss(
    params: ToyParams,
    vocab: Vocabulary,
    records: Sequence[ClipRecord],
    features: Mapping[str, np.ndarray] | None,
    tasks: Sequence[str],
    label_smoothing: float,
) -> float:
    examples = []
    for record in records:
        bos = vocab.bos_for(record.dataset if record.dataset in tasks else None)
        audio = AudioContext(_features_for(record, features))
        for caption in record.captions:
            examples.append(TrainExample(audio, _encode_caption(vocab, caption, bos)))
    loss, _ = backward(params, examples, label_smoothing)
    return loss


def _validation_fense(
    params: ToyParams,
    vocab: Vocabulary,
    records: Sequence[ClipRecord],
    features: Mapping[str, np.ndarray] | None,
    tasks: Sequence[str],
    cfg: TrainConfig,
    stop_word_ids: frozenset[int],
    embedding_store,
    lexicons,
) -> float:
    from .fense import score_fense

    scorer = ToyScorer(params)
    candidates = []
    reference_sets = []
    for record in records:
        task = record.dataset if record.dataset in tasks else None
        decode_cfg = DecodeConfig(
            beam_size=1,
            min_len=cfg.min_len,
            max_len=cfg.max_len,
            stop_word_ids=stop_word_ids,
            task=task,
        )
        decoded = greedy_decode(
            AudioContext(_features_for(record, features)), scorer, vocab, decode_cfg
        )
        candidates.append(" ".join(vocab.decode(decoded.token_ids)))
        reference_sets.append(list(record.captions))
    scores, _ = score_fense(candidates, reference_sets, embedding_store, lexicons)
    return sum(scores) / len(scores)


def train_toy(
    records: Sequence[ClipRecord],
    features: Mapping[str, np.ndarray] | None,
    cfg: TrainConfig,
    tasks: Sequence[str] = (),
    seed: int = 0,
    val_records: Sequence[ClipRecord] = (),
    d_model: int = 16,
    balance_target: str | None = None,
    embedding_store=None,
    lexicons=None,
    stop_words: Sequence[str] = (),
) -> TrainResult:
    """Teacher-forced training of the toy captioner.

    Per epoch: optional balanced sampling toward ``balance_target``, one
    seeded caption choice per multi-caption clip, SpecAugment on the frame
    features, mixup partners from a batch permutation, label-smoothed CE,
    global-L2 clipping and an AdamW step per batch under the cosine
    schedule.  Checkpoint selection uses validation FENSE when an embedding
    store is supplied, else validation loss, else the final epoch.
    Deterministic given ``seed``.

    ``embedding_store`` is anything with ``embedding_for(caption)``: FENSE
    selection scores captions the model generates, so a provider that embeds
    on demand is usually needed (a precomputed SEMB store only works when it
    covers the reachable caption space).
    """
    from .corpus import balanced_epoch

    if not records:
        raise CapkitError("train_toy: empty corpus")
    tasks = tuple(tasks)
    vocab = build_vocabulary(list(records) + list(val_records), tasks)
    rng = np.random.default_rng(seed)
    params = ToyParams.init(
        d_audio=_features_for(records[0], features).shape[1],
        d_model=d_model,
        vocab_size=len(vocab),
        rng=rng,
    )
    groups = [
        ParamGroup("w_audio", params.w_audio),
        ParamGroup("embed", params.embed),
        ParamGroup("w_out", params.w_out),
        ParamGroup("b_out", params.b_out, is_bias=True),
    ]
    by_key = {(r.dataset, r.subset, r.id): r for r in records}
    audio_cache = {r.id: _features_for(r, features) for r in records}
    stop_word_ids = vocab.stop_word_ids(stop_words)

    use_fense = embedding_store is not None and lexicons is not None and val_records
    metric_name = "fense" if use_fense else ("val_loss" if val_records else None)
    best_metric: float | None = None
    best_epoch = -1
    best_params = params.copy()
    trace: list[EpochMetrics] = []
    step = 0

    for epoch in range(cfg.epochs):
        lr = cosine_lr(epoch, cfg.epochs, cfg.lr0)
        if balance_target is not None:
            plan = balanced_epoch(
                balance_target, records, seed=int(rng.integers(2**63))
            )
            epoch_records = [by_key[entry] for entry in plan.entries]
        else:
            order = rng.permutation(len(records))
            epoch_records = [records[i] for i in order]

        epoch_loss = 0.0
        n_batches = 0
        for start in range(0, len(epoch_records), cfg.batch_size):
            chunk = epoch_records[start : start + cfg.batch_size]
            sequences = []
            audios = []
            for record in chunk:
                bos = vocab.bos_for(record.dataset if record.dataset in tasks else None)
                caption = select_caption(record, rng)
                sequences.append(_encode_caption(vocab, caption, bos))
                audios.append(
                    AudioContext(spec_augment_embed(audio_cache[record.id], rng))
                )
            partner = rng.permutation(len(chunk))
            batch = []
            for i in range(len(chunk)):
                j = int(partner[i])
                lam = draw_mixup(cfg.mixup_alpha, rng).lam
                batch.append(
                    TrainExample(
                        audios[i],
                        sequences[i],
                        mix_audio=audios[j],
                        mix_token_ids=sequences[j],
                        mix_lambda=lam,
                    )
                )
            loss, grads = backward(params, batch, cfg.label_smoothing)
            for group, grad in zip(
                groups, (grads.w_audio, grads.embed, grads.w_out, grads.b_out)
            ):
                group.grads[...] = grad
            clip_grad_l2(groups, cfg.clip_norm)
            step += 1
            adamw_step(groups, cfg, step, lr=lr)
            epoch_loss += loss
            n_batches += 1
        epoch_loss /= n_batches

        val_metric = None
        if use_fense:
            val_metric = _validation_fense(
                params, vocab, val_records, features, tasks, cfg,
                stop_word_ids, embedding_store, lexicons,
            )
            better = best_metric is None or val_metric > best_metric
        elif val_records:
            val_metric = _validation_loss(
                params, vocab, val_records, features, tasks, cfg.label_smoothing
            )
            better = best_metric is None or val_metric < best_metric
        else:
            better = True
        if better:
            best_metric = val_metric
            best_epoch = epoch
            best_params = params.copy()
        trace.append(EpochMetrics(epoch, lr, epoch_loss, val_metric, metric_name))

    return TrainResult(
        params=best_params,
        final_params=params,
        vocab=vocab,
        best_epoch=best_epoch,
        trace=trace,
    )
