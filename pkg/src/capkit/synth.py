"""Synthetic caption corpus with dataset-keyed writing styles.

Each clip gets a sound subject (a noun/verb pair), Gaussian frame features
clustered around a subject-specific direction (so the mapping audio ->
words is learnable above chance), and a caption rendered from its dataset's
template.  The two shipped styles differ in length: the "ac"-style template
is short, the "cl"-style one is long, so task-embedding conditioning has a
measurable effect on output statistics.
"""

from __future__ import annotations

from pathlib import Path
from typing import Sequence

import numpy as np

from .corpus import ClipRecord, write_manifest
from .errors import CapkitError
from .toymodel import write_aemb

SUBJECTS = (
    ("dog", "barks"),
    ("cat", "meows"),
    ("bird", "chirps"),
    ("engine", "revs"),
    ("bell", "rings"),
    ("horn", "honks"),
    ("drum", "beats"),
    ("siren", "wails"),
)

STYLE_TEMPLATES = {
    "short": "a {noun} {verb}",
    "long": "a {noun} {verb} {adverb} and fades in the background",
}

DEFAULT_STYLE_BY_TASK = {"ac": "short", "cl": "long"}

# caption variants swap this slot (variant 0 reproduces the base template);
# the short style gains the adverb only from variant 1 on, so its captions
# stay strictly shorter than the long style's
VARIANT_ADVERBS = ("softly", "loudly", "gently", "steadily", "faintly")


def render_caption(noun: str, verb: str, style: str, variant: int = 0) -> str:
    if style not in STYLE_TEMPLATES:
        raise CapkitError(f"unknown caption style {style!r}")
    adverb = VARIANT_ADVERBS[variant % len(VARIANT_ADVERBS)]
    if style == "short":
        base = STYLE_TEMPLATES[style].format(noun=noun, verb=verb)
        return base if variant == 0 else f"{base} {adverb}"
    return STYLE_TEMPLATES[style].format(noun=noun, verb=verb, adverb=adverb)


def generate_synthetic_corpus(
    n_clips: int,
    seed: int,
    tasks: Sequence[str] = ("ac", "cl"),
    style_by_task: dict[str, str] | None = None,
    d_audio: int = 12,
    n_frames: int = 10,
    noise_scale: float = 0.1,
    val_fraction: float = 0.2,
    captions_per_clip: int = 1,
    out_dir: str | Path | None = None,
) -> tuple[list[ClipRecord], dict[str, np.ndarray]]:
    """Build ``n_clips`` records round-robin across ``tasks`` plus an id ->
    features map.  With ``out_dir`` set, also writes ``manifest.jsonl`` and
    one ``features/<id>.aemb`` per clip (embedding paths filled in).

    Subject directions are scaled unit vectors cycled through the feature
    dimensions; frames are direction + Gaussian noise.  With
    ``captions_per_clip`` > 1 each clip carries deterministic template
    variants, enough for cross-referencing runs.
    """
    if n_clips < len(tasks) * 2:
        raise CapkitError(
            f"generate_synthetic_corpus: need at least {len(tasks) * 2} clips"
        )
    if captions_per_clip < 1:
        raise CapkitError("generate_synthetic_corpus: captions_per_clip must be >= 1")
    style_by_task = dict(style_by_task or DEFAULT_STYLE_BY_TASK)
    for task in tasks:
        if task not in style_by_task:
            raise CapkitError(f"no caption style configured for task {task!r}")
    rng = np.random.default_rng(seed)

    directions = np.zeros((len(SUBJECTS), d_audio))
    for i in range(len(SUBJECTS)):
        directions[i, i % d_audio] = 1.0
        directions[i, (i + 3) % d_audio] = 0.5 if i % 2 == 0 else -0.5

    records: list[ClipRecord] = []
    features: dict[str, np.ndarray] = {}
    n_val = int(n_clips * val_fraction)
    for i in range(n_clips):
        task = tasks[i % len(tasks)]
        noun, verb = SUBJECTS[(i // len(tasks)) % len(SUBJECTS)]
        captions = tuple(
            render_caption(noun, verb, style_by_task[task], variant=v)
            for v in range(captions_per_clip)
        )
        clip_id = f"synth-{i:04d}"
        frames = directions[(i // len(tasks)) % len(SUBJECTS)] + noise_scale * rng.standard_normal(
            (n_frames, d_audio)
        )
        subset = "val" if i >= n_clips - n_val else "train"
        records.append(
            ClipRecord(
                id=clip_id,
                dataset=task,
                subset=subset,
                duration_sec=float(rng.uniform(2.0, 12.0)),
                captions=captions,
                source_key=f"src-{clip_id}",
            )
        )
        features[clip_id] = frames

    if out_dir is not None:
        out_dir = Path(out_dir)
        feat_dir = out_dir / "features"
        feat_dir.mkdir(parents=True, exist_ok=True)
        with_paths = []
        for record in records:
            path = feat_dir / f"{record.id}.aemb"
            write_aemb(path, features[record.id])
            with_paths.append(
                ClipRecord(
                    id=record.id,
                    dataset=record.dataset,
                    subset=record.subset,
                    duration_sec=record.duration_sec,
                    captions=record.captions,
                    source_key=record.source_key,
                    embedding_path=str(path),
                )
            )
        records = with_paths
        write_manifest(records, out_dir / "manifest.jsonl")

    return records, features
