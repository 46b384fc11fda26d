import sys
from pathlib import Path

import numpy as np
import pytest

sys.path.insert(0, str(Path(__file__).parent))

from capkit.corpus import ClipRecord


def toks(sentence: str) -> tuple[str, ...]:
    """Shorthand: whitespace-split an already-clean caption."""
    return tuple(sentence.split())


@pytest.fixture
def rng():
    return np.random.default_rng(2024)


def make_clip(
    clip_id: str,
    dataset: str = "ac",
    subset: str = "train",
    duration: float = 10.0,
    captions=("a dog barks",),
    source_key=None,
    embedding_path=None,
) -> ClipRecord:
    return ClipRecord(
        id=clip_id,
        dataset=dataset,
        subset=subset,
        duration_sec=duration,
        captions=tuple(captions),
        source_key=source_key,
        embedding_path=embedding_path,
    )
