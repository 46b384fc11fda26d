"""capkit: caption-corpus auditing, captioning metrics, constrained beam
decoding, and training numerics, validated end to end by a tiny
hand-differentiated captioner on synthetic data."""

from .corpus import (
    ClipRecord,
    CorpusStats,
    EpochPlan,
    OverlapReport,
    RejectedCaption,
    TokenizedCaption,
    balanced_epoch,
    corpus_stats,
    filter_wavcaps,
    load_manifest,
    ngram_distribution,
    overlap_audit,
    preprocess_caption,
    write_manifest,
)
from .decode import (
    BeamHypothesis,
    DecodeConfig,
    Decoded,
    ScorerInterface,
    TeCompareReport,
    Vocabulary,
    beam_search,
    greedy_decode,
    te_compare,
)
from .errors import CapkitError, FormatError, ManifestError
# the bare scoring rule is aliased so the ``capkit.fense`` submodule
# attribute is not shadowed by the function of the same name
from .fense import (
    FluencyVerdict,
    Lexicons,
    SentenceEmbeddingStore,
    caption_key,
    detect_fluency_errors,
    sbert_sim,
    score_fense,
)
from .fense import fense as fense_score
from .metrics import (
    EvalResult,
    NGramIndex,
    TfIdfVector,
    build_index,
    cider_d,
    cross_reference,
    diversity_stats,
    evaluate_corpus,
    spider,
)
from .synth import generate_synthetic_corpus
from .toymodel import (
    AudioContext,
    ToyParams,
    ToyScorer,
    TrainExample,
    backward,
    forward,
    load_checkpoint,
    read_aemb,
    save_checkpoint,
    train_toy,
    write_aemb,
)
from .trainkit import (
    MixupDraw,
    ParamGroup,
    TrainConfig,
    adamw_step,
    clip_grad_l2,
    cosine_lr,
    draw_mixup,
    label_smoothed_ce,
    log_softmax,
    mixup_pair,
    spec_augment_embed,
)

__version__ = "0.1.0"
