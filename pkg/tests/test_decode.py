import numpy as np
import pytest

from capkit.decode import (
    DecodeConfig,
    ScorerInterface,
    Vocabulary,
    beam_search,
    greedy_decode,
    te_compare,
)
from capkit.errors import CapkitError
from capkit.trainkit import log_softmax

from oracles import exhaustive_decode_oracle


class TableScorer(ScorerInterface):
    """Fixed log-prob row per prefix length; context is ignored."""

    def __init__(self, rows):
        self.rows = [np.asarray(r, dtype=float) for r in rows]

    def next_logprobs(self, audio_context, prefix_token_ids):
        step = min(len(prefix_token_ids) - 1, len(self.rows) - 1)
        return self.rows[step]


class RandomScorer(ScorerInterface):
    """Deterministic pseudo-random distribution per (context, prefix)."""

    def __init__(self, vocab_size, seed, condition_on_bos=True):
        self.vocab_size = vocab_size
        self.seed = seed
        self.condition_on_bos = condition_on_bos

    def next_logprobs(self, audio_context, prefix_token_ids):
        prefix = tuple(prefix_token_ids)
        if not self.condition_on_bos:
            prefix = prefix[1:]
        key = hash((self.seed, int(audio_context), prefix)) % (2**32)
        rng = np.random.default_rng(key)
        return log_softmax(rng.uniform(-3, 3, size=self.vocab_size))


def uniform_rows(vocab_size, n=1):
    return [np.full(vocab_size, -np.log(vocab_size))] * n


def peaked_row(vocab_size, winner, logp=-0.01, rest=-12.0):
    row = np.full(vocab_size, rest)
    row[winner] = logp
    return log_softmax(row)


@pytest.fixture
def vocab():
    # ids: pad=0 bos=1 eos=2 te(ac)=3 te(cl)=4, then content 5..8
    return Vocabulary(["a", "dog", "barks", "cat"], tasks=("ac", "cl"))


class TestVocabulary:
    def test_bijection_and_specials(self, vocab):
        assert len(vocab) == 9
        assert vocab.id("<pad>") == 0 and vocab.id("<bos>") == 1 and vocab.id("<eos>") == 2
        assert vocab.task_ids == {"ac": 3, "cl": 4}
        for i in range(len(vocab)):
            assert vocab.id(vocab.token(i)) == i

    def test_bos_for(self, vocab):
        assert vocab.bos_for(None) == 1
        assert vocab.bos_for("cl") == 4
        with pytest.raises(CapkitError, match="unknown task"):
            vocab.bos_for("ma")

    def test_duplicate_token_rejected(self):
        with pytest.raises(CapkitError, match="duplicate"):
            Vocabulary(["a", "a"])

    def test_stop_word_ids(self, vocab):
        assert vocab.stop_word_ids(["a", "the"]) == frozenset({vocab.id("a")})


class TestConstraints:
    def test_stop_word_repeats_to_max_len(self, vocab):
        a = vocab.id("a")
        scorer = TableScorer([peaked_row(len(vocab), a)])
        cfg = DecodeConfig(beam_size=1, min_len=3, max_len=6,
                           stop_word_ids=frozenset({a}))
        out = beam_search([None], scorer, vocab, cfg)[0]
        assert out.token_ids == (a,) * 6

    def test_eos_delayed_until_min_len(self, vocab):
        scorer = TableScorer([peaked_row(len(vocab), vocab.eos_id)])
        cfg = DecodeConfig(beam_size=1, min_len=3, max_len=10)
        out = beam_search([None], scorer, vocab, cfg)[0]
        assert len(out.token_ids) == 3

    def test_non_stop_word_never_repeats(self, vocab):
        dog = vocab.id("dog")
        scorer = TableScorer([peaked_row(len(vocab), dog)])
        cfg = DecodeConfig(beam_size=2, min_len=3, max_len=8)
        out = beam_search([None], scorer, vocab, cfg)[0]
        content = [t for t in out.token_ids]
        assert content.count(dog) == 1

    def test_uniform_tie_breaks_to_lowest_id(self, vocab):
        scorer = TableScorer(uniform_rows(len(vocab)))
        cfg = DecodeConfig(beam_size=1, min_len=3, max_len=3)
        out = greedy_decode(None, scorer, vocab, cfg)
        # lowest non-special ids win every uniform tie
        assert out.token_ids == (vocab.id("a"), vocab.id("dog"), vocab.id("barks"))

    def test_uniform_two_token_vocab_is_deterministic(self):
        two = Vocabulary(["x", "y"])
        scorer = TableScorer(uniform_rows(len(two)))
        # min_len reached at step 2: eos (lowest id) wins the uniform tie
        cfg = DecodeConfig(beam_size=1, min_len=1, max_len=2)
        outs = {greedy_decode(None, scorer, two, cfg).token_ids for _ in range(5)}
        assert outs == {(two.id("x"),)}
        # still below min_len at step 2: the lower content id continues
        cfg = DecodeConfig(beam_size=1, min_len=2, max_len=2)
        out = greedy_decode(None, scorer, two, cfg)
        assert out.token_ids == (two.id("x"), two.id("y"))

    def test_output_length_within_bounds(self, vocab):
        for seed in range(25):
            scorer = RandomScorer(len(vocab), seed)
            cfg = DecodeConfig(beam_size=2, min_len=3, max_len=4,
                               stop_word_ids=frozenset({vocab.id("a")}))
            out = beam_search([0], scorer, vocab, cfg)[0]
            assert 3 <= len(out.token_ids) <= 4
            non_stop = [t for t in out.token_ids if t != vocab.id("a")]
            assert len(non_stop) == len(set(non_stop))

    def test_all_forbidden_errors_with_item(self, vocab):
        row = np.full(len(vocab), -np.inf)
        row[vocab.eos_id] = 0.0  # eos-only scorer, but eos is masked before min_len
        scorer = TableScorer([row])
        cfg = DecodeConfig(beam_size=2, min_len=3, max_len=5)
        with pytest.raises(CapkitError, match="batch item 0"):
            beam_search([None], scorer, vocab, cfg)

    def test_forced_eos_accrues_scorer_logprob(self, vocab):
        a = vocab.id("a")
        row = peaked_row(len(vocab), a)
        scorer = TableScorer([row])
        cfg = DecodeConfig(beam_size=1, min_len=1, max_len=2,
                           stop_word_ids=frozenset({a}))
        out = beam_search([None], scorer, vocab, cfg)[0]
        assert out.token_ids == (a, a)
        expected = 2 * row[a] + row[vocab.eos_id]
        assert out.cum_logprob == pytest.approx(expected)


class TestAgainstExhaustiveOracle:
    def test_beam_equals_exhaustive_when_beam_is_full(self):
        vocab = Vocabulary(["w1", "w2", "w3"], tasks=("ac",))  # |V| = 7
        stop = frozenset({vocab.id("w1")})
        cfg = DecodeConfig(beam_size=4096, min_len=2, max_len=4, stop_word_ids=stop)
        for seed in range(60):
            scorer = RandomScorer(len(vocab), seed)
            got = beam_search([seed], scorer, vocab, cfg)[0]
            want_tokens, want_cum = exhaustive_decode_oracle(seed, scorer, vocab, cfg)
            assert got.token_ids == want_tokens, f"seed {seed}"
            assert got.cum_logprob == pytest.approx(want_cum, abs=1e-9)

    def test_beam_one_equals_greedy(self):
        vocab = Vocabulary(["w1", "w2", "w3", "w4"])
        cfg = DecodeConfig(beam_size=1, min_len=3, max_len=5,
                           stop_word_ids=frozenset({vocab.id("w1")}))
        for seed in range(30):
            scorer = RandomScorer(len(vocab), seed)
            via_beam = beam_search([seed], scorer, vocab, cfg)[0]
            via_greedy = greedy_decode(seed, scorer, vocab, cfg)
            assert via_beam == via_greedy


class TestBatchInvariance:
    def test_batch_equals_single(self):
        vocab = Vocabulary(["w1", "w2", "w3"], tasks=("ac", "cl"))
        cfg = DecodeConfig(beam_size=3, min_len=2, max_len=4)
        contexts = list(range(8))
        scorer = RandomScorer(len(vocab), seed=5)
        batched = beam_search(contexts, scorer, vocab, cfg)
        singles = [beam_search([c], scorer, vocab, cfg)[0] for c in contexts]
        assert batched == singles


class TestTeCompare:
    def test_te_blind_scorer_gives_identical_pairs(self):
        vocab = Vocabulary(["w1", "w2", "w3"], tasks=("ac", "cl"))
        scorer = RandomScorer(len(vocab), seed=3, condition_on_bos=False)
        cfg = DecodeConfig(beam_size=2, min_len=2, max_len=4)
        report = te_compare([0, 1, 2], scorer, vocab, cfg, ("ac", "cl"))
        assert report.captions_a == report.captions_b

    def test_te_aware_scorer_can_differ(self):
        vocab = Vocabulary(["w1", "w2", "w3"], tasks=("ac", "cl"))
        scorer = RandomScorer(len(vocab), seed=3, condition_on_bos=True)
        cfg = DecodeConfig(beam_size=2, min_len=2, max_len=4)
        report = te_compare([0, 1, 2, 3, 4], scorer, vocab, cfg, ("ac", "cl"))
        assert report.captions_a != report.captions_b

    def test_report_has_per_te_stats(self):
        vocab = Vocabulary(["w1", "w2", "w3"], tasks=("ac", "cl"))
        scorer = RandomScorer(len(vocab), seed=9)
        cfg = DecodeConfig(beam_size=2, min_len=2, max_len=4)
        report = te_compare([0, 1], scorer, vocab, cfg, ("ac", "cl"))
        assert report.n_unique_words_a >= 1
        assert report.n_unique_words_b >= 1
        assert report.mean_sentence_length_a >= 2
        assert len(report.captions_a) == len(report.captions_b) == 2

    def test_unknown_te_errors(self):
        vocab = Vocabulary(["w1"], tasks=("ac",))
        scorer = RandomScorer(len(vocab), seed=0)
        cfg = DecodeConfig(beam_size=1, min_len=1, max_len=2)
        with pytest.raises(CapkitError, match="unknown task"):
            te_compare([0], scorer, vocab, cfg, ("ac", "cl"))


class TestConfigValidation:
    def test_beam_size_positive(self):
        with pytest.raises(CapkitError):
            DecodeConfig(beam_size=0)

    def test_min_le_max(self):
        with pytest.raises(CapkitError):
            DecodeConfig(min_len=5, max_len=4)

    def test_scorer_row_shape_checked(self, vocab):
        class BadScorer(ScorerInterface):
            def next_logprobs(self, audio_context, prefix_token_ids):
                return np.zeros(3)

        with pytest.raises(CapkitError, match="shape"):
            beam_search([None], BadScorer(), vocab, DecodeConfig())

    def test_scorer_nan_checked(self, vocab):
        class NanScorer(ScorerInterface):
            def next_logprobs(self, audio_context, prefix_token_ids):
                row = np.zeros(len(vocab))
                row[0] = np.nan
                return row

        with pytest.raises(CapkitError, match="NaN"):
            beam_search([None], NanScorer(), vocab, DecodeConfig())
