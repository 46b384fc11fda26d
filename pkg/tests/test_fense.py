import hashlib

import numpy as np
import pytest

from capkit.errors import CapkitError, FormatError
from capkit.fense import (
    FluencyVerdict,
    Lexicons,
    SentenceEmbeddingStore,
    caption_key,
    detect_fluency_errors,
    fense,
    load_word_list,
    sbert_sim,
    score_fense,
)

from conftest import toks


@pytest.fixture(scope="module")
def lexicons():
    return Lexicons.load()


class TestCaptionKey:
    def test_sha256_hex_of_utf8(self):
        caption = "a dog barks écho"
        assert caption_key(caption) == hashlib.sha256(caption.encode("utf-8")).hexdigest()

    def test_distinct_captions_distinct_keys(self):
        assert caption_key("a") != caption_key("b")


class TestSbertSim:
    def test_identical_vectors(self):
        v = np.array([0.3, -0.4, 0.5])
        assert sbert_sim(v, [v]) == pytest.approx(1.0)

    def test_orthogonal_vectors(self):
        assert sbert_sim(np.array([1.0, 0.0]), [np.array([0.0, 2.0])]) == pytest.approx(0.0)

    def test_max_aggregation(self):
        cand = np.array([1.0, 0.0])
        ref_low = np.array([0.3, np.sqrt(1 - 0.09)])
        ref_high = np.array([0.9, np.sqrt(1 - 0.81)])
        assert sbert_sim(cand, [ref_low, ref_high]) == pytest.approx(0.9)

    def test_mean_aggregation(self):
        cand = np.array([1.0, 0.0])
        refs = [np.array([1.0, 0.0]), np.array([0.0, 1.0])]
        assert sbert_sim(cand, refs, aggregate="mean") == pytest.approx(0.5)

    def test_scale_invariance(self, rng):
        for _ in range(20):
            a = rng.standard_normal(8)
            b = rng.standard_normal(8)
            base = sbert_sim(a, [b])
            assert sbert_sim(3.7 * a, [0.2 * b]) == pytest.approx(base, abs=1e-12)

    def test_zero_vector_errors(self):
        with pytest.raises(CapkitError, match="zero-norm"):
            sbert_sim(np.zeros(3), [np.ones(3)])

    def test_dim_mismatch_errors(self):
        with pytest.raises(CapkitError, match="mismatch"):
            sbert_sim(np.ones(3), [np.ones(4)])


class TestFluencyRules:
    def test_paper_repetition_example(self, lexicons):
        verdict = detect_fluency_errors(toks("a man speaks while a man speaks"), lexicons)
        assert "repeated_ngram" in verdict.triggered_rules
        assert verdict.has_error

    def test_clean_caption(self, lexicons):
        verdict = detect_fluency_errors(toks("a dog barks in the yard"), lexicons)
        assert not verdict.has_error
        assert verdict.triggered_rules == frozenset()

    def test_incomplete_sentence(self, lexicons):
        verdict = detect_fluency_errors(toks("rain falling and wind and"), lexicons)
        assert "incomplete_sentence" in verdict.triggered_rules

    def test_repeated_fourgram_of_stopwords(self, lexicons):
        caption = toks("it is in the it is in the yard barks")
        verdict = detect_fluency_errors(caption, lexicons)
        assert "repeated_ngram" in verdict.triggered_rules

    def test_repeated_adverb(self, lexicons):
        verdict = detect_fluency_errors(toks("a dog barks loudly then howls loudly"), lexicons)
        assert "repeated_adverb" in verdict.triggered_rules

    def test_missing_conjunction(self, lexicons):
        verdict = detect_fluency_errors(toks("a dog barks meows"), lexicons)
        assert "missing_conjunction" in verdict.triggered_rules

    def test_conjunction_between_verbs_ok(self, lexicons):
        verdict = detect_fluency_errors(toks("a dog barks while a cat meows"), lexicons)
        assert "missing_conjunction" not in verdict.triggered_rules

    def test_missing_verb(self, lexicons):
        verdict = detect_fluency_errors(toks("a quiet empty room"), lexicons)
        assert "missing_verb" in verdict.triggered_rules

    def test_deterministic(self, lexicons):
        caption = toks("a man speaks while a man speaks")
        assert detect_fluency_errors(caption, lexicons) == detect_fluency_errors(
            caption, lexicons
        )

    def test_verdict_consistency_enforced(self):
        with pytest.raises(CapkitError):
            FluencyVerdict(True, frozenset())


class TestFenseGate:
    def test_no_error_passthrough(self):
        assert fense(0.8, FluencyVerdict(False, frozenset())) == 0.8

    def test_error_divides_by_10(self):
        verdict = FluencyVerdict(True, frozenset({"missing_verb"}))
        assert fense(0.8, verdict) == pytest.approx(0.08)

    def test_zero_similarity(self):
        verdict = FluencyVerdict(True, frozenset({"missing_verb"}))
        assert fense(0.0, verdict) == 0.0

    def test_fense_never_exceeds_similarity(self, rng, lexicons):
        """Property: fense <= sbert_sim over randomized captions/vectors."""
        words = ["a", "the", "dog", "cat", "barks", "meows", "loudly", "and",
                 "rain", "falls", "while", "wind", "blows", "in", "yard"]
        for _ in range(300):
            k = int(rng.integers(1, 10))
            caption = tuple(words[int(i)] for i in rng.integers(0, len(words), k))
            sim = float(rng.uniform(0.0, 1.0))
            verdict = detect_fluency_errors(caption, lexicons)
            assert fense(sim, verdict) <= sim + 1e-15


class TestSembStore:
    def _store(self, rng, captions, dim=6):
        return SentenceEmbeddingStore.from_captions(
            {c: rng.standard_normal(dim).astype(np.float32) for c in captions}
        )

    def test_roundtrip(self, tmp_path, rng):
        captions = ["a dog barks", "rain falls", "écho sounds"]
        store = self._store(rng, captions)
        path = tmp_path / "store.semb"
        store.save(path)
        loaded = SentenceEmbeddingStore.load(path)
        assert loaded.dim == store.dim
        for c in captions:
            np.testing.assert_array_equal(loaded.embedding_for(c), store.embedding_for(c))

    def test_save_is_byte_deterministic(self, tmp_path, rng):
        store = self._store(rng, ["one two", "three four"])
        p1, p2 = tmp_path / "a.semb", tmp_path / "b.semb"
        store.save(p1)
        store.save(p2)
        assert p1.read_bytes() == p2.read_bytes()

    def test_header_layout(self, tmp_path, rng):
        store = self._store(rng, ["x y"], dim=3)
        path = tmp_path / "s.semb"
        store.save(path)
        blob = path.read_bytes()
        assert blob[:4] == b"SEMB"
        assert int.from_bytes(blob[4:8], "little") == 1  # version
        assert int.from_bytes(blob[8:12], "little") == 1  # count
        assert int.from_bytes(blob[12:16], "little") == 3  # dim
        assert int.from_bytes(blob[16:18], "little") == 64  # sha256 hex length

    def test_missing_caption_errors(self, rng):
        store = self._store(rng, ["present"])
        with pytest.raises(CapkitError, match="absent"):
            store.embedding_for("absent")

    def test_bad_magic(self, tmp_path):
        path = tmp_path / "bad.semb"
        path.write_bytes(b"NOPE" + b"\x00" * 16)
        with pytest.raises(FormatError, match="magic"):
            SentenceEmbeddingStore.load(path)

    def test_truncated_payload(self, tmp_path, rng):
        store = self._store(rng, ["x y"])
        path = tmp_path / "t.semb"
        store.save(path)
        path.write_bytes(path.read_bytes()[:-3])
        with pytest.raises(FormatError, match="truncated"):
            SentenceEmbeddingStore.load(path)

    def test_dim_drift_rejected(self):
        with pytest.raises(CapkitError, match="drift"):
            SentenceEmbeddingStore.from_captions(
                {"a": np.ones(3, dtype=np.float32), "b": np.ones(4, dtype=np.float32)}
            )


class TestScoreFense:
    def test_corpus_scoring(self, rng, lexicons):
        candidates = ["a dog barks in the yard", "a man speaks while a man speaks"]
        references = [["a dog barking outside"], ["someone is talking"]]
        captions = set(candidates) | {r for refs in references for r in refs}
        store = SentenceEmbeddingStore.from_captions(
            {c: rng.standard_normal(5).astype(np.float32) for c in captions}
        )
        scores, verdicts = score_fense(candidates, references, store, lexicons)
        sims = [
            sbert_sim(store.embedding_for(c), [store.embedding_for(r) for r in refs])
            for c, refs in zip(candidates, references)
        ]
        assert not verdicts[0].has_error
        assert verdicts[1].has_error
        assert scores[0] == pytest.approx(sims[0])
        assert scores[1] == pytest.approx(sims[1] / 10.0)


class TestLexiconLoading:
    def test_comments_and_blank_lines(self, tmp_path):
        path = tmp_path / "words.txt"
        path.write_text("# header\nalpha\n\nbeta # trailing\n", encoding="utf-8")
        assert load_word_list(path) == frozenset({"alpha", "beta"})

    def test_env_var_fallback(self, tmp_path, monkeypatch):
        for name in ("verbs", "adverbs", "conjunctions", "sentence_final", "stopwords"):
            (tmp_path / f"{name}.txt").write_text("word\n", encoding="utf-8")
        monkeypatch.setenv("CAPKIT_LEXICON_DIR", str(tmp_path))
        lex = Lexicons.load()
        assert lex.verbs == frozenset({"word"})

    def test_missing_file_errors(self, tmp_path):
        with pytest.raises(CapkitError, match="not found"):
            Lexicons.load(tmp_path)
