import json

import pytest

from capkit.corpus import CorpusStats
from capkit.metrics import EvalResult
from capkit.reports import (
    corpus_stats_rows,
    eval_result_dict,
    eval_summary_rows,
    fmt_float,
    write_csv,
    write_json,
)


class TestFloatFormatting:
    def test_six_significant_digits(self):
        assert fmt_float(0.123456789) == 0.123457
        assert fmt_float(1234567.89) == 1234570.0
        assert fmt_float(3.0000000001) == 3.0
        assert fmt_float(0.0001234567) == 0.000123457

    def test_json_floats_rounded_recursively(self, tmp_path):
        path = tmp_path / "r.json"
        write_json(path, {"a": [0.123456789, {"b": 2.000000001}], "n": 7})
        obj = json.loads(path.read_text())
        assert obj == {"a": [0.123457, {"b": 2.0}], "n": 7}

    def test_csv_floats_rounded(self, tmp_path):
        path = tmp_path / "r.csv"
        write_csv(path, ("k", "v"), [("x", 0.987654321), ("y", 3)])
        assert path.read_text().splitlines()[1] == "x,0.987654"


class TestEvalEmitters:
    def test_summary_row_order_all_metrics(self):
        result = EvalResult(
            cider_d=(1.0, 3.0), spice=(0.2, 0.4), fense=(0.5, 0.7),
            n_unique_words=9.0, mean_sentence_length=4.5,
        )
        rows = eval_summary_rows(result)
        assert [m for m, _ in rows] == [
            "cider_d", "spice", "spider", "fense", "n_words", "mean_sent_len",
        ]
        assert dict(rows)["spider"] == pytest.approx(1.15)  # mean of (0.6, 1.7)

    def test_summary_rows_omit_absent_metrics(self):
        result = EvalResult(cider_d=(2.0,), n_unique_words=3.0, mean_sentence_length=2.0)
        assert [m for m, _ in eval_summary_rows(result)] == [
            "cider_d", "n_words", "mean_sent_len",
        ]

    def test_per_item_block_ids(self):
        result = EvalResult(cider_d=(1.0, 2.0), spice=(0.0, 1.0))
        obj = eval_result_dict(result, ids=["x", "y"])
        assert [e["id"] for e in obj["per_item"]] == ["x", "y"]
        assert obj["per_item"][1]["spider"] == 1.5
        assert obj["corpus"]["spider"] == pytest.approx(1.0)


def test_corpus_stats_row_order():
    stats = CorpusStats(
        n_audio=2, audio_hours=0.5, vocab_size=10, n_words=20,
        caption_len_min=3, caption_len_max=9, caption_len_mean=5.5,
        captions_per_audio_min=1, captions_per_audio_max=5,
    )
    names = [name for name, _ in corpus_stats_rows(stats)]
    assert names == [
        "n_audio", "audio_hours", "vocab_size", "n_words",
        "caption_len_min", "caption_len_max", "caption_len_mean",
        "captions_per_audio_min", "captions_per_audio_max",
    ]
