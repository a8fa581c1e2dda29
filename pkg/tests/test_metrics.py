from __future__ import annotations

import csv
import json
import math
import random

import numpy as np
import pytest

from lextrans.corpus import build_vocab, make_corpus, one_shot_subset
from lextrans.metrics import (
    EvalReport,
    ExampleRecord,
    MetricsError,
    aggregate,
    corpus_bleu,
    evaluate,
    exact_match,
)
from lextrans.model import ModelParams
from lextrans.training import TrainConfig, train


def untrained_params(corpus, **config_overrides):
    config = TrainConfig(hidden_size=16, embed_size=16, layers=1, **config_overrides)
    return ModelParams.create(
        build_vocab(corpus, "input"), build_vocab(corpus, "output"), config.to_model_config()
    )


def report_with_flags(flags, seed=0, bleu=50.0, per_category=None):
    records = tuple(
        ExampleRecord(f"in {k}", f"ref {k}", f"hyp {k}", flag) for k, flag in enumerate(flags)
    )
    return EvalReport(
        split="test",
        subset="full",
        seed=seed,
        exact_match=float(np.mean(flags)),
        bleu=bleu,
        per_category=per_category or {},
        records=records,
    )


class TestExactMatch:
    def test_identical_sequences(self):
        assert exact_match(("walk", "twice"), ("walk", "twice")) == 1

    def test_punctuation_difference_counts(self):
        assert exact_match(("a", "b", "."), ("a", "b", "!")) == 0

    def test_empty_vs_nonempty(self):
        assert exact_match((), ("a",)) == 0
        assert exact_match((), ()) == 1

    def test_accepts_lists_and_tuples(self):
        assert exact_match(["a", "b"], ("a", "b")) == 1

    def test_symmetric(self):
        rng = np.random.default_rng(0)
        alphabet = ["a", "b", "c"]
        for _ in range(50):
            x = tuple(rng.choice(alphabet, size=rng.integers(0, 5)))
            y = tuple(rng.choice(alphabet, size=rng.integers(0, 5)))
            assert exact_match(x, y) == exact_match(y, x)


class TestCorpusBleu:
    def test_identity_scores_100(self):
        pairs = [(("a", "b", "c", "d"), ("a", "b", "c", "d")),
                 (("x", "y", "z", "w", "v"), ("x", "y", "z", "w", "v"))]
        assert corpus_bleu(pairs) == 100.0

    def test_brevity_penalty_golden(self):
        # all precisions 1, hypothesis short by one token: BP = exp(1 - 5/4)
        score = corpus_bleu([("a b c d".split(), "a b c d e".split())])
        assert score == pytest.approx(77.88, abs=0.01)
        assert score == pytest.approx(100.0 * math.exp(-0.25), rel=1e-12)

    def test_zero_four_gram_matches_scores_zero(self):
        assert corpus_bleu([(("a", "b", "c", "d"), ("d", "c", "b", "a"))]) == 0.0

    def test_short_hypothesis_has_no_four_grams(self):
        assert corpus_bleu([(("a", "b", "c"), ("a", "b", "c"))]) == 0.0

    def test_all_empty_hypotheses_score_zero(self):
        assert corpus_bleu([((), ("a", "b"))]) == 0.0

    def test_empty_corpus_rejected(self):
        with pytest.raises(MetricsError):
            corpus_bleu([])

    def test_clipped_precision_hand_value(self):
        # hyp "a b c d a" vs ref "a b c d": precisions 4/5, 3/4, 2/3, 1/2; BP = 1
        score = corpus_bleu([("a b c d a".split(), "a b c d".split())])
        expected = 100.0 * (4 / 5 * 3 / 4 * 2 / 3 * 1 / 2) ** 0.25
        assert score == pytest.approx(expected, rel=1e-12)

    def test_two_pair_hand_value(self):
        # perfect 6-token pair + the BP example: precisions all 1, BP = exp(1 - 11/10)
        pairs = [("the cat sat on the mat".split(), "the cat sat on the mat".split()),
                 ("a b c d".split(), "a b c d e".split())]
        assert corpus_bleu(pairs) == pytest.approx(100.0 * math.exp(-0.1), rel=1e-12)

    def test_invariant_to_pair_order(self):
        rng = np.random.default_rng(1)
        alphabet = ["a", "b", "c", "d", "e"]
        for trial in range(20):
            pairs = []
            for _ in range(6):
                n = int(rng.integers(1, 8))
                m = int(rng.integers(1, 8))
                pairs.append((tuple(rng.choice(alphabet, size=n)),
                              tuple(rng.choice(alphabet, size=m))))
            shuffled = list(pairs)
            random.Random(trial).shuffle(shuffled)
            assert corpus_bleu(shuffled) == corpus_bleu(pairs)

    def test_invariant_to_corpus_duplication(self):
        rng = np.random.default_rng(2)
        alphabet = ["a", "b", "c"]
        for _ in range(20):
            pairs = []
            for _ in range(4):
                n = int(rng.integers(4, 9))
                pairs.append((tuple(rng.choice(alphabet, size=n)),
                              tuple(rng.choice(alphabet, size=n))))
            assert corpus_bleu(pairs * 2) == corpus_bleu(pairs)

    def test_never_exceeds_100(self):
        rng = np.random.default_rng(3)
        alphabet = ["a", "b"]
        for _ in range(50):
            pairs = [(tuple(rng.choice(alphabet, size=int(rng.integers(1, 10)))),
                      tuple(rng.choice(alphabet, size=int(rng.integers(1, 10)))))
                     for _ in range(3)]
            assert 0.0 <= corpus_bleu(pairs) <= 100.0


class TestEvalReport:
    def test_exact_match_must_equal_mean_of_flags(self):
        records = (ExampleRecord("a", "b", "b", 0),)
        with pytest.raises(MetricsError):
            EvalReport("test", "full", 0, 1.0, None, {}, records)

    def test_json_roundtrip(self, tmp_path):
        report = report_with_flags([1, 0, 1], seed=7, per_category={"swap": 0.5})
        path = tmp_path / "report.json"
        report.save_json(path)
        assert EvalReport.load_json(path) == report
        raw = json.loads(path.read_text())
        assert raw["size"] == 3
        assert raw["seed"] == 7

    def test_csv_has_one_row_per_example(self, tmp_path):
        report = report_with_flags([1, 0])
        path = tmp_path / "records.csv"
        report.save_csv(path)
        with open(path, newline="") as fh:
            rows = list(csv.reader(fh))
        assert rows[0] == ["input", "reference", "hypothesis", "correct"]
        assert rows[1] == ["in 0", "ref 0", "hyp 0", "1"]
        assert rows[2] == ["in 1", "ref 1", "hyp 1", "0"]

    def test_size_property(self):
        assert report_with_flags([1, 1, 0, 0]).size == 4


class TestEvaluate:
    def test_memorized_corpus_scores_perfectly(self):
        corpus = make_corpus([("a b c", "z z y w")])
        config = TrainConfig(hidden_size=32, embed_size=32, layers=1, dropout=0.0,
                             warmup=50, max_steps=200, batch_size=1, clip_norm=5.0, seed=0)
        params = train(config, corpus).params
        report = evaluate(params, corpus, seed=0)
        assert report.exact_match == 1.0
        assert report.bleu == 100.0
        assert report.records[0].hypothesis == "z z y w"
        assert report.seed == 0
        assert report.size == 1

    def test_report_structure_on_untrained_model(self):
        corpus = make_corpus([("a b", "x y"), ("b a", "y x"), ("a", "x")])
        report = evaluate(untrained_params(corpus), corpus)
        assert report.size == 3
        assert report.subset == "full"
        assert report.exact_match == pytest.approx(
            np.mean([r.correct for r in report.records]), abs=1e-15
        )
        for record, ex in zip(report.records, corpus):
            assert record.input == " ".join(ex.src)
            assert record.reference == " ".join(ex.tgt)

    def test_one_shot_subset_matches_corpus_operation(self):
        train_c = make_corpus([("a", "p"), ("a b", "q")])
        test_c = make_corpus([("b", "q"), ("a", "p")], split="test")
        params = untrained_params(train_c)
        report = evaluate(params, test_c, subset="one-shot", train=train_c)
        expected = one_shot_subset(train_c, test_c)
        assert report.subset == "one-shot"
        assert [r.input for r in report.records] == [" ".join(ex.src) for ex in expected]
        assert report.size == 1
        assert report.records[0].input == "b"

    def test_one_shot_requires_training_corpus(self):
        corpus = make_corpus([("a", "p")])
        with pytest.raises(MetricsError):
            evaluate(untrained_params(corpus), corpus, subset="one-shot")

    def test_unknown_subset_rejected(self):
        corpus = make_corpus([("a", "p")])
        with pytest.raises(MetricsError):
            evaluate(untrained_params(corpus), corpus, subset="dev")

    def test_empty_one_shot_subset_rejected(self):
        train_c = make_corpus([("a", "p"), ("a", "p")])
        test_c = make_corpus([("a", "p")], split="test")
        with pytest.raises(MetricsError):
            evaluate(untrained_params(train_c), test_c, subset="one-shot", train=train_c)

    def test_disjoint_vocabulary_rejected(self):
        fit = make_corpus([("a b", "p")])
        other = make_corpus([("x y", "p")], split="test")
        with pytest.raises(MetricsError):
            evaluate(untrained_params(fit), other)

    def test_category_breakdown(self):
        corpus = make_corpus(
            [("a b", "x y", "swap"), ("b a", "y x", "swap"), ("a", "x", "echo")],
            split="test",
        )
        report = evaluate(untrained_params(corpus), corpus)
        assert set(report.per_category) == {"swap", "echo"}
        for cat in ("swap", "echo"):
            flags = [r.correct for r, ex in zip(report.records, corpus) if ex.category == cat]
            assert report.per_category[cat] == pytest.approx(np.mean(flags), abs=1e-15)

    def test_no_categories_means_empty_breakdown(self):
        corpus = make_corpus([("a", "x"), ("b", "y")])
        assert evaluate(untrained_params(corpus), corpus).per_category == {}

    def test_with_bleu_false(self):
        corpus = make_corpus([("a", "x")])
        assert evaluate(untrained_params(corpus), corpus, with_bleu=False).bleu is None


class TestAggregate:
    def test_single_report_has_zero_std(self):
        stats = aggregate([report_with_flags([1, 0])])
        assert stats["exact_match"] == (0.5, 0.0)
        assert stats["bleu"] == (50.0, 0.0)

    def test_two_seed_accuracy_spread(self):
        reports = [report_with_flags([0], seed=0), report_with_flags([1], seed=1)]
        mean, std = aggregate(reports)["exact_match"]
        assert mean == 0.5
        assert std == 0.5  # population standard deviation

    def test_sixteen_identical_reports(self):
        stats = aggregate([report_with_flags([1, 1, 0, 1], seed=s) for s in range(16)])
        assert stats["exact_match"] == (0.75, 0.0)

    def test_bleu_omitted_when_any_report_lacks_it(self):
        reports = [report_with_flags([1]), report_with_flags([1], bleu=None)]
        assert "bleu" not in aggregate(reports)

    def test_categories_intersected_across_reports(self):
        a = report_with_flags([1, 0], per_category={"x": 1.0, "y": 0.0})
        b = report_with_flags([0, 1], per_category={"x": 0.0})
        stats = aggregate([a, b])
        assert stats["category:x"] == (0.5, 0.5)
        assert "category:y" not in stats

    def test_empty_rejected(self):
        with pytest.raises(MetricsError):
            aggregate([])
