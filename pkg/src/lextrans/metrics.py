"""Evaluation: exact match, corpus BLEU, subset reports, and multi-seed aggregation."""

from __future__ import annotations

import csv
import json
import math
from collections import Counter
from dataclasses import dataclass
from pathlib import Path
from typing import Sequence

import numpy as np

from .corpus import ParallelCorpus, one_shot_subset
from .model import ModelParams, greedy_decode

__all__ = [
    "MetricsError",
    "ExampleRecord",
    "EvalReport",
    "exact_match",
    "corpus_bleu",
    "evaluate",
    "aggregate",
]

BLEU_ORDER = 4


class MetricsError(ValueError):
    """Raised for invalid metric inputs or checkpoint/corpus mismatches."""


def exact_match(hyp: Sequence[str], ref: Sequence[str]) -> int:
    """1 iff the sequences are identical token for token (punctuation included)."""
    return int(tuple(hyp) == tuple(ref))


def _ngram_counts(tokens: tuple[str, ...], n: int) -> Counter:
    return Counter(tokens[i : i + n] for i in range(len(tokens) - n + 1))


def corpus_bleu(pairs: Sequence[tuple[Sequence[str], Sequence[str]]]) -> float:
    """Corpus-level unsmoothed BLEU-4 over (hypothesis, reference) pairs, in [0, 100].

    Modified n-gram precisions are aggregated over the whole corpus before the
    geometric mean, and the brevity penalty is exp(min(0, 1 - ref_len/hyp_len))
    on totalled lengths.  Any order with zero matches sends the score to 0; a
    corpus whose hypotheses are all empty scores 0.
    """
    pairs = list(pairs)
    if not pairs:
        raise MetricsError("corpus_bleu: need at least one (hypothesis, reference) pair")
    matches = [0] * BLEU_ORDER
    totals = [0] * BLEU_ORDER
    hyp_len = 0
    ref_len = 0
    for hyp, ref in pairs:
        hyp = tuple(hyp)
        ref = tuple(ref)
        hyp_len += len(hyp)
        ref_len += len(ref)
        for n in range(1, BLEU_ORDER + 1):
            hyp_grams = _ngram_counts(hyp, n)
            ref_grams = _ngram_counts(ref, n)
            totals[n - 1] += max(len(hyp) - n + 1, 0)
            matches[n - 1] += sum(min(c, ref_grams[g]) for g, c in hyp_grams.items())
    if hyp_len == 0:
        return 0.0
    if any(m == 0 for m in matches):
        return 0.0
    log_precision = sum(math.log(m / t) for m, t in zip(matches, totals)) / BLEU_ORDER
    brevity = math.exp(min(0.0, 1.0 - ref_len / hyp_len))
    return 100.0 * brevity * math.exp(log_precision)


@dataclass(frozen=True)
class ExampleRecord:
    """One decoded example; token sequences are stored space-joined."""

    input: str
    reference: str
    hypothesis: str
    correct: int


@dataclass(frozen=True)
class EvalReport:
    """Decoded-corpus scores plus the per-example records behind them."""

    split: str
    subset: str
    seed: int | None
    exact_match: float
    bleu: float | None
    per_category: dict[str, float]
    records: tuple[ExampleRecord, ...]

    def __post_init__(self):
        flags = [r.correct for r in self.records]
        if flags and abs(self.exact_match - float(np.mean(flags))) > 1e-12:
            raise MetricsError("EvalReport: exact_match must equal the mean of record flags")

    @property
    def size(self) -> int:
        return len(self.records)

    def to_dict(self) -> dict:
        return {
            "split": self.split,
            "subset": self.subset,
            "seed": self.seed,
            "size": self.size,
            "exact_match": self.exact_match,
            "bleu": self.bleu,
            "per_category": dict(self.per_category),
            "records": [
                {
                    "input": r.input,
                    "reference": r.reference,
                    "hypothesis": r.hypothesis,
                    "correct": r.correct,
                }
                for r in self.records
            ],
        }

    def save_json(self, path: str | Path) -> None:
        Path(path).write_text(json.dumps(self.to_dict(), indent=2) + "\n", encoding="utf-8")

    def save_csv(self, path: str | Path) -> None:
        """Write the per-example records as CSV (input, reference, hypothesis, correct)."""
        with open(path, "w", encoding="utf-8", newline="") as fh:
            writer = csv.writer(fh)
            writer.writerow(["input", "reference", "hypothesis", "correct"])
            for r in self.records:
                writer.writerow([r.input, r.reference, r.hypothesis, r.correct])

    @classmethod
    def load_json(cls, path: str | Path) -> "EvalReport":
        raw = json.loads(Path(path).read_text(encoding="utf-8"))
        records = tuple(
            ExampleRecord(r["input"], r["reference"], r["hypothesis"], int(r["correct"]))
            for r in raw["records"]
        )
        return cls(
            split=raw["split"],
            subset=raw["subset"],
            seed=raw["seed"],
            exact_match=raw["exact_match"],
            bleu=raw["bleu"],
            per_category=dict(raw["per_category"]),
            records=records,
        )


def evaluate(
    params: ModelParams,
    test: ParallelCorpus,
    subset: str = "full",
    train: ParallelCorpus | None = None,
    with_bleu: bool = True,
    seed: int | None = None,
) -> EvalReport:
    """Greedy-decode a corpus and score it.

    subset "full" scores every example; "one-shot" restricts to test examples
    whose input contains a token occurring exactly once in ``train`` inputs
    (which must then be supplied).  Category accuracies are reported whenever
    the corpus carries category tags.
    """
    if subset not in ("full", "one-shot"):
        raise MetricsError(f"evaluate: unknown subset {subset!r} (use 'full' or 'one-shot')")
    if subset == "one-shot":
        if train is None:
            raise MetricsError("evaluate: one-shot subset needs the training corpus")
        data = one_shot_subset(train, test)
    else:
        data = test
    if len(data) == 0:
        raise MetricsError("evaluate: no examples to score")
    known = set(params.src_vocab.content_tokens)
    seen = {tok for ex in data for tok in ex.src}
    if not (seen & known):
        raise MetricsError("evaluate: corpus shares no input tokens with the model vocabulary")

    records = []
    pairs = []
    by_category: dict[str, list[int]] = {}
    for ex in data:
        hyp = greedy_decode(params, ex.src)
        flag = exact_match(hyp, ex.tgt)
        records.append(
            ExampleRecord(" ".join(ex.src), " ".join(ex.tgt), " ".join(hyp), flag)
        )
        pairs.append((hyp, ex.tgt))
        if ex.category is not None:
            by_category.setdefault(ex.category, []).append(flag)
    per_category = {cat: float(np.mean(flags)) for cat, flags in sorted(by_category.items())}
    return EvalReport(
        split=data.split,
        subset=subset,
        seed=seed,
        exact_match=float(np.mean([r.correct for r in records])),
        bleu=corpus_bleu(pairs) if with_bleu else None,
        per_category=per_category,
        records=tuple(records),
    )


def aggregate(reports: Sequence[EvalReport]) -> dict[str, tuple[float, float]]:
    """Mean and population standard deviation per metric across seeds.

    Covers exact match, BLEU (when present in every report), and every
    category shared by all reports; keys are "exact_match", "bleu", and
    "category:<name>".
    """
    reports = list(reports)
    if not reports:
        raise MetricsError("aggregate: need at least one report")

    def mean_std(values: list[float]) -> tuple[float, float]:
        arr = np.asarray(values, dtype=np.float64)
        return float(arr.mean()), float(arr.std())

    out = {"exact_match": mean_std([r.exact_match for r in reports])}
    if all(r.bleu is not None for r in reports):
        out["bleu"] = mean_std([r.bleu for r in reports])
    shared = set(reports[0].per_category)
    for r in reports[1:]:
        shared &= set(r.per_category)
    for cat in sorted(shared):
        out[f"category:{cat}"] = mean_std([r.per_category[cat] for r in reports])
    return out
