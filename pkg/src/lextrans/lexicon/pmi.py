"""Pointwise-mutual-information lexicon learner.

pmi(v; w) = log #(v,w) - log #(v) - log #(w) + log |D|

with presence-based counts (a token counts once per example it appears
in). Pairs that never co-occur are inadmissible; the rest go through the
temperature softmax. Duplicating the corpus k times scales every count
and |D| by k, which cancels in the count ratio; evaluating one log of
that exact integer ratio (rather than summing four separately rounded
logs) makes the invariance hold bitwise.
"""

from __future__ import annotations

import math

from ..corpus import ParallelCorpus, build_vocab, count_cooccurrences
from .base import Lexicon, ScoreTable, softmax_lexicon


def pmi_scores(corpus: ParallelCorpus) -> ScoreTable:
    counts = count_cooccurrences(corpus)
    scores = {
        (v, w): math.log(c * counts.total / (counts.src[v] * counts.tgt[w]))
        for (v, w), c in counts.pair.items()
    }
    return ScoreTable(build_vocab(corpus, "input"), build_vocab(corpus, "output"), scores)


def learn_pmi(corpus: ParallelCorpus, tau: float = 1.0) -> Lexicon:
    return softmax_lexicon(pmi_scores(corpus), tau, learner="pmi")
