"""Positional alignment model (IBM Model 2 with a fixed distortion prior).

Each target position i picks a source position a_i with prior

    p(a_i = j) propto exp(-|i/m - j/n|)      (positions 1-indexed)

and emits y_i from theta(y_i | x_{a_i}). Only theta is re-estimated by EM;
the positional prior stays fixed, and no NULL source token is added. The
lexicon learner trains the model in both directions, intersects the two
Viterbi alignments, and scores each token pair by its intersected link
count.
"""

from __future__ import annotations

from collections import defaultdict
from dataclasses import dataclass, field

import numpy as np

from ..corpus import Example, ParallelCorpus, build_vocab
from .base import Lexicon, ScoreTable, softmax_lexicon


def positional_prior(m: int, n: int) -> np.ndarray:
    """(m, n) matrix of p(a_i = j), each row normalized over source positions."""
    i = np.arange(1, m + 1)[:, None] / m
    j = np.arange(1, n + 1)[None, :] / n
    w = np.exp(-np.abs(i - j))
    return w / w.sum(axis=1, keepdims=True)


@dataclass
class AlignmentModel:
    """Translation table from EM plus diagnostics.

    For a forward model theta[src_token][tgt_token] estimates p(tgt|src);
    a reverse model stores theta over the swapped roles. `link_prob`
    hides the orientation so alignments can always be scored in corpus
    order.
    """

    theta: dict[str, dict[str, float]]
    direction: str = "forward"
    log_likelihood: list[float] = field(default_factory=list)

    def prob(self, tgt_token: str, src_token: str) -> float:
        return self.theta.get(src_token, {}).get(tgt_token, 0.0)

    def link_prob(self, src_token: str, tgt_token: str) -> float:
        if self.direction == "forward":
            return self.theta.get(src_token, {}).get(tgt_token, 0.0)
        return self.theta.get(tgt_token, {}).get(src_token, 0.0)


def em_ibm2(corpus: ParallelCorpus, direction: str = "forward",
            iterations: int = 5) -> AlignmentModel:
    """EM for theta under the fixed positional prior.

    direction "forward" aligns target positions to source positions;
    "reverse" swaps the two sides first.
    """
    if iterations < 1:
        raise ValueError(f"iterations must be >= 1, got {iterations}")
    if direction == "forward":
        pairs = [(ex.src, ex.tgt) for ex in corpus]
    elif direction == "reverse":
        pairs = [(ex.tgt, ex.src) for ex in corpus]
    else:
        raise ValueError(f"direction must be forward or reverse, got {direction!r}")

    tgt_vocab = sorted({w for _, tgt in pairs for w in tgt})
    uniform = 1.0 / len(tgt_vocab)
    theta: dict[str, dict[str, float]] = defaultdict(lambda: defaultdict(lambda: uniform))
    priors = {(len(tgt), len(src)): positional_prior(len(tgt), len(src))
              for src, tgt in pairs}

    model = AlignmentModel(theta={}, direction=direction)
    for _ in range(iterations):
        counts: dict[str, dict[str, float]] = defaultdict(lambda: defaultdict(float))
        ll = 0.0
        for src, tgt in pairs:
            prior = priors[(len(tgt), len(src))]
            for i, w in enumerate(tgt):
                weights = np.array([prior[i, j] * theta[v][w] for j, v in enumerate(src)])
                total = weights.sum()
                ll += np.log(total)
                for j, v in enumerate(src):
                    counts[v][w] += weights[j] / total
        for v, row in counts.items():
            norm = sum(row.values())
            theta[v] = defaultdict(float, {w: c / norm for w, c in row.items()})
        model.log_likelihood.append(float(ll))
    model.theta = {v: dict(row) for v, row in theta.items()}
    return model


def viterbi_align(model: AlignmentModel, src, tgt) -> list[int]:
    """Best source position (0-based) for each target position.

    Arguments are in corpus order regardless of the model's training
    direction. Ties break toward the diagonal (smaller |i/m - j/n|),
    then smaller j.
    """
    m, n = len(tgt), len(src)
    prior = positional_prior(m, n)
    alignment = []
    for i, w in enumerate(tgt):
        scores = np.array([prior[i, j] * model.link_prob(v, w) for j, v in enumerate(src)])
        best = scores.max()
        candidates = np.flatnonzero(scores == best)
        if len(candidates) > 1:
            offset = np.abs((i + 1) / m - (candidates + 1) / n)
            candidates = candidates[offset == offset.min()]
        alignment.append(int(candidates[0]))
    return alignment


def ibmm2_scores(corpus: ParallelCorpus, iterations: int = 5) -> ScoreTable:
    """Counts over links where the two directions' alignments agree.

    Both models answer the same question per example (which source
    position is responsible for each target position); a link counts only
    when both give the same answer. One-sided links, e.g. a source token
    the reverse model had to place somewhere in a uniform output, drop
    out, which is what keeps the lexicon high-precision.
    """
    forward = em_ibm2(corpus, "forward", iterations)
    reverse = em_ibm2(corpus, "reverse", iterations)
    scores: dict[tuple[str, str], float] = defaultdict(float)
    for ex in corpus:
        a_fwd = viterbi_align(forward, ex.src, ex.tgt)
        a_rev = viterbi_align(reverse, ex.src, ex.tgt)
        for i, (j1, j2) in enumerate(zip(a_fwd, a_rev)):
            if j1 == j2:
                scores[(ex.src[j1], ex.tgt[i])] += 1.0
    return ScoreTable(build_vocab(corpus, "input"), build_vocab(corpus, "output"),
                      dict(scores))


def learn_ibmm2(corpus: ParallelCorpus, tau: float = 0.0, iterations: int = 5) -> Lexicon:
    return softmax_lexicon(ibmm2_scores(corpus, iterations), tau, learner="ibmm2")
