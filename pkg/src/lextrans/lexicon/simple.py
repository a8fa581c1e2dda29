"""Rule-based lexicon learner built on necessary/sufficient co-occurrence.

A pair (v, w) is admissible when:
  C1: v is a sufficient and necessary predictor of w
      suff(v, w): every example whose input contains v has w in its output
      nec(v, w):  every example whose output contains w has v in its input
  C2: suff holds, and either nec holds or no token at all satisfies C1
      for w (so a merely-sufficient predictor wins only by default)
  C3: C2 holds and at most epsilon tokens are sufficient predictors of w
      (drops function words that tag along with everything)

Admissible pairs are scored by co-occurrence count and pushed through the
temperature softmax.
"""

from __future__ import annotations

from ..corpus import ParallelCorpus, build_vocab, count_cooccurrences
from .base import Lexicon, ScoreTable, softmax_lexicon


def simple_scores(corpus: ParallelCorpus, epsilon: int = 3) -> ScoreTable:
    in_vocab = build_vocab(corpus, "input")
    out_vocab = build_vocab(corpus, "output")
    counts = count_cooccurrences(corpus)

    tgt_sets_with_src: dict[str, list[set[str]]] = {v: [] for v in in_vocab.content_tokens}
    src_sets_with_tgt: dict[str, list[set[str]]] = {w: [] for w in out_vocab.content_tokens}
    for ex in corpus:
        src_set, tgt_set = set(ex.src), set(ex.tgt)
        for v in src_set:
            tgt_sets_with_src[v].append(tgt_set)
        for w in tgt_set:
            src_sets_with_tgt[w].append(src_set)

    def suff(v: str, w: str) -> bool:
        return all(w in tgt for tgt in tgt_sets_with_src[v])

    def nec(v: str, w: str) -> bool:
        return all(v in src for src in src_sets_with_tgt[w])

    # only co-occurring pairs can satisfy suff, so the candidate set is small
    candidates = sorted(counts.pair)
    sufficient = {pair for pair in candidates if suff(*pair)}
    necessary = {pair for pair in candidates if nec(*pair)}
    c1 = sufficient & necessary
    has_winner = {w for _, w in c1}
    n_sufficient: dict[str, int] = {}
    for _, w in sufficient:
        n_sufficient[w] = n_sufficient.get(w, 0) + 1

    scores: dict[tuple[str, str], float] = {}
    for v, w in sufficient:
        c2 = (v, w) in necessary or w not in has_winner
        if c2 and n_sufficient[w] <= epsilon:
            scores[(v, w)] = float(counts.pair_count(v, w))
    return ScoreTable(in_vocab, out_vocab, scores)


def learn_simple(corpus: ParallelCorpus, tau: float = 0.0, epsilon: int = 3) -> Lexicon:
    return softmax_lexicon(simple_scores(corpus, epsilon), tau, learner="simple")
