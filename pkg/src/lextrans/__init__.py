"""Lexicon-augmented sequence-to-sequence models.

An attentional LSTM encoder-decoder whose output layer can route
attention weights through a token-translation lexicon (or a copy
matrix), plus offline lexicon learners, training, evaluation, and a
command-line interface.
"""

from __future__ import annotations

__version__ = "0.1.0"

from .corpus import (  # noqa: F401
    CorpusError,
    Example,
    ParallelCorpus,
    Vocabulary,
    build_vocab,
    count_cooccurrences,
    load_corpus,
    make_corpus,
    one_shot_subset,
)
from .metrics import (  # noqa: F401
    EvalReport,
    MetricsError,
    aggregate,
    corpus_bleu,
    evaluate,
    exact_match,
)
