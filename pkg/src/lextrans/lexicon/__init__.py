"""Offline lexicon induction: rule-based, PMI, alignment, and Bayesian."""

from __future__ import annotations

from .base import (  # noqa: F401
    FALLBACK_POLICIES,
    Lexicon,
    LexiconError,
    ScoreTable,
    fallback_row,
    identity_lexicon,
    softmax_lexicon,
    uniform_lexicon,
)
from .bayes import bayesian_scores, learn_bayesian, lexicon_log_posterior  # noqa: F401
from .ibm2 import (  # noqa: F401
    AlignmentModel,
    em_ibm2,
    ibmm2_scores,
    learn_ibmm2,
    positional_prior,
    viterbi_align,
)
from .pmi import learn_pmi, pmi_scores  # noqa: F401
from .simple import learn_simple, simple_scores  # noqa: F401

LEARNERS = {
    "simple": learn_simple,
    "pmi": learn_pmi,
    "ibmm2": learn_ibmm2,
    "bayesian": learn_bayesian,
}
