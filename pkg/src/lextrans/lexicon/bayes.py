"""Bayesian lexicon learner: posterior inclusion probabilities by MCMC.

The lexicon is an unweighted set of (input token, output token) entries
with a description-length prior p(l) propto exp(-alpha*|l|). Each input
token of an example is generated either non-referentially (weight kappa
once the token appears in the lexicon, 1 otherwise, normalized over the
input vocabulary) or referentially from some output token it is paired
with:

    p(x_j | y, l) = (1-gamma) p_NR(x_j | l) + gamma sum_i p_R(x_j | y_i, l)

A Metropolis-Hastings sampler over lexicon sets (delete a uniform entry /
insert one proportional to co-occurrence counts, 50/50, with the proposal
correction) estimates p((v, w) in l) per pair; those probabilities are the
scores fed to the temperature softmax.
"""

from __future__ import annotations

import math

import numpy as np

from ..corpus import ParallelCorpus, build_vocab, count_cooccurrences
from .base import Lexicon, ScoreTable, softmax_lexicon


def lexicon_log_posterior(entries, corpus: ParallelCorpus, alpha: float = 2.0,
                          gamma: float = 0.95, kappa: float = 0.1) -> float:
    """Unnormalized log posterior of a lexicon entry set given the corpus."""
    entries = set(entries)
    in_vocab_size = len(build_vocab(corpus, "input").content_tokens)
    lexical_inputs = {v for v, _ in entries}
    referents: dict[str, set[str]] = {}
    for v, w in entries:
        referents.setdefault(w, set()).add(v)

    z_nr = in_vocab_size - len(lexical_inputs) + kappa * len(lexical_inputs)
    lp = -alpha * len(entries)
    for ex in corpus:
        for x in ex.src:
            p_nr = (kappa if x in lexical_inputs else 1.0) / z_nr
            p_ref = 0.0
            for y in ex.tgt:
                sources = referents.get(y)
                if sources and x in sources:
                    p_ref += 1.0 / len(sources)
            lp += math.log((1.0 - gamma) * p_nr + gamma * p_ref)
    return lp


def bayesian_scores(corpus: ParallelCorpus, alpha: float = 2.0, gamma: float = 0.95,
                    kappa: float = 0.1, chains: int = 5, steps: int = 6000,
                    burn_in: int = 1000, thin: int = 10, seed: int = 0) -> ScoreTable:
    """Posterior inclusion probability of each co-occurring pair."""
    if not 0.0 <= gamma <= 1.0:
        raise ValueError(f"gamma must be in [0, 1], got {gamma}")
    if kappa <= 0:
        raise ValueError(f"kappa must be positive, got {kappa}")
    if burn_in < 0 or steps <= burn_in:
        raise ValueError(f"need steps > burn_in >= 0, got steps={steps}, burn_in={burn_in}")
    if thin < 1:
        raise ValueError(f"thin must be >= 1, got {thin}")

    counts = count_cooccurrences(corpus)
    pairs = sorted(counts.pair)
    weights = np.array([counts.pair[p] for p in pairs], dtype=np.float64)
    total_weight = float(weights.sum())
    n_pairs = len(pairs)

    def log_post(in_lex: np.ndarray) -> float:
        return lexicon_log_posterior(
            {pairs[k] for k in np.flatnonzero(in_lex)}, corpus, alpha, gamma, kappa
        )

    inclusion = np.zeros(n_pairs)
    n_samples = 0
    for chain in range(chains):
        rng = np.random.default_rng([seed, chain])
        in_lex = np.zeros(n_pairs, dtype=bool)
        available = total_weight
        cur_lp = log_post(in_lex)
        for step in range(steps):
            size = int(in_lex.sum())
            if rng.random() < 0.5:
                # delete a uniform entry; reverse move is the weighted insert
                if size > 0:
                    k = int(rng.choice(np.flatnonzero(in_lex)))
                    in_lex[k] = False
                    new_lp = log_post(in_lex)
                    correction = (math.log(weights[k]) - math.log(available + weights[k])
                                  + math.log(size))
                    if math.log(rng.random()) < new_lp - cur_lp + correction:
                        cur_lp = new_lp
                        available += weights[k]
                    else:
                        in_lex[k] = True
            else:
                # insert proportional to co-occurrence; reverse is uniform delete
                if available > 0:
                    probs = np.where(in_lex, 0.0, weights) / available
                    k = int(rng.choice(n_pairs, p=probs))
                    in_lex[k] = True
                    new_lp = log_post(in_lex)
                    correction = (math.log(available) - math.log(weights[k])
                                  - math.log(size + 1))
                    if math.log(rng.random()) < new_lp - cur_lp + correction:
                        cur_lp = new_lp
                        available -= weights[k]
                    else:
                        in_lex[k] = False
            if step >= burn_in and (step - burn_in) % thin == 0:
                inclusion += in_lex
                n_samples += 1

    scores = {pair: float(inclusion[k] / n_samples) for k, pair in enumerate(pairs)}
    return ScoreTable(build_vocab(corpus, "input"), build_vocab(corpus, "output"), scores)


def learn_bayesian(corpus: ParallelCorpus, tau: float = 0.0, alpha: float = 2.0,
                   gamma: float = 0.95, kappa: float = 0.1, chains: int = 5,
                   steps: int = 6000, burn_in: int = 1000, thin: int = 10,
                   seed: int = 0) -> Lexicon:
    table = bayesian_scores(corpus, alpha=alpha, gamma=gamma, kappa=kappa,
                            chains=chains, steps=steps, burn_in=burn_in,
                            thin=thin, seed=seed)
    return softmax_lexicon(table, tau, learner="bayesian")
