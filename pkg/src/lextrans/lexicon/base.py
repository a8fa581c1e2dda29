"""Lexicon matrices: temperature softmax over learner scores, fallback rows,
text serialization.

A Lexicon is a row-stochastic |Vx| x |Vy| matrix L: row v is a distribution
over output tokens. Learners produce a ScoreTable (finite scores on the
pairs they consider admissible); `softmax_lexicon` turns it into L. Rows
with no admissible pair (including the reserved tokens) get a fallback
distribution chosen by a corpus-level policy.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from ..corpus import RESERVED_TOKENS, Vocabulary


class LexiconError(ValueError):
    pass


@dataclass(frozen=True)
class ScoreTable:
    """Finite scores on admissible (input token, output token) pairs."""

    in_vocab: Vocabulary
    out_vocab: Vocabulary
    scores: dict[tuple[str, str], float]

    def pairs(self) -> set[tuple[str, str]]:
        return set(self.scores)

    def by_input(self) -> dict[str, list[tuple[str, float]]]:
        grouped: dict[str, list[tuple[str, float]]] = {}
        for (v, w), s in self.scores.items():
            grouped.setdefault(v, []).append((w, s))
        return grouped


FALLBACK_POLICIES = ("self-map", "unmapped-uniform", "uniform")


@dataclass
class Lexicon:
    """Row-stochastic token-translation matrix with provenance."""

    in_vocab: Vocabulary
    out_vocab: Vocabulary
    matrix: np.ndarray
    tau: float = 0.0
    learner: str = "custom"
    fallback: str = "uniform"

    def __post_init__(self):
        expected = (len(self.in_vocab), len(self.out_vocab))
        if self.matrix.shape != expected:
            raise LexiconError(
                f"lexicon matrix shape {self.matrix.shape} does not match vocabularies {expected}"
            )

    def row(self, token: str) -> np.ndarray:
        return self.matrix[self.in_vocab.index(token)]

    def entries(self) -> list[tuple[str, str, float]]:
        """Nonzero cells as (input token, output token, probability)."""
        out = []
        for i, v in enumerate(self.in_vocab.tokens):
            for j in np.flatnonzero(self.matrix[i]):
                out.append((v, self.out_vocab.token(int(j)), float(self.matrix[i, j])))
        return out

    def mappings(self, threshold: float = 0.5) -> set[tuple[str, str]]:
        """Content-token pairs whose probability exceeds `threshold`."""
        return {
            (v, w)
            for v, w, p in self.entries()
            if p > threshold and v not in RESERVED_TOKENS and w not in RESERVED_TOKENS
        }

    def save(self, path) -> None:
        path = Path(path)
        lines = [
            f"# learner: {self.learner}",
            f"# tau: {self.tau!r}",
            f"# fallback: {self.fallback}",
        ]
        for v, w, p in self.entries():
            lines.append(f"{v}\t{w}\t{p!r}")
        path.write_text("\n".join(lines) + "\n", encoding="utf-8")

    @classmethod
    def load(cls, path) -> "Lexicon":
        path = Path(path)
        meta = {"learner": "custom", "tau": "0.0", "fallback": "uniform"}
        rows: list[tuple[str, str, float]] = []
        with open(path, encoding="utf-8") as fh:
            for lineno, line in enumerate(fh, start=1):
                line = line.rstrip("\n")
                if not line:
                    continue
                if line.startswith("#"):
                    key, _, value = line[1:].partition(":")
                    meta[key.strip()] = value.strip()
                    continue
                parts = line.split("\t")
                if len(parts) != 3:
                    raise LexiconError(f"{path}:{lineno}: expected 3 tab-separated fields")
                try:
                    prob = float(parts[2])
                except ValueError:
                    raise LexiconError(f"{path}:{lineno}: bad probability {parts[2]!r}") from None
                rows.append((parts[0], parts[1], prob))
        if not rows:
            raise LexiconError(f"{path}: no lexicon entries")
        seen_in: list[str] = []
        seen_out: list[str] = []
        for v, w, _ in rows:
            if v not in RESERVED_TOKENS and v not in seen_in:
                seen_in.append(v)
            if w not in RESERVED_TOKENS and w not in seen_out:
                seen_out.append(w)
        in_vocab = Vocabulary(seen_in)
        out_vocab = Vocabulary(seen_out)
        matrix = np.zeros((len(in_vocab), len(out_vocab)))
        for v, w, p in rows:
            matrix[in_vocab.index(v), out_vocab.index(w)] = p
        lex = cls(
            in_vocab, out_vocab, matrix,
            tau=float(meta["tau"]), learner=meta["learner"], fallback=meta["fallback"],
        )
        return lex

    def reindex(self, in_vocab: Vocabulary, out_vocab: Vocabulary) -> "Lexicon":
        """Re-express the matrix over the given vocabularies.

        Every token carrying probability mass must exist on the new side;
        new tokens absent from this lexicon get zero columns (outputs) or
        raise (inputs), so rows stay normalized.
        """
        missing_in = [v for v in in_vocab.content_tokens if v not in self.in_vocab]
        if missing_in:
            raise LexiconError(f"lexicon has no rows for input tokens: {missing_in}")
        matrix = np.zeros((len(in_vocab), len(out_vocab)))
        for v, w, p in self.entries():
            if v not in in_vocab:
                continue
            if w not in out_vocab:
                raise LexiconError(f"lexicon maps to unknown output token {w!r}")
            matrix[in_vocab.index(v), out_vocab.index(w)] = p
        # rows for reserved tokens absent from the file keep whatever the
        # original fallback produced for their shared reserved slots
        for r, token in enumerate(RESERVED_TOKENS):
            if matrix[r].sum() == 0.0 and token in self.in_vocab.tokens:
                for w, p in zip(self.out_vocab.tokens, self.matrix[self.in_vocab.index(token)]):
                    if p and w in out_vocab:
                        matrix[r, out_vocab.index(w)] = p
        bad = np.flatnonzero(np.abs(matrix.sum(axis=1) - 1.0) > 1e-6)
        if bad.size:
            names = [in_vocab.token(int(i)) for i in bad[:5]]
            raise LexiconError(f"reindexed lexicon rows do not sum to 1 for {names}")
        return Lexicon(in_vocab, out_vocab, matrix,
                       tau=self.tau, learner=self.learner, fallback=self.fallback)


def fallback_row(token: str, out_vocab: Vocabulary, assigned: set[str], policy: str) -> np.ndarray:
    """Distribution for an input token with no admissible mapping."""
    row = np.zeros(len(out_vocab))
    if policy == "self-map":
        if token not in out_vocab:
            raise LexiconError(f"self-map fallback needs {token!r} in the output vocabulary")
        row[out_vocab.index(token)] = 1.0
        return row
    if policy == "unmapped-uniform":
        free = [w for w in out_vocab.content_tokens if w not in assigned]
        if not free:
            raise LexiconError("unmapped-uniform fallback with no unmapped output tokens")
        for w in free:
            row[out_vocab.index(w)] = 1.0 / len(free)
        return row
    if policy == "uniform":
        content = out_vocab.content_tokens
        for w in content:
            row[out_vocab.index(w)] = 1.0 / len(content)
        return row
    raise LexiconError(f"unknown fallback policy {policy!r}")


def _resolve_policy(table: ScoreTable, assigned: set[str]) -> str:
    in_content = set(table.in_vocab.content_tokens)
    out_content = set(table.out_vocab.content_tokens)
    if in_content <= out_content:
        return "self-map"
    if out_content - assigned:
        return "unmapped-uniform"
    return "uniform"


def softmax_lexicon(table: ScoreTable, tau: float, fallback: str = "auto",
                    learner: str = "custom") -> Lexicon:
    """Build the row-stochastic matrix from admissible-pair scores.

    tau > 0 takes a softmax of score/tau over each row's admissible pairs;
    tau = 0 is the argmax limit (ties split equally). Rows with no
    admissible pair get `fallback_row`; "auto" picks self-map when the
    content input vocabulary is a subset of the output one, then uniform
    over outputs no mapped row claimed, then uniform over all outputs.
    """
    if tau < 0:
        raise LexiconError(f"tau must be >= 0, got {tau}")
    in_vocab, out_vocab = table.in_vocab, table.out_vocab
    matrix = np.zeros((len(in_vocab), len(out_vocab)))
    grouped = table.by_input()
    for v, pairs in grouped.items():
        i = in_vocab.index(v)
        scores = np.array([s for _, s in pairs], dtype=np.float64)
        cols = [out_vocab.index(w) for w, _ in pairs]
        if tau == 0.0:
            top = scores == scores.max()
            weights = top / top.sum()
        else:
            z = scores / tau
            z -= z.max()
            e = np.exp(z)
            weights = e / e.sum()
        matrix[i, cols] = weights
    assigned = {
        w for (v, w) in table.scores
        if matrix[in_vocab.index(v), out_vocab.index(w)] > 0.0
    }
    policy = _resolve_policy(table, assigned) if fallback == "auto" else fallback
    if policy not in FALLBACK_POLICIES:
        raise LexiconError(f"unknown fallback policy {policy!r}")
    for i, token in enumerate(in_vocab.tokens):
        if token not in grouped:
            matrix[i] = fallback_row(token, out_vocab, assigned, policy)
    return Lexicon(in_vocab, out_vocab, matrix, tau=tau, learner=learner, fallback=policy)


def uniform_lexicon(in_vocab: Vocabulary, out_vocab: Vocabulary) -> Lexicon:
    """Uninformative lexicon: every row uniform over content output tokens."""
    matrix = np.stack([fallback_row(v, out_vocab, set(), "uniform") for v in in_vocab.tokens])
    return Lexicon(in_vocab, out_vocab, matrix, tau=0.0, learner="uniform", fallback="uniform")


def identity_lexicon(in_vocab: Vocabulary, out_vocab: Vocabulary | None = None) -> Lexicon:
    """Token-identity matrix C[v, w] = 1 iff v and w are the same string.

    With a shared vocabulary this is the copy matrix: routing attention
    through it reproduces a copy head exactly.
    """
    out_vocab = out_vocab if out_vocab is not None else in_vocab
    missing = [v for v in in_vocab.tokens if v not in out_vocab]
    if missing:
        raise LexiconError(f"identity lexicon needs every input token on the output side; missing {missing[:5]}")
    matrix = np.zeros((len(in_vocab), len(out_vocab)))
    for i, v in enumerate(in_vocab.tokens):
        matrix[i, out_vocab.index(v)] = 1.0
    return Lexicon(in_vocab, out_vocab, matrix, tau=0.0, learner="identity", fallback="self-map")
