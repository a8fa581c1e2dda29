"""Tokenized parallel corpora, vocabularies, and co-occurrence statistics.

Corpora are whitespace-pre-tokenized: loaders split on whitespace and never
apply language-specific tokenization. All corpus objects are immutable after
construction and safe to share across threads.
"""

from __future__ import annotations

from collections import Counter
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, Iterator

PAD, BOS, EOS, UNK = "<pad>", "<s>", "</s>", "<unk>"
RESERVED_TOKENS = (PAD, BOS, EOS, UNK)
PAD_ID, BOS_ID, EOS_ID, UNK_ID = 0, 1, 2, 3


class CorpusError(ValueError):
    """Malformed corpus file or invalid corpus contents."""


@dataclass(frozen=True)
class Example:
    """One parallel example: source tokens, target tokens, optional category tag."""

    src: tuple[str, ...]
    tgt: tuple[str, ...]
    category: str | None = None


@dataclass(frozen=True)
class ParallelCorpus:
    examples: tuple[Example, ...]
    split: str = "train"

    def __post_init__(self):
        for k, ex in enumerate(self.examples):
            if not ex.src or not ex.tgt:
                raise CorpusError(f"example {k}: empty token sequence")
        tagged = sum(1 for ex in self.examples if ex.category is not None)
        if tagged not in (0, len(self.examples)):
            raise CorpusError("category must be present for all examples or none")

    def __len__(self) -> int:
        return len(self.examples)

    def __iter__(self) -> Iterator[Example]:
        return iter(self.examples)

    def __getitem__(self, k: int) -> Example:
        return self.examples[k]

    @property
    def has_categories(self) -> bool:
        return len(self.examples) > 0 and self.examples[0].category is not None


def make_corpus(pairs: Iterable[tuple], split: str = "train") -> ParallelCorpus:
    """Build a corpus from (src, tgt[, category]) tuples.

    Sides may be given as token sequences or as whitespace-separated strings.
    """
    examples = []
    for pair in pairs:
        src, tgt = pair[0], pair[1]
        category = pair[2] if len(pair) > 2 else None
        if isinstance(src, str):
            src = src.split()
        if isinstance(tgt, str):
            tgt = tgt.split()
        examples.append(Example(tuple(src), tuple(tgt), category))
    return ParallelCorpus(tuple(examples), split=split)


class Vocabulary:
    """Bijection between tokens and indices with reserved PAD/BOS/EOS/UNK slots.

    Indices 0..3 are reserved; corpus-derived tokens fill the rest in
    first-occurrence order. Unknown tokens encode to UNK.
    """

    def __init__(self, tokens: Iterable[str]):
        self._tokens: list[str] = list(RESERVED_TOKENS)
        self._index: dict[str, int] = {t: i for i, t in enumerate(self._tokens)}
        for tok in tokens:
            if tok in RESERVED_TOKENS:
                raise CorpusError(f"reserved token {tok!r} may not appear in a corpus")
            if tok not in self._index:
                self._index[tok] = len(self._tokens)
                self._tokens.append(tok)

    def __len__(self) -> int:
        return len(self._tokens)

    def __contains__(self, token: str) -> bool:
        return token in self._index

    def __eq__(self, other) -> bool:
        return isinstance(other, Vocabulary) and self._tokens == other._tokens

    def index(self, token: str) -> int:
        return self._index.get(token, UNK_ID)

    def token(self, idx: int) -> str:
        return self._tokens[idx]

    @property
    def tokens(self) -> tuple[str, ...]:
        return tuple(self._tokens)

    @property
    def content_tokens(self) -> tuple[str, ...]:
        return tuple(self._tokens[len(RESERVED_TOKENS):])

    def encode(self, tokens: Iterable[str], add_eos: bool = False) -> list[int]:
        ids = [self.index(t) for t in tokens]
        if add_eos:
            ids.append(EOS_ID)
        return ids

    def decode(self, ids: Iterable[int]) -> tuple[str, ...]:
        return tuple(self._tokens[i] for i in ids)


def build_vocab(corpus: ParallelCorpus, side: str) -> Vocabulary:
    """Vocabulary over one side of a corpus, first-occurrence order."""
    if side not in ("input", "output"):
        raise ValueError(f"side must be 'input' or 'output', got {side!r}")
    if len(corpus) == 0:
        raise CorpusError("cannot build a vocabulary from an empty corpus")
    tokens: list[str] = []
    for ex in corpus:
        tokens.extend(ex.src if side == "input" else ex.tgt)
    return Vocabulary(tokens)


@dataclass(frozen=True)
class CooccurrenceCounts:
    """Presence-based pair and marginal counts over a training corpus.

    A pair (v, w) counts once per example in which v appears in the source
    and w in the target, regardless of multiplicity; marginals count
    examples containing the token. `total` is the number of examples.
    """

    pair: dict[tuple[str, str], int]
    src: dict[str, int]
    tgt: dict[str, int]
    total: int

    def pair_count(self, v: str, w: str) -> int:
        return self.pair.get((v, w), 0)


def count_cooccurrences(corpus: ParallelCorpus) -> CooccurrenceCounts:
    pair: Counter = Counter()
    src: Counter = Counter()
    tgt: Counter = Counter()
    for ex in corpus:
        vs = set(ex.src)
        ws = set(ex.tgt)
        for v in vs:
            src[v] += 1
        for w in ws:
            tgt[w] += 1
        for v in vs:
            for w in ws:
                pair[(v, w)] += 1
    return CooccurrenceCounts(dict(pair), dict(src), dict(tgt), len(corpus))


def one_shot_subset(train: ParallelCorpus, test: ParallelCorpus) -> ParallelCorpus:
    """Test examples whose source contains a token occurring exactly once in
    the training sources (counting multiplicity)."""
    freq: Counter = Counter()
    for ex in train:
        freq.update(ex.src)
    once = {tok for tok, n in freq.items() if n == 1}
    kept = tuple(ex for ex in test if any(t in once for t in ex.src))
    return ParallelCorpus(kept, split=test.split)


def load_corpus(path: str | Path, fmt: str = "tsv", split: str = "train") -> ParallelCorpus:
    """Load a parallel corpus file.

    Formats:
      tsv        UTF-8, tab-separated, 2 or 3 columns (input, output, category).
      scan-inout lines of the form "IN: <tokens> OUT: <tokens>".
    """
    path = Path(path)
    if fmt in ("scan", "scan-inout"):
        parse = _parse_scan_line
    elif fmt == "tsv":
        parse = _parse_tsv_line
    else:
        raise CorpusError(f"unknown corpus format {fmt!r}")
    examples = []
    with open(path, encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            if not line.strip():
                continue
            try:
                examples.append(parse(line))
            except CorpusError as err:
                raise CorpusError(f"{path}:{lineno}: {err}") from None
    if not examples:
        raise CorpusError(f"{path}: empty corpus file")
    return ParallelCorpus(tuple(examples), split=split)


def _parse_tsv_line(line: str) -> Example:
    cols = line.rstrip("\n").split("\t")
    if len(cols) not in (2, 3):
        raise CorpusError(f"expected 2 or 3 tab-separated columns, got {len(cols)}")
    src = tuple(cols[0].split())
    tgt = tuple(cols[1].split())
    if not src or not tgt:
        raise CorpusError("empty input or output column")
    category = cols[2].strip() if len(cols) == 3 else None
    return Example(src, tgt, category)


def _parse_scan_line(line: str) -> Example:
    line = line.strip()
    if not line.startswith("IN:") or " OUT:" not in line:
        raise CorpusError("expected 'IN: <tokens> OUT: <tokens>'")
    left, right = line.split(" OUT:", 1)
    src = tuple(left[len("IN:"):].split())
    tgt = tuple(right.split())
    if not src or not tgt:
        raise CorpusError("empty input or output side")
    return Example(src, tgt)
