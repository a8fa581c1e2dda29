"""Built-in datasets: the embedded Colors task and the generated SCAN splits.

Colors is a 14-train / 10-test sequence translation task over four nonce
color words and three composition operators (repeat / wrap / swap). SCAN is
fully determined by a small phrase-structure grammar, so the two splits used
here are generated in-process rather than shipped as data files; generation
is deterministic and byte-identical across runs.
"""

from __future__ import annotations

import hashlib
from pathlib import Path

from .corpus import Example, ParallelCorpus, make_corpus

_COLORS_TRAIN = [
    ("dax", "RED"),
    ("lug", "BLUE"),
    ("wif", "GREEN"),
    ("zup", "YELLOW"),
    ("lug fep", "BLUE BLUE BLUE"),
    ("dax fep", "RED RED RED"),
    ("lug blicket wif", "BLUE GREEN BLUE"),
    ("wif blicket dax", "GREEN RED GREEN"),
    ("lug kiki wif", "GREEN BLUE"),
    ("dax kiki lug", "BLUE RED"),
    ("lug fep kiki wif", "GREEN BLUE BLUE BLUE"),
    ("wif kiki dax blicket lug", "RED BLUE RED GREEN"),
    ("lug kiki wif fep", "GREEN GREEN GREEN BLUE"),
    ("wif blicket dax kiki lug", "BLUE GREEN RED GREEN"),
]

_COLORS_TEST = [
    ("zup fep", "YELLOW YELLOW YELLOW"),
    ("zup kiki dax", "RED YELLOW"),
    ("wif kiki zup", "YELLOW GREEN"),
    ("zup blicket lug", "YELLOW BLUE YELLOW"),
    ("dax blicket zup", "RED YELLOW RED"),
    ("wif kiki zup fep", "YELLOW YELLOW YELLOW GREEN"),
    ("zup fep kiki lug", "BLUE YELLOW YELLOW YELLOW"),
    ("lug kiki wif blicket zup", "GREEN YELLOW GREEN BLUE"),
    ("zup blicket wif kiki dax fep", "RED RED RED YELLOW GREEN YELLOW"),
    ("zup blicket zup kiki zup fep", "YELLOW YELLOW YELLOW YELLOW YELLOW YELLOW"),
]

# The two longest test items require generalization to output lengths never
# seen in training; indices into the test split above.
COLORS_LENGTH_GENERALIZATION_ITEMS = (8, 9)


def colors_dataset() -> tuple[ParallelCorpus, ParallelCorpus]:
    """The embedded Colors dataset: (14-example train, 10-example test)."""
    train = make_corpus(_COLORS_TRAIN, split="train")
    test = make_corpus(_COLORS_TEST, split="test")
    return train, test


# --- SCAN ------------------------------------------------------------------

_SCAN_PRIMITIVES = ("walk", "look", "run", "jump")
_SCAN_ACTION = {"walk": "I_WALK", "look": "I_LOOK", "run": "I_RUN", "jump": "I_JUMP"}
_SCAN_TURN = {"left": "I_TURN_LEFT", "right": "I_TURN_RIGHT"}


def _scan_verb_phrases() -> list[tuple[str, ...]]:
    """All 34 SCAN verb phrases in a fixed enumeration order."""
    phrases: list[tuple[str, ...]] = [(u,) for u in _SCAN_PRIMITIVES]
    heads = list(_SCAN_PRIMITIVES) + ["turn"]
    for head in heads:
        for direction in ("left", "right"):
            phrases.append((head, direction))
    for modifier in ("opposite", "around"):
        for head in heads:
            for direction in ("left", "right"):
                phrases.append((head, modifier, direction))
    return phrases


def _interpret_verb(phrase: tuple[str, ...]) -> list[str]:
    if len(phrase) == 1:
        return [_SCAN_ACTION[phrase[0]]]
    if len(phrase) == 2:
        head, direction = phrase
        act = [] if head == "turn" else [_SCAN_ACTION[head]]
        return [_SCAN_TURN[direction]] + act
    head, modifier, direction = phrase
    turn = [_SCAN_TURN[direction]]
    act = [] if head == "turn" else [_SCAN_ACTION[head]]
    if modifier == "opposite":
        return turn * 2 + act
    return (turn + act) * 4  # around


def _scan_clauses() -> list[tuple[tuple[str, ...], tuple[str, ...]]]:
    """All 102 (command, actions) clauses: verb phrase plus twice/thrice."""
    clauses = []
    for phrase in _scan_verb_phrases():
        actions = _interpret_verb(phrase)
        clauses.append((phrase, tuple(actions)))
        clauses.append((phrase + ("twice",), tuple(actions * 2)))
        clauses.append((phrase + ("thrice",), tuple(actions * 3)))
    return clauses


def scan_commands() -> list[Example]:
    """All 20910 SCAN commands: single clauses, then 'and', then 'after'."""
    clauses = _scan_clauses()
    out = [Example(src, tgt) for src, tgt in clauses]
    for src1, tgt1 in clauses:
        for src2, tgt2 in clauses:
            out.append(Example(src1 + ("and",) + src2, tgt1 + tgt2))
    for src1, tgt1 in clauses:
        for src2, tgt2 in clauses:
            out.append(Example(src1 + ("after",) + src2, tgt2 + tgt1))
    return out


def _contains(seq: tuple[str, ...], phrase: tuple[str, ...]) -> bool:
    n = len(phrase)
    return any(seq[i:i + n] == phrase for i in range(len(seq) - n + 1))


def scan_dataset(split: str) -> tuple[ParallelCorpus, ParallelCorpus]:
    """A SCAN systematic-generalization split: (train, test).

    around_right  train: no command containing "around right" (15225);
                  test: commands with a primitive "around right" phrase and
                  no "turn around right" (4476).
    jump          train: commands without "jump" plus the bare "jump"
                  command, repeated to match the distributed file's ~10%
                  oversampling (14670); test: all other jump commands (7706).
    """
    commands = scan_commands()
    if split == "around_right":
        around_right = ("around", "right")
        turn_around_right = ("turn", "around", "right")
        train = [ex for ex in commands if not _contains(ex.src, around_right)]
        test = [
            ex for ex in commands
            if _contains(ex.src, around_right) and not _contains(ex.src, turn_around_right)
        ]
    elif split == "jump":
        bare_jump = Example(("jump",), ("I_JUMP",))
        train = [ex for ex in commands if "jump" not in ex.src]
        train.extend([bare_jump] * 1467)
        test = [ex for ex in commands if "jump" in ex.src and ex != bare_jump]
    else:
        raise ValueError(f"unknown SCAN split {split!r} (expected around_right or jump)")
    return (
        ParallelCorpus(tuple(train), split="train"),
        ParallelCorpus(tuple(test), split="test"),
    )


def write_scan_file(corpus: ParallelCorpus, path: str | Path) -> str:
    """Write a corpus in SCAN's "IN: .. OUT: .." format; returns its sha256."""
    path = Path(path)
    lines = [f"IN: {' '.join(ex.src)} OUT: {' '.join(ex.tgt)}\n" for ex in corpus]
    data = "".join(lines).encode("utf-8")
    path.write_bytes(data)
    return hashlib.sha256(data).hexdigest()


# COGS is distributed as TSV files (input, logical form, generalization
# category); it is too large to embed and is fetched on demand.
COGS_FILES = {
    "train": "https://raw.githubusercontent.com/najoungkim/COGS/main/data/train.tsv",
    "dev": "https://raw.githubusercontent.com/najoungkim/COGS/main/data/dev.tsv",
    "test": "https://raw.githubusercontent.com/najoungkim/COGS/main/data/test.tsv",
    "gen": "https://raw.githubusercontent.com/najoungkim/COGS/main/data/gen.tsv",
}
