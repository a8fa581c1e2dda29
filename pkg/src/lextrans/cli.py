"""Command-line surface: fetch data, learn lexicons, train, evaluate, tabulate.

Exit codes: 0 success, 1 usage error, 2 data error, 3 numeric failure.
Every command that writes artifacts records them in a ``manifest.json``
(command, config snapshot, seeds, input hashes, output paths, version) so a
run can be reproduced from its manifest alone.
"""

from __future__ import annotations

import argparse
import dataclasses
import hashlib
import json
import os
import sys
import urllib.error
import urllib.request
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from . import __version__
from .corpus import CorpusError, ParallelCorpus, load_corpus
from .datasets import COGS_FILES, colors_dataset, scan_dataset, write_scan_file
from .lexicon import (
    Lexicon,
    LexiconError,
    bayesian_scores,
    ibmm2_scores,
    pmi_scores,
    simple_scores,
    softmax_lexicon,
    uniform_lexicon,
)
from .metrics import EvalReport, MetricsError, aggregate, evaluate
from .model import ModelError, ModelParams
from .training import TrainConfig, TrainError, presets, train

EXIT_OK = 0
EXIT_USAGE = 1
EXIT_DATA = 2
EXIT_NUMERIC = 3

DATA_DIR_ENV = "LEXTRANS_DATA_DIR"
SCAN_SPLITS = ("around_right", "jump")
LEARNERS = ("simple", "pmi", "ibmm2", "bayesian")


class UsageError(ValueError):
    """Bad flags or flag combinations (exit 1)."""


class DataError(ValueError):
    """Unreadable, missing, or corrupt data (exit 2)."""


class _Parser(argparse.ArgumentParser):
    def error(self, message):  # route argparse failures through exit code 1
        raise UsageError(f"{self.prog}: {message}")


# -- manifests ---------------------------------------------------------------


@dataclass
class RunManifest:
    """What a command ran with and what it wrote."""

    command: str
    version: str = __version__
    config: dict = field(default_factory=dict)
    seeds: list = field(default_factory=list)
    inputs: dict = field(default_factory=dict)
    outputs: list = field(default_factory=list)

    def save(self, path: str | Path) -> None:
        payload = dataclasses.asdict(self)
        Path(path).write_text(json.dumps(payload, indent=2, sort_keys=True) + "\n", encoding="utf-8")

    @classmethod
    def load(cls, path: str | Path) -> "RunManifest":
        return cls(**json.loads(Path(path).read_text(encoding="utf-8")))


def _sha256_file(path: Path) -> str:
    digest = hashlib.sha256()
    with open(path, "rb") as fh:
        for chunk in iter(lambda: fh.read(1 << 16), b""):
            digest.update(chunk)
    return digest.hexdigest()


# -- data loading ------------------------------------------------------------


def _load_data(spec: str, fmt: str, split: str) -> tuple[ParallelCorpus, str]:
    """Resolve a --data value to (corpus, input hash/tag).

    Accepts the builtin names "colors", "scan:around_right", "scan:jump"
    (split picks train or test) or a path to a tsv/scan-format file.
    """
    if spec == "colors":
        train_c, test_c = colors_dataset()
        return (train_c if split == "train" else test_c), "builtin:colors"
    if spec.startswith("scan:"):
        name = spec.partition(":")[2]
        if name not in SCAN_SPLITS:
            raise DataError(f"unknown SCAN split {name!r}; expected one of {SCAN_SPLITS}")
        train_c, test_c = scan_dataset(name)
        return (train_c if split == "train" else test_c), f"builtin:{spec}"
    path = Path(spec)
    if not path.is_file():
        raise DataError(f"data file not found: {spec}")
    corpus = load_corpus(path, fmt=fmt, split=split)
    return corpus, _sha256_file(path)


def _out_dir(args) -> Path:
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    return out


# -- fetch -------------------------------------------------------------------


def _verify_or_record(dest: Path, name: str, hashes: dict, data_hash: str) -> None:
    if name in hashes and hashes[name] != data_hash:
        raise DataError(
            f"{dest / name}: content hash {data_hash[:12]}… does not match the "
            f"recorded {hashes[name][:12]}…; delete the file to refetch"
        )
    hashes[name] = data_hash


def cmd_fetch(args) -> int:
    dest = _out_dir(args) / args.data
    dest.mkdir(parents=True, exist_ok=True)
    hashes_path = dest / "hashes.json"
    hashes = json.loads(hashes_path.read_text()) if hashes_path.is_file() else {}
    manifest = RunManifest(command="fetch", config={"data": args.data, "dest": str(dest)})
    written = []
    if args.data == "scan":
        # SCAN is generated from its published grammar; fetch materializes
        # the split files locally and records their hashes.
        for split in SCAN_SPLITS:
            train_c, test_c = scan_dataset(split)
            for part, corpus in (("train", train_c), ("test", test_c)):
                name = f"tasks_{part}_{split}.txt"
                path = dest / name
                if path.is_file():
                    _verify_or_record(dest, name, hashes, _sha256_file(path))
                    continue
                _verify_or_record(dest, name, hashes, write_scan_file(corpus, path))
                written.append(name)
    else:  # cogs
        for part, url in COGS_FILES.items():
            name = f"{part}.tsv"
            path = dest / name
            if path.is_file():
                _verify_or_record(dest, name, hashes, _sha256_file(path))
                continue
            try:
                with urllib.request.urlopen(url, timeout=60) as response:
                    data = response.read()
            except (urllib.error.URLError, OSError) as exc:
                raise DataError(
                    f"could not download {url}: {exc}. COGS needs network access; "
                    "Colors is embedded and SCAN is generated locally — neither needs fetching."
                ) from exc
            path.write_bytes(data)
            _verify_or_record(dest, name, hashes, hashlib.sha256(data).hexdigest())
            written.append(name)
    hashes_path.write_text(json.dumps(hashes, indent=2, sort_keys=True) + "\n")
    manifest.inputs = dict(hashes)
    manifest.outputs = sorted(str(dest / n) for n in list(hashes) + ["hashes.json"])
    manifest.save(dest / "manifest.json")
    if written:
        print(f"fetched {len(written)} file(s) into {dest}")
    else:
        print(f"{dest} is up to date")
    return EXIT_OK


# -- lexicon -----------------------------------------------------------------


def _learn_scores(args, corpus: ParallelCorpus):
    if args.learner == "simple":
        return simple_scores(corpus, epsilon=args.epsilon)
    if args.learner == "pmi":
        return pmi_scores(corpus)
    if args.learner == "ibmm2":
        return ibmm2_scores(corpus)
    return bayesian_scores(corpus, seed=args.seed)


def cmd_lexicon(args) -> int:
    corpus, data_hash = _load_data(args.data, args.format, "train")
    table = _learn_scores(args, corpus)
    lexicon = softmax_lexicon(table, args.tau, learner=args.learner)
    out = _out_dir(args)
    lex_path = out / "lexicon.txt"
    lexicon.save(lex_path)

    by_input = table.by_input()
    mapped = sorted(by_input)
    content = lexicon.in_vocab.content_tokens
    fallback = [v for v in content if v not in by_input]
    counts = [len(by_input[v]) for v in mapped]
    print(f"learner={args.learner} tau={args.tau}")
    print(f"mapped input tokens: {len(mapped)} of {len(content)}")
    if counts:
        print(
            "entries per mapped token: "
            f"mean {float(np.mean(counts)):.2f} (min {min(counts)}, max {max(counts)})"
        )
    print(f"fallback rows: {len(fallback)} (policy {lexicon.fallback})")
    print(f"wrote {lex_path}")

    manifest = RunManifest(
        command="lexicon",
        config={"learner": args.learner, "tau": args.tau, "epsilon": args.epsilon,
                "seed": args.seed, "format": args.format},
        seeds=[args.seed],
        inputs={args.data: data_hash},
        outputs=[str(lex_path)],
    )
    manifest.save(out / "manifest.json")
    return EXIT_OK


# -- train -------------------------------------------------------------------


def _parse_config_file(path: Path) -> dict:
    """Read `key = value` lines into typed TrainConfig fields."""
    if not path.is_file():
        raise DataError(f"config file not found: {path}")
    types = {f.name: f.type for f in dataclasses.fields(TrainConfig)}
    casts = {"int": int, "float": float, "str": str,
             "bool": lambda s: s.lower() in ("1", "true", "yes")}
    values = {}
    for lineno, raw in enumerate(path.read_text(encoding="utf-8").splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        key, sep, value = line.partition("=")
        key, value = key.strip(), value.strip()
        if not sep or not key or not value:
            raise DataError(f"{path}:{lineno}: expected 'key = value'")
        if key not in types:
            raise DataError(f"{path}:{lineno}: unknown TrainConfig field {key!r}")
        values[key] = casts[str(types[key])](value)
    return values


def _build_train_config(args) -> TrainConfig:
    config = presets(args.preset) if args.preset else TrainConfig()
    if args.config:
        config = dataclasses.replace(config, **_parse_config_file(Path(args.config)))
    overrides = {}
    if args.heads is not None:
        overrides["heads"] = args.heads
    if args.tau is not None:
        overrides["tau"] = args.tau
    if args.train_lexicon:
        overrides["lexicon_trainable"] = True
    if args.seed is not None:
        overrides["seed"] = args.seed
    if args.lexicon is not None:
        overrides["lexicon_source"] = (
            "none" if args.lexicon == "none"
            else "uniform" if args.lexicon == "uniform"
            else "provided"
        )
    return dataclasses.replace(config, **overrides)


def _resolve_cli_lexicon(args, corpus: ParallelCorpus, config: TrainConfig) -> Lexicon | None:
    """Build the lexicon object a --lexicon value refers to (None for none/uniform)."""
    if args.lexicon in (None, "none", "uniform"):
        return None
    if args.lexicon in LEARNERS:
        ns = argparse.Namespace(learner=args.lexicon, epsilon=args.epsilon, seed=config.seed)
        table = _learn_scores(ns, corpus)
        return softmax_lexicon(table, config.tau, learner=args.lexicon)
    path = Path(args.lexicon)
    if not path.is_file():
        raise DataError(f"lexicon file not found: {args.lexicon}")
    return Lexicon.load(path)


def _dump_config(config: TrainConfig, path: Path) -> None:
    lines = [f"{f.name} = {getattr(config, f.name)}" for f in dataclasses.fields(config)]
    path.write_text("\n".join(lines) + "\n", encoding="utf-8")


def cmd_train(args) -> int:
    if args.seeds < 1:
        raise UsageError("--seeds must be >= 1")
    corpus, data_hash = _load_data(args.data, args.format, "train")
    config = _build_train_config(args)
    if config.heads == "write+lex" and config.lexicon_source == "none":
        raise UsageError("--heads write+lex needs --lexicon (uniform, a learner, or a file)")
    if config.heads != "write+lex" and args.lexicon not in (None, "none"):
        raise UsageError(f"--lexicon {args.lexicon} needs --heads write+lex")
    out = _out_dir(args)
    base_seed = config.seed
    seeds = [base_seed + k for k in range(args.seeds)]
    manifest = RunManifest(
        command="train",
        config=dataclasses.asdict(config),
        seeds=seeds,
        inputs={args.data: data_hash},
    )
    for seed in seeds:
        run_dir = out if args.seeds == 1 else out / f"seed-{seed}"
        run_dir.mkdir(parents=True, exist_ok=True)
        seed_config = dataclasses.replace(config, seed=seed)
        lexicon = _resolve_cli_lexicon(args, corpus, seed_config)
        report = train(seed_config, corpus, lexicon=lexicon, out_dir=run_dir)
        _dump_config(seed_config, run_dir / "config.txt")
        manifest.outputs.extend(
            [str(run_dir / "model.npz"), str(run_dir / "loss.csv"), str(run_dir / "config.txt")]
        )
        if lexicon is None and seed_config.lexicon_source == "uniform":
            # train() builds the uniform lexicon internally; reconstruct it
            # so the run directory still carries the initialization dump
            lexicon = uniform_lexicon(report.params.src_vocab, report.params.tgt_vocab)
        if lexicon is not None:
            lexicon.save(run_dir / "lexicon.txt")
            manifest.outputs.append(str(run_dir / "lexicon.txt"))
        print(
            f"seed {seed}: {report.steps} steps, "
            f"final loss {report.losses[-1]:.4f}, {report.seconds:.1f}s -> {run_dir}"
        )
    manifest.save(out / "manifest.json")
    return EXIT_OK


# -- eval --------------------------------------------------------------------


def _checkpoints(model_arg: str) -> list[tuple[int | None, Path]]:
    """Resolve --model to [(seed, checkpoint path)] for one or many runs."""
    path = Path(model_arg)
    if path.is_file():
        return [(None, path)]
    if path.is_dir():
        if (path / "model.npz").is_file():
            return [(None, path / "model.npz")]
        found = []
        for sub in sorted(path.glob("seed-*")):
            ckpt = sub / "model.npz"
            if ckpt.is_file():
                try:
                    seed = int(sub.name.partition("-")[2])
                except ValueError:
                    seed = None
                found.append((seed, ckpt))
        if found:
            return found
    raise DataError(f"no checkpoint found at {model_arg} (expected model.npz or seed-*/model.npz)")


def cmd_eval(args) -> int:
    if args.subset == "one-shot" and not args.train_data:
        raise UsageError("--subset one-shot needs --train-data for the once-token counts")
    test_c, data_hash = _load_data(args.data, args.format, "test")
    train_c = None
    inputs = {args.data: data_hash}
    if args.train_data:
        train_c, train_hash = _load_data(args.train_data, args.format, "train")
        inputs[args.train_data] = train_hash
    out = _out_dir(args)
    runs = _checkpoints(args.model)
    manifest = RunManifest(
        command="eval",
        config={"subset": args.subset, "model": args.model, "format": args.format},
        seeds=[seed for seed, _ in runs if seed is not None],
        inputs=inputs,
    )
    reports = []
    for seed, ckpt in runs:
        params = ModelParams.load(ckpt)
        report = evaluate(params, test_c, subset=args.subset, train=train_c, seed=seed)
        reports.append(report)
        run_dir = out if len(runs) == 1 else out / ckpt.parent.name
        run_dir.mkdir(parents=True, exist_ok=True)
        report.save_json(run_dir / "report.json")
        report.save_csv(run_dir / "records.csv")
        manifest.outputs.extend([str(run_dir / "report.json"), str(run_dir / "records.csv")])
        label = "" if seed is None else f"seed {seed}: "
        bleu = "-" if report.bleu is None else f"{report.bleu:.2f}"
        print(f"{label}exact match {report.exact_match:.4f}  BLEU {bleu}  ({report.size} examples)")
    if len(reports) > 1:
        stats = aggregate(reports)
        agg_path = out / "aggregate.json"
        agg_path.write_text(
            json.dumps({k: {"mean": m, "std": s} for k, (m, s) in stats.items()}, indent=2)
            + "\n"
        )
        manifest.outputs.append(str(agg_path))
        mean, std = stats["exact_match"]
        print(f"aggregate exact match {mean:.4f} +/- {std:.4f} over {len(reports)} seeds")
    manifest.save(out / "manifest.json")
    return EXIT_OK


# -- table -------------------------------------------------------------------


def _collect_reports(run_dir: Path) -> list[EvalReport]:
    paths = sorted(run_dir.glob("report.json")) + sorted(run_dir.glob("seed-*/report.json"))
    return [EvalReport.load_json(p) for p in paths]


def cmd_table(args) -> int:
    run_dirs = []
    for chunk in args.runs:
        run_dirs.extend(part for part in chunk.split(",") if part)
    if not run_dirs:
        raise UsageError("--runs needs at least one run directory")
    missing = [d for d in run_dirs if not _collect_reports(Path(d))]
    if missing:
        raise DataError("no eval reports found under: " + ", ".join(missing))

    rows = []
    for d in run_dirs:
        reports = _collect_reports(Path(d))
        stats = aggregate(reports)
        em_mean, em_std = stats["exact_match"]
        if "bleu" in stats:
            bleu_mean, bleu_std = stats["bleu"]
            bleu = f"{bleu_mean:.2f} +/- {bleu_std:.2f}"
        else:
            bleu = "-"
        rows.append((Path(d).name, str(len(reports)), f"{em_mean:.3f} +/- {em_std:.3f}", bleu, stats))

    headers = ("run", "seeds", "exact match", "BLEU")
    widths = [max(len(headers[i]), *(len(r[i]) for r in rows)) for i in range(4)]
    lines = [
        "  ".join(h.ljust(w) for h, w in zip(headers, widths)),
        "  ".join("-" * w for w in widths),
    ]
    for row in rows:
        lines.append("  ".join(v.ljust(w) for v, w in zip(row[:4], widths)))
    for name, _, _, _, stats in rows:
        cats = {k: v for k, v in stats.items() if k.startswith("category:")}
        for key in sorted(cats):
            mean, std = cats[key]
            lines.append(f"{name} / {key.partition(':')[2]}: {mean:.3f} +/- {std:.3f}")
    text = "\n".join(lines)
    print(text)
    if args.out:
        out = _out_dir(args)
        (out / "table.txt").write_text(text + "\n", encoding="utf-8")
        print(f"wrote {out / 'table.txt'}")
    return EXIT_OK


# -- parser ------------------------------------------------------------------


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(
        prog="lextrans",
        description="Lexicon-augmented sequence-to-sequence toolkit.",
        epilog="exit codes: 0 success, 1 usage, 2 data error, 3 numeric failure",
    )
    parser.add_argument("--version", action="version", version=f"lextrans {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)

    def add_data_flags(p, default_out):
        p.add_argument("--data", required=True,
                       help="dataset: a file path, 'colors', or 'scan:<split>'")
        p.add_argument("--format", choices=("tsv", "scan"), default="tsv",
                       help="file format when --data is a path")
        p.add_argument("--out", default=default_out, help="output directory")

    p = sub.add_parser("fetch", help="materialize a dataset into the data directory")
    p.add_argument("--data", choices=("scan", "cogs"), required=True,
                   help="dataset to fetch (colors is embedded and needs no fetch)")
    p.add_argument("--out", default=os.environ.get(DATA_DIR_ENV, "data"),
                   help=f"data directory (default ${DATA_DIR_ENV} or ./data)")
    p.set_defaults(func=cmd_fetch)

    p = sub.add_parser("lexicon", help="learn a lexicon from a training corpus")
    add_data_flags(p, "lexicon_run")
    p.add_argument("--learner", choices=LEARNERS, required=True)
    p.add_argument("--tau", type=float, default=0.0, help="softmax temperature (0 = argmax)")
    p.add_argument("--epsilon", type=int, default=3, help="count tolerance for --learner simple")
    p.add_argument("--seed", type=int, default=0)
    p.set_defaults(func=cmd_lexicon)

    p = sub.add_parser("train", help="train a model, one subdirectory per seed")
    add_data_flags(p, "train_run")
    p.add_argument("--preset", default=None, help="configuration preset (colors, scan, cogs, mt)")
    p.add_argument("--config", default=None, help="key = value file of TrainConfig fields")
    p.add_argument("--heads", choices=("write", "write+copy", "write+lex"), default=None)
    p.add_argument("--lexicon", default=None,
                   help="none, uniform, a learner name, or a lexicon file path")
    p.add_argument("--train-lexicon", action="store_true",
                   help="fine-tune the lexicon instead of freezing it")
    p.add_argument("--tau", type=float, default=None, help="lexicon softmax temperature")
    p.add_argument("--epsilon", type=int, default=3, help="tolerance when --lexicon simple")
    p.add_argument("--seed", type=int, default=None, help="base seed")
    p.add_argument("--seeds", type=int, default=1, help="number of consecutive seeds to run")
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("eval", help="decode a test set and write report.json/records.csv")
    add_data_flags(p, "eval_run")
    p.add_argument("--model", required=True,
                   help="checkpoint file, run directory, or multi-seed directory")
    p.add_argument("--subset", choices=("full", "one-shot"), default="full")
    p.add_argument("--train-data", default=None,
                   help="training corpus for one-shot token counts")
    p.set_defaults(func=cmd_eval)

    p = sub.add_parser("table", help="aggregate eval reports into a mean +/- std table")
    p.add_argument("--runs", action="append", default=[], required=True,
                   help="eval output directory (repeat or comma-separate)")
    p.add_argument("--out", default=None, help="also write table.txt here")
    p.set_defaults(func=cmd_table)
    return parser


def main(argv=None) -> int:
    try:
        args = build_parser().parse_args(argv)
        return args.func(args)
    except SystemExit as exc:  # --help / --version
        return int(exc.code or 0)
    except UsageError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except (DataError, CorpusError, LexiconError, MetricsError, FileNotFoundError) as exc:
        print(f"data error: {exc}", file=sys.stderr)
        return EXIT_DATA
    except (TrainError, ModelError, FloatingPointError) as exc:
        print(f"numeric failure: {exc}", file=sys.stderr)
        return EXIT_NUMERIC


if __name__ == "__main__":
    sys.exit(main())
