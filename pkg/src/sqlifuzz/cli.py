"""
Command-line entry point wiring the whole pipeline:

    sqlifuzz build-dataset --corpus DIR --out pairs.dataset --vocab v.vocab
    sqlifuzz train --dataset pairs.dataset --vocab v.vocab --out model.ckpt
    sqlifuzz translate --checkpoint model.ckpt --vocab v.vocab "' OR 1=1"
    sqlifuzz fuzz --checkpoint model.ckpt --vocab v.vocab --sut app.txt --out run/

Exit codes: 0 success, 2 input/config error, 3 training divergence,
4 internal invariant violation. SQLIFUZZ_LOG={error,info,debug} controls
logging verbosity.
"""

from __future__ import annotations

import argparse
import logging
import os
import sys
from pathlib import Path

from . import dataset as ds
from . import report as rp
from .beam import translate
from .harness import FuzzConfig, ValidationLevel, fuzz, load_sut
from .model import Model, load_checkpoint, save_checkpoint
from .mutation import MutationKind, enrich
from .tokens import Vocabulary, build_vocab
from .training import GRID_PRESETS, DivergedTraining, TrainSettings, train

log = logging.getLogger("sqlifuzz.cli")

EXIT_OK = 0
EXIT_INPUT = 2
EXIT_DIVERGED = 3
EXIT_INTERNAL = 4

DEFAULT_SEED = 2020
DEFAULT_MULTIPLIER = 2.96


def _setup_logging() -> None:
    level = os.environ.get("SQLIFUZZ_LOG", "error").lower()
    levels = {"error": logging.ERROR, "info": logging.INFO, "debug": logging.DEBUG}
    logging.basicConfig(
        level=levels.get(level, logging.ERROR),
        format="%(name)s: %(message)s",
    )


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="sqlifuzz",
        description="SQL-injection test case generation and closed-loop fuzzing",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("build-dataset", help="pair, enrich and preprocess a corpus")
    p.add_argument("--corpus", required=True, help="corpus directory")
    p.add_argument("--out", required=True, help="dataset file to write")
    p.add_argument("--vocab", required=True, help="vocabulary file to write")
    p.add_argument("--multiplier", type=float, default=DEFAULT_MULTIPLIER,
                   help="enrichment growth target (default %(default)s)")
    p.add_argument("--seed", type=int, default=DEFAULT_SEED)
    p.add_argument("--max-len", type=int, default=64)

    p = sub.add_parser("train", help="train the translation model")
    p.add_argument("--dataset", required=True)
    p.add_argument("--vocab", required=True)
    p.add_argument("--out", required=True, help="checkpoint file to write")
    p.add_argument("--report-dir", default=None,
                   help="where to write the training report (default: out dir)")
    p.add_argument("--grid", choices=sorted(GRID_PRESETS), default="tiny")
    p.add_argument("--epochs", type=int, default=30)
    p.add_argument("--batch-size", type=int, default=8)
    p.add_argument("--lr", type=float, default=1e-3)
    p.add_argument("--max-steps", type=int, default=None)
    p.add_argument("--stop-loss", type=float, default=None)
    p.add_argument("--warmup", type=int, default=0)
    p.add_argument("--seed", type=int, default=DEFAULT_SEED)
    p.add_argument("--jobs", type=int, default=1)

    p = sub.add_parser("translate", help="translate one input into test cases")
    p.add_argument("input", help="benign value or previous test case")
    p.add_argument("--checkpoint", required=True)
    p.add_argument("--vocab", required=True)
    p.add_argument("--beam-width", type=int, default=5)
    p.add_argument("--max-len", type=int, default=48)

    p = sub.add_parser("fuzz", help="run the closed loop against a mock SUT")
    p.add_argument("--checkpoint", required=True)
    p.add_argument("--vocab", required=True)
    p.add_argument("--sut", required=True, help="SUT definition file")
    p.add_argument("--out", required=True, help="report directory")
    p.add_argument("--beam-width", type=int, default=5)
    p.add_argument("--max-attempts", type=int, default=10,
                   help="re-translation rounds per starting point")
    p.add_argument("--max-submissions", type=int, default=50,
                   help="submission budget per injection point")
    p.add_argument("--max-len", type=int, default=32)
    p.add_argument("--validation", choices=[v.value for v in ValidationLevel],
                   default=None, help="override the SUT's validation level")
    p.add_argument("--seed", type=int, default=DEFAULT_SEED)
    p.add_argument("--jobs", type=int, default=1)

    return parser


def _require_files(*paths) -> None:
    for path in paths:
        if not Path(path).exists():
            raise FileNotFoundError(f"{path} does not exist")


def cmd_build_dataset(args) -> int:
    normals, attacks, extensions, (tables, columns) = ds.load_corpus_dir(args.corpus)
    pairs = ds.pair_corpus(normals, attacks, extensions)
    by_condition = {c: 0 for c in ds.Condition}
    for pair in pairs:
        by_condition[pair.condition] += 1
    for cond in ds.Condition:
        print(f"{cond.value}: {by_condition[cond]} pairs")
    enriched = enrich(pairs, tuple(MutationKind),
                      target_multiplier=args.multiplier, seed=args.seed)
    print(f"enrichment: {len(pairs)} -> {len(enriched)} pairs "
          f"(multiplier {args.multiplier})")
    processed = ds.preprocess(enriched, tables, columns, max_len=args.max_len)
    ds.save(processed, args.out)
    vocab = build_vocab([p.input for p in processed] + [p.output for p in processed])
    vocab.save(args.vocab)
    print(f"wrote {len(processed)} pairs to {args.out}")
    print(f"wrote vocabulary of {len(vocab)} tokens to {args.vocab}")
    return EXIT_OK


def cmd_train(args) -> int:
    _require_files(args.dataset, args.vocab)
    pairs = ds.load(args.dataset)
    vocab = Vocabulary.load(args.vocab)
    observed = max(
        [len(p.input) for p in pairs] + [len(p.output) for p in pairs] + [16]
    )
    # leave positional-encoding headroom so decoding can run past the
    # longest training sequence
    max_len = max(64, observed)
    grid = GRID_PRESETS[args.grid](len(vocab), max_len=max_len)
    settings = TrainSettings(
        epochs=args.epochs, batch_size=args.batch_size, lr=args.lr,
        warmup_steps=args.warmup, max_steps=args.max_steps,
        stop_loss=args.stop_loss,
    )
    model, training_report = train(
        pairs, grid, vocab, settings, seed=args.seed, jobs=args.jobs
    )
    save_checkpoint(args.out, model.config, model.params)
    report_dir = args.report_dir or Path(args.out).resolve().parent
    written = rp.write_training_report(training_report, report_dir)
    print(f"chosen grid point: {training_report.chosen.describe()}")
    print(f"final loss: {training_report.final_loss:.4f} "
          f"after {training_report.steps} steps")
    print(f"wrote checkpoint to {args.out}")
    for path in written:
        print(f"wrote {path}")
    return EXIT_OK


def _load_model(checkpoint_path, vocab_path) -> tuple[Model, Vocabulary]:
    _require_files(checkpoint_path, vocab_path)
    config, params = load_checkpoint(checkpoint_path)
    vocab = Vocabulary.load(vocab_path)
    if len(vocab) != config.vocab_size:
        raise ValueError(
            f"vocabulary has {len(vocab)} tokens but checkpoint expects "
            f"{config.vocab_size}"
        )
    return Model(config, params), vocab


def cmd_translate(args) -> int:
    model, vocab = _load_model(args.checkpoint, args.vocab)
    candidates = translate(model, vocab, args.input,
                           m=args.beam_width, max_len=args.max_len)
    for text, logp in candidates:
        print(f"{logp:.4f}\t{text}")
    return EXIT_OK


def cmd_fuzz(args) -> int:
    model, vocab = _load_model(args.checkpoint, args.vocab)
    sut = load_sut(args.sut)
    if args.validation is not None:
        sut = sut.with_validation(ValidationLevel(args.validation))
    config = FuzzConfig(
        beam_width=args.beam_width, max_attempts=args.max_attempts,
        max_submissions_per_point=args.max_submissions,
        max_len=args.max_len, seed=args.seed,
    )
    report = fuzz(sut, model, vocab, config, jobs=args.jobs)
    written = rp.write_fuzz_report(report, args.out)
    print((Path(args.out) / "report.txt").read_text(encoding="utf-8"), end="")
    for path in written:
        print(f"wrote {path}")
    return EXIT_OK


def main(argv=None) -> int:
    _setup_logging()
    parser = build_parser()
    args = parser.parse_args(argv)
    handlers = {
        "build-dataset": cmd_build_dataset,
        "train": cmd_train,
        "translate": cmd_translate,
        "fuzz": cmd_fuzz,
    }
    try:
        return handlers[args.command](args)
    except DivergedTraining as exc:
        print(f"error: training diverged: {exc}", file=sys.stderr)
        return EXIT_DIVERGED
    except (OSError, ValueError, KeyError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_INPUT
    except AssertionError as exc:
        print(f"internal error: {exc}", file=sys.stderr)
        return EXIT_INTERNAL


if __name__ == "__main__":
    sys.exit(main())
