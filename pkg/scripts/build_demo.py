#!/usr/bin/env python3
"""Regenerate the bundled demo assets (dataset, vocabulary, checkpoint).

Runs the CLI end to end over the bundled corpus with fixed seeds; the
resulting demo.vocab and demo.ckpt are committed so translate/fuzz and the
acceptance suite work without a training step.

Usage: python scripts/build_demo.py [--epochs N]
"""

import argparse
import sys
import tempfile
from pathlib import Path

sys.path.insert(0, str(Path(__file__).resolve().parents[1] / "src"))

from sqlifuzz.assets import ASSETS_DIR, CORPUS_DIR, DEMO_CHECKPOINT, DEMO_VOCAB
from sqlifuzz.cli import main as cli_main


def run(argv):
    code = cli_main(argv)
    if code != 0:
        raise SystemExit(f"step failed with exit code {code}: {argv}")


def main() -> None:
    parser = argparse.ArgumentParser()
    parser.add_argument("--epochs", type=int, default=30)
    parser.add_argument("--seed", type=int, default=2020)
    args = parser.parse_args()

    with tempfile.TemporaryDirectory() as tmp:
        dataset = str(Path(tmp) / "demo.dataset")
        run([
            "build-dataset", "--corpus", str(CORPUS_DIR),
            "--out", dataset, "--vocab", str(DEMO_VOCAB),
            "--multiplier", "2.96", "--seed", str(args.seed),
        ])
        run([
            "train", "--dataset", dataset, "--vocab", str(DEMO_VOCAB),
            "--out", str(DEMO_CHECKPOINT),
            "--report-dir", str(Path(tmp) / "report"),
            "--grid", "tiny", "--epochs", str(args.epochs),
            "--batch-size", "8", "--seed", str(args.seed),
        ])
    print(f"assets written under {ASSETS_DIR}")


if __name__ == "__main__":
    main()
