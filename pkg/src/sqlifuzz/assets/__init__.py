"""Bundled fixtures: sample corpus, mock application, demo checkpoint."""

from pathlib import Path

ASSETS_DIR = Path(__file__).parent

CORPUS_DIR = ASSETS_DIR / "corpus"
SAMPLE_SUT = ASSETS_DIR / "sample_sut.txt"
DEMO_CHECKPOINT = ASSETS_DIR / "demo.ckpt"
DEMO_VOCAB = ASSETS_DIR / "demo.vocab"
