"""
Training-pair construction, preprocessing, splitting and serialization.

A pair (A, B) enters the dataset under one of three conditions:

1. A is a known benign user input and B is an attack built on it;
2. A and B are different attacks of the same type (siblings);
3. B extends A into a more sophisticated attack of a different type.

Pairs are stored as token sequences; `preprocess` generalizes both sides
and frames the output side with [bos]/[eos] so it can be fed to the
sequence model. The on-disk dataset is newline-delimited UTF-8 records
under a "sqlifuzz-dataset v1" header.
"""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass, replace
from enum import Enum
from pathlib import Path
from typing import Iterable, Mapping, Sequence

import numpy as np

from .tokens import (
    DEFAULT_MAX_LEN,
    TokenKind,
    TokenSequence,
    generalize,
    tokenize,
)

log = logging.getLogger("sqlifuzz.dataset")

DATASET_HEADER = "sqlifuzz-dataset v1"

DEFAULT_SIBLING_CAP = 5


class Condition(Enum):
    NORMAL_TO_ATTACK = "normal_to_attack"
    ATTACK_TO_SIBLING = "attack_to_sibling"
    ATTACK_TO_EXTENDED = "attack_to_extended"


class AttackType(Enum):
    TAUTOLOGY = "tautology"
    UNION_QUERY = "union_query"
    PIGGY_BACKED = "piggy_backed"
    COMMENT = "comment"
    ENCODING = "encoding"
    OTHER = "other"


class EmptyCorpus(ValueError):
    """No attack strings were supplied."""


class TooFewPairs(ValueError):
    """Fewer pairs than requested folds."""


class DatasetFormatError(ValueError):
    """Bad header or malformed record in a dataset file."""


@dataclass(frozen=True)
class TrainingPair:
    input: TokenSequence
    output: TokenSequence
    condition: Condition
    attack_type: AttackType

    def __post_init__(self) -> None:
        if self.input.texts == self.output.texts:
            raise ValueError("training pair input and output must differ")


# Tokens whose presence marks a string as attack-bearing rather than a
# plain user input: quote breaks, comment markers, boolean connectives
# and statement separators.
_ATTACK_KEYWORDS = frozenset(
    {"or", "and", "union", "select", "insert", "update", "delete", "drop", "exec"}
)


def looks_benign(seq: TokenSequence) -> bool:
    """Heuristic condition-1 input check: no attack-significant token."""
    for tok in seq:
        if tok.is_quote:
            return False
        if tok.kind is TokenKind.COMMENT:
            return False
        if tok.kind is TokenKind.ENCODED:
            return False
        if tok.kind is TokenKind.KEYWORD and tok.text.lower() in _ATTACK_KEYWORDS:
            return False
        if tok.text in (";", "||", "&&"):
            return False
    return True


def validate_pair(pair: TrainingPair) -> bool:
    """Re-run the (structural part of the) condition classifier."""
    benign_in = looks_benign(pair.input)
    benign_out = looks_benign(pair.output)
    if pair.condition is Condition.NORMAL_TO_ATTACK:
        return benign_in and not benign_out
    return not benign_in and not benign_out


def pair_corpus(
    normals: Sequence[str],
    attacks_by_type: Mapping[AttackType, Sequence[str]],
    extensions: Mapping[str, Sequence[tuple[str, AttackType]]] | None = None,
    sibling_cap: int = DEFAULT_SIBLING_CAP,
) -> list[TrainingPair]:
    """Emit all pairs licensed by the three pairing conditions.

    Sibling pairing (condition 2) is capped at `sibling_cap` partners per
    attack, taken cyclically, to keep the pair count linear in the corpus.
    """
    if not any(len(v) for v in attacks_by_type.values()):
        raise EmptyCorpus("no attack strings in any category")
    extensions = extensions or {}
    pairs: list[TrainingPair] = []

    def add(a: str, b: str, cond: Condition, atype: AttackType) -> None:
        seq_a, seq_b = tokenize(a), tokenize(b)
        if not len(seq_a) or not len(seq_b) or seq_a.texts == seq_b.texts:
            return
        pairs.append(TrainingPair(seq_a, seq_b, cond, atype))

    for atype, attacks in attacks_by_type.items():
        for normal in normals:
            for attack in attacks:
                add(normal, attack, Condition.NORMAL_TO_ATTACK, atype)

    for atype, attacks in attacks_by_type.items():
        n = len(attacks)
        for i, attack in enumerate(attacks):
            for step in range(1, min(sibling_cap, n - 1) + 1):
                sibling = attacks[(i + step) % n]
                add(attack, sibling, Condition.ATTACK_TO_SIBLING, atype)

    for base, exts in extensions.items():
        for extended, ext_type in exts:
            add(base, extended, Condition.ATTACK_TO_EXTENDED, ext_type)

    return pairs


def preprocess(
    pairs: Iterable[TrainingPair],
    tables: Iterable[str] = (),
    columns: Iterable[str] = (),
    max_len: int = DEFAULT_MAX_LEN,
) -> list[TrainingPair]:
    """Generalize both sides and frame the output side with [bos]/[eos].

    Pairs with an empty side, or whose sides collide after
    generalization, are dropped with a warning.
    """
    tables = tuple(tables)
    columns = tuple(columns)
    out: list[TrainingPair] = []
    for pair in pairs:
        src = generalize(pair.input, tables, columns).truncated(max_len)
        dst = generalize(pair.output, tables, columns).truncated(max_len - 2)
        if not len(src) or not len(dst):
            log.warning("dropping pair with an empty side: %r", pair.input.text)
            continue
        if src.texts == dst.texts:
            log.warning("dropping pair that generalized to identity: %r", src.text)
            continue
        out.append(replace(pair, input=src, output=dst.framed()))
    return out


@dataclass(frozen=True)
class DatasetSplit:
    """K disjoint index lists covering 0..n-1, sizes differing by at most 1."""

    folds: tuple[tuple[int, ...], ...]

    @property
    def k(self) -> int:
        return len(self.folds)

    def val_indices(self, fold: int) -> tuple[int, ...]:
        return self.folds[fold]

    def train_indices(self, fold: int) -> tuple[int, ...]:
        return tuple(
            i for f, ids in enumerate(self.folds) if f != fold for i in ids
        )


def kfold_split(n_pairs: int, k: int = 10, seed: int = 0) -> DatasetSplit:
    """Deterministic shuffled partition into k folds."""
    if n_pairs < k:
        raise TooFewPairs(f"{n_pairs} pairs cannot fill {k} folds")
    rng = np.random.default_rng(seed)
    perm = rng.permutation(n_pairs)
    folds = tuple(tuple(int(i) for i in perm[f::k]) for f in range(k))
    return DatasetSplit(folds)


def enrichment_target(n_pairs: int, multiplier: float) -> int:
    """Pair count an enrichment run aims for (guarded against float fuzz)."""
    return max(n_pairs, math.ceil(multiplier * n_pairs - 1e-9))


# Per-token escaping inside dataset records: tokens are space-joined, so
# spaces, tabs and newlines inside a token must be escaped.
_TOK_ESC = {"\\": "\\\\", " ": "\\s", "\t": "\\t", "\n": "\\n", "\r": "\\r"}
_TOK_UNESC = {"\\": "\\", "s": " ", "t": "\t", "n": "\n", "r": "\r"}


def _esc_token(text: str) -> str:
    return "".join(_TOK_ESC.get(c, c) for c in text)


def _unesc_token(text: str) -> str:
    out: list[str] = []
    i = 0
    while i < len(text):
        if text[i] == "\\" and i + 1 < len(text):
            out.append(_TOK_UNESC.get(text[i + 1], text[i + 1]))
            i += 2
        else:
            out.append(text[i])
            i += 1
    return "".join(out)


def _seq_to_field(seq: TokenSequence) -> str:
    return " ".join(_esc_token(t) for t in seq.texts)


def _field_to_seq(field: str) -> TokenSequence:
    if not field:
        return TokenSequence(())
    return TokenSequence.of(_unesc_token(t) for t in field.split(" "))


def save(pairs: Sequence[TrainingPair], path) -> None:
    lines = [DATASET_HEADER]
    for p in pairs:
        lines.append(
            "\t".join(
                (
                    _seq_to_field(p.input),
                    _seq_to_field(p.output),
                    p.condition.value,
                    p.attack_type.value,
                )
            )
        )
    Path(path).write_text("\n".join(lines) + "\n", encoding="utf-8")


def load(path) -> list[TrainingPair]:
    text = Path(path).read_text(encoding="utf-8")
    lines = text.split("\n")
    if lines and lines[-1] == "":
        lines.pop()
    if not lines or lines[0] != DATASET_HEADER:
        raise DatasetFormatError(f"{path}: missing '{DATASET_HEADER}' header")
    pairs: list[TrainingPair] = []
    for lineno, line in enumerate(lines[1:], start=2):
        parts = line.split("\t")
        if len(parts) != 4:
            raise DatasetFormatError(f"{path}:{lineno}: expected 4 fields")
        try:
            pairs.append(
                TrainingPair(
                    _field_to_seq(parts[0]),
                    _field_to_seq(parts[1]),
                    Condition(parts[2]),
                    AttackType(parts[3]),
                )
            )
        except ValueError as exc:
            raise DatasetFormatError(f"{path}:{lineno}: {exc}") from exc
    return pairs


def load_corpus_dir(
    path,
) -> tuple[
    list[str],
    dict[AttackType, list[str]],
    dict[str, list[tuple[str, AttackType]]],
    tuple[list[str], list[str]],
]:
    """Read a raw corpus directory.

    Layout: normals.txt, attacks/<type>.txt (one entry per line, trailing
    spaces significant), optional extensions.txt with base<TAB>extended
    <TAB>type records, optional tables.txt / columns.txt schema hints.
    """
    root = Path(path)
    if not root.is_dir():
        raise EmptyCorpus(f"{path} is not a directory")

    def read_lines(p: Path) -> list[str]:
        if not p.exists():
            return []
        return [ln for ln in p.read_text(encoding="utf-8").split("\n") if ln]

    normals = read_lines(root / "normals.txt")
    attacks: dict[AttackType, list[str]] = {}
    for atype in AttackType:
        entries = read_lines(root / "attacks" / f"{atype.value}.txt")
        if entries:
            attacks[atype] = entries
    extensions: dict[str, list[tuple[str, AttackType]]] = {}
    for ln in read_lines(root / "extensions.txt"):
        parts = ln.split("\t")
        if len(parts) != 3:
            raise DatasetFormatError(f"extensions.txt: expected 3 fields: {ln!r}")
        extensions.setdefault(parts[0], []).append((parts[1], AttackType(parts[2])))
    tables = read_lines(root / "tables.txt")
    columns = read_lines(root / "columns.txt")
    if not attacks:
        raise EmptyCorpus(f"no attack files under {root / 'attacks'}")
    return normals, attacks, extensions, (tables, columns)
