"""
SQL-aware tokenizer and vocabulary management.

Turns raw attack/input strings into token sequences that a sequence model
can digest, and back again:

- lossless segmentation: concatenating the token texts reproduces the
  input byte-for-byte, so every string round-trips;
- percent-encoded units ("%27", "%2") are kept as single tokens;
- multi-char SQL operators (<=, >=, <>, ||, &&, --, /*, */) never split;
- generalization replaces the leading benign user literal and known
  schema names with the unified placeholders [normal] / [table] / [column];
- a Vocabulary maps tokens to dense integer ids with seven reserved
  placeholder ids that are stable across runs.
"""

from __future__ import annotations

import logging
import re
from collections import Counter
from dataclasses import dataclass
from enum import Enum
from typing import Iterable, Iterator, Mapping

log = logging.getLogger("sqlifuzz.tokens")

# Placeholder surface forms; ids 0..6 are reserved in this order.
NORMAL = "[normal]"
TABLE = "[table]"
COLUMN = "[column]"
UNK = "[unk]"
BOS = "[bos]"
EOS = "[eos]"
PAD = "[pad]"
RESERVED_TOKENS = (NORMAL, TABLE, COLUMN, UNK, BOS, EOS, PAD)

NORMAL_ID, TABLE_ID, COLUMN_ID, UNK_ID, BOS_ID, EOS_ID, PAD_ID = range(7)

DEFAULT_MAX_LEN = 64

SQL_KEYWORDS = frozenset(
    """
    select from where and or not union all insert into values update set
    delete drop create alter table index join inner outer left right on
    group by having order limit offset like between in is null true false
    exists distinct as case when then else end char concat count sum min
    max avg database version exec execute declare cast convert
    """.split()
)


class TokenKind(Enum):
    KEYWORD = "keyword"
    IDENTIFIER = "identifier"
    NUMBER = "number"
    STRING = "string"
    OPERATOR = "operator"
    PUNCTUATION = "punctuation"
    ENCODED = "encoded"
    COMMENT = "comment"
    PLACEHOLDER = "placeholder"


_PERCENT_RE = re.compile(r"%[0-9a-fA-F]{1,2}")
_WORD_RE = re.compile(r"[A-Za-z_][A-Za-z0-9_]*")
_DIGITS_RE = re.compile(r"[0-9]+")
_SPACE_RE = re.compile(r"\s+")
_PLACEHOLDER_RE = re.compile(
    "|".join(re.escape(p) for p in RESERVED_TOKENS)
)
# Longest first so "<=" wins over "<".
_MULTI_OPS = ("<=", ">=", "<>", "!=", "||", "&&", "--", "/*", "*/")
_COMMENT_TEXTS = frozenset({"--", "#", "/*", "*/"})
_OPERATOR_CHARS = frozenset("+-*/%=<>|&!~^")


class UnboundPlaceholder(ValueError):
    """A placeholder token had no entry in the rendering context."""


class EmptyCorpus(ValueError):
    """Vocabulary construction was given no sequences."""


class UnknownId(ValueError):
    """An id outside the vocabulary was decoded."""


def classify(text: str) -> TokenKind:
    """Token kind is a pure function of the surface form."""
    if text in RESERVED_TOKENS:
        return TokenKind.PLACEHOLDER
    if _PERCENT_RE.fullmatch(text):
        return TokenKind.ENCODED
    if text in _COMMENT_TEXTS:
        return TokenKind.COMMENT
    if text.lower() in SQL_KEYWORDS:
        return TokenKind.KEYWORD
    if _DIGITS_RE.fullmatch(text):
        return TokenKind.NUMBER
    if _WORD_RE.fullmatch(text):
        return TokenKind.IDENTIFIER
    if all(c in _OPERATOR_CHARS for c in text):
        return TokenKind.OPERATOR
    return TokenKind.PUNCTUATION


@dataclass(frozen=True)
class Token:
    """Immutable token; kind is derived from the text when omitted."""

    text: str
    kind: TokenKind

    def __post_init__(self) -> None:
        if not self.text:
            raise ValueError("token text must be non-empty")

    @classmethod
    def of(cls, text: str) -> "Token":
        return cls(text, classify(text))

    @property
    def is_placeholder(self) -> bool:
        return self.kind is TokenKind.PLACEHOLDER

    @property
    def is_blank(self) -> bool:
        return self.text.isspace()

    @property
    def is_quote(self) -> bool:
        return self.text in ("'", '"', "`")


@dataclass(frozen=True)
class TokenSequence:
    """Ordered, immutable token list; the unit of translation."""

    tokens: tuple[Token, ...]

    @classmethod
    def of(cls, texts: Iterable[str]) -> "TokenSequence":
        return cls(tuple(Token.of(t) for t in texts))

    def __len__(self) -> int:
        return len(self.tokens)

    def __iter__(self) -> Iterator[Token]:
        return iter(self.tokens)

    def __getitem__(self, i):
        return self.tokens[i]

    @property
    def texts(self) -> tuple[str, ...]:
        return tuple(t.text for t in self.tokens)

    @property
    def text(self) -> str:
        return "".join(t.text for t in self.tokens)

    def truncated(self, max_len: int = DEFAULT_MAX_LEN) -> "TokenSequence":
        """Drop the tail beyond max_len (logged, not silent)."""
        if len(self.tokens) <= max_len:
            return self
        log.warning(
            "truncating sequence of %d tokens to %d", len(self.tokens), max_len
        )
        return TokenSequence(self.tokens[:max_len])

    def framed(self) -> "TokenSequence":
        """Wrap with [bos] ... [eos] (idempotent)."""
        toks = list(self.tokens)
        if not toks or toks[0].text != BOS:
            toks.insert(0, Token.of(BOS))
        if toks[-1].text != EOS:
            toks.append(Token.of(EOS))
        return TokenSequence(tuple(toks))

    def unframed(self) -> "TokenSequence":
        toks = [t for t in self.tokens if t.text not in (BOS, EOS)]
        return TokenSequence(tuple(toks))


def tokenize(raw: str) -> TokenSequence:
    """Segment a raw string into SQL-aware tokens.

    Total on any input: unrecognized bytes come out as single-character
    tokens. Concatenating the results reproduces the input exactly.
    """
    tokens: list[Token] = []
    pos = 0
    n = len(raw)
    while pos < n:
        m = _PLACEHOLDER_RE.match(raw, pos)
        if m:
            tokens.append(Token.of(m.group(0)))
            pos = m.end()
            continue
        m = _PERCENT_RE.match(raw, pos)
        if m:
            tokens.append(Token.of(m.group(0)))
            pos = m.end()
            continue
        two = raw[pos : pos + 2]
        if two in _MULTI_OPS:
            tokens.append(Token.of(two))
            pos += 2
            continue
        m = _SPACE_RE.match(raw, pos)
        if m:
            tokens.append(Token(m.group(0), TokenKind.PUNCTUATION))
            pos = m.end()
            continue
        m = _WORD_RE.match(raw, pos)
        if m:
            tokens.append(Token.of(m.group(0)))
            pos = m.end()
            continue
        m = _DIGITS_RE.match(raw, pos)
        if m:
            tokens.append(Token.of(m.group(0)))
            pos = m.end()
            continue
        tokens.append(Token.of(raw[pos]))
        pos += 1
    return TokenSequence(tuple(tokens))


def generalize(
    seq: TokenSequence,
    tables: Iterable[str] = (),
    columns: Iterable[str] = (),
) -> TokenSequence:
    """Replace the benign leading literal and schema names with placeholders.

    The longest prefix of identifier/number tokens (the user's own benign
    input, before any quote, operator or encoded byte) collapses to one
    [normal]; identifiers matching the schema hints become [table] or
    [column]. Everything else is attack syntax and stays verbatim.
    """
    seq2, _ = generalize_with_context(seq, tables, columns)
    return seq2


def generalize_with_context(
    seq: TokenSequence,
    tables: Iterable[str] = (),
    columns: Iterable[str] = (),
) -> tuple[TokenSequence, dict[str, str]]:
    """Like generalize() but also returns what each placeholder replaced,
    keyed by placeholder text, for later rendering."""
    table_set = {t.lower() for t in tables}
    column_set = {c.lower() for c in columns}
    context: dict[str, str] = {}

    toks = list(seq.tokens)
    i = 0
    while i < len(toks) and toks[i].kind in (TokenKind.IDENTIFIER, TokenKind.NUMBER):
        i += 1
    out: list[Token] = []
    if i > 0:
        context[NORMAL] = "".join(t.text for t in toks[:i])
        out.append(Token.of(NORMAL))
    for tok in toks[i:]:
        if tok.kind is TokenKind.IDENTIFIER:
            low = tok.text.lower()
            if low in table_set:
                context.setdefault(TABLE, tok.text)
                out.append(Token.of(TABLE))
                continue
            if low in column_set:
                context.setdefault(COLUMN, tok.text)
                out.append(Token.of(COLUMN))
                continue
        out.append(tok)
    return TokenSequence(tuple(out)), context


def detokenize(
    seq: TokenSequence, context: Mapping[str, str] | None = None
) -> str:
    """Concatenate token texts, rendering placeholders from context.

    [bos]/[eos] are dropped; [pad] must not appear. A placeholder with no
    context entry raises UnboundPlaceholder ([unk] defaults to "").
    """
    ctx = {UNK: ""}
    if context:
        ctx.update(context)
    parts: list[str] = []
    for tok in seq.tokens:
        if tok.text in (BOS, EOS):
            continue
        if tok.text == PAD:
            raise ValueError("cannot detokenize a padded sequence")
        if tok.is_placeholder:
            if tok.text not in ctx:
                raise UnboundPlaceholder(f"no rendering for {tok.text}")
            parts.append(ctx[tok.text])
        else:
            parts.append(tok.text)
    return "".join(parts)


VOCAB_HEADER = "sqlifuzz-vocab v1"


def _escape_line(text: str) -> str:
    return text.replace("\\", "\\\\").replace("\n", "\\n").replace("\r", "\\r")


def _unescape_line(text: str) -> str:
    out: list[str] = []
    i = 0
    while i < len(text):
        c = text[i]
        if c == "\\" and i + 1 < len(text):
            nxt = text[i + 1]
            out.append({"n": "\n", "r": "\r", "\\": "\\"}.get(nxt, nxt))
            i += 2
        else:
            out.append(c)
            i += 1
    return "".join(out)


@dataclass(frozen=True)
class Vocabulary:
    """Bijective token<->id map with the 7 reserved placeholder ids."""

    id_to_token: tuple[str, ...]
    token_to_id: Mapping[str, int]

    @classmethod
    def from_tokens(cls, tokens: Iterable[str]) -> "Vocabulary":
        id_to_token = list(RESERVED_TOKENS)
        seen = set(id_to_token)
        for text in tokens:
            if text not in seen:
                seen.add(text)
                id_to_token.append(text)
        mapping = {t: i for i, t in enumerate(id_to_token)}
        return cls(tuple(id_to_token), mapping)

    def __len__(self) -> int:
        return len(self.id_to_token)

    def __contains__(self, text: str) -> bool:
        return text in self.token_to_id

    def id_of(self, text: str) -> int:
        return self.token_to_id.get(text, UNK_ID)

    def token_of(self, idx: int) -> str:
        if not 0 <= idx < len(self.id_to_token):
            raise UnknownId(f"id {idx} outside vocabulary of size {len(self)}")
        return self.id_to_token[idx]

    def save(self, path) -> None:
        lines = [VOCAB_HEADER]
        lines.extend(_escape_line(t) for t in self.id_to_token[len(RESERVED_TOKENS):])
        with open(path, "w", encoding="utf-8") as fh:
            fh.write("\n".join(lines) + "\n")

    @classmethod
    def load(cls, path) -> "Vocabulary":
        with open(path, encoding="utf-8") as fh:
            content = fh.read()
        lines = content.split("\n")
        if lines and lines[-1] == "":
            lines.pop()
        if not lines or lines[0] != VOCAB_HEADER:
            raise ValueError(f"{path}: missing '{VOCAB_HEADER}' header")
        return cls.from_tokens(_unescape_line(t) for t in lines[1:])


def build_vocab(corpus: list[TokenSequence], min_count: int = 1) -> Vocabulary:
    """Collect tokens seen at least min_count times, ids in first-seen order
    after the reserved block. Deterministic for a fixed corpus order."""
    if not corpus:
        raise EmptyCorpus("cannot build a vocabulary from an empty corpus")
    counts: Counter[str] = Counter()
    order: list[str] = []
    seen: set[str] = set()
    for seq in corpus:
        for tok in seq:
            counts[tok.text] += 1
            if tok.text not in seen:
                seen.add(tok.text)
                order.append(tok.text)
    kept = [t for t in order if counts[t] >= min_count and t not in RESERVED_TOKENS]
    return Vocabulary.from_tokens(kept)


def encode(seq: TokenSequence, vocab: Vocabulary) -> list[int]:
    """Token texts to ids; out-of-vocabulary tokens map to [unk]."""
    return [vocab.id_of(t.text) for t in seq.tokens]


def decode(ids: Iterable[int], vocab: Vocabulary) -> TokenSequence:
    """Ids back to tokens; raises UnknownId for ids outside the vocabulary."""
    return TokenSequence.of(vocab.token_of(i) for i in ids)
