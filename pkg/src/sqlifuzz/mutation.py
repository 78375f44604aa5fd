"""
Semantic-preserving mutation operators for dataset enrichment.

Five operators rewrite an attack without changing what it does:

- predicate: swap a relational predicate for another one with the same
  truth value ("8>= 56" -> "'l' in ('m','y')");
- unicode: percent-encode one special character ("#" -> "%23");
- ascii: rewrite a quoted character as a CHAR() call ("'a'" -> "CHAR(97)");
- keywords: scramble the letter case of one SQL keyword ("select" -> "seLeCt");
- blank: swap one whitespace token for an equivalent filler ("/**/", "+", "%20").

Equivalence is checkable: `normalize` folds every disguise back to a
canonical form, and two strings are semantically equal for our purposes
iff their normal forms match. Every operator either changes its input or
raises its not-applicable error; none returns a silent identity.
"""

from __future__ import annotations

import random
import re
from dataclasses import dataclass, replace
from enum import Enum
from typing import Callable, Sequence

from .dataset import Condition, TrainingPair, enrichment_target
from .tokens import Token, TokenKind, TokenSequence, tokenize

BLANK_FORMS = ("/**/", "+", "%20")

# Characters the unicode operator may percent-encode.
ENCODABLE = frozenset("#' =<>-;()*&|")

_CMP_OPS = ("<", ">", "<=", ">=", "=")
_PREDICATE_OPS = ("<", ">", "<=", ">=", "between", "in", "like")


class MutationNotApplicable(ValueError):
    """Base for the per-operator no-op errors."""


class NoPredicateFound(MutationNotApplicable):
    pass


class NothingToEncode(MutationNotApplicable):
    pass


class NoKeyword(MutationNotApplicable):
    pass


class NoBlank(MutationNotApplicable):
    pass


class MutationKind(Enum):
    PREDICATE = "predicate"
    UNICODE = "unicode"
    ASCII = "ascii"
    KEYWORDS = "keywords"
    BLANK = "blank"


def _splice(seq: TokenSequence, start: int, end: int, text: str) -> TokenSequence:
    """Replace tokens[start:end] with the tokenization of `text`."""
    toks = seq.tokens[:start] + tokenize(text).tokens + seq.tokens[end:]
    return TokenSequence(toks)


# ----------------------------------------------------------------------
# predicate operator
# ----------------------------------------------------------------------

@dataclass(frozen=True)
class _Lit:
    """Literal operand of a predicate span: a number or a one-char string."""

    value: str
    numeric: bool
    start: int
    end: int  # exclusive token index


@dataclass(frozen=True)
class PredicateSpan:
    start: int
    end: int
    left: _Lit
    op: str
    right: _Lit

    @property
    def truth(self) -> bool:
        return _compare(self.op, self.left, self.right)


def _compare(op: str, a: _Lit, b: _Lit) -> bool:
    if a.numeric and b.numeric:
        x, y = float(a.value), float(b.value)
    else:
        x, y = a.value, b.value
    return {
        "<": x < y,
        ">": x > y,
        "<=": x <= y,
        ">=": x >= y,
        "=": x == y,
        "<>": x != y,
        "!=": x != y,
    }[op]


def _lit_at(toks: Sequence[Token], i: int) -> _Lit | None:
    if i >= len(toks):
        return None
    t = toks[i]
    if t.kind is TokenKind.NUMBER:
        return _Lit(t.text, True, i, i + 1)
    if (
        t.is_quote
        and i + 2 < len(toks)
        and len(toks[i + 1].text) == 1
        and toks[i + 2].text == t.text
    ):
        return _Lit(toks[i + 1].text, False, i, i + 3)
    return None


def _skip_blanks(toks: Sequence[Token], i: int) -> int:
    while i < len(toks) and toks[i].is_blank:
        i += 1
    return i


def find_predicates(seq: TokenSequence) -> list[PredicateSpan]:
    """All "literal cmp literal" spans over numbers or one-char strings."""
    toks = seq.tokens
    spans: list[PredicateSpan] = []
    i = 0
    while i < len(toks):
        left = _lit_at(toks, i)
        if left is None:
            i += 1
            continue
        j = _skip_blanks(toks, left.end)
        if j < len(toks) and toks[j].text in _CMP_OPS:
            k = _skip_blanks(toks, j + 1)
            right = _lit_at(toks, k)
            if right is not None and left.numeric == right.numeric:
                spans.append(
                    PredicateSpan(left.start, right.end, left, toks[j].text, right)
                )
                i = right.end
                continue
        i += 1
    return spans


def _render_value(value, numeric: bool) -> str:
    return str(value) if numeric else f"'{value}'"


def _sample_predicate(rng: random.Random, truth: bool) -> str:
    """Draw a fresh predicate with the requested truth value."""
    op = rng.choice(_PREDICATE_OPS)
    numeric = rng.random() < 0.5 and op != "like"

    def draw():
        return rng.randint(0, 99) if numeric else rng.choice("abcdefghijklmnopqrstuvwxyz")

    if op in ("<", ">", "<=", ">="):
        for _ in range(64):
            a, b = draw(), draw()
            got = {"<": a < b, ">": a > b, "<=": a <= b, ">=": a >= b}[op]
            if got == truth:
                return f"{_render_value(a, numeric)}{op}{_render_value(b, numeric)}"
        return "1<2" if truth else "2<1"
    if op == "between":
        for _ in range(64):
            x, lo, hi = draw(), draw(), draw()
            if (min(lo, hi) <= x <= max(lo, hi)) == truth:
                lo, hi = min(lo, hi), max(lo, hi)
                return (
                    f"{_render_value(x, numeric)} between "
                    f"{_render_value(lo, numeric)} and {_render_value(hi, numeric)}"
                )
        return "1 between 0 and 2" if truth else "5 between 0 and 2"
    if op == "in":
        x, e1, e2 = draw(), draw(), draw()
        if truth:
            e1 = x
        else:
            while e1 == x or e2 == x:
                e1, e2 = draw(), draw()
        return (
            f"{_render_value(x, numeric)} in "
            f"({_render_value(e1, numeric)},{_render_value(e2, numeric)})"
        )
    # like: single characters, no wildcards, so it is equality
    x = draw()
    y = x
    if not truth:
        while y == x:
            y = draw()
    return f"{_render_value(x, False)} like {_render_value(y, False)}"


def mutate_predicate(seq: TokenSequence, rng: random.Random) -> TokenSequence:
    spans = find_predicates(seq)
    if not spans:
        raise NoPredicateFound(seq.text)
    span = spans[rng.randrange(len(spans))]
    old_text = "".join(t.text for t in seq.tokens[span.start : span.end])
    for _ in range(64):
        new_text = _sample_predicate(rng, span.truth)
        if new_text != old_text:
            return _splice(seq, span.start, span.end, new_text)
    raise NoPredicateFound(seq.text)


# ----------------------------------------------------------------------
# unicode operator
# ----------------------------------------------------------------------

def percent_encode_char(c: str) -> str:
    return "%%%02X" % ord(c)


def mutate_unicode(seq: TokenSequence, rng: random.Random) -> TokenSequence:
    sites = [
        (ti, ci)
        for ti, tok in enumerate(seq.tokens)
        for ci, c in enumerate(tok.text)
        if c in ENCODABLE
    ]
    if not sites:
        raise NothingToEncode(seq.text)
    ti, ci = sites[rng.randrange(len(sites))]
    text = seq.tokens[ti].text
    new_text = text[:ci] + percent_encode_char(text[ci]) + text[ci + 1 :]
    return _splice(seq, ti, ti + 1, new_text)


# ----------------------------------------------------------------------
# ascii operator
# ----------------------------------------------------------------------

def ascii_call(c: str) -> str:
    """The CHAR() form of a single ASCII character ("a" -> "CHAR(97)")."""
    if len(c) != 1 or ord(c) > 127:
        raise NothingToEncode(repr(c))
    return f"CHAR({ord(c)})"


def mutate_ascii(seq: TokenSequence, rng: random.Random) -> TokenSequence:
    toks = seq.tokens
    sites: list[tuple[int, int, str]] = []
    for i, tok in enumerate(toks):
        if (
            tok.is_quote
            and i + 2 < len(toks)
            and len(toks[i + 1].text) == 1
            and toks[i + 1].text.isalpha()
            and ord(toks[i + 1].text) <= 127
            and toks[i + 2].text == tok.text
        ):
            sites.append((i, i + 3, toks[i + 1].text))
    if not sites and len(toks) == 1:
        t = toks[0].text
        if len(t) == 1 and t.isalpha() and ord(t) <= 127:
            sites.append((0, 1, t))
    if not sites:
        raise NothingToEncode(seq.text)
    start, end, c = sites[rng.randrange(len(sites))]
    return _splice(seq, start, end, ascii_call(c))


# ----------------------------------------------------------------------
# keywords operator
# ----------------------------------------------------------------------

def mutate_keywords(seq: TokenSequence, rng: random.Random) -> TokenSequence:
    sites = [i for i, t in enumerate(seq.tokens) if t.kind is TokenKind.KEYWORD]
    if not sites:
        raise NoKeyword(seq.text)
    i = sites[rng.randrange(len(sites))]
    original = seq.tokens[i].text
    while True:
        flipped = "".join(
            c.upper() if rng.random() < 0.5 else c.lower() for c in original
        )
        if flipped != original:
            return _splice(seq, i, i + 1, flipped)


# ----------------------------------------------------------------------
# blank operator
# ----------------------------------------------------------------------

def mutate_blank(seq: TokenSequence, rng: random.Random) -> TokenSequence:
    sites = [i for i, t in enumerate(seq.tokens) if t.is_blank]
    if not sites:
        raise NoBlank(seq.text)
    i = sites[rng.randrange(len(sites))]
    return _splice(seq, i, i + 1, rng.choice(BLANK_FORMS))


_OPERATORS: dict[MutationKind, Callable[[TokenSequence, random.Random], TokenSequence]] = {
    MutationKind.PREDICATE: mutate_predicate,
    MutationKind.UNICODE: mutate_unicode,
    MutationKind.ASCII: mutate_ascii,
    MutationKind.KEYWORDS: mutate_keywords,
    MutationKind.BLANK: mutate_blank,
}


@dataclass(frozen=True)
class MutationOp:
    """A mutation operator plus the seed that makes its draws repeatable."""

    kind: MutationKind
    rng_seed: int = 0

    def apply(self, seq: TokenSequence, rng: random.Random | None = None) -> TokenSequence:
        local = rng if rng is not None else random.Random(self.rng_seed)
        return _OPERATORS[self.kind](seq, local)


def mutate(seq: TokenSequence, kind: MutationKind, rng: random.Random) -> TokenSequence:
    return _OPERATORS[kind](seq, rng)


# ----------------------------------------------------------------------
# enrichment
# ----------------------------------------------------------------------

def _mutate_pair(
    pair: TrainingPair, kind: MutationKind, rng: random.Random
) -> TrainingPair:
    if pair.condition is Condition.NORMAL_TO_ATTACK:
        return replace(pair, output=mutate(pair.output, kind, rng))
    # Both sides are attacks: mutate each side the operator applies to.
    new_in, new_out = pair.input, pair.output
    changed = False
    try:
        new_in = mutate(pair.input, kind, rng)
        changed = True
    except MutationNotApplicable:
        pass
    try:
        new_out = mutate(pair.output, kind, rng)
        changed = True
    except MutationNotApplicable:
        pass
    if not changed:
        raise MutationNotApplicable(kind.value)
    if new_in.texts == new_out.texts:
        raise MutationNotApplicable("mutation collapsed the pair")
    return replace(pair, input=new_in, output=new_out)


def enrich(
    pairs: Sequence[TrainingPair],
    ops: Sequence["MutationKind | MutationOp"] = tuple(MutationKind),
    target_multiplier: float = 1.0,
    seed: int = 0,
) -> list[TrainingPair]:
    """Grow the pair list with mutated copies until it reaches
    target_multiplier times its size, or no operator makes progress.

    Accepts operator kinds or MutationOp instances. Mutants of mutants
    are allowed, so operators compose across rounds. Deterministic for a
    fixed seed (the per-op draws come from the enrichment stream).
    """
    if target_multiplier < 1.0:
        raise ValueError("target_multiplier must be >= 1")
    ops = tuple(op.kind if isinstance(op, MutationOp) else op for op in ops)
    out = list(pairs)
    if not out:
        return out
    target = enrichment_target(len(pairs), target_multiplier)
    rng = random.Random(seed)
    seen = {(p.input.texts, p.output.texts) for p in out}
    stall_limit = 50 * len(ops) + len(out)
    stalls = 0
    while len(out) < target and stalls < stall_limit:
        src = out[rng.randrange(len(out))]
        kind = ops[rng.randrange(len(ops))]
        try:
            mutant = _mutate_pair(src, kind, rng)
        except MutationNotApplicable:
            stalls += 1
            continue
        key = (mutant.input.texts, mutant.output.texts)
        if key in seen:
            stalls += 1
            continue
        seen.add(key)
        out.append(mutant)
        stalls = 0
    return out


# ----------------------------------------------------------------------
# equivalence oracle
# ----------------------------------------------------------------------

_PCT_RE = re.compile(r"%([0-9a-fA-F]{2})")
_CHAR_RE = re.compile(r"\bchar\s*\(\s*(\d+)\s*\)", re.IGNORECASE)


def percent_decode(s: str) -> str:
    """One decoding pass: + becomes space, %XX becomes its character."""
    return _PCT_RE.sub(lambda m: chr(int(m.group(1), 16)), s.replace("+", " "))


def _fold_comments(toks: list[Token]) -> list[Token]:
    out: list[Token] = []
    i = 0
    while i < len(toks):
        if toks[i].text == "/*":
            j = i + 1
            while j < len(toks) and toks[j].text != "*/":
                j += 1
            out.append(Token.of(" "))
            i = j + 1
        else:
            out.append(toks[i])
            i += 1
    return out


def _canonical_value(tok: Token) -> tuple[str, bool] | None:
    """Value usable in predicate evaluation: numbers and bare one-char
    identifiers (the residue of a folded CHAR() call)."""
    if tok.kind is TokenKind.NUMBER:
        return tok.text, True
    if len(tok.text) == 1 and tok.text.isalpha():
        return tok.text, False
    return None


def _lit_for_eval(toks: list[Token], i: int) -> tuple[str, bool, int] | None:
    """(value, numeric, end) for a literal at i; accepts quoted one-char
    forms and bare folded characters."""
    if i >= len(toks):
        return None
    t = toks[i]
    if t.is_quote and i + 2 < len(toks) and toks[i + 2].text == t.text:
        inner = toks[i + 1].text
        if len(inner) == 1:
            return inner, False, i + 3
    got = _canonical_value(t)
    if got is not None:
        return got[0], got[1], i + 1
    return None


def _eval_cmp(op: str, a: tuple[str, bool], b: tuple[str, bool]) -> bool:
    return _compare(op, _Lit(a[0], a[1] and b[1], 0, 0), _Lit(b[0], a[1] and b[1], 0, 0))


def _canonicalize_predicates(toks: list[Token]) -> list[Token]:
    """Evaluate variable-free predicates and replace them with 1=1 / 1=2."""
    out: list[Token] = []
    i = 0
    n = len(toks)

    def emit_verdict(truth: bool) -> None:
        out.extend(tokenize("1=1" if truth else "1=2").tokens)

    while i < n:
        lit = _lit_for_eval(toks, i)
        if lit is None:
            out.append(toks[i])
            i += 1
            continue
        value = (lit[0], lit[1])
        j = _skip_blanks(toks, lit[2])
        matched = False
        if j < n:
            word = toks[j].text.lower()
            if toks[j].text in ("<", ">", "<=", ">=", "=", "<>", "!="):
                k = _skip_blanks(toks, j + 1)
                rhs = _lit_for_eval(toks, k)
                if rhs is not None:
                    emit_verdict(_eval_cmp(toks[j].text, value, (rhs[0], rhs[1])))
                    i = rhs[2]
                    matched = True
            elif word == "between":
                k = _skip_blanks(toks, j + 1)
                lo = _lit_for_eval(toks, k)
                if lo is not None:
                    k2 = _skip_blanks(toks, lo[2])
                    if k2 < n and toks[k2].text.lower() == "and":
                        k3 = _skip_blanks(toks, k2 + 1)
                        hi = _lit_for_eval(toks, k3)
                        if hi is not None:
                            truth = _eval_cmp("<=", (lo[0], lo[1]), value) and _eval_cmp(
                                "<=", value, (hi[0], hi[1])
                            )
                            emit_verdict(truth)
                            i = hi[2]
                            matched = True
            elif word == "in":
                k = _skip_blanks(toks, j + 1)
                if k < n and toks[k].text == "(":
                    members: list[tuple[str, bool]] = []
                    k2 = _skip_blanks(toks, k + 1)
                    ok = True
                    while True:
                        member = _lit_for_eval(toks, k2)
                        if member is None:
                            ok = False
                            break
                        members.append((member[0], member[1]))
                        k2 = _skip_blanks(toks, member[2])
                        if k2 < n and toks[k2].text == ",":
                            k2 = _skip_blanks(toks, k2 + 1)
                            continue
                        break
                    if ok and k2 < n and toks[k2].text == ")":
                        truth = any(_eval_cmp("=", value, m) for m in members)
                        emit_verdict(truth)
                        i = k2 + 1
                        matched = True
            elif word == "like":
                k = _skip_blanks(toks, j + 1)
                rhs = _lit_for_eval(toks, k)
                if rhs is not None:
                    pattern = re.escape(rhs[0]).replace("%", ".*").replace("_", ".")
                    emit_verdict(re.fullmatch(pattern, value[0]) is not None)
                    i = rhs[2]
                    matched = True
        if not matched:
            out.append(toks[i])
            i += 1
    return out


def normalize(s: str) -> str:
    """Canonical form under the disguise transforms.

    percent-decode, fold CHAR(n) calls to their characters, lowercase
    keywords, comments and blank runs to a single space, evaluate
    variable-free predicates to 1=1 / 1=2, and drop quotes.
    """
    s = percent_decode(s)
    s = _CHAR_RE.sub(lambda m: chr(int(m.group(1))), s)
    toks = list(tokenize(s).tokens)
    toks = _fold_comments(toks)
    folded: list[Token] = []
    for t in toks:
        if t.is_blank:
            folded.append(Token.of(" "))
        elif t.kind is TokenKind.KEYWORD:
            folded.append(Token.of(t.text.lower()))
        else:
            folded.append(t)
    folded = _canonicalize_predicates(folded)
    parts: list[str] = []
    for t in folded:
        if t.is_quote:
            continue
        parts.append(t.text)
    text = "".join(parts)
    text = re.sub(r" +", " ", text)
    return text.strip()


def equivalent(a: str, b: str) -> bool:
    """The mutation-equivalence oracle: equal normal forms."""
    return normalize(a) == normalize(b)
