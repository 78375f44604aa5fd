"""
Beam-search decoding and end-to-end translation of test cases.

At every step each live hypothesis is expanded over the whole vocabulary
and only the m successors with the highest cumulative log-probability
survive; hypotheses that emit [eos] retire into the result pool. Scores
are unnormalized sums of per-step log-probabilities (no length penalty),
so with a wide enough beam the result provably equals exhaustive top-m
ranking. Ties break toward smaller token ids, then shorter sequences.

Structural tokens that may not be generated ([pad], [bos], [unk] by
default) are removed from each step's distribution, which is then
renormalized over the remaining ids.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Mapping, Sequence

import numpy as np

from .tokens import (
    BOS_ID,
    COLUMN,
    EOS_ID,
    NORMAL,
    PAD_ID,
    TABLE,
    TokenSequence,
    UNK_ID,
    Vocabulary,
    decode,
    encode,
    generalize_with_context,
    detokenize,
    tokenize,
)

DEFAULT_BEAM_WIDTH = 5
DEFAULT_MAX_LEN = 48
DEFAULT_BANNED = frozenset({PAD_ID, BOS_ID, UNK_ID})


class EmptyInput(ValueError):
    pass


@dataclass(frozen=True)
class BeamHypothesis:
    """Partial decoder output: ids (starting [bos]), score, finished flag."""

    ids: tuple[int, ...]
    logp: float = 0.0
    finished: bool = False

    def sort_key(self):
        return (-self.logp, self.ids)

    @property
    def length_normalized(self) -> float:
        return self.logp / max(1, len(self.ids) - 1)


def _step_logprobs(model, prefix, enc, banned: frozenset[int]) -> np.ndarray:
    probs = model.decode_step(list(prefix), enc)
    if banned:
        probs = probs.copy()
        probs[list(banned)] = 0.0
        total = probs.sum()
        if total > 0:
            probs = probs / total
    with np.errstate(divide="ignore"):
        return np.log(probs)


def beam_search_hypotheses(
    model,
    input_ids: Sequence[int],
    m: int = DEFAULT_BEAM_WIDTH,
    max_len: int = DEFAULT_MAX_LEN,
    banned_ids: frozenset[int] = DEFAULT_BANNED,
    length_normalize: bool = False,
) -> list[BeamHypothesis]:
    """The ranked hypothesis pool behind beam_search, ids still framed.

    Finished hypotheses retire into the pool as they occur; if fewer than
    m finish within max_len steps, the best unfinished ones fill in.
    length_normalize ranks the final pool by logp per generated token
    (off by default: raw sums are what the exhaustive oracle checks).
    """
    if m < 1:
        raise ValueError("beam width must be >= 1")
    if len(input_ids) == 0:
        raise EmptyInput("nothing to translate")
    # the decoder prefix ([bos] + generated tokens) must fit the model
    max_len = min(max_len, model.config.max_len - 1)
    enc = model.encode_seq(list(input_ids))
    live = [BeamHypothesis((BOS_ID,))]
    pool: list[BeamHypothesis] = []
    for _ in range(max_len):
        if not live:
            break
        candidates: list[BeamHypothesis] = []
        for hyp in live:
            logprobs = _step_logprobs(model, hyp.ids, enc, banned_ids)
            for tok_id, lp in enumerate(logprobs):
                if lp == -np.inf:
                    continue
                candidates.append(
                    BeamHypothesis(
                        hyp.ids + (tok_id,),
                        hyp.logp + float(lp),
                        finished=tok_id == EOS_ID,
                    )
                )
        candidates.sort(key=BeamHypothesis.sort_key)
        survivors = candidates[:m]
        live = [h for h in survivors if not h.finished]
        pool.extend(h for h in survivors if h.finished)
    pool.extend(live)  # budget exhausted: best unfinished fill the pool
    if length_normalize:
        pool.sort(key=lambda h: (-h.length_normalized, h.ids))
    else:
        pool.sort(key=BeamHypothesis.sort_key)
    return pool


def beam_search(
    model,
    vocab: Vocabulary,
    input_ids: Sequence[int],
    m: int = DEFAULT_BEAM_WIDTH,
    max_len: int = DEFAULT_MAX_LEN,
    banned_ids: frozenset[int] = DEFAULT_BANNED,
    length_normalize: bool = False,
) -> list[tuple[TokenSequence, float]]:
    """Top-m decoded sequences with their scores, deduplicated on token
    content, best first. Scores are cumulative log-probabilities, or
    per-token averages when length_normalize is set."""
    pool = beam_search_hypotheses(model, input_ids, m, max_len, banned_ids,
                                  length_normalize)
    results: list[tuple[TokenSequence, float]] = []
    seen: set[tuple[str, ...]] = set()
    for hyp in pool:
        seq = decode(hyp.ids, vocab).unframed()
        if seq.texts in seen:
            continue
        seen.add(seq.texts)
        results.append(
            (seq, hyp.length_normalized if length_normalize else hyp.logp)
        )
        if len(results) == m:
            break
    return results


def score_sequence(
    model,
    enc,
    output_ids: Sequence[int],
    banned_ids: frozenset[int] = DEFAULT_BANNED,
) -> float:
    """Cumulative log-probability of a framed output sequence, under the
    same banned-token renormalization the beam uses."""
    total = 0.0
    ids = list(output_ids)
    for t in range(1, len(ids)):
        logprobs = _step_logprobs(model, ids[:t], enc, banned_ids)
        total += float(logprobs[ids[t]])
    return total


def translate(
    model,
    vocab: Vocabulary,
    test_case: str,
    m: int = DEFAULT_BEAM_WIDTH,
    max_len: int = DEFAULT_MAX_LEN,
    tables: Sequence[str] = (),
    columns: Sequence[str] = (),
    context: Mapping[str, str] | None = None,
) -> list[tuple[str, float]]:
    """Translate one input (a benign value or a previous test case) into up
    to m candidate test-case strings with scores, best first.

    The input's own benign literal is captured during generalization and
    used to render any [normal] the model emits; candidates are
    deduplicated on their rendered text.
    """
    seq = tokenize(test_case)
    gen, captured = generalize_with_context(seq, tables, columns)
    gen = gen.truncated(model.config.max_len)
    if not len(gen):
        raise EmptyInput(repr(test_case))
    rendering = {NORMAL: "", TABLE: "users", COLUMN: "name"}
    rendering.update(captured)
    if context:
        rendering.update(context)
    ids = encode(gen, vocab)
    hypotheses = beam_search(model, vocab, ids, m=m, max_len=max_len)
    out: list[tuple[str, float]] = []
    seen: set[str] = set()
    for hyp_seq, logp in hypotheses:
        rendered = detokenize(hyp_seq, rendering)
        if not rendered or rendered in seen:
            continue
        seen.add(rendered)
        out.append((rendered, logp))
    return out
