import itertools

import numpy as np
import pytest

from sqlifuzz.beam import (
    BeamHypothesis,
    EmptyInput,
    beam_search,
    beam_search_hypotheses,
    score_sequence,
    translate,
)
from sqlifuzz.model import Model, TransformerConfig
from sqlifuzz.tokens import BOS_ID, EOS_ID, Vocabulary, encode, tokenize

VOCAB5 = Vocabulary.from_tokens(["1", "2", ">", "=", "OR"])
ID_1, ID_2, ID_GT, ID_EQ, ID_OR = (VOCAB5.id_of(t) for t in ["1", "2", ">", "=", "OR"])


class StubModel:
    """Fixed conditional distributions keyed by decoder prefix."""

    def __init__(self, table, vocab_size):
        self.table = table
        self.vocab_size = vocab_size
        self.config = TransformerConfig(vocab_size=vocab_size, d_e=2, n_heads=1,
                                        n_layers=1, d_ff=2, max_len=16, dropout=0.0)

    def encode_seq(self, ids):
        return ("enc", tuple(ids))

    def decode_step(self, prefix, enc):
        probs = np.zeros(self.vocab_size)
        for tok, p in self.table[tuple(prefix)].items():
            probs[tok] = p
        return probs


def fig3_stub():
    """Width-2 search over a 5-token corpus, first output token OR."""
    table = {
        (BOS_ID,): {ID_OR: 1.0},
        (BOS_ID, ID_OR): {ID_1: 0.4, ID_2: 0.3, ID_GT: 0.15, ID_EQ: 0.1, ID_OR: 0.05},
        (BOS_ID, ID_OR, ID_1): {ID_EQ: 0.5, ID_GT: 0.3, ID_1: 0.1, ID_2: 0.05, ID_OR: 0.05},
        (BOS_ID, ID_OR, ID_2): {ID_GT: 0.6, ID_EQ: 0.2, ID_1: 0.1, ID_2: 0.05, ID_OR: 0.05},
        (BOS_ID, ID_OR, ID_1, ID_EQ): {EOS_ID: 1.0},
        (BOS_ID, ID_OR, ID_2, ID_GT): {EOS_ID: 1.0},
    }
    return StubModel(table, len(VOCAB5))


class TestBeamSearch:
    def test_corpus_of_five_width_two(self):
        # at the first expansion the two most probable continuations of
        # "OR" survive out of the five candidates; at the next step the
        # two best of the ten possible sequences survive
        results = beam_search(fig3_stub(), VOCAB5, [ID_OR], m=2, max_len=6)
        assert [r[0].texts for r in results] == [("OR", "1", "="), ("OR", "2", ">")]
        assert results[0][1] == pytest.approx(np.log(0.4) + np.log(0.5), abs=1e-12)
        assert results[1][1] == pytest.approx(np.log(0.3) + np.log(0.6), abs=1e-12)

    def test_beam_one_is_greedy(self):
        cfg = TransformerConfig(vocab_size=12, d_e=8, n_heads=2, n_layers=1,
                                d_ff=16, max_len=12, dropout=0.0)
        model = Model(cfg, rng=np.random.default_rng(3))
        vocab = Vocabulary.from_tokens([f"g{i}" for i in range(5)])
        src = [7, 8]
        enc = model.encode_seq(src)
        ids = [BOS_ID]
        banned = {0, 4, 3}  # pad, bos, unk
        for _ in range(6):
            probs = model.decode_step(ids, enc).copy()
            probs[list(banned)] = 0
            nxt = int(np.argmax(probs))
            ids.append(nxt)
            if nxt == EOS_ID:
                break
        greedy = tuple(i for i in ids[1:] if i != EOS_ID)
        results = beam_search(model, vocab, src, m=1, max_len=6)
        assert len(results) == 1
        got = tuple(vocab.id_of(t) for t in results[0][0].texts)
        assert got == greedy

    def test_matches_exhaustive_enumeration(self):
        # fixed random model, four generatable tokens, reserved ids banned
        cfg = TransformerConfig(vocab_size=11, d_e=8, n_heads=2, n_layers=1,
                                d_ff=16, max_len=8, dropout=0.0)
        model = Model(cfg, rng=np.random.default_rng(0))
        allowed = [7, 8, 9, 10]
        banned = frozenset(range(7))
        src = [7, 9]
        enc = model.encode_seq(src)

        def brute_force():
            scored = []
            for combo in itertools.product(allowed, repeat=3):
                ids = [BOS_ID]
                total = 0.0
                for tok in combo:
                    probs = model.decode_step(ids, enc).copy()
                    keep = np.zeros_like(probs)
                    keep[allowed] = 1.0
                    probs *= keep
                    probs /= probs.sum()
                    total += float(np.log(probs[tok]))
                    ids.append(tok)
                scored.append((combo, total))
            scored.sort(key=lambda t: (-t[1], t[0]))
            return scored

        exhaustive = brute_force()
        pool = beam_search_hypotheses(model, src, m=3, max_len=3, banned_ids=banned)
        assert len(pool) >= 3
        for hyp, (combo, score) in zip(pool[:3], exhaustive[:3]):
            assert hyp.ids[1:] == combo
            assert abs(hyp.logp - score) < 1e-9

    def test_wide_beam_equals_full_ranking(self):
        cfg = TransformerConfig(vocab_size=11, d_e=8, n_heads=2, n_layers=1,
                                d_ff=16, max_len=8, dropout=0.0)
        model = Model(cfg, rng=np.random.default_rng(1))
        banned = frozenset(range(7))
        pool = beam_search_hypotheses(model, [8], m=4**3, max_len=3, banned_ids=banned)
        assert len(pool) == 4**3
        scores = [h.logp for h in pool]
        assert scores == sorted(scores, reverse=True)
        assert len({h.ids for h in pool}) == 4**3

    def test_scores_non_increasing_and_nonpositive(self):
        cfg = TransformerConfig(vocab_size=15, d_e=8, n_heads=2, n_layers=1,
                                d_ff=16, max_len=12, dropout=0.0)
        model = Model(cfg, rng=np.random.default_rng(5))
        vocab = Vocabulary.from_tokens([f"g{i}" for i in range(8)])
        results = beam_search(model, vocab, [7, 8, 9], m=5, max_len=5)
        scores = [s for _, s in results]
        assert scores == sorted(scores, reverse=True)
        assert all(s <= 0 for s in scores)
        assert len(results) <= 5

    def test_hypothesis_logp_monotone_as_it_extends(self):
        stub = fig3_stub()
        pool2 = beam_search_hypotheses(stub, [ID_OR], m=2, max_len=2)
        pool3 = beam_search_hypotheses(stub, [ID_OR], m=2, max_len=3)
        by_prefix = {h.ids: h.logp for h in pool2}
        for hyp in pool3:
            prefix = hyp.ids[:-1]
            if prefix in by_prefix:
                assert hyp.logp <= by_prefix[prefix] + 1e-12

    def test_empty_input(self):
        with pytest.raises(EmptyInput):
            beam_search(fig3_stub(), VOCAB5, [], m=2)

    def test_length_normalization_option(self):
        # a long confident sequence outranks a short mediocre one only
        # under per-token scoring
        a, b = VOCAB5.id_of("1"), VOCAB5.id_of("2")
        table = {
            (BOS_ID,): {a: 0.55, b: 0.45},
            (BOS_ID, a): {EOS_ID: 1.0},
            (BOS_ID, b): {b: 0.99, EOS_ID: 0.01},
            (BOS_ID, b, b): {b: 0.99, EOS_ID: 0.01},
            (BOS_ID, b, b, b): {EOS_ID: 1.0},
        }
        stub = StubModel(table, len(VOCAB5))
        raw = beam_search(stub, VOCAB5, [a], m=2, max_len=6)
        assert raw[0][0].texts == ("1",)
        normalized = beam_search(stub, VOCAB5, [a], m=2, max_len=6,
                                 length_normalize=True)
        assert normalized[0][0].texts == ("2", "2", "2")
        for _, score in normalized:
            assert score <= 0

    def test_rescoring_matches_reported_logp(self):
        cfg = TransformerConfig(vocab_size=15, d_e=8, n_heads=2, n_layers=1,
                                d_ff=16, max_len=12, dropout=0.0)
        model = Model(cfg, rng=np.random.default_rng(9))
        src = [7, 8]
        enc = model.encode_seq(src)
        pool = beam_search_hypotheses(model, src, m=5, max_len=4)
        for hyp in pool:
            assert score_sequence(model, enc, hyp.ids) == pytest.approx(
                hyp.logp, abs=1e-9
            )


class TestTranslate:
    def make_model(self, vocab, seed=2):
        cfg = TransformerConfig(vocab_size=len(vocab), d_e=8, n_heads=2,
                                n_layers=1, d_ff=16, max_len=32, dropout=0.0)
        return Model(cfg, rng=np.random.default_rng(seed))

    def test_untrained_model_returns_m_candidates(self):
        corpus = [tokenize("' OR 1=1"), tokenize("' OR 5<7 -- ")]
        from sqlifuzz.tokens import build_vocab

        vocab = build_vocab(corpus)
        model = self.make_model(vocab)
        out = translate(model, vocab, "' OR 1=1", m=5, max_len=6)
        assert 1 <= len(out) <= 5
        assert all(isinstance(s, str) and s for s, _ in out)
        scores = [lp for _, lp in out]
        assert scores == sorted(scores, reverse=True)

    def test_normal_placeholder_rendered_from_input(self):
        vocab = Vocabulary.from_tokens(["[normal]", "'", "--"])
        # force the model to emit [normal] then eos deterministically
        table = {
            (BOS_ID,): {vocab.id_of("[normal]"): 1.0},
            (BOS_ID, vocab.id_of("[normal]")): {EOS_ID: 1.0},
        }
        stub = StubModel(table, len(vocab))
        out = translate(stub, vocab, "admin", m=1, max_len=4)
        assert out[0][0] == "admin"

    def test_deduplicates_rendered_text(self):
        vocab = Vocabulary.from_tokens(["x"])
        xid = vocab.id_of("x")
        nid = vocab.id_of("[normal]")
        # two distinct id paths render to the same string "x"
        table = {
            (BOS_ID,): {xid: 0.6, nid: 0.4},
            (BOS_ID, xid): {EOS_ID: 1.0},
            (BOS_ID, nid): {EOS_ID: 1.0},
        }
        stub = StubModel(table, len(vocab))
        out = translate(stub, vocab, "x", m=2, max_len=4, context={"[normal]": "x"})
        assert [s for s, _ in out] == ["x"]
