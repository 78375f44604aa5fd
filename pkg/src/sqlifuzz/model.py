"""
Encoder-decoder sequence model over token ids, written directly on numpy.

Architecture per layer: multi-head scaled dot-product attention and a
two-layer ReLU feed-forward block, each wrapped in a residual connection
followed by layer normalization. Token embeddings are summed with a
sinusoidal positional encoding. The encoder's final activations are
projected once into per-head key/value matrices that every decoder layer
attends to; decoder self-attention is causally masked so position t never
sees tokens after t.

The backward pass is hand-derived and validated against central finite
differences in the test suite; float64 throughout unless configured
otherwise.
"""

from __future__ import annotations

import io
from dataclasses import dataclass, field, fields
from pathlib import Path

import numpy as np

from .tokens import BOS_ID, PAD_ID

CHECKPOINT_HEADER = "sqlifuzz-ckpt v1"

LN_EPS = 1e-9


class ShapeMismatch(ValueError):
    pass


class OddDimension(ValueError):
    pass


class SequenceTooLong(ValueError):
    pass


class EmptyPrefix(ValueError):
    pass


class CheckpointFormatError(ValueError):
    pass


@dataclass(frozen=True)
class TransformerConfig:
    vocab_size: int
    d_e: int = 32
    n_heads: int = 2
    n_layers: int = 1
    d_ff: int = 64
    max_len: int = 64
    dropout: float = 0.1

    def __post_init__(self) -> None:
        if self.d_e % 2 != 0:
            raise OddDimension("d_e must be even for the positional encoding")
        if self.d_e % self.n_heads != 0:
            raise ValueError("d_e must be divisible by n_heads")
        if min(self.vocab_size, self.d_e, self.n_heads, self.n_layers, self.d_ff) < 1:
            raise ValueError("all dimensions must be >= 1")

    @property
    def d_head(self) -> int:
        return self.d_e // self.n_heads

    def describe(self) -> str:
        return (
            f"layers={self.n_layers} heads={self.n_heads} "
            f"d_e={self.d_e} d_ff={self.d_ff}"
        )


def positional_encoding(n_positions: int, d_e: int, dtype=np.float64) -> np.ndarray:
    """Sinusoidal table: entry (i, 2k) is sin(i / 10000^(2k/d_e)) and
    entry (i, 2k+1) is cos of the same angle."""
    if d_e % 2 != 0:
        raise OddDimension(f"d_e={d_e} must be even")
    pos = np.arange(n_positions, dtype=dtype)[:, None]
    k2 = np.arange(0, d_e, 2, dtype=dtype)[None, :]
    angle = pos / np.power(10000.0, k2 / d_e)
    pe = np.empty((n_positions, d_e), dtype=dtype)
    pe[:, 0::2] = np.sin(angle)
    pe[:, 1::2] = np.cos(angle)
    return pe


def add_positions(x: np.ndarray, pe: np.ndarray | None = None) -> np.ndarray:
    """Elementwise sum of embeddings and their positional encodings."""
    if pe is None:
        pe = positional_encoding(x.shape[0], x.shape[1], x.dtype)
    if pe.shape[0] < x.shape[0] or pe.shape[1] != x.shape[1]:
        raise ShapeMismatch(f"PE {pe.shape} does not cover input {x.shape}")
    return x + pe[: x.shape[0]]


def softmax(x: np.ndarray, axis: int = -1) -> np.ndarray:
    shifted = x - np.max(x, axis=axis, keepdims=True)
    e = np.exp(shifted)
    return e / np.sum(e, axis=axis, keepdims=True)


def scaled_dot_attention(
    q: np.ndarray,
    k: np.ndarray,
    v: np.ndarray,
    mask: np.ndarray | None = None,
) -> np.ndarray:
    """softmax(q k^T / sqrt(d)) v with True mask entries excluded entirely."""
    if q.shape[-1] != k.shape[-1] or k.shape[-2] != v.shape[-2]:
        raise ShapeMismatch(f"q{q.shape} k{k.shape} v{v.shape}")
    scores = q @ np.swapaxes(k, -1, -2) / np.sqrt(q.shape[-1])
    if mask is not None:
        if mask.shape != scores.shape[-2:]:
            raise ShapeMismatch(f"mask {mask.shape} vs scores {scores.shape}")
        scores = np.where(mask, -np.inf, scores)
    return softmax(scores) @ v


def multi_head(
    x: np.ndarray,
    wq: np.ndarray,
    wk: np.ndarray,
    wv: np.ndarray,
    wa: np.ndarray,
    mask: np.ndarray | None = None,
    kv_override: tuple[np.ndarray, np.ndarray] | None = None,
) -> np.ndarray:
    """Concatenated per-head attentions times the mixing matrix wa.

    kv_override supplies precomputed per-head keys/values (the encoder
    output); wk/wv are ignored in that case.
    """
    if x.ndim != 2 or wq.ndim != 3 or wq.shape[1] != x.shape[1]:
        raise ShapeMismatch(f"x{x.shape} wq{wq.shape}")
    q = np.einsum("ne,hek->hnk", x, wq)
    if kv_override is not None:
        k, v = kv_override
    else:
        k = np.einsum("ne,hek->hnk", x, wk)
        v = np.einsum("ne,hek->hnk", x, wv)
    heads = scaled_dot_attention(q, k, v, mask)
    n = x.shape[0]
    concat = heads.transpose(1, 0, 2).reshape(n, -1)
    if concat.shape[1] != wa.shape[0]:
        raise ShapeMismatch(f"concat {concat.shape} vs wa {wa.shape}")
    return concat @ wa


def layer_norm(x: np.ndarray, g: np.ndarray, b: np.ndarray) -> np.ndarray:
    mu = x.mean(axis=-1, keepdims=True)
    var = x.var(axis=-1, keepdims=True)
    return (x - mu) / np.sqrt(var + LN_EPS) * g + b


def sublayer(x: np.ndarray, inner, g: np.ndarray, b: np.ndarray) -> np.ndarray:
    """Residual wrapper: layer_norm(inner(x) + x)."""
    return layer_norm(inner(x) + x, g, b)


def ffn(
    x: np.ndarray, w1: np.ndarray, b1: np.ndarray, w2: np.ndarray, b2: np.ndarray
) -> np.ndarray:
    return np.maximum(0.0, x @ w1 + b1) @ w2 + b2


def causal_mask(n: int) -> np.ndarray:
    return np.triu(np.ones((n, n), dtype=bool), k=1)


# ----------------------------------------------------------------------
# parameters
# ----------------------------------------------------------------------

def expected_shapes(cfg: TransformerConfig) -> dict[str, tuple[int, ...]]:
    h, de, d, dff, v = cfg.n_heads, cfg.d_e, cfg.d_head, cfg.d_ff, cfg.vocab_size
    shapes: dict[str, tuple[int, ...]] = {"embed": (v, de), "wout": (de, v)}

    def attn(prefix: str, with_kv: bool) -> None:
        shapes[f"{prefix}.wq"] = (h, de, d)
        if with_kv:
            shapes[f"{prefix}.wk"] = (h, de, d)
            shapes[f"{prefix}.wv"] = (h, de, d)
        shapes[f"{prefix}.wa"] = (h * d, de)

    def ln(prefix: str) -> None:
        shapes[f"{prefix}.g"] = (de,)
        shapes[f"{prefix}.b"] = (de,)

    def ffn_block(prefix: str) -> None:
        shapes[f"{prefix}.w1"] = (de, dff)
        shapes[f"{prefix}.b1"] = (dff,)
        shapes[f"{prefix}.w2"] = (dff, de)
        shapes[f"{prefix}.b2"] = (de,)

    for i in range(cfg.n_layers):
        attn(f"enc.{i}.attn", with_kv=True)
        ln(f"enc.{i}.ln1")
        ffn_block(f"enc.{i}.ffn")
        ln(f"enc.{i}.ln2")
        attn(f"dec.{i}.self", with_kv=True)
        ln(f"dec.{i}.ln1")
        attn(f"dec.{i}.cross", with_kv=False)
        ln(f"dec.{i}.ln2")
        ffn_block(f"dec.{i}.ffn")
        ln(f"dec.{i}.ln3")
    shapes["enc.kproj"] = (h, de, d)
    shapes["enc.vproj"] = (h, de, d)
    return shapes


def init_params(
    cfg: TransformerConfig, rng: np.random.Generator, dtype=np.float64
) -> dict[str, np.ndarray]:
    """Uniform Xavier by fan-in/fan-out; layer-norm gains 1, biases 0."""
    params: dict[str, np.ndarray] = {}
    for name, shape in expected_shapes(cfg).items():
        leaf = name.rsplit(".", 1)[-1]
        if leaf == "g":
            params[name] = np.ones(shape, dtype=dtype)
        elif leaf in ("b", "b1", "b2"):
            params[name] = np.zeros(shape, dtype=dtype)
        else:
            fan_in, fan_out = shape[-2], shape[-1]
            limit = np.sqrt(6.0 / (fan_in + fan_out))
            params[name] = rng.uniform(-limit, limit, size=shape).astype(dtype)
    return params


# ----------------------------------------------------------------------
# forward/backward building blocks with caches
# ----------------------------------------------------------------------

def _ln_forward(x, g, b):
    mu = x.mean(axis=-1, keepdims=True)
    var = x.var(axis=-1, keepdims=True)
    inv = 1.0 / np.sqrt(var + LN_EPS)
    xhat = (x - mu) * inv
    return xhat * g + b, (x, mu, inv, xhat, g)


def _ln_backward(dy, cache):
    x, mu, inv, xhat, g = cache
    d = x.shape[-1]
    dxhat = dy * g
    dvar = np.sum(dxhat * (x - mu), axis=-1, keepdims=True) * (-0.5) * inv**3
    dmu = -np.sum(dxhat, axis=-1, keepdims=True) * inv + dvar * np.mean(
        -2.0 * (x - mu), axis=-1, keepdims=True
    )
    dx = dxhat * inv + dvar * 2.0 * (x - mu) / d + dmu / d
    dg = np.sum(dy * xhat, axis=tuple(range(dy.ndim - 1)))
    db = np.sum(dy, axis=tuple(range(dy.ndim - 1)))
    return dx, dg, db


def _attn_forward(x, wq, wk, wv, wa, mask=None, kv=None):
    d = wq.shape[-1]
    q = np.einsum("ne,hek->hnk", x, wq)
    if kv is None:
        k = np.einsum("ne,hek->hnk", x, wk)
        v = np.einsum("ne,hek->hnk", x, wv)
    else:
        k, v = kv
    scores = q @ np.swapaxes(k, -1, -2) / np.sqrt(d)
    if mask is not None:
        scores = np.where(mask, -np.inf, scores)
    p = softmax(scores)
    heads = p @ v
    concat = heads.transpose(1, 0, 2).reshape(x.shape[0], -1)
    out = concat @ wa
    return out, (x, q, k, v, p, concat)


def _attn_backward(dout, cache, wq, wk, wv, wa, kv_grad=False):
    """Returns (dx, dwq, dwk, dwv, dwa[, dk_ext, dv_ext])."""
    x, q, k, v, p, concat = cache
    h, n, d = q.shape
    dwa = concat.T @ dout
    dconcat = dout @ wa.T
    dheads = dconcat.reshape(n, h, d).transpose(1, 0, 2)
    dp = dheads @ np.swapaxes(v, -1, -2)
    dv = np.swapaxes(p, -1, -2) @ dheads
    ds = p * (dp - np.sum(dp * p, axis=-1, keepdims=True))
    scale = 1.0 / np.sqrt(d)
    dq = ds @ k * scale
    dk = np.swapaxes(ds, -1, -2) @ q * scale
    dwq = np.einsum("ne,hnk->hek", x, dq)
    dx = np.einsum("hnk,hek->ne", dq, wq)
    if kv_grad:
        return dx, dwq, None, None, dwa, dk, dv
    dwk = np.einsum("ne,hnk->hek", x, dk)
    dwv = np.einsum("ne,hnk->hek", x, dv)
    dx = dx + np.einsum("hnk,hek->ne", dk, wk) + np.einsum("hnk,hek->ne", dv, wv)
    return dx, dwq, dwk, dwv, dwa


def _ffn_forward(x, w1, b1, w2, b2):
    pre = x @ w1 + b1
    hidden = np.maximum(0.0, pre)
    return hidden @ w2 + b2, (x, pre, hidden)


def _ffn_backward(dout, cache, w1, w2):
    x, pre, hidden = cache
    dw2 = hidden.T @ dout
    db2 = dout.sum(axis=0)
    dhidden = dout @ w2.T
    dpre = dhidden * (pre > 0)
    dw1 = x.T @ dpre
    db1 = dpre.sum(axis=0)
    dx = dpre @ w1.T
    return dx, dw1, db1, dw2, db2


def _dropout_forward(x, rate, rng):
    if rate <= 0.0 or rng is None:
        return x, None
    mask = (rng.random(x.shape) >= rate) / (1.0 - rate)
    return x * mask, mask


def _dropout_backward(dy, mask):
    return dy if mask is None else dy * mask


# ----------------------------------------------------------------------
# the model
# ----------------------------------------------------------------------

@dataclass
class EncoderOut:
    """Per-head keys and values the decoder attends to, shape (h, n, d)."""

    k: np.ndarray
    v: np.ndarray


@dataclass
class _Tape:
    """Everything the backward pass needs, recorded during forward."""

    src: np.ndarray = None
    dec_in: np.ndarray = None
    targets: np.ndarray = None
    enc_layers: list = field(default_factory=list)
    dec_layers: list = field(default_factory=list)
    enc_final: np.ndarray = None
    enc_drop: np.ndarray = None
    dec_drop: np.ndarray = None
    dec_final: np.ndarray = None
    probs: np.ndarray = None
    kept: np.ndarray = None


class Model:
    """Immutable-parameter sequence model; one instance per training run."""

    def __init__(
        self,
        config: TransformerConfig,
        params: dict[str, np.ndarray] | None = None,
        rng: np.random.Generator | None = None,
        dtype=np.float64,
    ):
        self.config = config
        self.dtype = dtype
        if params is None:
            rng = rng if rng is not None else np.random.default_rng(0)
            params = init_params(config, rng, dtype)
        self.params = params
        self.pe = positional_encoding(config.max_len, config.d_e, dtype)

    # -- encoder -------------------------------------------------------

    def _embed(self, ids: np.ndarray) -> np.ndarray:
        return add_positions(self.params["embed"][ids], self.pe)

    def _check_len(self, ids) -> np.ndarray:
        ids = np.asarray(ids, dtype=np.int64)
        if ids.size > self.config.max_len:
            raise SequenceTooLong(f"{ids.size} tokens > max_len {self.config.max_len}")
        return ids

    def _encoder_stack(self, ids, rng=None, tape: _Tape | None = None):
        p = self.params
        rate = self.config.dropout if rng is not None else 0.0
        x = self._embed(ids)
        x, drop0 = _dropout_forward(x, rate, rng)
        if tape is not None:
            tape.enc_drop = drop0
        for i in range(self.config.n_layers):
            pre = f"enc.{i}"
            a, attn_cache = _attn_forward(
                x, p[f"{pre}.attn.wq"], p[f"{pre}.attn.wk"],
                p[f"{pre}.attn.wv"], p[f"{pre}.attn.wa"],
            )
            a, d1 = _dropout_forward(a, rate, rng)
            x1, ln1_cache = _ln_forward(a + x, p[f"{pre}.ln1.g"], p[f"{pre}.ln1.b"])
            f, ffn_cache = _ffn_forward(
                x1, p[f"{pre}.ffn.w1"], p[f"{pre}.ffn.b1"],
                p[f"{pre}.ffn.w2"], p[f"{pre}.ffn.b2"],
            )
            f, d2 = _dropout_forward(f, rate, rng)
            x2, ln2_cache = _ln_forward(f + x1, p[f"{pre}.ln2.g"], p[f"{pre}.ln2.b"])
            if tape is not None:
                tape.enc_layers.append((attn_cache, d1, ln1_cache, ffn_cache, d2, ln2_cache))
            x = x2
        if tape is not None:
            tape.enc_final = x
        return x

    def encode_seq(self, ids, rng=None, tape: _Tape | None = None) -> EncoderOut:
        """Run the encoder and project its output to per-head keys/values."""
        ids = self._check_len(ids)
        if ids.size == 0:
            raise ValueError("cannot encode an empty sequence")
        x = self._encoder_stack(ids, rng, tape)
        k = np.einsum("ne,hek->hnk", x, self.params["enc.kproj"])
        v = np.einsum("ne,hek->hnk", x, self.params["enc.vproj"])
        return EncoderOut(k, v)

    # -- decoder -------------------------------------------------------

    def _decoder_stack(self, ids, enc: EncoderOut, rng=None, tape: _Tape | None = None):
        p = self.params
        rate = self.config.dropout if rng is not None else 0.0
        n = ids.size
        mask = causal_mask(n)
        y = self._embed(ids)
        y, drop0 = _dropout_forward(y, rate, rng)
        if tape is not None:
            tape.dec_drop = drop0
        for i in range(self.config.n_layers):
            pre = f"dec.{i}"
            a, self_cache = _attn_forward(
                y, p[f"{pre}.self.wq"], p[f"{pre}.self.wk"],
                p[f"{pre}.self.wv"], p[f"{pre}.self.wa"], mask=mask,
            )
            a, d1 = _dropout_forward(a, rate, rng)
            y1, ln1_cache = _ln_forward(a + y, p[f"{pre}.ln1.g"], p[f"{pre}.ln1.b"])
            c, cross_cache = _attn_forward(
                y1, p[f"{pre}.cross.wq"], None, None, p[f"{pre}.cross.wa"],
                kv=(enc.k, enc.v),
            )
            c, d2 = _dropout_forward(c, rate, rng)
            y2, ln2_cache = _ln_forward(c + y1, p[f"{pre}.ln2.g"], p[f"{pre}.ln2.b"])
            f, ffn_cache = _ffn_forward(
                y2, p[f"{pre}.ffn.w1"], p[f"{pre}.ffn.b1"],
                p[f"{pre}.ffn.w2"], p[f"{pre}.ffn.b2"],
            )
            f, d3 = _dropout_forward(f, rate, rng)
            y3, ln3_cache = _ln_forward(f + y2, p[f"{pre}.ln3.g"], p[f"{pre}.ln3.b"])
            if tape is not None:
                tape.dec_layers.append(
                    (self_cache, d1, ln1_cache, cross_cache, d2, ln2_cache,
                     ffn_cache, d3, ln3_cache)
                )
            y = y3
        if tape is not None:
            tape.dec_final = y
        return y

    def decode_probs(self, prefix_ids, enc: EncoderOut) -> np.ndarray:
        """Next-token distribution at every prefix position, shape (n, V)."""
        ids = self._check_len(prefix_ids)
        if ids.size == 0 or ids[0] != BOS_ID:
            raise EmptyPrefix("decoder prefix must start with [bos]")
        y = self._decoder_stack(ids, enc)
        return softmax(y @ self.params["wout"])

    def decode_step(self, prefix_ids, enc: EncoderOut) -> np.ndarray:
        """Distribution over the vocabulary for the next token."""
        return self.decode_probs(prefix_ids, enc)[-1]

    # -- loss and gradients --------------------------------------------

    def loss(self, src_ids, dst_ids) -> float:
        """Teacher-forced negative log-likelihood, [pad] targets excluded.

        dst_ids must be framed [bos] ... [eos]; positions whose target is
        [pad] contribute nothing.
        """
        value, _ = self._forward(src_ids, dst_ids)
        return value

    def _forward(self, src_ids, dst_ids, rng=None) -> tuple[float, _Tape]:
        src = self._check_len(src_ids)
        dst = self._check_len(dst_ids)
        if src.size == 0:
            raise ValueError("empty source sequence")
        if dst.size < 2 or dst[0] != BOS_ID:
            raise EmptyPrefix("decoder target must be framed with [bos] ... [eos]")
        tape = _Tape()
        tape.src = src
        tape.dec_in = dst[:-1]
        tape.targets = dst[1:]
        enc = self.encode_seq(src, rng, tape)
        y = self._decoder_stack(tape.dec_in, enc, rng, tape)
        logits = y @ self.params["wout"]
        probs = softmax(logits)
        tape.probs = probs
        tape.kept = tape.targets != PAD_ID
        picked = probs[np.arange(tape.targets.size), tape.targets]
        with np.errstate(divide="ignore"):  # log(0) -> -inf is caught upstream
            value = float(-np.sum(np.log(picked[tape.kept])))
        return value, tape

    def loss_and_grad(
        self, src_ids, dst_ids, rng=None
    ) -> tuple[float, dict[str, np.ndarray]]:
        """Loss plus analytic gradients for every parameter tensor.

        Pass a generator to enable dropout (training mode); leave it None
        for the deterministic path used by evaluation and gradient checks.
        """
        value, tape = self._forward(src_ids, dst_ids, rng)
        grads = {k: np.zeros_like(v) for k, v in self.params.items()}
        p = self.params

        # output projection and cross-entropy
        dlogits = tape.probs.copy()
        dlogits[np.arange(tape.targets.size), tape.targets] -= 1.0
        dlogits[~tape.kept] = 0.0
        grads["wout"] += tape.dec_final.T @ dlogits
        dy = dlogits @ p["wout"].T

        dk_enc = np.zeros_like(tape.dec_layers[0][3][2])  # cross cache k
        dv_enc = np.zeros_like(tape.dec_layers[0][3][3])

        for i in reversed(range(self.config.n_layers)):
            pre = f"dec.{i}"
            (self_cache, d1, ln1_cache, cross_cache, d2, ln2_cache,
             ffn_cache, d3, ln3_cache) = tape.dec_layers[i]
            dsum, dg, db = _ln_backward(dy, ln3_cache)
            grads[f"{pre}.ln3.g"] += dg
            grads[f"{pre}.ln3.b"] += db
            df = _dropout_backward(dsum, d3)
            dx, dw1, db1, dw2, db2 = _ffn_backward(
                df, ffn_cache, p[f"{pre}.ffn.w1"], p[f"{pre}.ffn.w2"]
            )
            grads[f"{pre}.ffn.w1"] += dw1
            grads[f"{pre}.ffn.b1"] += db1
            grads[f"{pre}.ffn.w2"] += dw2
            grads[f"{pre}.ffn.b2"] += db2
            dy2 = dsum + dx

            dsum, dg, db = _ln_backward(dy2, ln2_cache)
            grads[f"{pre}.ln2.g"] += dg
            grads[f"{pre}.ln2.b"] += db
            dc = _dropout_backward(dsum, d2)
            dx, dwq, _, _, dwa, dk, dv = _attn_backward(
                dc, cross_cache, p[f"{pre}.cross.wq"], None, None,
                p[f"{pre}.cross.wa"], kv_grad=True,
            )
            grads[f"{pre}.cross.wq"] += dwq
            grads[f"{pre}.cross.wa"] += dwa
            dk_enc += dk
            dv_enc += dv
            dy1 = dsum + dx

            dsum, dg, db = _ln_backward(dy1, ln1_cache)
            grads[f"{pre}.ln1.g"] += dg
            grads[f"{pre}.ln1.b"] += db
            da = _dropout_backward(dsum, d1)
            dx, dwq, dwk, dwv, dwa = _attn_backward(
                da, self_cache, p[f"{pre}.self.wq"], p[f"{pre}.self.wk"],
                p[f"{pre}.self.wv"], p[f"{pre}.self.wa"],
            )
            grads[f"{pre}.self.wq"] += dwq
            grads[f"{pre}.self.wk"] += dwk
            grads[f"{pre}.self.wv"] += dwv
            grads[f"{pre}.self.wa"] += dwa
            dy = dsum + dx

        dy = _dropout_backward(dy, tape.dec_drop)
        np.add.at(grads["embed"], tape.dec_in, dy)

        # encoder key/value projections
        x_enc = tape.enc_final
        grads["enc.kproj"] += np.einsum("ne,hnk->hek", x_enc, dk_enc)
        grads["enc.vproj"] += np.einsum("ne,hnk->hek", x_enc, dv_enc)
        dx_enc = np.einsum("hnk,hek->ne", dk_enc, p["enc.kproj"])
        dx_enc += np.einsum("hnk,hek->ne", dv_enc, p["enc.vproj"])

        for i in reversed(range(self.config.n_layers)):
            pre = f"enc.{i}"
            attn_cache, d1, ln1_cache, ffn_cache, d2, ln2_cache = tape.enc_layers[i]
            dsum, dg, db = _ln_backward(dx_enc, ln2_cache)
            grads[f"{pre}.ln2.g"] += dg
            grads[f"{pre}.ln2.b"] += db
            df = _dropout_backward(dsum, d2)
            dx, dw1, db1, dw2, db2 = _ffn_backward(
                df, ffn_cache, p[f"{pre}.ffn.w1"], p[f"{pre}.ffn.w2"]
            )
            grads[f"{pre}.ffn.w1"] += dw1
            grads[f"{pre}.ffn.b1"] += db1
            grads[f"{pre}.ffn.w2"] += dw2
            grads[f"{pre}.ffn.b2"] += db2
            dx1 = dsum + dx

            dsum, dg, db = _ln_backward(dx1, ln1_cache)
            grads[f"{pre}.ln1.g"] += dg
            grads[f"{pre}.ln1.b"] += db
            da = _dropout_backward(dsum, d1)
            dx, dwq, dwk, dwv, dwa = _attn_backward(
                da, attn_cache, p[f"{pre}.attn.wq"], p[f"{pre}.attn.wk"],
                p[f"{pre}.attn.wv"], p[f"{pre}.attn.wa"],
            )
            grads[f"{pre}.attn.wq"] += dwq
            grads[f"{pre}.attn.wk"] += dwk
            grads[f"{pre}.attn.wv"] += dwv
            grads[f"{pre}.attn.wa"] += dwa
            dx_enc = dsum + dx

        dx_enc = _dropout_backward(dx_enc, tape.enc_drop)
        np.add.at(grads["embed"], tape.src, dx_enc)
        return value, grads

    def score(self, src_ids, dst_ids) -> float:
        """Total log-probability of dst given src (the negative loss)."""
        return -self.loss(src_ids, dst_ids)


# ----------------------------------------------------------------------
# checkpoint io
# ----------------------------------------------------------------------

_CONFIG_FIELDS = [f.name for f in fields(TransformerConfig)]


def save_checkpoint(path, config: TransformerConfig, params: dict[str, np.ndarray]) -> None:
    buf = io.BytesIO()
    buf.write((CHECKPOINT_HEADER + "\n").encode("utf-8"))
    for name in _CONFIG_FIELDS:
        buf.write(f"{name}={getattr(config, name)}\n".encode("utf-8"))
    buf.write(f"tensors={len(params)}\n".encode("utf-8"))
    for name in sorted(params):
        arr = np.ascontiguousarray(params[name], dtype="<f8")
        dims = " ".join(str(d) for d in arr.shape)
        buf.write(f"{name} {arr.ndim} {dims}\n".encode("utf-8"))
        buf.write(arr.tobytes())
    Path(path).write_bytes(buf.getvalue())


def _read_line(fh) -> str:
    raw = bytearray()
    while True:
        c = fh.read(1)
        if not c or c == b"\n":
            break
        raw += c
    return raw.decode("utf-8")


def load_checkpoint(path) -> tuple[TransformerConfig, dict[str, np.ndarray]]:
    with open(path, "rb") as fh:
        if _read_line(fh) != CHECKPOINT_HEADER:
            raise CheckpointFormatError(f"{path}: missing '{CHECKPOINT_HEADER}' header")
        raw_cfg: dict[str, str] = {}
        for _ in _CONFIG_FIELDS:
            line = _read_line(fh)
            key, _, value = line.partition("=")
            raw_cfg[key] = value
        if set(raw_cfg) != set(_CONFIG_FIELDS):
            raise CheckpointFormatError(f"{path}: bad config block: {sorted(raw_cfg)}")
        config = TransformerConfig(
            vocab_size=int(raw_cfg["vocab_size"]),
            d_e=int(raw_cfg["d_e"]),
            n_heads=int(raw_cfg["n_heads"]),
            n_layers=int(raw_cfg["n_layers"]),
            d_ff=int(raw_cfg["d_ff"]),
            max_len=int(raw_cfg["max_len"]),
            dropout=float(raw_cfg["dropout"]),
        )
        count_line = _read_line(fh)
        if not count_line.startswith("tensors="):
            raise CheckpointFormatError(f"{path}: missing tensor count")
        n_tensors = int(count_line.split("=", 1)[1])
        shapes = expected_shapes(config)
        params: dict[str, np.ndarray] = {}
        for _ in range(n_tensors):
            parts = _read_line(fh).split(" ")
            name, rank = parts[0], int(parts[1])
            dims = tuple(int(x) for x in parts[2 : 2 + rank])
            if name not in shapes:
                raise CheckpointFormatError(f"{path}: unexpected tensor {name!r}")
            if dims != shapes[name]:
                raise CheckpointFormatError(
                    f"{path}: tensor {name} has dims {dims}, config implies {shapes[name]}"
                )
            n_items = int(np.prod(dims)) if dims else 1
            raw = fh.read(n_items * 8)
            if len(raw) != n_items * 8:
                raise CheckpointFormatError(f"{path}: truncated tensor {name}")
            params[name] = np.frombuffer(raw, dtype="<f8").reshape(dims).copy()
        missing = set(shapes) - set(params)
        if missing:
            raise CheckpointFormatError(f"{path}: missing tensors {sorted(missing)}")
    return config, params
