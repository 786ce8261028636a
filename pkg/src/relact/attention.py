"""Transformer building blocks: positional tables, multi-head attention,
pre-norm encoder/decoder stacks, and attention-only cross stacks.

All blocks work on (L, d) sequence tensors. Positions are either added
once to the assembled input (`pos_mode="at_input"`) or to the q/k
inputs of every attention layer (`"per_layer"`, the default).
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from . import funcs as F
from . import tensor as T
from .tensor import ShapeError, Tensor


def sinusoidal_positions(length: int, width: int, reserve_first: bool = False) -> np.ndarray:
    """Fixed sin/cos table (length, width); row 0 zeroed when reserved
    for a global token."""
    if width % 2:
        raise ShapeError(f"positional encoding needs even width, got {width}")
    pos = np.arange(length, dtype=np.float64)[:, None]
    k = np.arange(width // 2, dtype=np.float64)[None, :]
    ang = pos / np.power(10000.0, 2.0 * k / width)
    table = np.zeros((length, width))
    table[:, 0::2] = np.sin(ang)
    table[:, 1::2] = np.cos(ang)
    if reserve_first and length > 0:
        table[0] = 0.0
    return table


@dataclass
class RunState:
    """Per-forward flags: dropout only fires in training with an rng."""

    train: bool = False
    dropout: float = 0.0
    rng: object = None

    def drop(self, x: Tensor) -> Tensor:
        if self.train and self.dropout > 0.0 and self.rng is not None:
            return F.dropout(x, self.dropout, self.rng)
        return x


EVAL = RunState()


def glorot(rng, fan_in: int, fan_out: int, shape=None) -> Tensor:
    a = np.sqrt(6.0 / (fan_in + fan_out))
    return Tensor(rng.uniform(-a, a, size=shape or (fan_in, fan_out)))


class Linear:
    def __init__(self, rng, d_in: int, d_out: int):
        self.w = glorot(rng, d_in, d_out)
        self.b = Tensor(np.zeros(d_out))

    def __call__(self, x: Tensor) -> Tensor:
        return T.add(T.matmul(x, self.w), self.b)

    def params(self, prefix: str) -> dict:
        return {f"{prefix}.w": self.w, f"{prefix}.b": self.b}


class LayerNorm:
    def __init__(self, d: int, eps: float = 1e-5):
        self.gamma = Tensor(np.ones(d))
        self.beta = Tensor(np.zeros(d))
        self.eps = eps

    def __call__(self, x: Tensor) -> Tensor:
        return T.add(T.mul(T.layer_norm(x, self.eps), self.gamma), self.beta)

    def params(self, prefix: str) -> dict:
        return {f"{prefix}.gamma": self.gamma, f"{prefix}.beta": self.beta}


class MLP:
    """gelu-activated projection stack; hidden activations retrievable."""

    def __init__(self, rng, d_in: int, hidden: list, d_out: int):
        dims = [d_in] + list(hidden) + [d_out]
        self.layers = [Linear(rng, dims[i], dims[i + 1]) for i in range(len(dims) - 1)]

    def __call__(self, x: Tensor):
        hiddens = []
        for layer in self.layers[:-1]:
            x = T.gelu(layer(x))
            hiddens.append(x)
        return self.layers[-1](x), hiddens

    def params(self, prefix: str) -> dict:
        out = {}
        for i, layer in enumerate(self.layers):
            out.update(layer.params(f"{prefix}.{i}"))
        return out


class MultiHeadAttention:
    def __init__(self, rng, d: int, heads: int):
        if d % heads:
            raise ShapeError(f"width {d} not divisible by {heads} heads")
        self.d = d
        self.heads = heads
        self.dh = d // heads
        self.wq = Linear(rng, d, d)
        self.wk = Linear(rng, d, d)
        self.wv = Linear(rng, d, d)
        self.wo = Linear(rng, d, d)

    def __call__(self, q, k, v, pos_q=None, pos_k=None) -> Tensor:
        if q.shape[-1] != self.d or k.shape[-1] != self.d:
            raise ShapeError(f"attention width mismatch: {q.shape} vs d={self.d}")
        qi = T.add(q, pos_q) if pos_q is not None else q
        ki = T.add(k, pos_k) if pos_k is not None else k
        qp, kp, vp = self.wq(qi), self.wk(ki), self.wv(v)
        outs = []
        inv = 1.0 / np.sqrt(self.dh)
        for h in range(self.heads):
            cols = slice(h * self.dh, (h + 1) * self.dh)
            qh = T.slice_(qp, (slice(None), cols))
            kh = T.slice_(kp, (slice(None), cols))
            vh = T.slice_(vp, (slice(None), cols))
            att = T.softmax(T.scale(T.matmul(qh, T.transpose(kh)), inv))
            outs.append(T.matmul(att, vh))
        merged = outs[0] if len(outs) == 1 else T.concat(outs, axis=1)
        return self.wo(merged)

    def params(self, prefix: str) -> dict:
        out = {}
        for name, lin in (("q", self.wq), ("k", self.wk), ("v", self.wv), ("o", self.wo)):
            out.update(lin.params(f"{prefix}.{name}"))
        return out


class FeedForward:
    def __init__(self, rng, d: int, mult: int):
        self.up = Linear(rng, d, d * mult)
        self.down = Linear(rng, d * mult, d)

    def __call__(self, x: Tensor) -> Tensor:
        return self.down(T.gelu(self.up(x)))

    def params(self, prefix: str) -> dict:
        return {**self.up.params(f"{prefix}.up"), **self.down.params(f"{prefix}.down")}


class EncoderBlock:
    def __init__(self, rng, d: int, heads: int, ffn_mult: int):
        self.ln1 = LayerNorm(d)
        self.attn = MultiHeadAttention(rng, d, heads)
        self.ln2 = LayerNorm(d)
        self.ffn = FeedForward(rng, d, ffn_mult)

    def __call__(self, x: Tensor, pos, st: RunState) -> Tensor:
        h = self.ln1(x)
        x = T.add(x, st.drop(self.attn(h, h, h, pos, pos)))
        x = T.add(x, st.drop(self.ffn(self.ln2(x))))
        return x

    def params(self, prefix: str) -> dict:
        return {
            **self.ln1.params(f"{prefix}.ln1"),
            **self.attn.params(f"{prefix}.attn"),
            **self.ln2.params(f"{prefix}.ln2"),
            **self.ffn.params(f"{prefix}.ffn"),
        }


class DecoderBlock:
    def __init__(self, rng, d: int, heads: int, ffn_mult: int):
        self.ln1 = LayerNorm(d)
        self.self_attn = MultiHeadAttention(rng, d, heads)
        self.ln2 = LayerNorm(d)
        self.cross_attn = MultiHeadAttention(rng, d, heads)
        self.ln3 = LayerNorm(d)
        self.ffn = FeedForward(rng, d, ffn_mult)

    def __call__(self, x, memory, qpos, mpos, st: RunState) -> Tensor:
        h = self.ln1(x)
        x = T.add(x, st.drop(self.self_attn(h, h, h, qpos, qpos)))
        h = self.ln2(x)
        x = T.add(x, st.drop(self.cross_attn(h, memory, memory, qpos, mpos)))
        x = T.add(x, st.drop(self.ffn(self.ln3(x))))
        return x

    def params(self, prefix: str) -> dict:
        return {
            **self.ln1.params(f"{prefix}.ln1"),
            **self.self_attn.params(f"{prefix}.self"),
            **self.ln2.params(f"{prefix}.ln2"),
            **self.cross_attn.params(f"{prefix}.cross"),
            **self.ln3.params(f"{prefix}.ln3"),
            **self.ffn.params(f"{prefix}.ffn"),
        }


class CrossAttnBlock:
    """Attention-only residual block used by the transfer stacks."""

    def __init__(self, rng, d: int, heads: int):
        self.ln = LayerNorm(d)
        self.attn = MultiHeadAttention(rng, d, heads)

    def __call__(self, x, kv, pos_q, pos_k, st: RunState) -> Tensor:
        return T.add(x, st.drop(self.attn(self.ln(x), kv, kv, pos_q, pos_k)))

    def params(self, prefix: str) -> dict:
        return {**self.ln.params(f"{prefix}.ln"), **self.attn.params(f"{prefix}.attn")}


class Encoder:
    """Self-attention stack over the flattened feature grid plus a
    leading global token."""

    def __init__(self, rng, d: int, heads: int, layers: int, ffn_mult: int = 4,
                 pos_mode: str = "per_layer"):
        if pos_mode not in ("per_layer", "at_input"):
            raise ValueError(f"unknown pos_mode {pos_mode!r}")
        self.d = d
        self.pos_mode = pos_mode
        self.blocks = [EncoderBlock(rng, d, heads, ffn_mult) for _ in range(layers)]
        self.final_ln = LayerNorm(d) if layers else None

    def encode(self, f_agg: Tensor, global_feat: Tensor, pos: Tensor,
               st: RunState = EVAL) -> Tensor:
        """(H, W, d) grid + (1, d) global feature -> (H*W + 1, d) sequence."""
        hgt, wdt, d = f_agg.shape
        seq = T.concat([global_feat, T.reshape(f_agg, (hgt * wdt, d))], axis=0)
        return self.forward_sequence(seq, pos, st)

    def forward_sequence(self, x: Tensor, pos, st: RunState = EVAL) -> Tensor:
        if pos is not None and pos.shape != x.shape:
            raise ShapeError(f"positions {pos.shape} do not match sequence {x.shape}")
        per_layer = pos if self.pos_mode == "per_layer" else None
        if pos is not None and self.pos_mode == "at_input":
            x = T.add(x, pos)
        for block in self.blocks:
            x = block(x, per_layer, st)
        return self.final_ln(x) if self.final_ln else x

    def params(self, prefix: str) -> dict:
        out = {}
        for i, b in enumerate(self.blocks):
            out.update(b.params(f"{prefix}.{i}"))
        if self.final_ln:
            out.update(self.final_ln.params(f"{prefix}.ln"))
        return out


class Decoder:
    """Query decoder: per block self-attention, cross-attention to the
    memory, feed-forward; one hidden vector per query."""

    def __init__(self, rng, d: int, heads: int, layers: int, ffn_mult: int = 4,
                 pos_mode: str = "per_layer"):
        self.d = d
        self.pos_mode = pos_mode
        self.blocks = [DecoderBlock(rng, d, heads, ffn_mult) for _ in range(layers)]
        self.final_ln = LayerNorm(d) if layers else None

    def decode(self, memory: Tensor, queries: Tensor, qpos, mpos,
               st: RunState = EVAL) -> Tensor:
        if memory.shape[-1] != queries.shape[-1]:
            raise ShapeError(
                f"decoder width mismatch: memory {memory.shape}, queries {queries.shape}"
            )
        x = queries
        per_layer = self.pos_mode == "per_layer"
        if not per_layer:
            if qpos is not None:
                x = T.add(x, qpos)
            if mpos is not None:
                memory = T.add(memory, mpos)
            qpos = mpos = None
        for block in self.blocks:
            x = block(x, memory, qpos, mpos, st)
        return self.final_ln(x) if self.final_ln else x

    def params(self, prefix: str) -> dict:
        out = {}
        for i, b in enumerate(self.blocks):
            out.update(b.params(f"{prefix}.{i}"))
        if self.final_ln:
            out.update(self.final_ln.params(f"{prefix}.ln"))
        return out


class CrossAttnStack:
    """A few residual cross-attention layers (feature/query transfer)."""

    def __init__(self, rng, d: int, heads: int, layers: int):
        self.blocks = [CrossAttnBlock(rng, d, heads) for _ in range(layers)]

    def __call__(self, x, kv, pos_q=None, pos_k=None, st: RunState = EVAL) -> Tensor:
        if x.shape[-1] != kv.shape[-1]:
            raise ShapeError(f"cross-attention width mismatch: {x.shape} vs {kv.shape}")
        for block in self.blocks:
            x = block(x, kv, pos_q, pos_k, st)
        return x

    def params(self, prefix: str) -> dict:
        out = {}
        for i, b in enumerate(self.blocks):
            out.update(b.params(f"{prefix}.{i}"))
        return out
