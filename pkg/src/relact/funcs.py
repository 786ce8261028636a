"""Differentiable compositions built only from the tensor primitives."""

from __future__ import annotations

import numpy as np

from . import tensor as T
from .tensor import Tensor

LOG_GUARD = 1e-30


def sub(a, b) -> Tensor:
    return T.add(a, T.scale(b, -1.0))


def absolute(x) -> Tensor:
    # |x| = relu(x) + relu(-x)
    return T.add(T.relu(x), T.relu(T.scale(x, -1.0)))


def minimum(a, b) -> Tensor:
    # min(a, b) = a - relu(a - b)
    return sub(a, T.relu(sub(a, b)))


def maximum(a, b) -> Tensor:
    # max(a, b) = b + relu(a - b)
    return T.add(b, T.relu(sub(a, b)))


def ratio(num, den, eps: float = 1e-12) -> Tensor:
    """Elementwise num/den for non-negative num, positive den."""
    n = T.add(num, T.constant(eps))
    d = T.add(den, T.constant(eps))
    return T.exp(sub(T.log(n), T.log(d)))


def l1_distance(a, b) -> Tensor:
    return T.sum_(absolute(sub(a, b)))


def linear(x, w, b=None) -> Tensor:
    y = T.matmul(x, w)
    return y if b is None else T.add(y, b)


def log_guarded(x) -> Tensor:
    """log(x + tiny); keeps saturated probabilities finite."""
    return T.log(T.add(x, T.constant(LOG_GUARD)))


def cross_entropy_rows(logits, class_ids) -> Tensor:
    """Mean CE of (n, C) logit rows against integer targets."""
    n, c = logits.shape
    onehot = np.zeros((n, c))
    onehot[np.arange(n), np.asarray(class_ids, dtype=int)] = 1.0
    logp = log_guarded(T.softmax(logits))
    return T.scale(T.sum_(T.mul(logp, T.constant(onehot))), -1.0 / n)


def binary_ce_logits(logits, targets) -> Tensor:
    """Mean stable BCE of logit entries against 0/1 targets.

    max(z,0) - z*y + log(1 + exp(-|z|)), averaged over all entries.
    """
    z = logits
    y = T.constant(np.asarray(targets, dtype=np.float64))
    mag = absolute(z)
    soft = T.log(T.add(T.constant(1.0), T.exp(T.scale(mag, -1.0))))
    per = T.add(sub(T.relu(z), T.mul(z, y)), soft)
    return T.mean(per)


def gather_rows(x, index) -> Tensor:
    """Select rows of a 2-D tensor in the given order (differentiable)."""
    rows = [T.slice_(x, (slice(int(i), int(i) + 1),)) for i in index]
    if len(rows) == 1:
        return rows[0]
    return T.concat(rows, axis=0)


def dropout(x, rate: float, rng) -> Tensor:
    """Inverted dropout via a constant 0/(1/keep) mask; identity at rate 0."""
    if rate <= 0.0:
        return x
    keep = 1.0 - rate
    mask = (rng.random(x.shape) < keep).astype(np.float64) / keep
    return T.mul(x, T.constant(mask))


def conv2d(x, w, b=None, kh: int = 1, kw: int = 1, stride: int = 1, pad: int = 0) -> Tensor:
    """2-D convolution on an (H, W, Cin) tensor via shifted slices + matmul.

    Weight rows are ordered (ki, kj, cin) row-major; shape (kh*kw*Cin, Cout).
    """
    hgt, wdt, cin = x.shape
    if w.shape[0] != kh * kw * cin:
        raise T.ShapeError(
            f"conv2d: weight rows {w.shape[0]} != {kh}x{kw}x{cin}"
        )
    if pad:
        zr = T.constant(np.zeros((pad, wdt, cin)))
        x = T.concat([zr, x, zr], axis=0)
        zc = T.constant(np.zeros((hgt + 2 * pad, pad, cin)))
        x = T.concat([zc, x, zc], axis=1)
    hp, wp = hgt + 2 * pad, wdt + 2 * pad
    if hp < kh or wp < kw:
        raise T.ShapeError(f"conv2d: kernel {kh}x{kw} larger than padded input {hp}x{wp}")
    hout = (hp - kh) // stride + 1
    wout = (wp - kw) // stride + 1
    patches = [
        T.slice_(x, (slice(di, di + (hout - 1) * stride + 1, stride),
                     slice(dj, dj + (wout - 1) * stride + 1, stride)))
        for di in range(kh) for dj in range(kw)
    ]
    col = patches[0] if len(patches) == 1 else T.concat(patches, axis=2)
    y = T.matmul(T.reshape(col, (hout * wout, kh * kw * cin)), w)
    if b is not None:
        y = T.add(y, b)
    return T.reshape(y, (hout, wout, w.shape[1]))
