"""Numpy implementations of the hot numeric kernels.

Same call surface as the compiled extension (`_ops_c`); used when the
extension is unavailable or when RELACT_BACKEND=py forces it.
All functions take and return float64 arrays; row-wise kernels
(softmax, layernorm) operate over the last axis.
"""

import numpy as np

GELU_C = np.sqrt(2.0 / np.pi)
GELU_A = 0.044715


def relu_fwd(x):
    return np.maximum(x, 0.0)


def relu_bwd(y, g):
    return np.where(y > 0.0, g, 0.0)


def gelu_fwd(x):
    t = np.tanh(GELU_C * (x + GELU_A * x * x * x))
    return 0.5 * x * (1.0 + t)


def gelu_bwd(x, g):
    u = GELU_C * (x + GELU_A * x * x * x)
    t = np.tanh(u)
    du = GELU_C * (1.0 + 3.0 * GELU_A * x * x)
    return g * (0.5 * (1.0 + t) + 0.5 * x * (1.0 - t * t) * du)


def sigmoid_fwd(x):
    out = np.empty_like(x)
    pos = x >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-x[pos]))
    ex = np.exp(x[~pos])
    out[~pos] = ex / (1.0 + ex)
    return out


def sigmoid_bwd(y, g):
    return g * y * (1.0 - y)


def exp_fwd(x):
    return np.exp(x)


def exp_bwd(y, g):
    return g * y


def log_fwd(x):
    return np.log(x)


def log_bwd(x, g):
    return g / x


def softmax_fwd(x):
    m = np.max(x, axis=-1, keepdims=True)
    e = np.exp(x - m)
    return e / np.sum(e, axis=-1, keepdims=True)


def softmax_bwd(y, g):
    dot = np.sum(y * g, axis=-1, keepdims=True)
    return y * (g - dot)


def layernorm_fwd(x, eps):
    mu = np.mean(x, axis=-1, keepdims=True)
    var = np.mean((x - mu) ** 2, axis=-1, keepdims=True)
    rstd = 1.0 / np.sqrt(var + eps)
    y = (x - mu) * rstd
    return y, rstd[..., 0]


def layernorm_bwd(y, rstd, g):
    gm = np.mean(g, axis=-1, keepdims=True)
    gym = np.mean(g * y, axis=-1, keepdims=True)
    return rstd[..., None] * (g - gm - y * gym)
