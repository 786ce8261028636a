"""Dense float64 tensors with reverse-mode autodiff on an explicit tape.

A Tensor is a numpy array plus an optional node id on the active Tape.
Primitives record one tape entry each; Tape.backward walks the entries
in reverse and returns a gradient per watched leaf. Broadcasting for
binary primitives is deliberately narrow: equal shapes, a scalar
operand, or a trailing-axes (suffix) match — nothing else, so every
backward reduction is auditable.
"""

from __future__ import annotations

import threading

import numpy as np

from .kernels import ops as K


class ShapeError(ValueError):
    """Operand shapes invalid for a primitive."""


class TapeError(ValueError):
    """Misuse of the gradient tape (non-scalar loss, off-tape loss, ...)."""


_LOCAL = threading.local()


def _tape_stack():
    stack = getattr(_LOCAL, "stack", None)
    if stack is None:
        stack = []
        _LOCAL.stack = stack
    return stack


def _active_tape():
    stack = _tape_stack()
    return stack[-1] if stack else None


class Tensor:
    __slots__ = ("data", "_tape", "_nid")

    def __init__(self, data):
        self.data = np.asarray(data, dtype=np.float64)
        self._tape = None
        self._nid = -1

    @property
    def shape(self):
        return self.data.shape

    @property
    def ndim(self):
        return self.data.ndim

    @property
    def size(self):
        return self.data.size

    def item(self) -> float:
        if self.data.size != 1:
            raise ShapeError(f"item: tensor of shape {self.data.shape} is not a scalar")
        return float(self.data.reshape(()))

    def __repr__(self):
        tag = f" node={self._nid}" if self._tape is not None else ""
        return f"Tensor(shape={self.data.shape}{tag})"

    # sugar over the primitives below
    def __add__(self, other):
        return add(self, other)

    def __sub__(self, other):
        return add(self, scale(_as_tensor(other), -1.0))

    def __mul__(self, other):
        return mul(self, other)

    def __matmul__(self, other):
        return matmul(self, other)

    def __neg__(self):
        return scale(self, -1.0)


def constant(data) -> Tensor:
    """Untracked tensor; gradients never flow into it."""
    return Tensor(data)


def _as_tensor(x) -> Tensor:
    return x if isinstance(x, Tensor) else Tensor(x)


class Tape:
    """Ordered record of primitive applications for one backward pass.

    Entries are appended in execution order, so every operand of entry
    k was produced by an earlier entry or is a watched leaf. Use as a
    context manager; nesting activates the innermost tape only.
    """

    def __init__(self):
        self._entries = []
        self._counter = 0
        self._leaves = {}

    def __enter__(self):
        _tape_stack().append(self)
        return self

    def __exit__(self, *exc):
        stack = _tape_stack()
        assert stack and stack[-1] is self
        stack.pop()
        return False

    def _fresh_id(self) -> int:
        self._counter += 1
        return self._counter

    def watch(self, t: Tensor) -> int:
        """Register a leaf; returns its id (idempotent per tape)."""
        if t._tape is self:
            return t._nid
        t._tape = self
        t._nid = self._fresh_id()
        self._leaves[t._nid] = t
        return t._nid

    def leaf_id(self, t: Tensor) -> int:
        if t._tape is not self or t._nid not in self._leaves:
            raise TapeError("tensor is not a watched leaf of this tape")
        return t._nid

    def __len__(self):
        return len(self._entries)

    def backward(self, loss: Tensor) -> dict:
        """Gradient of a scalar loss wrt every watched leaf.

        Leaves the loss does not depend on get zero gradients.
        """
        if loss.data.shape not in ((), (1,)):
            raise TapeError(f"loss must be scalar-shaped, got {loss.data.shape}")
        if loss._tape is not self:
            raise TapeError("loss was not recorded on this tape")
        grads = {loss._nid: np.ones_like(loss.data)}
        for out_nid, in_nids, bwd in reversed(self._entries):
            g = grads.pop(out_nid, None)
            if g is None:
                continue
            for nid, gi in zip(in_nids, bwd(g)):
                if nid < 0 or gi is None:
                    continue
                acc = grads.get(nid)
                grads[nid] = gi if acc is None else acc + gi
        return {
            nid: Tensor(grads.get(nid, np.zeros_like(leaf.data)))
            for nid, leaf in self._leaves.items()
        }


def _record(out_data, inputs, bwd) -> Tensor:
    """Wrap a forward result; append a tape entry if any input is live."""
    out = Tensor(out_data)
    tape = _active_tape()
    if tape is None:
        return out
    in_nids = tuple(
        t._nid if (isinstance(t, Tensor) and t._tape is tape) else -1
        for t in inputs
    )
    if all(nid < 0 for nid in in_nids):
        return out
    out._tape = tape
    out._nid = tape._fresh_id()
    tape._entries.append((out._nid, in_nids, bwd))
    return out


# -- broadcasting rules (equal | scalar | suffix) -------------------------

def _is_scalar_shape(s) -> bool:
    return s == () or s == (1,)


def _broadcast_shape(name, sa, sb):
    if sa == sb:
        return sa
    if _is_scalar_shape(sb):
        return sa
    if _is_scalar_shape(sa):
        return sb
    if len(sa) > len(sb) and sa[len(sa) - len(sb):] == sb:
        return sa
    if len(sb) > len(sa) and sb[len(sb) - len(sa):] == sa:
        return sb
    raise ShapeError(f"{name}: shapes {sa} and {sb} are not broadcast-compatible")


def _reduce_to(shape, g):
    """Sum a broadcast gradient back down to an operand's shape."""
    if g.shape == shape:
        return g
    if _is_scalar_shape(shape):
        return np.sum(g).reshape(shape)
    lead = g.ndim - len(shape)
    return np.sum(g, axis=tuple(range(lead)))


# -- primitives ------------------------------------------------------------

def matmul(a, b) -> Tensor:
    a, b = _as_tensor(a), _as_tensor(b)
    if a.ndim != 2 or b.ndim != 2 or a.shape[1] != b.shape[0]:
        raise ShapeError(f"matmul: incompatible shapes {a.shape} and {b.shape}")
    ad, bd = a.data, b.data

    def bwd(g):
        return g @ bd.T, ad.T @ g

    return _record(ad @ bd, (a, b), bwd)


def add(a, b) -> Tensor:
    a, b = _as_tensor(a), _as_tensor(b)
    _broadcast_shape("add", a.shape, b.shape)
    sa, sb = a.shape, b.shape

    def bwd(g):
        return _reduce_to(sa, g), _reduce_to(sb, g)

    return _record(a.data + b.data, (a, b), bwd)


def mul(a, b) -> Tensor:
    a, b = _as_tensor(a), _as_tensor(b)
    _broadcast_shape("mul", a.shape, b.shape)
    sa, sb = a.shape, b.shape
    ad, bd = a.data, b.data

    def bwd(g):
        return _reduce_to(sa, g * bd), _reduce_to(sb, g * ad)

    return _record(ad * bd, (a, b), bwd)


def scale(a, c: float) -> Tensor:
    a = _as_tensor(a)
    c = float(c)

    def bwd(g):
        return (g * c,)

    return _record(a.data * c, (a,), bwd)


def concat(tensors, axis: int = 0) -> Tensor:
    ts = [_as_tensor(t) for t in tensors]
    if not ts:
        raise ShapeError("concat: empty input list")
    nd = ts[0].ndim
    ax = axis if axis >= 0 else axis + nd
    for t in ts[1:]:
        if t.ndim != nd:
            raise ShapeError(f"concat: rank mismatch {ts[0].shape} and {t.shape}")
        for i in range(nd):
            if i != ax and t.shape[i] != ts[0].shape[i]:
                raise ShapeError(
                    f"concat: shapes {ts[0].shape} and {t.shape} differ off axis {ax}"
                )
    sizes = [t.shape[ax] for t in ts]
    offsets = np.cumsum([0] + sizes)

    def bwd(g):
        out = []
        for i in range(len(ts)):
            key = [slice(None)] * nd
            key[ax] = slice(int(offsets[i]), int(offsets[i + 1]))
            out.append(np.ascontiguousarray(g[tuple(key)]))
        return tuple(out)

    return _record(np.concatenate([t.data for t in ts], axis=ax), ts, bwd)


def slice_(a, key) -> Tensor:
    """Basic slicing only: a tuple of slice objects, step >= 1."""
    a = _as_tensor(a)
    if not isinstance(key, tuple):
        key = (key,)
    if len(key) > a.ndim:
        raise ShapeError(f"slice: key rank {len(key)} exceeds tensor rank {a.ndim}")
    key = tuple(key) + (slice(None),) * (a.ndim - len(key))
    for k in key:
        if not isinstance(k, slice):
            raise ShapeError("slice: only slice objects are supported")
        if k.step is not None and k.step < 1:
            raise ShapeError("slice: step must be >= 1")
    shape = a.shape

    def bwd(g):
        z = np.zeros(shape)
        z[key] = g
        return (z,)

    return _record(np.ascontiguousarray(a.data[key]), (a,), bwd)


def reshape(a, shape) -> Tensor:
    a = _as_tensor(a)
    shape = tuple(int(s) for s in shape)
    if int(np.prod(shape, dtype=np.int64)) != a.size:
        raise ShapeError(f"reshape: cannot reshape {a.shape} to {shape}")
    old = a.shape

    def bwd(g):
        return (g.reshape(old),)

    return _record(a.data.reshape(shape), (a,), bwd)


def transpose(a, axes=None) -> Tensor:
    a = _as_tensor(a)
    if axes is None:
        axes = tuple(reversed(range(a.ndim)))
    axes = tuple(int(x) for x in axes)
    if sorted(axes) != list(range(a.ndim)):
        raise ShapeError(f"transpose: axes {axes} invalid for shape {a.shape}")
    inv = np.argsort(axes)

    def bwd(g):
        return (np.ascontiguousarray(g.transpose(inv)),)

    return _record(np.ascontiguousarray(a.data.transpose(axes)), (a,), bwd)


def relu(a) -> Tensor:
    a = _as_tensor(a)
    y = K.relu_fwd(a.data)

    def bwd(g):
        return (K.relu_bwd(y, g),)

    return _record(y, (a,), bwd)


def gelu(a) -> Tensor:
    """tanh-approximation gelu."""
    a = _as_tensor(a)
    x = a.data

    def bwd(g):
        return (K.gelu_bwd(x, g),)

    return _record(K.gelu_fwd(x), (a,), bwd)


def sigmoid(a) -> Tensor:
    a = _as_tensor(a)
    y = K.sigmoid_fwd(a.data)

    def bwd(g):
        return (K.sigmoid_bwd(y, g),)

    return _record(y, (a,), bwd)


def exp(a) -> Tensor:
    a = _as_tensor(a)
    y = K.exp_fwd(a.data)

    def bwd(g):
        return (K.exp_bwd(y, g),)

    return _record(y, (a,), bwd)


def log(a) -> Tensor:
    a = _as_tensor(a)
    x = a.data

    def bwd(g):
        return (K.log_bwd(x, g),)

    return _record(K.log_fwd(x), (a,), bwd)


def softmax(a) -> Tensor:
    """Softmax over the last axis."""
    a = _as_tensor(a)
    if a.ndim == 0:
        raise ShapeError(f"softmax: needs at least one axis, got shape {a.shape}")
    y = K.softmax_fwd(a.data)

    def bwd(g):
        return (K.softmax_bwd(y, g),)

    return _record(y, (a,), bwd)


def layer_norm(a, eps: float = 1e-5) -> Tensor:
    """Normalize the last axis to zero mean, unit variance (no affine)."""
    a = _as_tensor(a)
    if a.ndim == 0 or a.shape[-1] < 1:
        raise ShapeError(f"layer_norm: needs a non-empty last axis, got {a.shape}")
    y, rstd = K.layernorm_fwd(a.data, eps)

    def bwd(g):
        return (K.layernorm_bwd(y, rstd, g),)

    return _record(y, (a,), bwd)


def sum_(a, axis=None) -> Tensor:
    a = _as_tensor(a)
    if axis not in (None, 0):
        raise ShapeError(f"sum: axis must be None or 0, got {axis}")
    shape = a.shape

    if axis is None:
        def bwd(g):
            return (np.full(shape, float(g)),)

        return _record(np.sum(a.data), (a,), bwd)

    if a.ndim < 1:
        raise ShapeError("sum: axis 0 requires rank >= 1")

    def bwd(g):
        return (np.broadcast_to(g, shape).copy(),)

    return _record(np.sum(a.data, axis=0), (a,), bwd)


def mean(a, axis=None) -> Tensor:
    a = _as_tensor(a)
    if axis not in (None, 0):
        raise ShapeError(f"mean: axis must be None or 0, got {axis}")
    shape = a.shape

    if axis is None:
        n = a.size

        def bwd(g):
            return (np.full(shape, float(g) / n),)

        return _record(np.mean(a.data), (a,), bwd)

    if a.ndim < 1:
        raise ShapeError("mean: axis 0 requires rank >= 1")
    n0 = shape[0]

    def bwd(g):
        return (np.broadcast_to(g / n0, shape).copy(),)

    return _record(np.mean(a.data, axis=0), (a,), bwd)


_PRIMITIVES = {
    "matmul": matmul,
    "add": add,
    "mul": mul,
    "concat": concat,
    "slice": slice_,
    "reshape": reshape,
    "transpose": transpose,
    "relu": relu,
    "gelu": gelu,
    "sigmoid": sigmoid,
    "softmax": softmax,
    "layer_norm": layer_norm,
    "log": log,
    "exp": exp,
    "mean": mean,
    "sum": sum_,
    "scale": scale,
}


def apply_primitive(kind: str, *operands, **kwargs) -> Tensor:
    """Dispatch by primitive name; same recording semantics as the functions."""
    try:
        fn = _PRIMITIVES[kind]
    except KeyError:
        raise ShapeError(f"unknown primitive {kind!r}") from None
    if kind == "concat":
        return fn(operands, **kwargs)
    return fn(*operands, **kwargs)


def finite_difference_grad(f, point, eps: float = 1e-5) -> np.ndarray:
    """Central-difference gradient of a scalar function, per coordinate.

    `f` receives an untracked Tensor and must return a float or a
    scalar Tensor. The caller bounds dimensionality.
    """
    base = np.array(point.data if isinstance(point, Tensor) else point,
                    dtype=np.float64)
    grad = np.zeros_like(base)
    work = base.copy()

    def call():
        r = f(Tensor(work.copy()))
        return r.item() if isinstance(r, Tensor) else float(r)

    for idx in np.ndindex(base.shape):
        work[idx] = base[idx] + eps
        hi = call()
        work[idx] = base[idx] - eps
        lo = call()
        work[idx] = base[idx]
        grad[idx] = (hi - lo) / (2.0 * eps)
    return grad
