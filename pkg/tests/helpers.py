"""Shared test utilities: gradient checking against finite differences."""

import numpy as np

from relact import tensor as T
from relact.tensor import Tape, Tensor, finite_difference_grad

# |a - b| <= ATOL + RTOL * |b|, i.e. 1e-4 relative with a noise floor
# for coordinates where the central-difference estimate is ~0.
RTOL = 1e-4
ATOL = 1e-7


def grad_close(a, b, rtol=RTOL, atol=ATOL):
    return np.all(np.abs(a - b) <= atol + rtol * np.abs(b))


def check_grad(f, *points, eps=1e-5, rtol=RTOL, atol=ATOL):
    """Compare tape gradients of scalar f(*tensors) to finite differences."""
    leaves = [Tensor(np.asarray(p, dtype=np.float64)) for p in points]
    with Tape() as tape:
        ids = [tape.watch(leaf) for leaf in leaves]
        loss = f(*leaves)
        grads = tape.backward(loss)
    for i, leaf in enumerate(leaves):
        def fi(x, _i=i):
            args = [Tensor(l.data) for l in leaves]
            args[_i] = x
            return f(*args)

        fd = finite_difference_grad(fi, leaf, eps=eps)
        got = grads[ids[i]].data
        assert grad_close(got, fd, rtol, atol), (
            f"gradient mismatch on operand {i}:\nbackward=\n{got}\nfd=\n{fd}"
        )
