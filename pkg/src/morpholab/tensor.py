"""Dense tensors with reverse-mode automatic differentiation.

Operations compute eagerly on numpy arrays.  Inside a ``with Tape():``
block every primitive appends a node (output, parents, gradient rule) to
the active tape; ``backward`` replays the nodes in reverse insertion
order, visiting each exactly once, and accumulates gradients onto the
tensors that require them.  Outside a tape the same functions run as
plain numpy, which is the inference path.

The op set is deliberately small: 2-D matrix algebra, pointwise
nonlinearities, row softmaxes, concatenation/slicing, index gathers, and
matrix-vector style broadcasting (row bias, per-row or per-column
scaling).  Nothing here knows about sequences or models.
"""

from __future__ import annotations

import threading

import numpy as np

from .errors import NotScalar, ShapeMismatch

_STATE = threading.local()

#: When true (the default) every public op validates that its result is
#: finite; the cost is small next to the matrix products.
FINITE_CHECKS = True


def set_finite_checks(enabled: bool) -> None:
    global FINITE_CHECKS
    FINITE_CHECKS = bool(enabled)


def _active_tape():
    return getattr(_STATE, "tape", None)


class Tensor:
    """A numpy array plus gradient bookkeeping."""

    __slots__ = ("data", "requires_grad", "grad")

    def __init__(self, data, requires_grad=False, dtype=None):
        arr = np.asarray(data, dtype=dtype)
        if arr.dtype.kind != "f":
            arr = arr.astype(np.float64)
        if FINITE_CHECKS and not np.all(np.isfinite(arr)):
            raise FloatingPointError("non-finite values in tensor")
        self.data = arr
        self.requires_grad = requires_grad
        self.grad = None

    @property
    def shape(self):
        return self.data.shape

    @property
    def dtype(self):
        return self.data.dtype

    def zero_grad(self):
        self.grad = None

    def grad_or_zeros(self) -> np.ndarray:
        """Accumulated gradient; zeros when unreachable from the loss."""
        if self.grad is None:
            return np.zeros_like(self.data)
        return self.grad

    def __repr__(self):
        return f"Tensor(shape={self.data.shape}, requires_grad={self.requires_grad})"


def parameter(data, dtype=None) -> Tensor:
    return Tensor(data, requires_grad=True, dtype=dtype)


class _Node:
    __slots__ = ("out", "parents", "backward_fn")

    def __init__(self, out, parents, backward_fn):
        self.out = out
        self.parents = parents
        self.backward_fn = backward_fn


class Tape:
    """Append-only record of primitive ops, in topological order."""

    def __init__(self):
        self.nodes: list[_Node] = []

    def __enter__(self):
        if _active_tape() is not None:
            raise RuntimeError("a tape is already active in this thread")
        _STATE.tape = self
        return self

    def __exit__(self, exc_type, exc, tb):
        _STATE.tape = None
        return False

    def backward(self, loss: Tensor) -> None:
        """Accumulate d(loss)/d(tensor) for every recorded tensor."""
        if loss.data.size != 1:
            raise NotScalar(f"loss has shape {loss.data.shape}")
        loss.grad = np.ones_like(loss.data)
        for node in reversed(self.nodes):
            out_grad = node.out.grad
            if out_grad is None:
                continue
            grads = node.backward_fn(out_grad)
            for parent, grad in zip(node.parents, grads):
                if grad is None or not parent.requires_grad:
                    continue
                if parent.grad is None:
                    parent.grad = grad
                else:
                    parent.grad = parent.grad + grad


def backward(loss: Tensor) -> None:
    """Backward pass on the active tape."""
    tape = _active_tape()
    if tape is None:
        raise RuntimeError("backward requires an active tape")
    tape.backward(loss)


def _record(out_data, parents, backward_fn) -> Tensor:
    tape = _active_tape()
    needs = tape is not None and any(p.requires_grad for p in parents)
    out = Tensor(out_data, requires_grad=needs)
    if needs:
        tape.nodes.append(_Node(out, tuple(parents), backward_fn))
    return out


# ---------------------------------------------------------------------------
# primitives


def matmul(a: Tensor, b: Tensor) -> Tensor:
    if a.data.ndim != 2 or b.data.ndim != 2 or a.shape[1] != b.shape[0]:
        raise ShapeMismatch("matmul", a.shape, b.shape)
    out = a.data @ b.data

    def grad_fn(g):
        return g @ b.data.T, a.data.T @ g

    return _record(out, (a, b), grad_fn)


def add(a: Tensor, b: Tensor) -> Tensor:
    """Elementwise sum; ``b`` may be a row vector broadcast over rows."""
    if a.shape == b.shape:
        def grad_fn(g):
            return g, g
    elif a.data.ndim == 2 and b.data.ndim == 1 and b.shape[0] == a.shape[1]:
        def grad_fn(g):
            return g, g.sum(axis=0)
    else:
        raise ShapeMismatch("add", a.shape, b.shape)
    return _record(a.data + b.data, (a, b), grad_fn)


def mul(a: Tensor, b: Tensor) -> Tensor:
    """Elementwise product; ``b`` may be (m,1) or (1,n) against (m,n)."""
    ad, bd = a.data, b.data
    same = a.shape == b.shape
    col = ad.ndim == 2 and bd.shape == (ad.shape[0], 1)
    row = ad.ndim == 2 and bd.shape == (1, ad.shape[1])
    if not (same or col or row):
        raise ShapeMismatch("mul", a.shape, b.shape)

    def grad_fn(g):
        ga = g * bd
        gb = g * ad
        if col:
            gb = gb.sum(axis=1, keepdims=True)
        elif row:
            gb = gb.sum(axis=0, keepdims=True)
        return ga, gb

    return _record(ad * bd, (a, b), grad_fn)


def scale(a: Tensor, s: float) -> Tensor:
    s = float(s)

    def grad_fn(g):
        return (g * s,)

    return _record(a.data * s, (a,), grad_fn)


def tanh(a: Tensor) -> Tensor:
    out = np.tanh(a.data)

    def grad_fn(g):
        return (g * (1.0 - out * out),)

    return _record(out, (a,), grad_fn)


def sigmoid(a: Tensor) -> Tensor:
    out = 1.0 / (1.0 + np.exp(-a.data))

    def grad_fn(g):
        return (g * out * (1.0 - out),)

    return _record(out, (a,), grad_fn)


def _check_rows_2d(op, a):
    if a.data.ndim != 2:
        raise ShapeMismatch(op, a.shape)


def softmax(a: Tensor) -> Tensor:
    """Row softmax of a 2-D tensor; rows sum to one."""
    _check_rows_2d("softmax", a)
    shifted = a.data - a.data.max(axis=1, keepdims=True)
    e = np.exp(shifted)
    out = e / e.sum(axis=1, keepdims=True)
    if FINITE_CHECKS:
        tol = 1e-12 if out.dtype == np.float64 else 1e-5
        if not np.allclose(out.sum(axis=1), 1.0, atol=tol):
            raise FloatingPointError("softmax rows failed to normalize")

    def grad_fn(g):
        dot = (g * out).sum(axis=1, keepdims=True)
        return (out * (g - dot),)

    return _record(out, (a,), grad_fn)


def log_softmax(a: Tensor) -> Tensor:
    _check_rows_2d("log_softmax", a)
    shifted = a.data - a.data.max(axis=1, keepdims=True)
    lse = np.log(np.exp(shifted).sum(axis=1, keepdims=True))
    out = shifted - lse
    soft = np.exp(out)

    def grad_fn(g):
        return (g - soft * g.sum(axis=1, keepdims=True),)

    return _record(out, (a,), grad_fn)


def concat(tensors, axis: int = 1) -> Tensor:
    tensors = list(tensors)
    if axis not in (0, 1) or any(t.data.ndim != 2 for t in tensors):
        raise ShapeMismatch("concat", *[t.shape for t in tensors])
    widths = [t.shape[axis] for t in tensors]
    out = np.concatenate([t.data for t in tensors], axis=axis)
    offsets = np.cumsum([0] + widths)

    def grad_fn(g):
        if axis == 1:
            return tuple(
                g[:, offsets[i] : offsets[i + 1]] for i in range(len(tensors))
            )
        return tuple(g[offsets[i] : offsets[i + 1]] for i in range(len(tensors)))

    return _record(out, tuple(tensors), grad_fn)


def slice_cols(a: Tensor, start: int, stop: int) -> Tensor:
    _check_rows_2d("slice_cols", a)
    out = a.data[:, start:stop]

    def grad_fn(g):
        full = np.zeros_like(a.data)
        full[:, start:stop] = g
        return (full,)

    return _record(out, (a,), grad_fn)


def slice_rows(a: Tensor, start: int, stop: int) -> Tensor:
    _check_rows_2d("slice_rows", a)
    out = a.data[start:stop]

    def grad_fn(g):
        full = np.zeros_like(a.data)
        full[start:stop] = g
        return (full,)

    return _record(out, (a,), grad_fn)


def rows(table: Tensor, indices) -> Tensor:
    """Gather rows of a 2-D tensor; the embedding lookup."""
    _check_rows_2d("rows", table)
    idx = np.asarray(indices, dtype=np.intp)
    out = table.data[idx]

    def grad_fn(g):
        full = np.zeros_like(table.data)
        np.add.at(full, idx, g)
        return (full,)

    return _record(out, (table,), grad_fn)


def pick(a: Tensor, indices) -> Tensor:
    """Select one column per row, returning shape (rows, 1)."""
    _check_rows_2d("pick", a)
    idx = np.asarray(indices, dtype=np.intp)
    if idx.shape != (a.shape[0],):
        raise ShapeMismatch("pick", a.shape, idx.shape)
    rng = np.arange(a.shape[0])
    out = a.data[rng, idx][:, None]

    def grad_fn(g):
        full = np.zeros_like(a.data)
        np.add.at(full, (rng, idx), g[:, 0])
        return (full,)

    return _record(out, (a,), grad_fn)


def sum_all(a: Tensor) -> Tensor:
    out = np.asarray(a.data.sum(), dtype=a.data.dtype)

    def grad_fn(g):
        return (np.broadcast_to(g, a.data.shape).astype(a.data.dtype),)

    return _record(out, (a,), grad_fn)


def mean_all(a: Tensor) -> Tensor:
    return scale(sum_all(a), 1.0 / a.data.size)


def dropout(a: Tensor, p: float, rng: np.random.Generator) -> Tensor:
    """Inverted dropout; call only in training mode."""
    if p <= 0.0:
        return a
    keep = (rng.random(a.shape) >= p).astype(a.data.dtype) / (1.0 - p)
    return mul(a, Tensor(keep))


def glorot(rng: np.random.Generator, fan_in: int, fan_out: int, shape=None, dtype=np.float64) -> np.ndarray:
    """Uniform(-a, a) initialisation with a = sqrt(6 / (fan_in + fan_out))."""
    a = np.sqrt(6.0 / (fan_in + fan_out))
    if shape is None:
        shape = (fan_in, fan_out)
    return rng.uniform(-a, a, size=shape).astype(dtype)
