"""Dense float64 tensors with reverse-mode differentiation on an explicit tape.

Design notes:

* Storage and vectorized arithmetic are numpy; differentiation bookkeeping is
  done here.  Everything is float64.
* Ops record onto the innermost active :class:`Tape` (a context manager) when
  any input requires gradients.  Outside a tape, ops run as plain forward
  arithmetic -- that is the inference mode.
* ``Tape.backward`` replays the recorded ops in exact reverse execution order
  and accumulates gradients into the ``grad`` buffer of every reachable leaf
  that requires them.  Repeated calls accumulate additively; use
  :meth:`Tensor.zero_grad` between optimizer steps.
* Tapes are single-threaded by contract: one training step builds and
  consumes one tape.  Tensors themselves are safe to read concurrently.
"""

from __future__ import annotations

from typing import Callable, Iterable, Sequence

import numpy as np

from .errors import InvalidKernel, NotScalar, PreformerError, ShapeMismatch

__all__ = [
    "Tensor",
    "Tape",
    "apply_op",
    "backward",
    "add",
    "sub",
    "mul",
    "neg",
    "matmul",
    "relu",
    "exp",
    "softmax",
    "avg_pool_1d",
    "concat",
    "narrow",
    "reshape",
    "swapaxes",
    "broadcast_to",
    "dropout",
    "zero_grads",
]


class Tensor:
    """N-dimensional float64 array that can participate in a gradient tape."""

    __slots__ = ("data", "requires_grad", "grad", "_tape")

    def __init__(self, data, requires_grad: bool = False):
        self.data = np.asarray(data, dtype=np.float64)
        self.requires_grad = bool(requires_grad)
        self.grad: np.ndarray | None = None
        self._tape: Tape | None = None

    @property
    def shape(self) -> tuple[int, ...]:
        return self.data.shape

    @property
    def ndim(self) -> int:
        return self.data.ndim

    def zero_grad(self) -> None:
        self.grad = None

    # -- convenience arithmetic -------------------------------------------
    def __add__(self, other):
        return add(self, other)

    __radd__ = __add__

    def __sub__(self, other):
        return sub(self, other)

    def __rsub__(self, other):
        return sub(_as_tensor(other), self)

    def __mul__(self, other):
        return mul(self, other)

    __rmul__ = __mul__

    def __neg__(self):
        return neg(self)

    def __matmul__(self, other):
        return matmul(self, other)

    def sum(self, axis=None, keepdims: bool = False):
        return tensor_sum(self, axis=axis, keepdims=keepdims)

    def mean(self, axis=None, keepdims: bool = False):
        return tensor_mean(self, axis=axis, keepdims=keepdims)

    def reshape(self, shape):
        return reshape(self, shape)

    def swapaxes(self, a: int, b: int):
        return swapaxes(self, a, b)

    def __repr__(self):
        flag = ", requires_grad=True" if self.requires_grad else ""
        return f"Tensor(shape={self.data.shape}{flag})"


class Tape:
    """Ordered record of executed differentiable ops.

    Backward traversal visits ops in exact reverse execution order, which
    makes gradient accumulation bit-deterministic across identical runs.
    """

    _active: list["Tape"] = []

    def __init__(self):
        self._nodes: list[tuple[Tensor, tuple[Tensor, ...], Callable]] = []

    def __enter__(self) -> "Tape":
        Tape._active.append(self)
        return self

    def __exit__(self, exc_type, exc, tb) -> None:
        Tape._active.pop()

    @staticmethod
    def current() -> "Tape | None":
        return Tape._active[-1] if Tape._active else None

    def backward(self, loss: Tensor) -> None:
        """Accumulate d(loss)/d(leaf) into every reachable requires_grad leaf."""
        if loss.data.size != 1:
            raise NotScalar(f"loss has {loss.data.size} elements, expected one")
        pending: dict[int, list] = {id(loss): [loss, np.ones_like(loss.data)]}
        for out, inputs, backward_fn in reversed(self._nodes):
            entry = pending.pop(id(out), None)
            if entry is None:
                continue
            for tensor, grad in zip(inputs, backward_fn(entry[1])):
                if grad is None or not tensor.requires_grad:
                    continue
                slot = pending.get(id(tensor))
                if slot is None:
                    pending[id(tensor)] = [tensor, grad]
                else:
                    slot[1] = slot[1] + grad
        for tensor, grad in pending.values():
            if tensor.requires_grad:
                tensor.grad = grad if tensor.grad is None else tensor.grad + grad


def backward(loss: Tensor) -> None:
    """Run reverse-mode accumulation from a scalar loss on its recording tape."""
    if loss.data.size != 1:
        raise NotScalar(f"loss has {loss.data.size} elements, expected one")
    if loss._tape is None:
        raise PreformerError("loss was not recorded on a tape")
    loss._tape.backward(loss)


def zero_grads(tensors: Iterable[Tensor]) -> None:
    for t in tensors:
        t.zero_grad()


def apply_op(
    out_data: np.ndarray,
    inputs: Sequence[Tensor],
    backward_fn: Callable[[np.ndarray], Sequence[np.ndarray | None]],
) -> Tensor:
    """Wrap an op result, recording it if a tape is active and grads flow."""
    tape = Tape.current()
    track = tape is not None and any(t.requires_grad for t in inputs)
    out = Tensor(out_data, requires_grad=track)
    if track:
        tape._nodes.append((out, tuple(inputs), backward_fn))
        out._tape = tape
    return out


def _as_tensor(x) -> Tensor:
    return x if isinstance(x, Tensor) else Tensor(np.asarray(x, dtype=np.float64))


def _unbroadcast(grad: np.ndarray, shape: tuple[int, ...]) -> np.ndarray:
    """Sum a broadcast gradient back down to the operand's shape."""
    if grad.shape == shape:
        return grad
    extra = grad.ndim - len(shape)
    if extra > 0:
        grad = grad.sum(axis=tuple(range(extra)))
    axes = tuple(i for i, s in enumerate(shape) if s == 1 and grad.shape[i] != 1)
    if axes:
        grad = grad.sum(axis=axes, keepdims=True)
    return grad.reshape(shape)


def _check_broadcast(a: Tensor, b: Tensor) -> None:
    try:
        np.broadcast_shapes(a.data.shape, b.data.shape)
    except ValueError as err:
        raise ShapeMismatch(
            f"operands {a.data.shape} and {b.data.shape} do not broadcast"
        ) from err


# -- elementwise ops -------------------------------------------------------


def add(a, b) -> Tensor:
    a, b = _as_tensor(a), _as_tensor(b)
    _check_broadcast(a, b)

    def bwd(g):
        return _unbroadcast(g, a.data.shape), _unbroadcast(g, b.data.shape)

    return apply_op(a.data + b.data, (a, b), bwd)


def sub(a, b) -> Tensor:
    a, b = _as_tensor(a), _as_tensor(b)
    _check_broadcast(a, b)

    def bwd(g):
        return _unbroadcast(g, a.data.shape), _unbroadcast(-g, b.data.shape)

    return apply_op(a.data - b.data, (a, b), bwd)


def mul(a, b) -> Tensor:
    a, b = _as_tensor(a), _as_tensor(b)
    _check_broadcast(a, b)
    ad, bd = a.data, b.data

    def bwd(g):
        ga = _unbroadcast(g * bd, ad.shape) if a.requires_grad else None
        gb = _unbroadcast(g * ad, bd.shape) if b.requires_grad else None
        return ga, gb

    return apply_op(ad * bd, (a, b), bwd)


def neg(a: Tensor) -> Tensor:
    a = _as_tensor(a)
    return apply_op(-a.data, (a,), lambda g: (-g,))


def relu(a: Tensor) -> Tensor:
    a = _as_tensor(a)
    mask = a.data > 0

    def bwd(g):
        return (g * mask,)

    return apply_op(np.maximum(a.data, 0.0), (a,), bwd)


def exp(a: Tensor) -> Tensor:
    a = _as_tensor(a)
    out_data = np.exp(a.data)

    def bwd(g):
        return (g * out_data,)

    return apply_op(out_data, (a,), bwd)


# -- linear algebra --------------------------------------------------------


def matmul(a: Tensor, b: Tensor) -> Tensor:
    """Batched matrix product with numpy broadcasting over leading axes."""
    a, b = _as_tensor(a), _as_tensor(b)
    if a.ndim < 2 or b.ndim < 2:
        raise ShapeMismatch("matmul expects operands with at least 2 dims")
    if a.data.shape[-1] != b.data.shape[-2]:
        raise ShapeMismatch(
            f"inner dims differ: {a.data.shape} @ {b.data.shape}"
        )
    ad, bd = a.data, b.data

    def bwd(g):
        ga = gb = None
        if a.requires_grad:
            ga = _unbroadcast(np.matmul(g, np.swapaxes(bd, -1, -2)), ad.shape)
        if b.requires_grad:
            gb = _unbroadcast(np.matmul(np.swapaxes(ad, -1, -2), g), bd.shape)
        return ga, gb

    return apply_op(np.matmul(ad, bd), (a, b), bwd)


# -- reductions ------------------------------------------------------------


def _expand_reduced(g: np.ndarray, shape, axis, keepdims: bool) -> np.ndarray:
    if axis is None:
        return np.broadcast_to(g, shape)
    if not keepdims:
        axes = axis if isinstance(axis, tuple) else (axis,)
        for ax in sorted(ax % len(shape) for ax in axes):
            g = np.expand_dims(g, ax)
    return np.broadcast_to(g, shape)


def tensor_sum(a: Tensor, axis=None, keepdims: bool = False) -> Tensor:
    a = _as_tensor(a)
    shape = a.data.shape

    def bwd(g):
        return (_expand_reduced(g, shape, axis, keepdims),)

    return apply_op(a.data.sum(axis=axis, keepdims=keepdims), (a,), bwd)


def tensor_mean(a: Tensor, axis=None, keepdims: bool = False) -> Tensor:
    a = _as_tensor(a)
    shape = a.data.shape
    out_data = a.data.mean(axis=axis, keepdims=keepdims)
    count = a.data.size / max(out_data.size, 1)

    def bwd(g):
        return (_expand_reduced(g, shape, axis, keepdims) / count,)

    return apply_op(out_data, (a,), bwd)


# -- softmax ---------------------------------------------------------------


def softmax(a: Tensor, axis: int) -> Tensor:
    """Max-stabilized exp-normalize along ``axis``; rows sum to one."""
    a = _as_tensor(a)
    z = a.data - a.data.max(axis=axis, keepdims=True)
    e = np.exp(z)
    out_data = e / e.sum(axis=axis, keepdims=True)

    def bwd(g):
        inner = (g * out_data).sum(axis=axis, keepdims=True)
        return ((g - inner) * out_data,)

    return apply_op(out_data, (a,), bwd)


# -- moving average --------------------------------------------------------


def avg_pool_1d(a: Tensor, kernel: int) -> Tensor:
    """Stride-1 centered moving average along the length axis (axis -2).

    Boundaries replicate the first/last time step so the output length equals
    the input length.  The kernel must be odd, positive, and at most 2L-1.
    """
    a = _as_tensor(a)
    if a.ndim < 2:
        raise ShapeMismatch("avg_pool_1d expects a (..., L, d) tensor")
    if not isinstance(kernel, (int, np.integer)) or kernel <= 0 or kernel % 2 == 0:
        raise InvalidKernel(f"kernel must be a positive odd int, got {kernel!r}")
    length = a.data.shape[-2]
    if kernel > 2 * length - 1:
        raise InvalidKernel(
            f"kernel {kernel} exceeds 2L-1 = {2 * length - 1} for length {length}"
        )
    if kernel == 1:
        return apply_op(a.data.copy(), (a,), lambda g: (g,))

    half = (kernel - 1) // 2
    x = a.data
    padded = np.concatenate(
        [
            np.repeat(x[..., :1, :], half, axis=-2),
            x,
            np.repeat(x[..., -1:, :], half, axis=-2),
        ],
        axis=-2,
    )
    zero_row = np.zeros_like(padded[..., :1, :])
    csum = np.concatenate([zero_row, np.cumsum(padded, axis=-2)], axis=-2)
    out_data = (csum[..., kernel:, :] - csum[..., :-kernel, :]) / kernel

    def bwd(g):
        # adjoint of valid box filter: full correlation of g with ones(kernel)
        zrow = np.zeros_like(g[..., :1, :])
        s = np.concatenate([zrow, np.cumsum(g, axis=-2)], axis=-2)
        idx = np.arange(length + 2 * half)
        hi = np.minimum(idx + 1, length)
        lo = np.maximum(idx - kernel + 1, 0)
        gpad = (np.take(s, hi, axis=-2) - np.take(s, lo, axis=-2)) / kernel
        if length == 1:
            return (gpad.sum(axis=-2, keepdims=True),)
        head = gpad[..., : half + 1, :].sum(axis=-2, keepdims=True)
        mid = gpad[..., half + 1 : half + length - 1, :]
        tail = gpad[..., half + length - 1 :, :].sum(axis=-2, keepdims=True)
        return (np.concatenate([head, mid, tail], axis=-2),)

    return apply_op(out_data, (a,), bwd)


# -- shape ops ---------------------------------------------------------------


def concat(tensors: Sequence[Tensor], axis: int) -> Tensor:
    tensors = [_as_tensor(t) for t in tensors]
    sizes = [t.data.shape[axis] for t in tensors]
    bounds = np.cumsum(sizes)[:-1]

    def bwd(g):
        return np.split(g, bounds, axis=axis)

    try:
        out_data = np.concatenate([t.data for t in tensors], axis=axis)
    except ValueError as err:
        raise ShapeMismatch(str(err)) from err
    return apply_op(out_data, tuple(tensors), bwd)


def narrow(a: Tensor, axis: int, start: int, length: int) -> Tensor:
    """Contiguous slice [start, start+length) along ``axis``."""
    a = _as_tensor(a)
    index = [slice(None)] * a.ndim
    index[axis] = slice(start, start + length)
    index = tuple(index)
    if a.data.shape[axis] < start + length:
        raise ShapeMismatch(
            f"narrow [{start}:{start + length}) exceeds axis {axis} of {a.data.shape}"
        )

    def bwd(g):
        full = np.zeros_like(a.data)
        full[index] = g
        return (full,)

    return apply_op(a.data[index], (a,), bwd)


def reshape(a: Tensor, shape) -> Tensor:
    a = _as_tensor(a)
    shape = tuple(shape)
    try:
        out_data = a.data.reshape(shape)
    except ValueError as err:
        raise ShapeMismatch(str(err)) from err
    orig = a.data.shape

    def bwd(g):
        return (g.reshape(orig),)

    return apply_op(out_data, (a,), bwd)


def swapaxes(a: Tensor, ax1: int, ax2: int) -> Tensor:
    a = _as_tensor(a)

    def bwd(g):
        return (np.swapaxes(g, ax1, ax2),)

    return apply_op(np.swapaxes(a.data, ax1, ax2), (a,), bwd)


def broadcast_to(a: Tensor, shape) -> Tensor:
    a = _as_tensor(a)
    shape = tuple(shape)
    orig = a.data.shape

    def bwd(g):
        return (_unbroadcast(g, orig),)

    return apply_op(np.broadcast_to(a.data, shape), (a,), bwd)


def dropout(a: Tensor, p: float, rng: np.random.Generator, training: bool) -> Tensor:
    """Inverted dropout; identity (same object) when not training or p == 0."""
    if not training or p <= 0.0:
        return a
    a = _as_tensor(a)
    mask = (rng.random(a.data.shape) >= p) / (1.0 - p)

    def bwd(g):
        return (g * mask,)

    return apply_op(a.data * mask, (a,), bwd)
