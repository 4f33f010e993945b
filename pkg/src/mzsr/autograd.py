"""Small reverse-mode autodiff engine over float64 numpy arrays.

Every backward rule is written in terms of the differentiable ops defined
here, so running :func:`backward` with ``create_graph=True`` returns
gradients that are graph nodes themselves. Differentiating those again gives
second-order terms (gradient through a gradient step).

The graph is implicit: each tracked tensor keeps references to its parents
and a monotonically increasing ``node_id``. Parents always have smaller ids
than their children, so sorting by id is a valid topological order.
"""
from __future__ import annotations

import itertools
from contextlib import contextmanager
from typing import Callable, Iterator, Optional, Sequence

import numpy as np

_node_ids = itertools.count()
_grad_enabled = True


@contextmanager
def no_grad() -> Iterator[None]:
    """Disable graph recording inside the block."""
    global _grad_enabled
    prev = _grad_enabled
    _grad_enabled = False
    try:
        yield
    finally:
        _grad_enabled = prev


@contextmanager
def _grad_mode(enabled: bool) -> Iterator[None]:
    global _grad_enabled
    prev = _grad_enabled
    _grad_enabled = enabled
    try:
        yield
    finally:
        _grad_enabled = prev


BackwardFn = Callable[["Tensor"], Sequence[Optional["Tensor"]]]


class Tensor:
    """Immutable n-d float64 array that may sit in a computation graph."""

    __slots__ = ("data", "requires_grad", "parents", "backward_fn", "op", "node_id")

    def __init__(self, data, requires_grad: bool = False):
        arr = np.array(data, dtype=np.float64)
        arr.flags.writeable = False
        self.data = arr
        self.requires_grad = bool(requires_grad)
        self.parents: tuple[Tensor, ...] = ()
        self.backward_fn: Optional[BackwardFn] = None
        self.op = "leaf"
        self.node_id = next(_node_ids)

    @property
    def shape(self) -> tuple[int, ...]:
        return self.data.shape

    @property
    def size(self) -> int:
        return self.data.size

    @property
    def ndim(self) -> int:
        return self.data.ndim

    def numpy(self) -> np.ndarray:
        return self.data

    def item(self) -> float:
        if self.data.size != 1:
            raise ValueError(f"item() needs a single element, got shape {self.shape}")
        return float(self.data.reshape(()))

    def detach(self) -> "Tensor":
        """Same values, cut from the graph."""
        return Tensor(self.data, requires_grad=False)

    def __repr__(self) -> str:
        tag = f", op={self.op}" if self.parents else ""
        return f"Tensor(shape={self.shape}{tag}, requires_grad={self.requires_grad})"

    def __add__(self, other):
        return add(self, _as_tensor(other, self))

    __radd__ = __add__

    def __sub__(self, other):
        return sub(self, _as_tensor(other, self))

    def __rsub__(self, other):
        return sub(_as_tensor(other, self), self)

    def __neg__(self):
        return mul_scalar(self, -1.0)

    def __mul__(self, other):
        if isinstance(other, Tensor):
            return mul(self, other)
        return mul_scalar(self, float(other))

    __rmul__ = __mul__


def _as_tensor(x, like: Tensor) -> Tensor:
    if isinstance(x, Tensor):
        return x
    return Tensor(np.broadcast_to(np.asarray(x, dtype=np.float64), like.shape))


def _node(data: np.ndarray, parents: Sequence[Tensor], backward_fn: BackwardFn, op: str) -> Tensor:
    out = Tensor.__new__(Tensor)
    data = np.asarray(data, dtype=np.float64)
    data.flags.writeable = False
    out.data = data
    out.node_id = next(_node_ids)
    out.op = op
    if _grad_enabled and any(p.requires_grad for p in parents):
        out.requires_grad = True
        out.parents = tuple(parents)
        out.backward_fn = backward_fn
    else:
        out.requires_grad = False
        out.parents = ()
        out.backward_fn = None
    return out


def _check_same_shape(a: Tensor, b: Tensor, op: str) -> None:
    if a.shape != b.shape:
        raise ValueError(f"{op}: shape mismatch {a.shape} vs {b.shape}")


# ---------------------------------------------------------------- elementwise


def add(a: Tensor, b: Tensor) -> Tensor:
    _check_same_shape(a, b, "add")
    return _node(a.data + b.data, (a, b), lambda g: (g, g), "add")


def sub(a: Tensor, b: Tensor) -> Tensor:
    _check_same_shape(a, b, "sub")
    return _node(a.data - b.data, (a, b), lambda g: (g, mul_scalar(g, -1.0)), "sub")


def mul_scalar(a: Tensor, c: float) -> Tensor:
    c = float(c)
    return _node(a.data * c, (a,), lambda g: (mul_scalar(g, c),), "mul_scalar")


def mul(a: Tensor, b: Tensor) -> Tensor:
    _check_same_shape(a, b, "mul")

    def backward(g):
        return (mul(g, b) if a.requires_grad else None, mul(g, a) if b.requires_grad else None)

    return _node(a.data * b.data, (a, b), backward, "mul")


def mul_const(a: Tensor, const: np.ndarray) -> Tensor:
    """Multiply by a fixed array that is not part of the graph."""
    const = np.asarray(const, dtype=np.float64)
    if const.shape != a.shape:
        raise ValueError(f"mul_const: shape mismatch {a.shape} vs {const.shape}")
    return _node(a.data * const, (a,), lambda g: (mul_const(g, const),), "mul_const")


def relu(x: Tensor) -> Tensor:
    mask = (x.data > 0).astype(np.float64)
    return _node(x.data * mask, (x,), lambda g: (mul_const(g, mask),), "relu")


def absolute(x: Tensor) -> Tensor:
    sign = np.sign(x.data)
    return _node(np.abs(x.data), (x,), lambda g: (mul_const(g, sign),), "abs")


# ---------------------------------------------------------------- reductions


def sum_all(x: Tensor) -> Tensor:
    shape = x.shape
    return _node(np.sum(x.data), (x,), lambda g: (expand(g, shape),), "sum")


def expand(x: Tensor, shape: tuple[int, ...]) -> Tensor:
    """Broadcast a single-element tensor to ``shape``."""
    if x.size != 1:
        raise ValueError(f"expand: needs a single-element tensor, got {x.shape}")
    shape = tuple(shape)
    src = x.shape
    return _node(
        np.broadcast_to(x.data.reshape(()), shape).copy(),
        (x,),
        lambda g: (reshape(sum_all(g), src),),
        "expand",
    )


def reshape(x: Tensor, shape: tuple[int, ...]) -> Tensor:
    src = x.shape
    return _node(x.data.reshape(shape), (x,), lambda g: (reshape(g, src),), "reshape")


def mean(x: Tensor) -> Tensor:
    return mul_scalar(sum_all(x), 1.0 / x.size)


def channel_sum(x: Tensor) -> Tensor:
    """Sum an NCHW tensor over N, H, W leaving shape (C,)."""
    if x.ndim != 4:
        raise ValueError(f"channel_sum: expected NCHW, got {x.shape}")
    shape = x.shape
    return _node(x.data.sum(axis=(0, 2, 3)), (x,), lambda g: (broadcast_channels(g, shape),), "channel_sum")


def broadcast_channels(b: Tensor, shape: tuple[int, ...]) -> Tensor:
    if b.ndim != 1 or len(shape) != 4 or shape[1] != b.shape[0]:
        raise ValueError(f"broadcast_channels: cannot spread {b.shape} over {shape}")
    data = np.broadcast_to(b.data[None, :, None, None], shape).copy()
    return _node(data, (b,), lambda g: (channel_sum(g),), "broadcast_channels")


def add_channel_bias(x: Tensor, b: Tensor) -> Tensor:
    if x.ndim != 4 or b.shape != (x.shape[1],):
        raise ValueError(f"bias of shape {b.shape} does not match {x.shape[1]} channels")

    def backward(g):
        return g, channel_sum(g) if b.requires_grad else None

    return _node(x.data + b.data[None, :, None, None], (x, b), backward, "add_bias")


# ---------------------------------------------------------------- convolution
#
# conv2d, its input-gradient and its weight-gradient are the three partial
# derivatives of the trilinear form <g, conv(x, w)>. Each one's backward is
# expressed through the other two, so the family is closed under
# differentiation to any order.


def _pad_or_crop(x: np.ndarray, ph: int, pw: int) -> np.ndarray:
    if ph >= 0 and pw >= 0:
        if ph == 0 and pw == 0:
            return x
        return np.pad(x, ((0, 0), (0, 0), (ph, ph), (pw, pw)))
    h0, w0 = max(-ph, 0), max(-pw, 0)
    x = x[:, :, h0 : x.shape[2] - h0, w0 : x.shape[3] - w0]
    return _pad_or_crop(x, max(ph, 0), max(pw, 0))


def _im2col(xp: np.ndarray, kh: int, kw: int) -> np.ndarray:
    """(N,C,H,W) padded input to a (C*kh*kw, N*Ho*Wo) column matrix."""
    n, c, h, w = xp.shape
    ho, wo = h - kh + 1, w - kw + 1
    cols = np.empty((c, kh, kw, n, ho, wo))
    xt = xp.transpose(1, 0, 2, 3)
    for i in range(kh):
        for j in range(kw):
            cols[:, i, j] = xt[:, :, i : i + ho, j : j + wo]
    return cols.reshape(c * kh * kw, n * ho * wo)


def _correlate(x: np.ndarray, w: np.ndarray, padding: int) -> np.ndarray:
    xp = _pad_or_crop(x, padding, padding)
    o, _, kh, kw = w.shape
    ho, wo = xp.shape[2] - kh + 1, xp.shape[3] - kw + 1
    out = w.reshape(o, -1) @ _im2col(xp, kh, kw)
    return np.ascontiguousarray(out.reshape(o, x.shape[0], ho, wo).transpose(1, 0, 2, 3))


def _correlate_input_grad(g: np.ndarray, w: np.ndarray, padding: int) -> np.ndarray:
    kh, kw = w.shape[2:]
    gp = _pad_or_crop(g, kh - 1 - padding, kw - 1 - padding)
    w_flip = np.ascontiguousarray(w[:, :, ::-1, ::-1].transpose(1, 0, 2, 3))
    return _correlate(gp, w_flip, 0)


def _correlate_weight_grad(x: np.ndarray, g: np.ndarray, padding: int) -> np.ndarray:
    xp = _pad_or_crop(x, padding, padding)
    n, o, ho, wo = g.shape
    kh, kw = xp.shape[2] - ho + 1, xp.shape[3] - wo + 1
    gm = g.transpose(1, 0, 2, 3).reshape(o, -1)
    return (gm @ _im2col(xp, kh, kw).T).reshape(o, x.shape[1], kh, kw)


def _conv_raw(x: Tensor, w: Tensor, padding: int) -> Tensor:
    def backward(g):
        return (
            _conv_input_grad(g, w, padding) if x.requires_grad else None,
            _conv_weight_grad(x, g, padding) if w.requires_grad else None,
        )

    return _node(_correlate(x.data, w.data, padding), (x, w), backward, "conv2d")


def _conv_input_grad(g: Tensor, w: Tensor, padding: int) -> Tensor:
    def backward(gx):
        return (
            _conv_raw(gx, w, padding) if g.requires_grad else None,
            _conv_weight_grad(gx, g, padding) if w.requires_grad else None,
        )

    return _node(_correlate_input_grad(g.data, w.data, padding), (g, w), backward, "conv2d_input_grad")


def _conv_weight_grad(x: Tensor, g: Tensor, padding: int) -> Tensor:
    def backward(gw):
        return (
            _conv_input_grad(g, gw, padding) if x.requires_grad else None,
            _conv_raw(x, gw, padding) if g.requires_grad else None,
        )

    return _node(_correlate_weight_grad(x.data, g.data, padding), (x, g), backward, "conv2d_weight_grad")


def conv2d(x: Tensor, weight: Tensor, bias: Optional[Tensor] = None, padding: int = 0) -> Tensor:
    """Stride-1 2-D cross-correlation, NCHW input and OIhw weight."""
    if x.ndim != 4:
        raise ValueError(f"conv2d: input must be NCHW, got shape {x.shape}")
    if weight.ndim != 4:
        raise ValueError(f"conv2d: weight must be OIhw, got shape {weight.shape}")
    if x.shape[1] != weight.shape[1]:
        raise ValueError(
            f"conv2d: input has {x.shape[1]} channels but weight expects {weight.shape[1]}"
        )
    if padding < 0:
        raise ValueError(f"conv2d: padding must be >= 0, got {padding}")
    kh, kw = weight.shape[2:]
    if x.shape[2] + 2 * padding < kh or x.shape[3] + 2 * padding < kw:
        raise ValueError(
            f"conv2d: kernel {kh}x{kw} larger than padded input {x.shape[2:]} (padding {padding})"
        )
    out = _conv_raw(x, weight, padding)
    if bias is not None:
        if bias.shape != (weight.shape[0],):
            raise ValueError(f"conv2d: bias shape {bias.shape} != ({weight.shape[0]},)")
        out = add_channel_bias(out, bias)
    return out


# ---------------------------------------------------------------- losses


def l1_loss(pred: Tensor, target: Tensor) -> Tensor:
    """Mean absolute error over all elements."""
    _check_same_shape(pred, target, "l1_loss")
    return mean(absolute(sub(pred, target)))


# ---------------------------------------------------------------- backward


def _reachable(root: Tensor) -> list[Tensor]:
    seen: dict[int, Tensor] = {}
    stack = [root]
    while stack:
        t = stack.pop()
        if t.node_id in seen or not t.requires_grad:
            continue
        seen[t.node_id] = t
        stack.extend(t.parents)
    return sorted(seen.values(), key=lambda t: t.node_id, reverse=True)


def backward(loss: Tensor, wrt: Sequence[Tensor], create_graph: bool = False) -> list[Tensor]:
    """Gradients of a scalar ``loss`` with respect to each tensor in ``wrt``.

    With ``create_graph=True`` the returned gradients are differentiable
    nodes that depend on the same leaves as ``loss``.
    """
    if loss.size != 1:
        raise ValueError(f"backward: loss must be a scalar, got shape {loss.shape}")
    order = _reachable(loss)
    in_graph = {t.node_id for t in order}
    for i, t in enumerate(wrt):
        if t.node_id not in in_graph:
            raise ValueError(f"backward: wrt[{i}] {t!r} is not reachable from the loss")

    grads: dict[int, Tensor] = {loss.node_id: Tensor(np.ones(loss.shape))}
    with _grad_mode(create_graph):
        for node in order:
            g = grads.get(node.node_id)
            if g is None or node.backward_fn is None:
                continue
            for parent, pg in zip(node.parents, node.backward_fn(g)):
                if pg is None or not parent.requires_grad:
                    continue
                prev = grads.get(parent.node_id)
                grads[parent.node_id] = pg if prev is None else add(prev, pg)

    out = []
    for t in wrt:
        g = grads.get(t.node_id)
        out.append(g if g is not None else Tensor(np.zeros(t.shape)))
    return out
