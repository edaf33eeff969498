"""Reverse-mode autodiff over numpy arrays.

A :class:`Tensor` wraps an ndarray; ops below record parents and a backward
closure, forming the computation trace. ``Tensor.backward()`` replays that
trace in reverse topological order and accumulates gradients into the leaves.
Construction order is deterministic, so identical inputs replay to
bit-identical outputs and gradients. Wrapping a forward pass in
:func:`no_grad` skips trace recording entirely.
"""

from __future__ import annotations

from contextlib import contextmanager

import numpy as np

from ..errors import InvalidArgumentError, ShapeMismatchError
from . import kernels

_grad_enabled = True


@contextmanager
def no_grad():
    """Disable trace recording inside the block (inference mode)."""
    global _grad_enabled
    prev = _grad_enabled
    _grad_enabled = False
    try:
        yield
    finally:
        _grad_enabled = prev


def grad_enabled() -> bool:
    return _grad_enabled


class Tensor:
    """An ndarray plus optional gradient buffer and trace links."""

    __slots__ = ("data", "grad", "requires_grad", "_parents", "_backward")

    def __init__(self, data, requires_grad: bool = False):
        self.data = np.asarray(data)
        self.grad: np.ndarray | None = None
        self.requires_grad = requires_grad
        self._parents: tuple[Tensor, ...] = ()
        self._backward = None

    @property
    def shape(self):
        return self.data.shape

    @property
    def dtype(self):
        return self.data.dtype

    def __repr__(self):
        return f"Tensor(shape={self.data.shape}, dtype={self.data.dtype}, grad={self.requires_grad})"

    def zero_grad(self):
        self.grad = None

    def backward(self):
        """Populate .grad on every requires_grad tensor reachable from this scalar."""
        if self.data.size != 1:
            raise InvalidArgumentError("backward() requires a scalar loss node")
        order: list[Tensor] = []
        seen: set[int] = set()
        stack: list[tuple[Tensor, bool]] = [(self, False)]
        while stack:
            node, expanded = stack.pop()
            if expanded:
                order.append(node)
                continue
            if id(node) in seen:
                continue
            seen.add(id(node))
            stack.append((node, True))
            for p in node._parents:
                if id(p) not in seen:
                    stack.append((p, False))
        self.grad = np.ones_like(self.data)
        for node in reversed(order):
            if node._backward is not None:
                node._backward(node.grad)


def _accumulate(t: Tensor, g: np.ndarray):
    if t.grad is None:
        t.grad = g.astype(t.data.dtype, copy=True) if g.dtype != t.data.dtype else g.copy()
    else:
        t.grad += g


def _needs(t: Tensor) -> bool:
    return t.requires_grad or bool(t._parents)


def _result(data, parents, backward):
    out = Tensor(data)
    if _grad_enabled and any(_needs(p) for p in parents):
        out._parents = tuple(parents)
        out._backward = backward
    return out


def constant(data) -> Tensor:
    return Tensor(np.asarray(data))


def parameter(data) -> Tensor:
    return Tensor(np.asarray(data), requires_grad=True)


# ---------------------------------------------------------------------------
# ops
# ---------------------------------------------------------------------------


def add(a: Tensor, b: Tensor) -> Tensor:
    if a.data.shape != b.data.shape:
        raise ShapeMismatchError(f"add: {a.data.shape} vs {b.data.shape}")
    data = a.data + b.data

    def backward(g):
        if _needs(a):
            _accumulate(a, g)
        if _needs(b):
            _accumulate(b, g)

    return _result(data, (a, b), backward)


def scale(a: Tensor, s: float) -> Tensor:
    data = a.data * a.data.dtype.type(s)

    def backward(g):
        if _needs(a):
            _accumulate(a, g * a.data.dtype.type(s))

    return _result(data, (a,), backward)


def relu(a: Tensor) -> Tensor:
    data = np.maximum(a.data, 0)

    def backward(g):
        if _needs(a):
            _accumulate(a, g * (a.data > 0))

    return _result(data, (a,), backward)


def conv2d(
    x: Tensor,
    w: Tensor,
    b: Tensor | None,
    padding: str = "zero",
    dilation: int = 1,
    center_mask: bool = False,
) -> Tensor:
    """Same-padded 2-D cross-correlation; with center_mask the middle tap of
    every filter is held at zero in both passes."""
    xb, squeezed = kernels.as_batched(x.data)
    record = _grad_enabled and (_needs(x) or _needs(w) or (b is not None and _needs(b)))
    out, cols = kernels.conv2d_forward(
        xb, w.data, None if b is None else b.data,
        padding=padding, dilation=dilation, center_mask=center_mask,
        need_cache=record,
    )
    data = out[0] if squeezed else out

    def backward(g):
        gb4 = g[None] if squeezed else g
        gx, gw, gbias = kernels.conv2d_backward(
            gb4, xb.shape, w.data, cols,
            padding=padding, dilation=dilation, center_mask=center_mask,
            need_gx=_needs(x),
        )
        if _needs(x):
            _accumulate(x, gx[0] if squeezed else gx)
        if _needs(w):
            _accumulate(w, gw)
        if b is not None and _needs(b):
            _accumulate(b, gbias)

    parents = (x, w) if b is None else (x, w, b)
    return _result(data, parents, backward)


def avgpool2(x: Tensor) -> Tensor:
    xb, squeezed = kernels.as_batched(x.data)
    out = kernels.avgpool2_forward(xb)
    data = out[0] if squeezed else out

    def backward(g):
        gx = kernels.avgpool2_backward(g[None] if squeezed else g, xb.shape)
        _accumulate(x, gx[0] if squeezed else gx)

    return _result(data, (x,), backward)


def linear(x: Tensor, w: Tensor, b: Tensor | None) -> Tensor:
    data = kernels.linear_forward(x.data, w.data, None if b is None else b.data)

    def backward(g):
        if _needs(x):
            _accumulate(x, g @ w.data)
        if _needs(w):
            if x.data.ndim == 1:
                _accumulate(w, np.outer(g, x.data))
            else:
                _accumulate(w, g.T @ x.data)
        if b is not None and _needs(b):
            _accumulate(b, g if g.ndim == 1 else g.sum(axis=0))

    parents = (x, w) if b is None else (x, w, b)
    return _result(data, parents, backward)


def flatten_samples(x: Tensor) -> Tensor:
    """(N,C,H,W) -> (N, C*H*W); (C,H,W) -> (C*H*W,)."""
    shape = x.data.shape
    if x.data.ndim == 4:
        data = x.data.reshape(shape[0], -1)
    elif x.data.ndim == 3:
        data = x.data.reshape(-1)
    else:
        raise ShapeMismatchError(f"flatten expects 3- or 4-d input, got {shape}")

    def backward(g):
        _accumulate(x, g.reshape(shape))

    return _result(data, (x,), backward)


def space_to_depth(x: Tensor, m: int) -> Tensor:
    xb, squeezed = kernels.as_batched(x.data)
    out = kernels.space_to_depth(xb, m)
    data = out[0] if squeezed else out

    def backward(g):
        gx = kernels.depth_to_space(g[None] if squeezed else g, m)
        _accumulate(x, gx[0] if squeezed else gx)

    return _result(data, (x,), backward)


def depth_to_space(x: Tensor, m: int) -> Tensor:
    xb, squeezed = kernels.as_batched(x.data)
    out = kernels.depth_to_space(xb, m)
    data = out[0] if squeezed else out

    def backward(g):
        gx = kernels.space_to_depth(g[None] if squeezed else g, m)
        _accumulate(x, gx[0] if squeezed else gx)

    return _result(data, (x,), backward)


def softmax_cross_entropy(logits: Tensor, labels, reduction: str = "mean") -> Tensor:
    """Stabilized -log softmax(logits)[label]; accepts (L,) with an int label
    or (B,L) with an int array, reduced by mean or sum."""
    single = logits.data.ndim == 1
    z = logits.data[None] if single else logits.data
    y = np.atleast_1d(np.asarray(labels, dtype=np.int64))
    if z.ndim != 2 or y.shape[0] != z.shape[0]:
        raise ShapeMismatchError(f"logits {logits.data.shape} vs labels {y.shape}")
    if np.any(y < 0) or np.any(y >= z.shape[1]):
        raise InvalidArgumentError(f"label out of range [0, {z.shape[1]})")
    if reduction not in ("mean", "sum"):
        raise InvalidArgumentError(f"unknown reduction {reduction!r}")
    zmax = z.max(axis=1, keepdims=True)
    shifted = z - zmax
    lse = np.log(np.exp(shifted).sum(axis=1))
    losses = lse - shifted[np.arange(z.shape[0]), y]
    loss = losses.mean() if reduction == "mean" else losses.sum()
    data = np.asarray(loss, dtype=logits.data.dtype)

    def backward(g):
        p = kernels.softmax(z)
        p[np.arange(z.shape[0]), y] -= 1
        if reduction == "mean":
            p /= z.shape[0]
        gl = p * g
        _accumulate(logits, gl[0] if single else gl)

    return _result(data, (logits,), backward)


def mse(a: Tensor, b: Tensor) -> Tensor:
    """Mean of elementwise squared differences."""
    if a.data.shape != b.data.shape:
        raise ShapeMismatchError(f"mse: {a.data.shape} vs {b.data.shape}")
    diff = a.data - b.data
    n = diff.size
    data = np.asarray((diff * diff).mean(), dtype=a.data.dtype)

    def backward(g):
        gd = diff * (2.0 * g / n)
        if _needs(a):
            _accumulate(a, gd)
        if _needs(b):
            _accumulate(b, -gd)

    return _result(data, (a, b), backward)


def sum_all(x: Tensor) -> Tensor:
    data = np.asarray(x.data.sum(), dtype=x.data.dtype)

    def backward(g):
        _accumulate(x, np.full_like(x.data, g))

    return _result(data, (x,), backward)


def inner(x: Tensor, weights: np.ndarray) -> Tensor:
    """sum(x * weights) against a constant weighting; handy for reducing any
    op output to a scalar in gradient checks."""
    if x.data.shape != weights.shape:
        raise ShapeMismatchError(f"inner: {x.data.shape} vs {weights.shape}")
    data = np.asarray((x.data * weights).sum(), dtype=x.data.dtype)

    def backward(g):
        _accumulate(x, weights * g)

    return _result(data, (x,), backward)
