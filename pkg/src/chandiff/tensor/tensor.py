"""Dense tensors with reverse-mode automatic differentiation.

Values are float64 unless a :func:`precision` block selects float32.

Every operation on :class:`Tensor` values records a node (op name, parent
tensors, and a closure holding whatever cached values the gradient needs)
while recording is enabled.  :func:`backward` walks those nodes once in
reverse topological order.
"""

from __future__ import annotations

import contextlib
from typing import Callable, Iterable, Sequence

import numpy as np
from numpy.lib.stride_tricks import sliding_window_view
from scipy.special import expit

__all__ = [
    "Tensor",
    "as_tensor",
    "backward",
    "grad",
    "no_grad",
    "is_recording",
    "precision",
    "default_dtype",
    "add",
    "sub",
    "mul",
    "div",
    "neg",
    "power",
    "exp",
    "log",
    "sigmoid",
    "silu",
    "softplus",
    "softmax",
    "matmul",
    "reshape",
    "transpose",
    "getitem",
    "concat",
    "stack",
    "pad",
    "tsum",
    "mean",
    "conv2d",
    "group_norm",
    "upsample_nearest",
    "bce_with_logits",
]

_recording = True


@contextlib.contextmanager
def no_grad():
    """Disable graph recording inside the block."""
    global _recording
    previous = _recording
    _recording = False
    try:
        yield
    finally:
        _recording = previous


def is_recording() -> bool:
    return _recording


_dtype = np.dtype(np.float64)


@contextlib.contextmanager
def precision(dtype):
    """Compute in ``dtype`` (float32 or float64) inside the block."""
    global _dtype
    dtype = np.dtype(dtype)
    if dtype not in (np.float32, np.float64):
        raise ValueError(f"unsupported precision {dtype}")
    previous = _dtype
    _dtype = dtype
    try:
        yield
    finally:
        _dtype = previous


def default_dtype() -> np.dtype:
    return _dtype


class Tensor:
    __slots__ = ("data", "grad", "requires_grad", "op", "_parents", "_backward")
    __array_priority__ = 1000

    def __init__(self, data, requires_grad: bool = False):
        arr = np.asarray(data, dtype=_dtype)
        if arr.ndim == 0:
            arr = arr.reshape(())
        self.data = arr
        self.grad: np.ndarray | None = None
        self.requires_grad = bool(requires_grad)
        self.op = "leaf"
        self._parents: tuple[Tensor, ...] = ()
        self._backward: Callable | None = None

    # -- introspection -------------------------------------------------
    @property
    def shape(self) -> tuple[int, ...]:
        return self.data.shape

    @property
    def ndim(self) -> int:
        return self.data.ndim

    @property
    def size(self) -> int:
        return self.data.size

    @property
    def is_leaf(self) -> bool:
        return not self._parents

    def numpy(self) -> np.ndarray:
        return self.data

    def item(self) -> float:
        return float(self.data.reshape(-1)[0]) if self.data.size == 1 else _raise_item(self)

    def detach(self) -> "Tensor":
        return Tensor(self.data)

    def zero_grad(self) -> None:
        self.grad = None

    def __repr__(self) -> str:
        flag = ", requires_grad=True" if self.requires_grad else ""
        return f"Tensor(shape={self.shape}, op={self.op}{flag})"

    def __len__(self) -> int:
        return self.shape[0]

    # -- operators -----------------------------------------------------
    def __add__(self, other):
        return add(self, other)

    def __radd__(self, other):
        return add(other, self)

    def __sub__(self, other):
        return sub(self, other)

    def __rsub__(self, other):
        return sub(other, self)

    def __mul__(self, other):
        return mul(self, other)

    def __rmul__(self, other):
        return mul(other, self)

    def __truediv__(self, other):
        return div(self, other)

    def __rtruediv__(self, other):
        return div(other, self)

    def __neg__(self):
        return neg(self)

    def __pow__(self, exponent):
        return power(self, exponent)

    def __matmul__(self, other):
        return matmul(self, other)

    def __rmatmul__(self, other):
        return matmul(other, self)

    def __getitem__(self, index):
        return getitem(self, index)

    def reshape(self, *shape):
        if len(shape) == 1 and isinstance(shape[0], (tuple, list)):
            shape = tuple(shape[0])
        return reshape(self, shape)

    def transpose(self, *axes):
        if len(axes) == 1 and isinstance(axes[0], (tuple, list)):
            axes = tuple(axes[0])
        return transpose(self, axes or None)

    def sum(self, axis=None, keepdims=False):
        return tsum(self, axis, keepdims)

    def mean(self, axis=None, keepdims=False):
        return mean(self, axis, keepdims)

    def backward(self) -> None:
        backward(self)


def _raise_item(t: Tensor):
    raise ValueError(f"item() needs a single-element tensor, got shape {t.shape}")


def as_tensor(x) -> Tensor:
    return x if isinstance(x, Tensor) else Tensor(x)


def _result(data: np.ndarray, parents: Sequence[Tensor], backward_fn: Callable, op: str) -> Tensor:
    if data.dtype != _dtype:
        data = data.astype(_dtype)
    total = np.sum(data)
    if not np.isfinite(total) and not np.all(np.isfinite(data)):
        raise FloatingPointError(f"{op}: produced non-finite values")
    out = Tensor.__new__(Tensor)
    out.data = data
    out.grad = None
    out.op = op
    if _recording and any(p.requires_grad for p in parents):
        out.requires_grad = True
        out._parents = tuple(parents)
        out._backward = backward_fn
    else:
        out.requires_grad = False
        out._parents = ()
        out._backward = None
    return out


def _unbroadcast(g: np.ndarray, shape: tuple[int, ...]) -> np.ndarray:
    if g.shape == shape:
        return g
    extra = g.ndim - len(shape)
    if extra > 0:
        g = g.sum(axis=tuple(range(extra)))
    axes = tuple(i for i, n in enumerate(shape) if n == 1 and g.shape[i] != 1)
    if axes:
        g = g.sum(axis=axes, keepdims=True)
    return g.reshape(shape)


def _check_broadcast(op: str, a: np.ndarray, b: np.ndarray) -> None:
    try:
        np.broadcast_shapes(a.shape, b.shape)
    except ValueError:
        raise ValueError(f"{op}: shapes {a.shape} and {b.shape} do not conform") from None


# -- elementwise arithmetic ---------------------------------------------


def add(a, b) -> Tensor:
    a, b = as_tensor(a), as_tensor(b)
    _check_broadcast("add", a.data, b.data)
    sa, sb = a.shape, b.shape

    def bw(g):
        return _unbroadcast(g, sa), _unbroadcast(g, sb)

    return _result(a.data + b.data, (a, b), bw, "add")


def sub(a, b) -> Tensor:
    a, b = as_tensor(a), as_tensor(b)
    _check_broadcast("sub", a.data, b.data)
    sa, sb = a.shape, b.shape

    def bw(g):
        return _unbroadcast(g, sa), _unbroadcast(-g, sb)

    return _result(a.data - b.data, (a, b), bw, "sub")


def mul(a, b) -> Tensor:
    a, b = as_tensor(a), as_tensor(b)
    _check_broadcast("mul", a.data, b.data)
    ad, bd = a.data, b.data

    def bw(g):
        ga = _unbroadcast(g * bd, ad.shape) if a.requires_grad else None
        gb = _unbroadcast(g * ad, bd.shape) if b.requires_grad else None
        return ga, gb

    return _result(ad * bd, (a, b), bw, "mul")


def div(a, b) -> Tensor:
    a, b = as_tensor(a), as_tensor(b)
    _check_broadcast("div", a.data, b.data)
    ad, bd = a.data, b.data
    out = ad / bd

    def bw(g):
        ga = _unbroadcast(g / bd, ad.shape) if a.requires_grad else None
        gb = _unbroadcast(-g * out / bd, bd.shape) if b.requires_grad else None
        return ga, gb

    return _result(out, (a, b), bw, "div")


def neg(a) -> Tensor:
    a = as_tensor(a)
    return _result(-a.data, (a,), lambda g: (-g,), "neg")


def power(a, exponent: float) -> Tensor:
    a = as_tensor(a)
    p = float(exponent)
    ad = a.data

    def bw(g):
        return (g * p * ad ** (p - 1.0),)

    return _result(ad**p, (a,), bw, "power")


def exp(a) -> Tensor:
    a = as_tensor(a)
    out = np.exp(a.data)
    return _result(out, (a,), lambda g: (g * out,), "exp")


def log(a) -> Tensor:
    a = as_tensor(a)
    ad = a.data
    return _result(np.log(ad), (a,), lambda g: (g / ad,), "log")


def _sigmoid_np(x: np.ndarray) -> np.ndarray:
    return expit(x)


def sigmoid(a) -> Tensor:
    a = as_tensor(a)
    s = _sigmoid_np(a.data)
    return _result(s, (a,), lambda g: (g * s * (1.0 - s),), "sigmoid")


def silu(a) -> Tensor:
    """Sigmoid-weighted linear unit ``x * sigmoid(x)``."""
    a = as_tensor(a)
    x = a.data
    s = _sigmoid_np(x)

    def bw(g):
        return (g * s * (1.0 + x * (1.0 - s)),)

    return _result(x * s, (a,), bw, "silu")


def softplus(a) -> Tensor:
    a = as_tensor(a)
    x = a.data
    out = np.maximum(x, 0.0) + np.log1p(np.exp(-np.abs(x)))
    return _result(out, (a,), lambda g: (g * _sigmoid_np(x),), "softplus")


def softmax(a, axis: int = -1) -> Tensor:
    a = as_tensor(a)
    z = a.data - a.data.max(axis=axis, keepdims=True)
    e = np.exp(z)
    y = e / e.sum(axis=axis, keepdims=True)

    def bw(g):
        return (y * (g - (g * y).sum(axis=axis, keepdims=True)),)

    return _result(y, (a,), bw, "softmax")


def bce_with_logits(logits, targets) -> Tensor:
    """Mean binary cross entropy between bit targets in {0,1} and logits."""
    z = as_tensor(logits)
    y = np.asarray(targets.data if isinstance(targets, Tensor) else targets, dtype=np.float64)
    if y.shape != z.shape:
        raise ValueError(f"bce_with_logits: shapes {z.shape} and {y.shape} do not conform")
    x = z.data
    n = x.size
    val = np.maximum(x, 0.0) - x * y + np.log1p(np.exp(-np.abs(x)))

    def bw(g):
        return (g * (_sigmoid_np(x) - y) / n,)

    return _result(np.asarray(val.mean()), (z,), bw, "bce_with_logits")


# -- linear algebra ------------------------------------------------------


def matmul(a, b) -> Tensor:
    a, b = as_tensor(a), as_tensor(b)
    if a.ndim < 2 or b.ndim < 2 or a.shape[-1] != b.shape[-2]:
        raise ValueError(f"matmul: shapes {a.shape} and {b.shape} do not conform")
    ad, bd = a.data, b.data

    def bw(g):
        ga = _unbroadcast(g @ np.swapaxes(bd, -1, -2), ad.shape) if a.requires_grad else None
        gb = _unbroadcast(np.swapaxes(ad, -1, -2) @ g, bd.shape) if b.requires_grad else None
        return ga, gb

    return _result(ad @ bd, (a, b), bw, "matmul")


# -- shape manipulation --------------------------------------------------


def reshape(a, shape) -> Tensor:
    a = as_tensor(a)
    src = a.shape
    try:
        out = a.data.reshape(shape)
    except ValueError:
        raise ValueError(f"reshape: cannot reshape {src} into {tuple(shape)}") from None
    return _result(out, (a,), lambda g: (g.reshape(src),), "reshape")


def transpose(a, axes=None) -> Tensor:
    a = as_tensor(a)
    if axes is None:
        axes = tuple(reversed(range(a.ndim)))
    axes = tuple(axes)
    if sorted(axes) != list(range(a.ndim)):
        raise ValueError(f"transpose: axes {axes} invalid for shape {a.shape}")
    inv = tuple(np.argsort(axes))
    return _result(a.data.transpose(axes), (a,), lambda g: (g.transpose(inv),), "transpose")


def getitem(a, index) -> Tensor:
    a = as_tensor(a)
    src = a.shape
    out = a.data[index]
    fancy = _is_fancy(index)

    def bw(g):
        full = np.zeros(src, dtype=g.dtype)
        if fancy:
            np.add.at(full, index, g)
        else:
            full[index] = g
        return (full,)

    return _result(np.array(out, copy=True), (a,), bw, "getitem")


def _is_fancy(index) -> bool:
    items = index if isinstance(index, tuple) else (index,)
    return any(isinstance(i, (list, np.ndarray)) for i in items)


def concat(tensors: Sequence, axis: int = 0) -> Tensor:
    ts = [as_tensor(t) for t in tensors]
    try:
        out = np.concatenate([t.data for t in ts], axis=axis)
    except ValueError:
        raise ValueError(f"concat: shapes {[t.shape for t in ts]} do not conform on axis {axis}") from None
    bounds = np.cumsum([t.shape[axis] for t in ts])[:-1]

    def bw(g):
        return tuple(np.split(g, bounds, axis=axis))

    return _result(out, ts, bw, "concat")


def stack(tensors: Sequence, axis: int = 0) -> Tensor:
    ts = [as_tensor(t) for t in tensors]
    try:
        out = np.stack([t.data for t in ts], axis=axis)
    except ValueError:
        raise ValueError(f"stack: shapes {[t.shape for t in ts]} differ") from None

    def bw(g):
        return tuple(np.moveaxis(g, axis, 0))

    return _result(out, ts, bw, "stack")


def pad(a, widths: Sequence[tuple[int, int]]) -> Tensor:
    """Zero padding; ``widths`` gives (before, after) per axis."""
    a = as_tensor(a)
    widths = [tuple(w) for w in widths]
    slices = tuple(slice(lo, lo + n) for (lo, _), n in zip(widths, a.shape))
    return _result(np.pad(a.data, widths), (a,), lambda g: (g[slices],), "pad")


# -- reductions ----------------------------------------------------------


def tsum(a, axis=None, keepdims: bool = False) -> Tensor:
    a = as_tensor(a)
    src = a.shape
    out = np.sum(a.data, axis=axis, keepdims=keepdims)

    def bw(g):
        if axis is not None and not keepdims:
            g = np.expand_dims(g, axis)
        return (np.broadcast_to(g, src).copy(),)

    return _result(np.asarray(out), (a,), bw, "sum")


def mean(a, axis=None, keepdims: bool = False) -> Tensor:
    a = as_tensor(a)
    if axis is None:
        count = a.size
    else:
        axes = (axis,) if isinstance(axis, int) else axis
        count = int(np.prod([a.shape[i] for i in axes]))
    return tsum(a, axis, keepdims) * (1.0 / count)


# -- convolution and normalization (channel-last layout) -----------------


def _im2col(xp: np.ndarray, kh: int, kw: int, stride: int) -> np.ndarray:
    win = sliding_window_view(xp, (kh, kw), axis=(1, 2))
    if stride > 1:
        win = win[:, ::stride, ::stride]
    n, ho, wo, c = win.shape[:4]
    return win.transpose(0, 1, 2, 4, 5, 3).reshape(n * ho * wo, kh * kw * c), (n, ho, wo)


def _conv_input_grad(g: np.ndarray, wd: np.ndarray, xshape, stride: int, p: int) -> np.ndarray:
    # correlate the (dilated, padded) output gradient with the flipped kernel
    kh, kw, cin, cout = wd.shape
    n, ho, wo, _ = g.shape
    if stride > 1:
        gd = np.zeros((n, (ho - 1) * stride + 1, (wo - 1) * stride + 1, cout), dtype=g.dtype)
        gd[:, ::stride, ::stride] = g
    else:
        gd = g
    top, left = kh - 1 - p, kw - 1 - p
    bottom = xshape[1] + kh - 1 - top - gd.shape[1]
    right = xshape[2] + kw - 1 - left - gd.shape[2]
    gp = np.pad(gd, ((0, 0), (top, bottom), (left, right), (0, 0)))
    cols, _ = _im2col(gp, kh, kw, 1)
    wf = wd[::-1, ::-1].transpose(0, 1, 3, 2).reshape(kh * kw * cout, cin)
    return (cols @ wf).reshape(xshape)


def conv2d(x, w, b=None, stride: int = 1, padding: int | None = None) -> Tensor:
    """2-D convolution on ``(N, H, W, C)`` input with ``(kh, kw, C, O)`` kernel.

    ``padding`` defaults to ``kh // 2`` (same-size output at stride 1).
    """
    x, w = as_tensor(x), as_tensor(w)
    if x.ndim != 4 or w.ndim != 4 or x.shape[3] != w.shape[2]:
        raise ValueError(f"conv2d: input {x.shape} and kernel {w.shape} do not conform")
    if stride not in (1, 2):
        raise ValueError(f"conv2d: stride must be 1 or 2, got {stride}")
    kh, kw, cin, cout = w.shape
    p = kh // 2 if padding is None else int(padding)
    xd, wd = x.data, w.data
    w2 = wd.reshape(kh * kw * cin, cout)

    if kh == 1 and kw == 1 and stride == 1 and p == 0:
        n, h, wid, _ = xd.shape
        cols = xd.reshape(-1, cin)
        out = (cols @ w2).reshape(n, h, wid, cout)
        oshape = (n, h, wid)
    else:
        xp = np.pad(xd, ((0, 0), (p, p), (p, p), (0, 0))) if p else xd
        cols, oshape = _im2col(xp, kh, kw, stride)
        out = (cols @ w2).reshape(*oshape, cout)
    parents = (x, w)
    if b is not None:
        b = as_tensor(b)
        out = out + b.data
        parents = (x, w, b)
    xshape = xd.shape

    def bw(g):
        g2 = g.reshape(-1, cout)
        gw = (cols.T @ g2).reshape(wd.shape) if w.requires_grad else None
        gx = None
        if x.requires_grad:
            if kh == 1 and kw == 1 and stride == 1 and p == 0:
                gx = (g2 @ w2.T).reshape(xshape)
            else:
                gx = _conv_input_grad(g, wd, xshape, stride, p)
        if b is None:
            return gx, gw
        return gx, gw, g2.sum(axis=0)

    return _result(out, parents, bw, "conv2d")


def group_norm(x, groups: int, gamma, beta, eps: float = 1e-5) -> Tensor:
    """Group normalization over channel-last input with per-channel affine."""
    x, gamma, beta = as_tensor(x), as_tensor(gamma), as_tensor(beta)
    c = x.shape[-1]
    if c % groups:
        raise ValueError(f"group_norm: {c} channels not divisible into {groups} groups")
    n = x.shape[0]
    xr = x.data.reshape(n, -1, groups, c // groups)
    mu = xr.mean(axis=(1, 3), keepdims=True)
    var = xr.var(axis=(1, 3), keepdims=True)
    inv = 1.0 / np.sqrt(var + eps)
    xhat = (xr - mu) * inv
    xhat_full = xhat.reshape(x.shape)
    out = xhat_full * gamma.data + beta.data

    def bw(g):
        red = tuple(range(g.ndim - 1))
        ggamma = (g * xhat_full).sum(axis=red) if gamma.requires_grad else None
        gbeta = g.sum(axis=red) if beta.requires_grad else None
        gx = None
        if x.requires_grad:
            dxhat = (g * gamma.data).reshape(xr.shape)
            m1 = dxhat.mean(axis=(1, 3), keepdims=True)
            m2 = (dxhat * xhat).mean(axis=(1, 3), keepdims=True)
            gx = (inv * (dxhat - m1 - xhat * m2)).reshape(x.shape)
        return gx, ggamma, gbeta

    return _result(out, (x, gamma, beta), bw, "group_norm")


def upsample_nearest(x, size: tuple[int, int]) -> Tensor:
    """Nearest-neighbour 2x upsampling of ``(N, H, W, C)``, cropped to ``size``."""
    x = as_tensor(x)
    n, h, w, c = x.shape
    ho, wo = size
    if not (2 * h - 1 <= ho <= 2 * h and 2 * w - 1 <= wo <= 2 * w):
        raise ValueError(f"upsample_nearest: cannot map {(h, w)} to {size}")
    up = np.repeat(np.repeat(x.data, 2, axis=1), 2, axis=2)[:, :ho, :wo, :]

    def bw(g):
        full = np.zeros((n, 2 * h, 2 * w, c), dtype=g.dtype)
        full[:, :ho, :wo, :] = g
        return (full.reshape(n, h, 2, w, 2, c).sum(axis=(2, 4)),)

    return _result(np.ascontiguousarray(up), (x,), bw, "upsample_nearest")


# -- graph traversal -----------------------------------------------------


def _topological(root: Tensor) -> list[Tensor]:
    order: list[Tensor] = []
    seen: set[int] = set()
    stack_: list[tuple[Tensor, bool]] = [(root, False)]
    while stack_:
        node, done = stack_.pop()
        if done:
            order.append(node)
            continue
        if id(node) in seen:
            continue
        seen.add(id(node))
        stack_.append((node, True))
        for p in node._parents:
            if p.requires_grad and id(p) not in seen:
                stack_.append((p, False))
    return order


def _run_backward(output: Tensor) -> dict[int, np.ndarray]:
    if output.size != 1:
        raise ValueError(f"backward requires a scalar output, got shape {output.shape}")
    if not output.requires_grad:
        raise RuntimeError("backward: output is detached from every trainable leaf")
    grads: dict[int, np.ndarray] = {id(output): np.ones(output.shape, dtype=output.data.dtype)}
    leaves: dict[int, np.ndarray] = {}
    for node in reversed(_topological(output)):
        g = grads.pop(id(node), None)
        if g is None:
            continue
        if node.is_leaf:
            leaves[id(node)] = g
            continue
        parent_grads = node._backward(g)
        for p, pg in zip(node._parents, parent_grads):
            if pg is None or not p.requires_grad:
                continue
            if pg.dtype != p.data.dtype:
                pg = pg.astype(p.data.dtype)
            key = id(p)
            if key in grads:
                grads[key] = grads[key] + pg
            else:
                grads[key] = pg
    return leaves


def backward(output: Tensor) -> None:
    """Accumulate d(output)/d(leaf) into ``.grad`` of every trainable leaf."""
    leaves = _run_backward(output)
    for node in _topological(output):
        if node.is_leaf and id(node) in leaves:
            g = leaves[id(node)]
            node.grad = g.copy() if node.grad is None else node.grad + g


def grad(output: Tensor, params: Iterable[Tensor]) -> list[np.ndarray | None]:
    """Return gradients of a scalar ``output`` w.r.t. ``params`` without touching ``.grad``."""
    leaves = _run_backward(output)
    return [leaves.get(id(p)) for p in params]
