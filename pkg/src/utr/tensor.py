"""Dense float64 tensors with tape-based reverse-mode differentiation.

Every operation that touches a tensor requiring gradients appends a record
to the computation tape (a node holding the op name, its inputs and the
closure that maps the output gradient to input gradients). ``backward``
replays the reachable records in reverse creation order, which is a valid
reverse topological order because inputs always exist before outputs.

Arrays are stored as contiguous row-major ``float64`` numpy buffers.
"""
from __future__ import annotations

import contextlib
import itertools
import math
import threading
from dataclasses import dataclass, field
from typing import Callable, Iterable, Sequence

import numpy as np
from scipy.special import expit

from .errors import ConfigError, DimensionError, UsageError

_ids = itertools.count()
_mode = threading.local()


def is_grad_enabled() -> bool:
    return getattr(_mode, "enabled", True)


@contextlib.contextmanager
def no_grad():
    """Disable tape recording in the current thread."""
    prev = is_grad_enabled()
    _mode.enabled = False
    try:
        yield
    finally:
        _mode.enabled = prev


class Node:
    """One tape record: how to push an output gradient back to the inputs."""

    __slots__ = ("op", "parents", "backward_fn", "id", "consumed")

    def __init__(self, op: str, parents: tuple, backward_fn: Callable):
        self.op = op
        self.parents = parents
        self.backward_fn = backward_fn
        self.id = next(_ids)
        self.consumed = False


class Tensor:
    __slots__ = ("data", "grad", "requires_grad", "node", "node_id", "name", "__weakref__")

    def __init__(self, data, requires_grad: bool = False, name: str | None = None):
        arr = np.array(data, dtype=np.float64, copy=True, order="C")
        self.data = arr
        self.grad: np.ndarray | None = None
        self.requires_grad = bool(requires_grad)
        self.node: Node | None = None
        self.node_id = next(_ids)
        self.name = name

    @classmethod
    def _wrap(cls, arr: np.ndarray) -> "Tensor":
        t = cls.__new__(cls)
        t.data = np.ascontiguousarray(arr, dtype=np.float64)
        t.grad = None
        t.requires_grad = False
        t.node = None
        t.node_id = next(_ids)
        t.name = None
        return t

    # -- basic properties -------------------------------------------------
    @property
    def shape(self) -> tuple[int, ...]:
        return self.data.shape

    @property
    def ndim(self) -> int:
        return self.data.ndim

    @property
    def size(self) -> int:
        return self.data.size

    def numpy(self) -> np.ndarray:
        return self.data

    def item(self) -> float:
        if self.data.size != 1:
            raise UsageError(f"item() needs a single-element tensor, got shape {self.shape}")
        return float(self.data.reshape(-1)[0])

    def zero_grad(self) -> None:
        self.grad = None

    def detach(self) -> "Tensor":
        return Tensor._wrap(self.data.copy())

    def __repr__(self) -> str:
        flag = ", requires_grad=True" if self.requires_grad else ""
        return f"Tensor(shape={self.shape}{flag})"

    # -- operator sugar ---------------------------------------------------
    def __add__(self, other):
        return add(self, other)

    __radd__ = __add__

    def __sub__(self, other):
        return sub(self, other)

    def __rsub__(self, other):
        return sub(other, self)

    def __mul__(self, other):
        return mul(self, other)

    __rmul__ = __mul__

    def __truediv__(self, other):
        return div(self, other)

    def __neg__(self):
        return neg(self)

    def __matmul__(self, other):
        return matmul(self, other)

    def __getitem__(self, idx):
        return getitem(self, idx)

    def sum(self, axis=None, keepdims=False):
        return tsum(self, axis, keepdims)

    def mean(self, axis=None, keepdims=False):
        return mean(self, axis, keepdims)

    def reshape(self, *shape):
        if len(shape) == 1 and isinstance(shape[0], (tuple, list)):
            shape = tuple(shape[0])
        return reshape(self, shape)

    def transpose(self, *axes):
        return transpose(self, axes if axes else None)


def as_tensor(x) -> Tensor:
    if isinstance(x, Tensor):
        return x
    return Tensor._wrap(np.asarray(x, dtype=np.float64))


def parameter(data, name: str | None = None) -> Tensor:
    return Tensor(data, requires_grad=True, name=name)


def _make(out: np.ndarray, op: str, parents: Sequence[Tensor], backward_fn: Callable) -> Tensor:
    t = Tensor._wrap(out)
    if is_grad_enabled() and any(p.requires_grad for p in parents):
        t.requires_grad = True
        t.node = Node(op, tuple(parents), backward_fn)
        t.node_id = t.node.id
    return t


def _unbroadcast(grad: np.ndarray, shape: tuple[int, ...]) -> np.ndarray:
    while grad.ndim > len(shape):
        grad = grad.sum(axis=0)
    for axis, n in enumerate(shape):
        if n == 1 and grad.shape[axis] != 1:
            grad = grad.sum(axis=axis, keepdims=True)
    return grad


def _broadcast_shape(op: str, a: Tensor, b: Tensor) -> tuple[int, ...]:
    try:
        return np.broadcast_shapes(a.shape, b.shape)
    except ValueError:
        raise DimensionError(f"{op}: shapes {a.shape} and {b.shape} are not broadcastable") from None


# -- elementwise binary ----------------------------------------------------
def add(a, b) -> Tensor:
    a, b = as_tensor(a), as_tensor(b)
    _broadcast_shape("add", a, b)

    def bw(g):
        return _unbroadcast(g, a.shape), _unbroadcast(g, b.shape)

    return _make(a.data + b.data, "add", (a, b), bw)


def sub(a, b) -> Tensor:
    a, b = as_tensor(a), as_tensor(b)
    _broadcast_shape("sub", a, b)

    def bw(g):
        return _unbroadcast(g, a.shape), _unbroadcast(-g, b.shape)

    return _make(a.data - b.data, "sub", (a, b), bw)


def mul(a, b) -> Tensor:
    a, b = as_tensor(a), as_tensor(b)
    _broadcast_shape("mul", a, b)

    def bw(g):
        return _unbroadcast(g * b.data, a.shape), _unbroadcast(g * a.data, b.shape)

    return _make(a.data * b.data, "mul", (a, b), bw)


def div(a, b) -> Tensor:
    a, b = as_tensor(a), as_tensor(b)
    _broadcast_shape("div", a, b)

    def bw(g):
        return (_unbroadcast(g / b.data, a.shape),
                _unbroadcast(-g * a.data / (b.data * b.data), b.shape))

    return _make(a.data / b.data, "div", (a, b), bw)


def neg(a) -> Tensor:
    a = as_tensor(a)
    return _make(-a.data, "neg", (a,), lambda g: (-g,))


# -- elementwise unary -----------------------------------------------------
_sigmoid = expit


def sigmoid(a) -> Tensor:
    a = as_tensor(a)
    s = _sigmoid(a.data)
    return _make(s, "sigmoid", (a,), lambda g: (g * s * (1.0 - s),))


def silu(a) -> Tensor:
    a = as_tensor(a)
    s = _sigmoid(a.data)
    out = a.data * s

    def bw(g):
        return (g * (s + a.data * s * (1.0 - s)),)

    return _make(out, "silu", (a,), bw)


def relu(a) -> Tensor:
    a = as_tensor(a)
    pos = a.data > 0
    return _make(np.maximum(a.data, 0.0), "relu", (a,), lambda g: (g * pos,))


_UNARY = {"sigmoid": sigmoid, "silu": silu, "relu": relu, "neg": neg}
_BINARY = {"add": add, "sub": sub, "mul": mul, "div": div}


def elementwise(op: str, *args) -> Tensor:
    """Dispatch a named pointwise op: add, sub, mul, div, sigmoid, silu, relu."""
    if op in _UNARY:
        if len(args) != 1:
            raise UsageError(f"{op} takes one argument, got {len(args)}")
        return _UNARY[op](args[0])
    if op in _BINARY:
        if len(args) != 2:
            raise UsageError(f"{op} takes two arguments, got {len(args)}")
        return _BINARY[op](*args)
    raise UsageError(f"unknown elementwise op {op!r}")


# -- reductions and shape ops ---------------------------------------------
def tsum(a, axis=None, keepdims=False) -> Tensor:
    a = as_tensor(a)
    out = a.data.sum(axis=axis, keepdims=keepdims)

    def bw(g):
        if axis is not None and not keepdims:
            g = np.expand_dims(g, axis)
        return (np.broadcast_to(g, a.shape).copy(),)

    return _make(np.asarray(out), "sum", (a,), bw)


def mean(a, axis=None, keepdims=False) -> Tensor:
    a = as_tensor(a)
    n = a.data.size if axis is None else np.prod([a.shape[i] for i in np.atleast_1d(axis)])
    return mul(tsum(a, axis, keepdims), 1.0 / float(n))


def reshape(a, shape) -> Tensor:
    a = as_tensor(a)
    try:
        out = a.data.reshape(shape)
    except ValueError:
        raise DimensionError(f"reshape: cannot view {a.shape} as {tuple(shape)}") from None
    return _make(out, "reshape", (a,), lambda g: (g.reshape(a.shape),))


def transpose(a, axes=None) -> Tensor:
    a = as_tensor(a)
    if axes is None:
        axes = tuple(reversed(range(a.ndim)))
    axes = tuple(axes)
    inv = tuple(np.argsort(axes))
    return _make(a.data.transpose(axes), "transpose", (a,), lambda g: (g.transpose(inv),))


def getitem(a, idx) -> Tensor:
    """Basic (slice/integer) indexing only."""
    a = as_tensor(a)
    out = a.data[idx]

    def bw(g):
        full = np.zeros_like(a.data)
        full[idx] = g
        return (full,)

    return _make(np.array(out), "getitem", (a,), bw)


def take(a, indices, axis: int = 0) -> Tensor:
    """Gather along ``axis``; repeated indices accumulate gradient."""
    a = as_tensor(a)
    idx = np.asarray(indices, dtype=np.intp)
    axis = axis % a.ndim
    out = np.take(a.data, idx, axis=axis)

    def bw(g):
        full = np.zeros_like(a.data)
        np.add.at(full, (slice(None),) * axis + (idx,), g)
        return (full,)

    return _make(out, "take", (a,), bw)


def concat(tensors: Sequence, axis: int = -1) -> Tensor:
    ts = [as_tensor(t) for t in tensors]
    ref = ts[0].shape
    ax = axis % len(ref)
    for t in ts[1:]:
        if t.ndim != len(ref) or any(t.shape[i] != ref[i] for i in range(len(ref)) if i != ax):
            raise DimensionError(f"concat: shapes {[x.shape for x in ts]} disagree off axis {axis}")
    sizes = [t.shape[ax] for t in ts]
    bounds = np.cumsum(sizes)[:-1]

    def bw(g):
        return tuple(np.split(g, bounds, axis=ax))

    return _make(np.concatenate([t.data for t in ts], axis=ax), "concat", ts, bw)


def split(a, sizes: Sequence[int], axis: int = -1) -> list[Tensor]:
    """Split into consecutive chunks of the given sizes along ``axis``."""
    a = as_tensor(a)
    ax = axis % a.ndim
    if sum(sizes) != a.shape[ax]:
        raise DimensionError(f"split: sizes {list(sizes)} do not cover axis of length {a.shape[ax]}")
    out, start = [], 0
    for n in sizes:
        sl = (slice(None),) * ax + (slice(start, start + n),)
        out.append(getitem(a, sl))
        start += n
    return out


def stack(tensors: Sequence, axis: int = 0) -> Tensor:
    ts = [as_tensor(t) for t in tensors]
    if any(t.shape != ts[0].shape for t in ts):
        raise DimensionError(f"stack: shapes differ {[t.shape for t in ts]}")
    ax = axis % (ts[0].ndim + 1)

    def bw(g):
        return tuple(np.take(g, i, axis=ax) for i in range(len(ts)))

    return _make(np.stack([t.data for t in ts], axis=ax), "stack", ts, bw)


# -- linear algebra --------------------------------------------------------
def matmul(a, b) -> Tensor:
    """``a[..., m, k] @ b[k, n]`` or batched ``a[..., m, k] @ b[..., k, n]``."""
    a, b = as_tensor(a), as_tensor(b)
    if a.ndim < 2 or b.ndim < 2 or a.shape[-1] != b.shape[-2]:
        raise DimensionError(f"matmul: inner dimensions of {a.shape} and {b.shape} do not match")
    if b.ndim > 2 and a.shape[:-2] != b.shape[:-2]:
        raise DimensionError(f"matmul: batch dimensions of {a.shape} and {b.shape} differ")
    out = a.data @ b.data

    def bw(g):
        da = g @ np.swapaxes(b.data, -1, -2)
        if b.ndim == 2:
            k, n = b.shape
            db = a.data.reshape(-1, k).T @ g.reshape(-1, n)
        else:
            db = np.swapaxes(a.data, -1, -2) @ g
        return da, db

    return _make(out, "matmul", (a, b), bw)


def linear(x, weight, bias=None) -> Tensor:
    """``x[..., k] @ weight[k, n] + bias[n]`` as a single tape record."""
    x, weight = as_tensor(x), as_tensor(weight)
    if weight.ndim != 2 or x.shape[-1] != weight.shape[0]:
        raise DimensionError(f"linear: inner dimensions of {x.shape} and {weight.shape} do not match")
    k, n = weight.shape
    lead = x.shape[:-1]
    # one 2-D GEMM instead of numpy's per-batch loop for [..., L, k] @ [k, n]
    x2 = x.data.reshape(-1, k)
    out = x2 @ weight.data
    parents = (x, weight)
    if bias is not None:
        bias = as_tensor(bias)
        if bias.shape != (n,):
            raise DimensionError(f"linear: bias {bias.shape} must be ({n},)")
        out += bias.data
        parents = (x, weight, bias)
    out = out.reshape(lead + (n,))

    def bw(g):
        g2 = g.reshape(-1, n)
        grads = [(g2 @ weight.data.T).reshape(x.shape) if x.requires_grad else None, x2.T @ g2]
        if bias is not None:
            grads.append(g2.sum(axis=0))
        return grads

    return _make(out, "linear", parents, bw)


# -- fused neural-net primitives -------------------------------------------
def layer_norm(x, gain, bias, eps: float = 1e-5) -> Tensor:
    x, gain, bias = as_tensor(x), as_tensor(gain), as_tensor(bias)
    d = x.shape[-1]
    if gain.shape != (d,) or bias.shape != (d,):
        raise DimensionError(f"layer_norm: gain {gain.shape}/bias {bias.shape} must be ({d},)")
    if eps <= 0:
        raise UsageError("layer_norm: eps must be positive")
    inv_d = 1.0 / d
    mu = x.data.sum(axis=-1, keepdims=True)
    mu *= inv_d
    xhat = x.data - mu
    var = np.einsum("...i,...i->...", xhat, xhat)[..., None]
    var *= inv_d
    var += eps
    rstd = 1.0 / np.sqrt(var)
    xhat *= rstd
    out = xhat * gain.data
    out += bias.data

    def bw(g):
        lead = tuple(range(g.ndim - 1))
        dgain = (g * xhat).sum(axis=lead)
        dbias = g.sum(axis=lead)
        dxhat = g * gain.data
        m1 = dxhat.sum(axis=-1, keepdims=True)
        m1 *= inv_d
        m2 = np.einsum("...i,...i->...", dxhat, xhat)[..., None]
        m2 *= inv_d
        dx = dxhat - m1
        dx -= xhat * m2
        dx *= rstd
        return dx, dgain, dbias

    return _make(out, "layer_norm", (x, gain, bias), bw)


def causal_depthwise_conv1d(x, kernels, bias) -> Tensor:
    """Per-channel causal convolution over the second-to-last axis.

    ``out[t, d] = bias[d] + sum_j kernels[j, d] * x[t - K + 1 + j, d]`` with
    zero padding for negative time indices.
    """
    x, kernels, bias = as_tensor(x), as_tensor(kernels), as_tensor(bias)
    if kernels.ndim != 2 or kernels.shape[0] < 1:
        raise ConfigError(f"causal_depthwise_conv1d: kernel size must be >= 1, got kernels {kernels.shape}")
    K, D = kernels.shape
    if x.ndim < 2 or x.shape[-1] != D or bias.shape != (D,):
        raise DimensionError(
            f"causal_depthwise_conv1d: x {x.shape}, kernels {kernels.shape}, bias {bias.shape} disagree")
    L = x.shape[-2]
    xd, kd = x.data, kernels.data
    out = np.broadcast_to(bias.data, xd.shape).copy()
    for j in range(K):
        s = K - 1 - j
        if s >= L:
            continue
        out[..., s:, :] += kd[j] * xd[..., : L - s, :]

    def bw(g):
        dx = np.zeros_like(xd)
        dk = np.zeros_like(kd)
        lead = tuple(range(g.ndim - 1))
        idx = "abcdefgh"[: g.ndim - 1]
        spec = f"{idx}z,{idx}z->z"
        for j in range(K):
            s = K - 1 - j
            if s >= L:
                continue
            dx[..., : L - s, :] += kd[j] * g[..., s:, :]
            dk[j] = np.einsum(spec, g[..., s:, :], xd[..., : L - s, :])
        return dx, dk, g.sum(axis=lead)

    return _make(out, "dwconv", (x, kernels, bias), bw)


def softmax(x, axis: int = -1, mask: np.ndarray | None = None) -> Tensor:
    """Softmax with optional boolean ``mask`` (True = visible).

    Masked entries get probability exactly zero. Each slice must keep at
    least one visible entry.
    """
    x = as_tensor(x)
    z = x.data if mask is None else x.data + np.where(mask, 0.0, -np.inf)
    z = z - z.max(axis=axis, keepdims=True)
    e = np.exp(z)
    p = e / e.sum(axis=axis, keepdims=True)

    def bw(g):
        return (p * (g - (g * p).sum(axis=axis, keepdims=True)),)

    return _make(p, "softmax", (x,), bw)


def log_softmax(x, axis: int = -1) -> Tensor:
    x = as_tensor(x)
    z = x.data - x.data.max(axis=axis, keepdims=True)
    lse = np.log(np.exp(z).sum(axis=axis, keepdims=True))
    out = z - lse
    p = np.exp(out)

    def bw(g):
        return (g - p * g.sum(axis=axis, keepdims=True),)

    return _make(out, "log_softmax", (x,), bw)


def multihead_attention(q, k, v, n_heads: int, mask: np.ndarray | None = None,
                        weights_out: list | None = None) -> Tensor:
    """Scaled dot-product attention over ``[B, L, D]`` projections.

    Heads split the last axis into ``n_heads`` slices of width D/n_heads;
    ``mask`` (True = visible) broadcasts against ``[B, H, L, L]``. If
    ``weights_out`` is a list, the attention weights are appended to it.
    """
    q, k, v = as_tensor(q), as_tensor(k), as_tensor(v)
    if q.ndim != 3 or q.shape != k.shape or q.shape != v.shape:
        raise DimensionError(f"attention: q {q.shape}, k {k.shape}, v {v.shape} must be equal [B, L, D]")
    B, L, D = q.shape
    H = n_heads
    if D % H:
        raise DimensionError(f"attention: width {D} not divisible by {H} heads")
    dh = D // H
    scale = 1.0 / math.sqrt(dh)

    def heads(a):
        return a.reshape(B, L, H, dh).transpose(0, 2, 1, 3)

    qh, kh, vh = heads(q.data), heads(k.data), heads(v.data)
    s = qh @ kh.transpose(0, 1, 3, 2)
    s *= scale
    if mask is not None:
        s += np.where(mask, 0.0, -np.inf)
    s -= s.max(axis=-1, keepdims=True)
    p = np.exp(s, out=s)
    p /= p.sum(axis=-1, keepdims=True)
    if weights_out is not None:
        weights_out.append(p)
    out = (p @ vh).transpose(0, 2, 1, 3).reshape(B, L, D)

    def bw(g):
        gh = heads(g)
        dv = p.transpose(0, 1, 3, 2) @ gh
        dp = gh @ vh.transpose(0, 1, 3, 2)
        dp -= (dp * p).sum(axis=-1, keepdims=True)
        dp *= p
        dp *= scale
        dq = dp @ kh
        dk = dp.transpose(0, 1, 3, 2) @ qh

        def merge(a):
            return a.transpose(0, 2, 1, 3).reshape(B, L, D)

        return merge(dq), merge(dk), merge(dv)

    return _make(out, "attention", (q, k, v), bw)


# -- the tape ---------------------------------------------------------------
@dataclass
class TapeEntry:
    op: str
    input_ids: tuple[int, ...]
    output_id: int


@dataclass
class Tape:
    """Ordered records reachable from one output, oldest first."""

    entries: list[TapeEntry] = field(default_factory=list)

    @classmethod
    def trace(cls, out: Tensor) -> "Tape":
        return cls([TapeEntry(t.node.op, tuple(p.node_id for p in t.node.parents), t.node_id)
                    for t in _reachable(out)][::-1])

    def __len__(self) -> int:
        return len(self.entries)


def _reachable(out: Tensor) -> list[Tensor]:
    """Non-leaf tensors reachable from ``out``, newest first."""
    seen: set[int] = set()
    order: list[Tensor] = []
    stack_ = [out]
    while stack_:
        t = stack_.pop()
        if t.node is None or id(t) in seen:
            continue
        seen.add(id(t))
        order.append(t)
        stack_.extend(t.node.parents)
    order.sort(key=lambda t: t.node.id, reverse=True)
    return order


def backward(loss: Tensor) -> None:
    """Accumulate d(loss)/d(leaf) into ``.grad`` of every leaf that requires it.

    The recorded graph is released afterwards; a second call on the same
    loss raises ``UsageError``.
    """
    if loss.size != 1:
        raise UsageError(f"backward needs a scalar loss, got shape {loss.shape}")
    if loss.node is None:
        if loss.requires_grad:
            loss.grad = np.ones_like(loss.data) if loss.grad is None else loss.grad + 1.0
            return
        raise UsageError("backward: loss does not depend on any tensor requiring grad")
    if loss.node.consumed:
        raise UsageError("backward: this graph was already differentiated; rebuild the forward pass")

    grads: dict[int, np.ndarray] = {id(loss): np.ones_like(loss.data)}
    for t in _reachable(loss):
        node = t.node
        g = grads.pop(id(t), None)
        if g is not None:
            for parent, pg in zip(node.parents, node.backward_fn(g)):
                if pg is None or not parent.requires_grad:
                    continue
                if parent.node is None:
                    parent.grad = pg.copy() if parent.grad is None else parent.grad + pg
                else:
                    key = id(parent)
                    grads[key] = pg if key not in grads else grads[key] + pg
        node.consumed = True
        node.backward_fn = _consumed
        node.parents = ()
    # a consumed node still marks the loss; keep its flag reachable
    loss.node.consumed = True


def _consumed(g):
    raise UsageError("graph already consumed")


# -- finite-difference oracle -----------------------------------------------
def numerical_gradient(f: Callable[[], float], arrays: Iterable[np.ndarray], h: float = 1e-5) -> list[np.ndarray]:
    """Central differences of scalar ``f()`` w.r.t. each array, perturbed in place."""
    out = []
    for arr in arrays:
        g = np.zeros_like(arr)
        flat, gflat = arr.reshape(-1), g.reshape(-1)
        for i in range(flat.size):
            orig = flat[i]
            flat[i] = orig + h
            fp = f()
            flat[i] = orig - h
            fm = f()
            flat[i] = orig
            gflat[i] = (fp - fm) / (2 * h)
        out.append(g)
    return out


def relative_error(analytic: np.ndarray, numeric: np.ndarray, floor: float = 1e-8) -> float:
    """max |a - n| scaled by the larger of the two gradients' max magnitudes."""
    scale = max(np.abs(analytic).max(initial=0.0), np.abs(numeric).max(initial=0.0), floor)
    return float(np.abs(analytic - numeric).max(initial=0.0) / scale)


def gradcheck(f: Callable[[], Tensor], params: Sequence[Tensor], h: float = 1e-5,
              floor: float | None = None) -> dict[str, float]:
    """Compare tape gradients of scalar ``f()`` with central differences.

    Returns the relative error per parameter (keyed by name or position).
    By default the denominator floor is 1e-6 of the largest gradient entry
    in the whole check: central differences cannot resolve a gradient that
    is exactly zero (a key bias under softmax, say) better than their own
    round-off, which scales with the loss and not with that parameter.
    """
    for p in params:
        p.grad = None
    backward(f())
    analytic = [p.grad if p.grad is not None else np.zeros_like(p.data) for p in params]
    with no_grad():
        numeric = numerical_gradient(lambda: f().item(), [p.data for p in params], h)
    if floor is None:
        scale = max((np.abs(a).max(initial=0.0) for a in analytic), default=0.0)
        floor = max(1e-8, 1e-6 * scale)
    return {(p.name or str(i)): relative_error(a, n, floor)
            for i, (p, a, n) in enumerate(zip(params, analytic, numeric))}


def kink_margin(out: Tensor) -> float:
    """Smallest |input| of any ReLU recorded on the way to ``out``.

    Central differences are only meaningful when no ReLU input lies within
    the perturbation of zero; compare this against a few multiples of ``h``.
    """
    margins = [np.abs(t.node.parents[0].data).min(initial=np.inf)
               for t in _reachable(out) if t.node.op == "relu"]
    return float(min(margins, default=np.inf))
