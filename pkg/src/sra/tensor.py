"""Reverse-mode automatic differentiation over float64 numpy arrays.

Every op result remembers its parents and a backward closure.  ``backward``
topologically orders the recorded graph from the loss and replays it in
reverse; only tensors that require grad are recorded, so frozen models and
numpy constants cost nothing on the tape.
"""

from __future__ import annotations

from typing import Callable, Iterable, Sequence

import numpy as np

MASK_VALUE = -1e9


class ShapeError(ValueError):
    pass


class Tensor:
    __slots__ = ("data", "requires_grad", "name", "_parents", "_backward")

    def __init__(self, data, requires_grad: bool = False, name: str | None = None):
        self.data = np.asarray(data, dtype=np.float64)
        self.requires_grad = requires_grad
        self.name = name
        self._parents: tuple[Tensor, ...] = ()
        self._backward: Callable | None = None

    @property
    def shape(self) -> tuple[int, ...]:
        return self.data.shape

    @property
    def ndim(self) -> int:
        return self.data.ndim

    def numpy(self) -> np.ndarray:
        return self.data

    def item(self) -> float:
        return float(self.data)

    def detach(self) -> "Tensor":
        return Tensor(self.data)

    def __repr__(self):
        tag = f" name={self.name!r}" if self.name else ""
        return f"Tensor(shape={self.shape}, requires_grad={self.requires_grad}{tag})"

    # operator sugar; all of it routes through apply()
    def __add__(self, other):
        return apply("add", self, other)

    __radd__ = __add__

    def __sub__(self, other):
        return apply("add", self, apply("mul", other, -1.0))

    def __rsub__(self, other):
        return apply("add", other, apply("mul", self, -1.0))

    def __mul__(self, other):
        return apply("mul", self, other)

    __rmul__ = __mul__

    def __neg__(self):
        return apply("mul", self, -1.0)

    def __truediv__(self, other):
        return apply("mul", self, apply("power", other, exponent=-1.0))

    def __rtruediv__(self, other):
        return apply("mul", other, apply("power", self, exponent=-1.0))

    def __matmul__(self, other):
        return apply("matmul", self, other)

    def __pow__(self, exponent):
        return apply("power", self, exponent=float(exponent))

    @property
    def T(self):
        return apply("transpose", self)

    def sum(self, axis=None, keepdims=False):
        return apply("sum", self, axis=axis, keepdims=keepdims)

    def mean(self, axis=None, keepdims=False):
        return apply("mean", self, axis=axis, keepdims=keepdims)


class Parameter(Tensor):
    """A registered trainable leaf."""

    __slots__ = ()

    def __init__(self, data, name: str | None = None, requires_grad: bool = True):
        super().__init__(np.array(data, dtype=np.float64), requires_grad=requires_grad, name=name)


def as_tensor(x) -> Tensor:
    return x if isinstance(x, Tensor) else Tensor(x)


class GradientMap(dict):
    """Parameter -> gradient Tensor, keyed by parameter identity."""

    def of(self, param: Tensor) -> np.ndarray:
        return self[param].data


def _unbroadcast(grad: np.ndarray, shape: tuple[int, ...]) -> np.ndarray:
    if grad.shape == shape:
        return grad
    extra = grad.ndim - len(shape)
    if extra > 0:
        grad = grad.sum(axis=tuple(range(extra)))
    axes = tuple(i for i, n in enumerate(shape) if n == 1 and grad.shape[i] != 1)
    if axes:
        grad = grad.sum(axis=axes, keepdims=True)
    return grad.reshape(shape)


def _broadcast_shape(op, *shapes):
    try:
        return np.broadcast_shapes(*shapes)
    except ValueError:
        raise ShapeError(f"{op}: shapes {list(shapes)} do not broadcast") from None


# Each forward returns (out_data, backward) where backward maps the output
# gradient to a tuple of input gradients (None for inputs needing none).

def _add(a, b):
    _broadcast_shape("add", a.shape, b.shape)
    out = a.data + b.data
    return out, lambda g: (_unbroadcast(g, a.shape), _unbroadcast(g, b.shape))


def _mul(a, b):
    _broadcast_shape("mul", a.shape, b.shape)
    out = a.data * b.data
    return out, lambda g: (_unbroadcast(g * b.data, a.shape), _unbroadcast(g * a.data, b.shape))


def _matmul(a, b):
    if a.ndim == 0 or b.ndim == 0:
        raise ShapeError(f"matmul: scalar operand, shapes {a.shape} and {b.shape}")
    A = a.data if a.ndim > 1 else a.data[None, :]
    B = b.data if b.ndim > 1 else b.data[:, None]
    if A.shape[-1] != B.shape[-2]:
        raise ShapeError(f"matmul: inner dimensions differ, shapes {a.shape} and {b.shape}")
    _broadcast_shape("matmul", A.shape[:-2], B.shape[:-2])
    full = A @ B
    out = full
    if a.ndim == 1:
        out = out[..., 0, :]
    if b.ndim == 1:
        out = out[..., 0]

    def backward(g):
        G = g
        if b.ndim == 1:
            G = G[..., None]
        if a.ndim == 1:
            G = G[..., None, :]
        gA = _unbroadcast(G @ np.swapaxes(B, -1, -2), A.shape).reshape(a.shape)
        gB = _unbroadcast(np.swapaxes(A, -1, -2) @ G, B.shape).reshape(b.shape)
        return gA, gB

    return out, backward


def _softmax_lastdim(x):
    if x.ndim == 0:
        raise ShapeError("softmax_lastdim: scalar input")
    z = x.data - x.data.max(axis=-1, keepdims=True)
    e = np.exp(z)
    s = e / e.sum(axis=-1, keepdims=True)
    return s, lambda g: (s * (g - (g * s).sum(axis=-1, keepdims=True)),)


def _layernorm_lastdim(x, eps=1e-5):
    if x.ndim == 0:
        raise ShapeError("layernorm_lastdim: scalar input")
    mu = x.data.mean(axis=-1, keepdims=True)
    xc = x.data - mu
    inv = 1.0 / np.sqrt((xc * xc).mean(axis=-1, keepdims=True) + eps)
    y = xc * inv

    def backward(g):
        gm = g.mean(axis=-1, keepdims=True)
        gym = (g * y).mean(axis=-1, keepdims=True)
        return (inv * (g - gm - y * gym),)

    return y, backward


def _transpose(x, axes=None):
    if axes is None:
        if x.ndim < 2:
            raise ShapeError(f"transpose: need at least 2 dims, got shape {x.shape}")
        axes = list(range(x.ndim))
        axes[-1], axes[-2] = axes[-2], axes[-1]
    axes = tuple(axes)
    if sorted(axes) != list(range(x.ndim)):
        raise ShapeError(f"transpose: axes {axes} invalid for shape {x.shape}")
    inverse = tuple(np.argsort(axes))
    return np.transpose(x.data, axes), lambda g: (np.transpose(g, inverse),)


def _concat(*xs, axis=-1):
    if not xs:
        raise ShapeError("concat: no inputs")
    ref = xs[0].shape
    ax = axis % len(ref)
    for x in xs:
        if x.ndim != len(ref) or any(x.shape[i] != ref[i] for i in range(len(ref)) if i != ax):
            raise ShapeError(f"concat: incompatible shapes {[t.shape for t in xs]} along axis {axis}")
    out = np.concatenate([x.data for x in xs], axis=ax)
    cuts = np.cumsum([x.shape[ax] for x in xs])[:-1]
    return out, lambda g: tuple(np.split(g, cuts, axis=ax))


def _slice(x, axis=0, index=None):
    if x.ndim == 0:
        raise ShapeError("slice: scalar input")
    ax = axis % x.ndim
    if not isinstance(index, (slice, int, np.integer)):
        index = np.asarray(index, dtype=np.int64)
        if index.size and (index.min() < -x.shape[ax] or index.max() >= x.shape[ax]):
            raise ShapeError(f"slice: index out of range for axis {axis} of shape {x.shape}")
    elif isinstance(index, (int, np.integer)) and not -x.shape[ax] <= index < x.shape[ax]:
        raise ShapeError(f"slice: index {index} out of range for axis {axis} of shape {x.shape}")
    key = (slice(None),) * ax + (index,)
    out = x.data[key]

    def backward(g):
        gx = np.zeros_like(x.data)
        if isinstance(index, np.ndarray):
            np.add.at(gx, key, g)
        else:
            gx[key] = g
        return (gx,)

    return out, backward


def _sum(x, axis=None, keepdims=False):
    out = x.data.sum(axis=axis, keepdims=keepdims)

    def backward(g):
        if axis is not None and not keepdims:
            g = np.expand_dims(g, axis)
        return (np.broadcast_to(g, x.shape).copy(),)

    return out, backward


def _mean(x, axis=None, keepdims=False):
    out = x.data.mean(axis=axis, keepdims=keepdims)
    count = x.data.size // max(out.size, 1) if x.data.size else 1

    def backward(g):
        if axis is not None and not keepdims:
            g = np.expand_dims(g, axis)
        return (np.broadcast_to(g / count, x.shape).copy(),)

    return out, backward


def _power(x, exponent=2.0):
    if exponent < 0 and np.any(x.data == 0):
        raise ValueError(f"power: zero base with negative exponent {exponent}")
    if exponent != int(exponent) and np.any(x.data < 0):
        raise ValueError(f"power: negative base with fractional exponent {exponent}")
    out = x.data ** exponent
    return out, lambda g: (g * exponent * x.data ** (exponent - 1.0),)


def _sqrt(x):
    if np.any(x.data < 0):
        raise ValueError("sqrt: negative input")
    out = np.sqrt(x.data)
    return out, lambda g: (g / (2.0 * out),)


def _exp(x):
    out = np.exp(x.data)
    return out, lambda g: (g * out,)


def _log(x):
    if np.any(x.data <= 0):
        raise ValueError(f"log: non-positive input (min {x.data.min()!r})")
    return np.log(x.data), lambda g: (g / x.data,)


def _embedding_lookup(table, ids=None):
    if table.ndim != 2:
        raise ShapeError(f"embedding_lookup: table must be 2-D, got shape {table.shape}")
    ids = np.asarray(ids, dtype=np.int64)
    if ids.size and (ids.min() < 0 or ids.max() >= table.shape[0]):
        raise ShapeError(f"embedding_lookup: ids outside [0, {table.shape[0]}) for table {table.shape}")
    out = table.data[ids]

    def backward(g):
        gt = np.zeros_like(table.data)
        np.add.at(gt, ids, g)
        return (gt,)

    return out, backward


def _masked_fill(x, mask=None, value=MASK_VALUE):
    mask = np.asarray(mask, dtype=bool)
    _broadcast_shape("masked_fill", x.shape, mask.shape)
    out = x.data + np.where(mask, value, 0.0)
    return out, lambda g: (g,)


def _reshape(x, shape=None):
    try:
        out = x.data.reshape(shape)
    except ValueError:
        raise ShapeError(f"reshape: cannot view shape {x.shape} as {shape}") from None
    return out, lambda g: (g.reshape(x.shape),)


_OPS = {
    "add": _add,
    "mul": _mul,
    "matmul": _matmul,
    "softmax_lastdim": _softmax_lastdim,
    "layernorm_lastdim": _layernorm_lastdim,
    "transpose": _transpose,
    "concat": _concat,
    "slice": _slice,
    "sum": _sum,
    "mean": _mean,
    "power": _power,
    "sqrt": _sqrt,
    "exp": _exp,
    "log": _log,
    "embedding_lookup": _embedding_lookup,
    "masked_fill": _masked_fill,
    "reshape": _reshape,
}

OP_NAMES = frozenset(_OPS)


def apply(op_name: str, *inputs, **attrs) -> Tensor:
    try:
        fn = _OPS[op_name]
    except KeyError:
        raise ValueError(f"unknown op {op_name!r}") from None
    tensors = tuple(as_tensor(x) for x in inputs)
    out_data, backward_fn = fn(*tensors, **attrs)
    out = Tensor(out_data)
    if any(t.requires_grad for t in tensors):
        out.requires_grad = True
        out._parents = tensors
        out._backward = backward_fn
    return out


def _topological(root: Tensor) -> list[Tensor]:
    order: list[Tensor] = []
    seen: set[int] = set()
    stack: list[tuple[Tensor, bool]] = [(root, False)]
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
            if p.requires_grad and id(p) not in seen:
                stack.append((p, False))
    return order


def backward(loss: Tensor, params: Iterable[Tensor] | None = None) -> GradientMap:
    """Gradients of a scalar ``loss``; every listed param gets an entry."""
    if loss.data.size != 1:
        raise ShapeError(f"backward: loss must be scalar, got shape {loss.shape}")
    grads: dict[int, np.ndarray] = {}
    order = _topological(loss) if loss.requires_grad else []
    if order:
        grads[id(loss)] = np.ones_like(loss.data)
    leaves: list[Tensor] = []
    for node in reversed(order):
        g = grads.get(id(node))
        if node._backward is None:
            leaves.append(node)
            continue
        if g is None:
            continue
        for parent, pg in zip(node._parents, node._backward(g)):
            if pg is None or not parent.requires_grad:
                continue
            if id(parent) in grads:
                grads[id(parent)] = grads[id(parent)] + pg
            else:
                grads[id(parent)] = pg
        # intermediate gradients are not needed once consumed
        del grads[id(node)]
    if params is None:
        params = leaves
    out = GradientMap()
    for p in params:
        g = grads.get(id(p))
        out[p] = Tensor(np.zeros_like(p.data) if g is None else g)
    return out


class NonDeterministicLoss(ValueError):
    pass


def check_gradients(loss_fn: Callable[[], Tensor], params: Sequence[Tensor], step: float = 1e-5) -> float:
    """Max relative error between analytic and central-difference gradients.

    ``loss_fn`` is re-evaluated after in-place perturbation of each entry of
    each parameter, so it must read the parameters' current data.
    """
    if step <= 0:
        raise ValueError("step must be positive")
    first = loss_fn()
    if float(first.data) != float(loss_fn().data):
        raise NonDeterministicLoss("loss_fn returned different values for identical inputs")
    analytic = backward(first, params)
    worst = 0.0
    for p in params:
        flat = p.data.reshape(-1)
        ga = analytic[p].data.reshape(-1)
        for k in range(flat.size):
            orig = flat[k]
            flat[k] = orig + step
            up = float(loss_fn().data)
            flat[k] = orig - step
            down = float(loss_fn().data)
            flat[k] = orig
            numeric = (up - down) / (2.0 * step)
            err = abs(ga[k] - numeric) / (abs(numeric) + 1e-8)
            worst = max(worst, err)
    return worst


# thin functional wrappers used across the package

def matmul(a, b):
    return apply("matmul", a, b)


def softmax(x):
    return apply("softmax_lastdim", x)


def layernorm(x, eps=1e-5):
    return apply("layernorm_lastdim", x, eps=eps)


def transpose(x, axes=None):
    return apply("transpose", x, axes=axes)


def concat(xs, axis=-1):
    return apply("concat", *xs, axis=axis)


def take(x, index, axis=0):
    return apply("slice", x, axis=axis, index=index)


def exp(x):
    return apply("exp", x)


def log(x):
    return apply("log", x)


def sqrt(x):
    return apply("sqrt", x)


def embedding(table, ids):
    return apply("embedding_lookup", table, ids=ids)


def reshape(x, shape):
    return apply("reshape", x, shape=tuple(shape))


def masked_fill(x, mask, value=MASK_VALUE):
    return apply("masked_fill", x, mask=mask, value=value)


def log_softmax(x: Tensor) -> Tensor:
    """log(softmax(x)) without forming the softmax; the max shift is a constant."""
    shift = Tensor(x.data.max(axis=-1, keepdims=True))
    z = x - shift
    return z - log(exp(z).sum(axis=-1, keepdims=True))
