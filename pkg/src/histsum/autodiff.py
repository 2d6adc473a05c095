"""Reverse-mode automatic differentiation on numpy arrays, plus Adam.

A Tensor wraps an ndarray together with its place in the computation graph:
each op builds the output eagerly and records a closure that routes the
output gradient back to its inputs.  backward() walks the graph once in
reverse topological order.  Only the ops the scoring network needs are
provided; everything assumes arrays of at least one axis except the final
scalar losses.

Precision is a property of the ParameterStore (float64 for gradient checks,
float32 for training); ops inherit dtype from their inputs.
"""

from __future__ import annotations

import zlib
from typing import Callable, Sequence

import numpy as np

_DEBUG_FINITE = False


def set_debug_finite(flag: bool):
    """When on, every op asserts its output is finite (slow; tests only)."""
    global _DEBUG_FINITE
    _DEBUG_FINITE = bool(flag)


class ShapeError(ValueError):
    def __init__(self, op: str, *shapes):
        super().__init__(f"{op}: incompatible shapes {' and '.join(map(str, shapes))}")


class Tensor:
    __slots__ = ("data", "grad", "requires_grad", "_parents", "_backward", "op")

    def __init__(self, data, requires_grad: bool = False, parents=(),
                 backward: Callable[[], None] | None = None, op: str = "leaf"):
        self.data = data if isinstance(data, np.ndarray) else np.asarray(data, dtype=np.float64)
        self.grad: np.ndarray | None = None
        self.requires_grad = requires_grad
        self._parents = parents
        self._backward = backward
        self.op = op
        if _DEBUG_FINITE and not np.all(np.isfinite(self.data)):
            raise FloatingPointError(f"non-finite values out of op '{op}'")

    @property
    def shape(self):
        return self.data.shape

    @property
    def ndim(self):
        return self.data.ndim

    def item(self) -> float:
        return float(self.data)

    def accumulate(self, g: np.ndarray):
        if self.grad is None:
            self.grad = np.zeros_like(self.data)
        self.grad += g

    def __repr__(self):
        return f"Tensor(op={self.op}, shape={self.data.shape}, grad={self.requires_grad})"

    # operator sugar
    def __add__(self, other):
        return add(self, other)

    __radd__ = __add__

    def __mul__(self, other):
        return mul(self, other)

    __rmul__ = __mul__

    def __neg__(self):
        return neg(self)

    def __sub__(self, other):
        return add(self, neg(_as_tensor(other, self)))

    def __rsub__(self, other):
        return add(_as_tensor(other, self), neg(self))

    def __truediv__(self, other):
        return div(self, other)

    def __rtruediv__(self, other):
        return div(_as_tensor(other, self), self)

    def __matmul__(self, other):
        return matmul(self, other)

    def __getitem__(self, key):
        return take(self, key)


def _as_tensor(x, like: Tensor | None = None) -> Tensor:
    if isinstance(x, Tensor):
        return x
    dtype = like.data.dtype if like is not None else np.float64
    return Tensor(np.asarray(x, dtype=dtype))


def constant(data, dtype=None) -> Tensor:
    arr = np.asarray(data, dtype=dtype) if dtype is not None else np.asarray(data)
    return Tensor(arr)


def _make(data, parents, backward, op) -> Tensor:
    req = any(p.requires_grad for p in parents)
    if not req:
        return Tensor(data, op=op)
    live = tuple(p for p in parents if p.requires_grad)
    return Tensor(data, requires_grad=True, parents=live, backward=backward, op=op)


def _unbroadcast(g: np.ndarray, shape: tuple) -> np.ndarray:
    """Sum a broadcasted gradient back down to the original operand shape."""
    if g.shape == shape:
        return g
    while g.ndim > len(shape):
        g = g.sum(axis=0)
    for i, s in enumerate(shape):
        if s == 1 and g.shape[i] != 1:
            g = g.sum(axis=i, keepdims=True)
    return g


# ---------------------------------------------------------------- arithmetic

def add(a, b) -> Tensor:
    a = _as_tensor(a)
    b = _as_tensor(b, a)
    try:
        out_data = a.data + b.data
    except ValueError:
        raise ShapeError("add", a.shape, b.shape) from None
    out = _make(out_data, (a, b), None, "add")

    def backward():
        if a.requires_grad:
            a.accumulate(_unbroadcast(out.grad, a.data.shape))
        if b.requires_grad:
            b.accumulate(_unbroadcast(out.grad, b.data.shape))

    out._backward = backward
    return out


def mul(a, b) -> Tensor:
    a = _as_tensor(a)
    b = _as_tensor(b, a)
    try:
        out_data = a.data * b.data
    except ValueError:
        raise ShapeError("mul", a.shape, b.shape) from None
    out = _make(out_data, (a, b), None, "mul")

    def backward():
        if a.requires_grad:
            a.accumulate(_unbroadcast(out.grad * b.data, a.data.shape))
        if b.requires_grad:
            b.accumulate(_unbroadcast(out.grad * a.data, b.data.shape))

    out._backward = backward
    return out


def div(a, b) -> Tensor:
    a = _as_tensor(a)
    b = _as_tensor(b, a)
    try:
        out_data = a.data / b.data
    except ValueError:
        raise ShapeError("div", a.shape, b.shape) from None
    out = _make(out_data, (a, b), None, "div")

    def backward():
        if a.requires_grad:
            a.accumulate(_unbroadcast(out.grad / b.data, a.data.shape))
        if b.requires_grad:
            b.accumulate(_unbroadcast(-out.grad * a.data / (b.data * b.data),
                                      b.data.shape))

    out._backward = backward
    return out


def neg(a: Tensor) -> Tensor:
    out = _make(-a.data, (a,), None, "neg")

    def backward():
        a.accumulate(-out.grad)

    out._backward = backward
    return out


def matmul(a: Tensor, b: Tensor) -> Tensor:
    if a.ndim < 2 or b.ndim < 2:
        raise ShapeError("matmul", a.shape, b.shape)
    try:
        out_data = a.data @ b.data
    except ValueError:
        raise ShapeError("matmul", a.shape, b.shape) from None
    out = _make(out_data, (a, b), None, "matmul")

    def backward():
        g = out.grad
        if a.requires_grad:
            a.accumulate(_unbroadcast(g @ np.swapaxes(b.data, -1, -2), a.data.shape))
        if b.requires_grad:
            b.accumulate(_unbroadcast(np.swapaxes(a.data, -1, -2) @ g, b.data.shape))

    out._backward = backward
    return out


# -------------------------------------------------------------- element-wise

def log(a: Tensor) -> Tensor:
    out = _make(np.log(a.data), (a,), None, "log")

    def backward():
        a.accumulate(out.grad / a.data)

    out._backward = backward
    return out


def exp(a: Tensor) -> Tensor:
    out = _make(np.exp(a.data), (a,), None, "exp")

    def backward():
        a.accumulate(out.grad * out.data)

    out._backward = backward
    return out


def sigmoid(a: Tensor) -> Tensor:
    x = a.data
    # stable in both tails
    y = np.where(x >= 0, 1.0 / (1.0 + np.exp(-np.abs(x))),
                 np.exp(-np.abs(x)) / (1.0 + np.exp(-np.abs(x))))
    out = _make(y, (a,), None, "sigmoid")

    def backward():
        a.accumulate(out.grad * out.data * (1.0 - out.data))

    out._backward = backward
    return out


def tanh(a: Tensor) -> Tensor:
    out = _make(np.tanh(a.data), (a,), None, "tanh")

    def backward():
        a.accumulate(out.grad * (1.0 - out.data * out.data))

    out._backward = backward
    return out


def relu(a: Tensor) -> Tensor:
    out = _make(np.maximum(a.data, 0.0), (a,), None, "relu")

    def backward():
        a.accumulate(out.grad * (a.data > 0))

    out._backward = backward
    return out


def clip_min(a: Tensor, lo: float) -> Tensor:
    """Floor values at lo; gradient passes only where the floor is inactive."""
    out = _make(np.maximum(a.data, lo), (a,), None, "clip_min")

    def backward():
        a.accumulate(out.grad * (a.data > lo))

    out._backward = backward
    return out


# ---------------------------------------------------------------- reductions

def tsum(a: Tensor, axis=None, keepdims: bool = False) -> Tensor:
    out = _make(a.data.sum(axis=axis, keepdims=keepdims), (a,), None, "sum")

    def backward():
        g = out.grad
        if axis is not None and not keepdims:
            g = np.expand_dims(g, axis)
        a.accumulate(np.broadcast_to(g, a.data.shape).copy())

    out._backward = backward
    return out


def tmean(a: Tensor, axis=None, keepdims: bool = False) -> Tensor:
    if axis is None:
        count = a.data.size
    elif isinstance(axis, tuple):
        count = int(np.prod([a.data.shape[x] for x in axis]))
    else:
        count = a.data.shape[axis]
    return mul(tsum(a, axis=axis, keepdims=keepdims), 1.0 / count)


# ------------------------------------------------------------- restructuring

def reshape(a: Tensor, shape) -> Tensor:
    out = _make(a.data.reshape(shape), (a,), None, "reshape")

    def backward():
        a.accumulate(out.grad.reshape(a.data.shape))

    out._backward = backward
    return out


def transpose(a: Tensor, axes=None) -> Tensor:
    if axes is None:
        axes = tuple(reversed(range(a.ndim)))
    out = _make(a.data.transpose(axes), (a,), None, "transpose")
    inverse = tuple(np.argsort(axes))

    def backward():
        a.accumulate(out.grad.transpose(inverse))

    out._backward = backward
    return out


def concat(tensors: Sequence[Tensor], axis: int = 0) -> Tensor:
    out_data = np.concatenate([t.data for t in tensors], axis=axis)
    out = _make(out_data, tuple(tensors), None, "concat")
    sizes = [t.data.shape[axis] for t in tensors]
    offsets = np.cumsum([0] + sizes)

    def backward():
        for t, lo, hi in zip(tensors, offsets[:-1], offsets[1:]):
            if t.requires_grad:
                sel = [slice(None)] * out.grad.ndim
                sel[axis] = slice(lo, hi)
                t.accumulate(out.grad[tuple(sel)])

    out._backward = backward
    return out


def take(a: Tensor, key) -> Tensor:
    """Basic/advanced indexing with gradient scatter-add back into `a`."""
    out = _make(a.data[key], (a,), None, "take")

    def backward():
        if a.grad is None:
            a.grad = np.zeros_like(a.data)
        np.add.at(a.grad, key, out.grad)

    out._backward = backward
    return out


# ------------------------------------------------------- network-level ops

def masked_softmax(a: Tensor, mask: np.ndarray | None = None, axis: int = -1) -> Tensor:
    """Softmax along one axis; masked-out entries get exactly zero weight."""
    x = a.data
    if mask is None:
        z = x
    else:
        mask = np.broadcast_to(np.asarray(mask, dtype=bool), x.shape)
        z = np.where(mask, x, -np.inf)
    zmax = z.max(axis=axis, keepdims=True)
    if np.any(np.isneginf(zmax)):
        raise ValueError("masked_softmax: a slice has every entry masked")
    e = np.exp(z - zmax)
    y = e / e.sum(axis=axis, keepdims=True)
    out = _make(y, (a,), None, "masked_softmax")

    def backward():
        g = out.grad
        dot = (g * y).sum(axis=axis, keepdims=True)
        a.accumulate(y * (g - dot))

    out._backward = backward
    return out


def layer_norm(x: Tensor, gain: Tensor, bias: Tensor, eps: float = 1e-5) -> Tensor:
    """Normalize over the last axis, then scale and shift."""
    mu = x.data.mean(axis=-1, keepdims=True)
    var = x.data.var(axis=-1, keepdims=True)
    inv = 1.0 / np.sqrt(var + eps)
    xhat = (x.data - mu) * inv
    out_data = gain.data * xhat + bias.data
    out = _make(out_data, (x, gain, bias), None, "layer_norm")
    n = x.data.shape[-1]

    def backward():
        g = out.grad
        if gain.requires_grad:
            gain.accumulate(_unbroadcast(g * xhat, gain.data.shape))
        if bias.requires_grad:
            bias.accumulate(_unbroadcast(g, bias.data.shape))
        if x.requires_grad:
            gd = g * gain.data
            m1 = gd.mean(axis=-1, keepdims=True)
            m2 = (gd * xhat).mean(axis=-1, keepdims=True)
            x.accumulate(inv * (gd - m1 - xhat * m2))

    out._backward = backward
    return out


def dropout(a: Tensor, p: float, rng: np.random.Generator, train: bool) -> Tensor:
    """Inverted dropout: scales by 1/(1-p) at train time, identity otherwise."""
    if not train or p <= 0.0:
        return a
    if not 0.0 <= p < 1.0:
        raise ValueError(f"dropout rate must be in [0,1), got {p}")
    keep = (rng.random(a.data.shape) >= p) / (1.0 - p)
    keep = keep.astype(a.data.dtype)
    out = _make(a.data * keep, (a,), None, "dropout")

    def backward():
        a.accumulate(out.grad * keep)

    out._backward = backward
    return out


def embedding_lookup(table: Tensor, ids: np.ndarray) -> Tensor:
    ids = np.asarray(ids)
    out = _make(table.data[ids], (table,), None, "embedding")

    def backward():
        if table.grad is None:
            table.grad = np.zeros_like(table.data)
        np.add.at(table.grad, ids.reshape(-1), out.grad.reshape(-1, table.data.shape[1]))

    out._backward = backward
    return out


def lstm_cell(x: Tensor, h: Tensor, c: Tensor, w_ih: Tensor, w_hh: Tensor,
              b: Tensor) -> tuple[Tensor, Tensor]:
    """One LSTM step for a (batch, features) slice; returns (h', c').

    Gate order in the fused weight matrices is input, forget, candidate,
    output.  Composed from primitives so the gradient needs no special case.
    """
    hidden = h.shape[-1]
    if w_ih.shape[-1] != 4 * hidden or w_hh.shape[-1] != 4 * hidden:
        raise ShapeError("lstm_cell", w_ih.shape, w_hh.shape, h.shape)
    gates = add(add(matmul(x, w_ih), matmul(h, w_hh)), b)
    i = sigmoid(gates[..., 0 * hidden:1 * hidden])
    f = sigmoid(gates[..., 1 * hidden:2 * hidden])
    g = tanh(gates[..., 2 * hidden:3 * hidden])
    o = sigmoid(gates[..., 3 * hidden:4 * hidden])
    c_next = add(mul(f, c), mul(i, g))
    h_next = mul(o, tanh(c_next))
    return h_next, c_next


# ------------------------------------------------------------------ backward

def backward(root: Tensor):
    """Populate .grad for everything the scalar root depends on."""
    if root.data.size != 1:
        raise ValueError(f"backward needs a scalar root, got shape {root.shape}")
    if not root.requires_grad:
        return
    order: list[Tensor] = []
    seen: set[int] = set()
    stack: list[tuple[Tensor, bool]] = [(root, False)]
    while stack:
        node, done = stack.pop()
        if done:
            order.append(node)
            continue
        if id(node) in seen:
            continue
        seen.add(id(node))
        stack.append((node, True))
        for p in node._parents:
            if id(p) not in seen:
                stack.append((p, False))
    root.grad = np.ones_like(root.data)
    for node in reversed(order):
        if node._backward is not None:
            node._backward()


# ------------------------------------------------------------ parameters

class ParameterStore:
    """Named trainable tensors with per-name deterministic initialization."""

    def __init__(self, seed: int = 0, dtype=np.float32):
        self.seed = seed
        self.dtype = np.dtype(dtype)
        self.step = 0
        self._params: dict[str, Tensor] = {}

    def _rng(self, name: str) -> np.random.Generator:
        return np.random.default_rng([self.seed, zlib.crc32(name.encode())])

    def parameter(self, name: str, shape: tuple, init: str = "glorot") -> Tensor:
        if name in self._params:
            p = self._params[name]
            if p.data.shape != tuple(shape):
                raise ShapeError(f"parameter {name}", p.data.shape, tuple(shape))
            return p
        if isinstance(init, np.ndarray):
            data = init.astype(self.dtype)
            if data.shape != tuple(shape):
                raise ShapeError(f"parameter {name}", data.shape, tuple(shape))
        elif init == "glorot":
            if len(shape) >= 2:
                fan_in, fan_out = shape[-2], shape[-1]
            else:
                fan_in = fan_out = shape[0] if shape else 1
            limit = np.sqrt(6.0 / (fan_in + fan_out))
            data = self._rng(name).uniform(-limit, limit, size=shape).astype(self.dtype)
        elif init == "zeros":
            data = np.zeros(shape, dtype=self.dtype)
        elif init == "ones":
            data = np.ones(shape, dtype=self.dtype)
        else:
            raise ValueError(f"unknown init '{init}'")
        t = Tensor(data, requires_grad=True, op=f"param:{name}")
        self._params[name] = t
        return t

    def __getitem__(self, name: str) -> Tensor:
        return self._params[name]

    def __contains__(self, name: str) -> bool:
        return name in self._params

    def __len__(self):
        return len(self._params)

    def names(self) -> list[str]:
        return list(self._params)

    def items(self):
        return self._params.items()

    def zero_grad(self):
        for p in self._params.values():
            p.grad = None

    def n_values(self) -> int:
        return sum(p.data.size for p in self._params.values())


class AdamState:
    """Adam moments plus hyperparameters; weight decay is decoupled."""

    def __init__(self, lr: float = 1e-4, beta1: float = 0.9, beta2: float = 0.999,
                 eps: float = 1e-8, weight_decay: float = 1e-6):
        self.lr = lr
        self.beta1 = beta1
        self.beta2 = beta2
        self.eps = eps
        self.weight_decay = weight_decay
        self.m: dict[str, np.ndarray] = {}
        self.v: dict[str, np.ndarray] = {}


def adam_step(store: ParameterStore, state: AdamState):
    """One update over every parameter; clears gradients, bumps the step."""
    store.step += 1
    t = store.step
    c1 = 1.0 - state.beta1 ** t
    c2 = 1.0 - state.beta2 ** t
    for name, p in store.items():
        g = p.grad if p.grad is not None else np.zeros_like(p.data)
        m = state.m.setdefault(name, np.zeros_like(p.data))
        v = state.v.setdefault(name, np.zeros_like(p.data))
        m *= state.beta1
        m += (1.0 - state.beta1) * g
        v *= state.beta2
        v += (1.0 - state.beta2) * (g * g)
        update = (m / c1) / (np.sqrt(v / c2) + state.eps)
        if state.weight_decay:
            update = update + state.weight_decay * p.data
        p.data -= state.lr * update
        p.grad = None


def gradient_check(builder: Callable[[], Tensor], store: ParameterStore,
                   h: float = 1e-5, max_coords: int = 200, seed: int = 0) -> float:
    """Max relative error between backward and central finite differences.

    builder must be a deterministic, dropout-free closure returning the
    scalar output; the store should be float64 for meaningful tolerances.
    """
    store.zero_grad()
    backward(builder())
    analytic = {name: (None if p.grad is None else p.grad.copy())
                for name, p in store.items()}
    coords = [(name, i) for name, p in store.items() for i in range(p.data.size)]
    rng = np.random.default_rng(seed)
    if len(coords) > max_coords:
        picks = rng.choice(len(coords), size=max_coords, replace=False)
        coords = [coords[i] for i in picks]
    worst = 0.0
    for name, i in coords:
        flat = store[name].data.reshape(-1)
        saved = flat[i]
        flat[i] = saved + h
        hi = builder().item()
        flat[i] = saved - h
        lo = builder().item()
        flat[i] = saved
        numeric = (hi - lo) / (2.0 * h)
        grads = analytic[name]
        exact = 0.0 if grads is None else float(grads.reshape(-1)[i])
        err = abs(numeric - exact) / max(abs(numeric), abs(exact), 1e-8)
        worst = max(worst, err)
    store.zero_grad()
    return worst
