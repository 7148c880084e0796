"""Minimal reverse-mode automatic differentiation over dense float64 arrays,
with the op set needed by the sentiment head and the attention forecaster,
plus Adam and RMSprop updates.

Scope is deliberately narrow: no broadcasting beyond explicit row-wise ops
(bias add, layer-norm/softmax over the last axis, 2-D weights inside batched
matmul). Each backward sweep works on its own gradient table, so independent
graphs can run in parallel; calling backward twice on the same loss adds the
same gradients again (documented accumulation, cleared by zero_grad).
"""

from __future__ import annotations

import numpy as np


class Tensor:
    __slots__ = ("data", "grad", "requires_grad", "_parents", "_backward")

    def __init__(self, data, requires_grad=False, _parents=(), _backward=None):
        self.data = np.asarray(data, dtype=np.float64)
        self.grad = None
        self.requires_grad = bool(requires_grad) or any(
            p.requires_grad for p in _parents
        )
        self._parents = _parents
        self._backward = _backward  # maps upstream grad -> ((parent, grad), ...)

    @property
    def shape(self):
        return self.data.shape

    @property
    def ndim(self):
        return self.data.ndim

    def item(self):
        return float(self.data)

    def zero_grad(self):
        self.grad = None

    def __repr__(self):
        return f"Tensor(shape={self.data.shape}, grad={self.requires_grad})"

    def __add__(self, other):
        return add(self, other)

    def __sub__(self, other):
        return add(self, mul(other, -1.0))

    def __mul__(self, other):
        return mul(self, other)

    def __rmul__(self, other):
        return mul(self, other)

    def __neg__(self):
        return mul(self, -1.0)

    def __matmul__(self, other):
        return matmul(self, other)


def param(data, rng=None, scale=None):
    """Trainable leaf tensor. Given a shape tuple and an rng, draws from
    N(0, scale^2), defaulting scale to 1/sqrt(fan_in)."""
    if rng is not None:
        if not isinstance(data, tuple):
            raise ValueError("rng initialization needs a shape tuple")
        if scale is None:
            scale = 1.0 / np.sqrt(max(data[0], 1))
        data = rng.normal(0.0, scale, size=data)
    return Tensor(data, requires_grad=True)


def backward(loss: Tensor):
    """Reverse-mode sweep from a scalar loss. Gradients land in .grad of
    every tensor that requires them (adding to whatever is already there)."""
    if loss.data.size != 1:
        raise ValueError(f"backward needs a scalar loss, got shape {loss.shape}")
    # iterative topological order; training graphs get deep
    order = []
    seen = set()
    stack = [(loss, False)]
    while stack:
        node, expanded = stack.pop()
        if expanded:
            order.append(node)
            continue
        if id(node) in seen:
            continue
        seen.add(id(node))
        stack.append((node, True))
        for parent in node._parents:
            if id(parent) not in seen:
                stack.append((parent, False))

    table = {id(loss): np.ones_like(loss.data)}
    for node in reversed(order):
        g = table.get(id(node))
        if g is None or node._backward is None:
            continue
        for parent, grad in node._backward(g):
            if not parent.requires_grad:
                continue
            held = table.get(id(parent))
            table[id(parent)] = grad if held is None else held + grad
    for node in order:
        g = table.get(id(node))
        if g is not None and node.requires_grad:
            node.grad = g if node.grad is None else node.grad + g


def zero_grads(tensors):
    for t in tensors:
        t.zero_grad()


# ---------------------------------------------------------------------------
# primitives


def add(a: Tensor, b) -> Tensor:
    """Elementwise add. Two broadcast forms are allowed: a 1-D bias over the
    last axis, and a batch-shared operand matching a's trailing axes."""
    if not isinstance(b, Tensor):
        b = Tensor(b)
    row_bias = b.ndim == 1 and a.ndim > 1 and a.shape[-1] == b.shape[0]
    shared = 0 < b.ndim < a.ndim and a.shape[a.ndim - b.ndim :] == b.shape
    if not (row_bias or shared) and a.shape != b.shape:
        raise ValueError(f"add shape mismatch {a.shape} vs {b.shape}")
    out = Tensor(a.data + b.data, _parents=(a, b))

    def _back(g):
        if row_bias:
            gb = g.reshape(-1, b.shape[0]).sum(axis=0)
        elif shared:
            gb = g.sum(axis=tuple(range(a.ndim - b.ndim)))
        else:
            gb = g
        return ((a, g), (b, gb))

    out._backward = _back
    return out


def mul(a: Tensor, b) -> Tensor:
    """Elementwise multiply by a same-shape tensor or a python scalar."""
    if isinstance(b, Tensor):
        if a.shape != b.shape:
            raise ValueError(f"mul shape mismatch {a.shape} vs {b.shape}")
        out = Tensor(a.data * b.data, _parents=(a, b))
        out._backward = lambda g: ((a, g * b.data), (b, g * a.data))
        return out
    scalar = float(b)
    out = Tensor(a.data * scalar, _parents=(a,))
    out._backward = lambda g: ((a, g * scalar),)
    return out


def matmul(a: Tensor, b: Tensor) -> Tensor:
    """Matrix product; stacked (3-D) inputs batch over the leading axis, and
    a 2-D operand against a stacked one is shared across the batch."""
    if a.ndim < 2 or b.ndim < 2 or a.ndim > 3 or b.ndim > 3:
        raise ValueError(f"matmul supports 2-D/3-D, got {a.shape} @ {b.shape}")
    if a.shape[-1] != b.shape[-2]:
        raise ValueError(f"matmul inner dims {a.shape} @ {b.shape}")
    if a.ndim == 3 and b.ndim == 3 and a.shape[0] != b.shape[0]:
        raise ValueError(f"matmul batch dims {a.shape} @ {b.shape}")
    out = Tensor(a.data @ b.data, _parents=(a, b))

    def _back(g):
        ga = g @ np.swapaxes(b.data, -1, -2)
        gb = np.swapaxes(a.data, -1, -2) @ g
        if ga.ndim > a.ndim:  # 2-D lhs shared across the batch
            ga = ga.sum(axis=tuple(range(ga.ndim - a.ndim)))
        if gb.ndim > b.ndim:  # 2-D weight shared across the batch
            gb = gb.sum(axis=tuple(range(gb.ndim - b.ndim)))
        return ((a, ga), (b, gb))

    out._backward = _back
    return out


def relu(x: Tensor) -> Tensor:
    mask = x.data > 0.0
    out = Tensor(np.where(mask, x.data, 0.0), _parents=(x,))
    out._backward = lambda g: ((x, g * mask),)
    return out


def softmax(x: Tensor) -> Tensor:
    """Row-wise softmax over the last axis."""
    shifted = x.data - x.data.max(axis=-1, keepdims=True)
    e = np.exp(shifted)
    y = e / e.sum(axis=-1, keepdims=True)
    out = Tensor(y, _parents=(x,))

    def _back(g):
        dot = (g * y).sum(axis=-1, keepdims=True)
        return ((x, y * (g - dot)),)

    out._backward = _back
    return out


def layer_norm(x: Tensor, gamma: Tensor, beta: Tensor, eps: float = 1e-5) -> Tensor:
    """Normalize the last axis to zero mean / unit variance, then scale+shift."""
    feat = x.shape[-1]
    if gamma.shape != (feat,) or beta.shape != (feat,):
        raise ValueError("layer_norm scale/shift must be 1-D over the last axis")
    mu = x.data.mean(axis=-1, keepdims=True)
    var = x.data.var(axis=-1, keepdims=True)
    inv = 1.0 / np.sqrt(var + eps)
    xhat = (x.data - mu) * inv
    out = Tensor(xhat * gamma.data + beta.data, _parents=(x, gamma, beta))

    def _back(g):
        axes = tuple(range(g.ndim - 1))
        g_gamma = (g * xhat).sum(axis=axes)
        g_beta = g.sum(axis=axes)
        gx_hat = g * gamma.data
        m1 = gx_hat.mean(axis=-1, keepdims=True)
        m2 = (gx_hat * xhat).mean(axis=-1, keepdims=True)
        gx = inv * (gx_hat - m1 - xhat * m2)
        return ((x, gx), (gamma, g_gamma), (beta, g_beta))

    out._backward = _back
    return out


def transpose(x: Tensor, axes) -> Tensor:
    axes = tuple(axes)
    out = Tensor(np.transpose(x.data, axes), _parents=(x,))
    inverse = tuple(np.argsort(axes))
    out._backward = lambda g: ((x, np.transpose(g, inverse)),)
    return out


def swap_last(x: Tensor) -> Tensor:
    """Transpose the trailing two axes (the K^T in attention scores)."""
    return transpose(x, tuple(range(x.ndim - 2)) + (x.ndim - 1, x.ndim - 2))


def reshape(x: Tensor, shape) -> Tensor:
    shape = tuple(shape)
    out = Tensor(x.data.reshape(shape), _parents=(x,))
    out._backward = lambda g: ((x, g.reshape(x.shape)),)
    return out


def mean(x: Tensor) -> Tensor:
    out = Tensor(x.data.mean(), _parents=(x,))
    out._backward = lambda g: ((x, np.full_like(x.data, float(g) / x.data.size)),)
    return out


def total(x: Tensor) -> Tensor:
    """Sum of all elements (scalar)."""
    out = Tensor(x.data.sum(), _parents=(x,))
    out._backward = lambda g: ((x, np.full_like(x.data, float(g))),)
    return out


def squared_error(pred: Tensor, target) -> Tensor:
    """Elementwise (pred - target)^2."""
    if not isinstance(target, Tensor):
        target = Tensor(target)
    if pred.shape != target.shape:
        raise ValueError(f"squared_error shapes {pred.shape} vs {target.shape}")
    diff = pred.data - target.data
    out = Tensor(diff * diff, _parents=(pred, target))
    out._backward = lambda g: ((pred, 2.0 * diff * g), (target, -2.0 * diff * g))
    return out


def sqrt(x: Tensor) -> Tensor:
    if np.any(x.data <= 0.0):
        raise ValueError("sqrt needs strictly positive input")
    root = np.sqrt(x.data)
    out = Tensor(root, _parents=(x,))
    out._backward = lambda g: ((x, g / (2.0 * root)),)
    return out


def mse(pred: Tensor, target) -> Tensor:
    return mean(squared_error(pred, target))


def rmse(pred: Tensor, target) -> Tensor:
    return sqrt(mse(pred, target))


# ---------------------------------------------------------------------------
# optimizers
#
# Weight decay is decoupled from the gradient: parameters shrink by
# lr * wd * p each step, independent of the adaptive scaling.


def _check_grads(params, grads):
    if len(params) != len(grads):
        raise ValueError("params/grads length mismatch")
    for i, (p, g) in enumerate(zip(params, grads)):
        if g is None:
            raise ValueError(f"missing gradient for parameter {i}")
        if p.shape != g.shape:
            raise ValueError(f"parameter {i}: shape {p.shape} vs grad {g.shape}")
        if not np.all(np.isfinite(g)):
            raise FloatingPointError(f"non-finite gradient for parameter {i}")


def adam_init(params, lr=1e-4, betas=(0.9, 0.999), eps=1e-8, weight_decay=0.0):
    return {
        "lr": float(lr),
        "betas": (float(betas[0]), float(betas[1])),
        "eps": float(eps),
        "weight_decay": float(weight_decay),
        "step": 0,
        "m": [np.zeros_like(p) for p in params],
        "v": [np.zeros_like(p) for p in params],
    }


def adam_step(state, params, grads):
    """One bias-corrected Adam update; mutates params and state in place."""
    _check_grads(params, grads)
    state["step"] += 1
    t = state["step"]
    b1, b2 = state["betas"]
    lr, eps, wd = state["lr"], state["eps"], state["weight_decay"]
    for p, g, m, v in zip(params, grads, state["m"], state["v"]):
        if wd != 0.0:
            p -= lr * wd * p
        m *= b1
        m += (1.0 - b1) * g
        v *= b2
        v += (1.0 - b2) * g * g
        m_hat = m / (1.0 - b1**t)
        v_hat = v / (1.0 - b2**t)
        p -= lr * m_hat / (np.sqrt(v_hat) + eps)
    return params


def rmsprop_init(params, lr=1e-4, alpha=0.99, eps=1e-8, momentum=0.9, weight_decay=0.0):
    return {
        "lr": float(lr),
        "alpha": float(alpha),
        "eps": float(eps),
        "momentum": float(momentum),
        "weight_decay": float(weight_decay),
        "step": 0,
        "sq_avg": [np.zeros_like(p) for p in params],
        "buf": [np.zeros_like(p) for p in params],
    }


def rmsprop_step(state, params, grads):
    """One RMSprop update with momentum; mutates params and state in place."""
    _check_grads(params, grads)
    state["step"] += 1
    lr, alpha, eps = state["lr"], state["alpha"], state["eps"]
    mom, wd = state["momentum"], state["weight_decay"]
    for p, g, sq, buf in zip(params, grads, state["sq_avg"], state["buf"]):
        if wd != 0.0:
            p -= lr * wd * p
        sq *= alpha
        sq += (1.0 - alpha) * g * g
        step = g / (np.sqrt(sq) + eps)
        if mom != 0.0:
            buf *= mom
            buf += step
            step = buf
        p -= lr * step
    return params


class Adam:
    def __init__(self, tensors, **kwargs):
        self.tensors = list(tensors)
        self.state = adam_init([t.data for t in self.tensors], **kwargs)

    def step(self):
        adam_step(
            self.state,
            [t.data for t in self.tensors],
            [t.grad for t in self.tensors],
        )

    def zero_grad(self):
        zero_grads(self.tensors)


class RMSprop:
    def __init__(self, tensors, **kwargs):
        self.tensors = list(tensors)
        self.state = rmsprop_init([t.data for t in self.tensors], **kwargs)

    def step(self):
        rmsprop_step(
            self.state,
            [t.data for t in self.tensors],
            [t.grad for t in self.tensors],
        )

    def zero_grad(self):
        zero_grads(self.tensors)
