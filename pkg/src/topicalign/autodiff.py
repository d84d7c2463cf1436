"""Dense float64 tensors with reverse-mode automatic differentiation.

Just enough machinery for the encoder/decoder stacks used in this package:
affine layers, ReLU / Softplus / log-softmax, inverted dropout, and batch
normalization, plus the usual arithmetic glue. Gradients are accumulated by
walking the recorded op graph in reverse topological order; every use of a
value contributes additively to its gradient.

Everything is CPU numpy and single threaded per graph. Tensors are
value-semantic: ops never mutate their inputs.
"""

from __future__ import annotations

import numpy as np
from scipy.special import expit


class Tensor:
    """A node in the op graph: a float64 ndarray plus gradient bookkeeping.

    ``data`` is row-major (C-order). ``grad`` is allocated lazily during
    :meth:`backward` and has the same shape as ``data``.
    """

    __slots__ = ("data", "grad", "requires_grad", "name", "_parents", "_backward", "_op")

    def __init__(self, data, requires_grad=False, name="", _parents=(), _backward=None, _op="leaf"):
        arr = np.asarray(data, dtype=np.float64)
        # ascontiguousarray would promote 0-d scalars to shape (1,); keep them 0-d
        self.data = arr if arr.ndim == 0 or arr.flags["C_CONTIGUOUS"] else np.ascontiguousarray(arr)
        self.grad = None
        self.requires_grad = bool(requires_grad) or any(p.requires_grad for p in _parents)
        self.name = name
        self._parents = _parents
        self._backward = _backward
        self._op = _op

    @property
    def shape(self):
        return self.data.shape

    @property
    def ndim(self):
        return self.data.ndim

    @property
    def size(self):
        return self.data.size

    def __repr__(self):
        tag = f" '{self.name}'" if self.name else ""
        return f"Tensor{tag}(shape={self.data.shape}, op={self._op})"

    def _accumulate(self, g):
        if self.grad is None:
            self.grad = np.zeros_like(self.data)
        self.grad += g

    def zero_grad(self):
        self.grad = None

    def backward(self):
        """Reverse-mode sweep from this scalar back to all reachable leaves."""
        if self.data.size != 1:
            raise ValueError("backward() requires a scalar loss, got shape %r" % (self.data.shape,))
        order = []
        seen = set()
        stack = [(self, False)]
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
            if node._backward is None:
                if node._parents:
                    raise RuntimeError(
                        f"detached value encountered in backward: op '{node._op}' has parents "
                        "but no gradient rule"
                    )
                continue
            if not node.requires_grad:
                continue
            node._backward(node.grad)

    # ---- operator sugar -------------------------------------------------

    def __add__(self, other):
        return add(self, other)

    def __radd__(self, other):
        return add(self, other)

    def __mul__(self, other):
        return mul(self, other)

    def __rmul__(self, other):
        return mul(self, other)

    def __neg__(self):
        return mul(self, -1.0)

    def __sub__(self, other):
        return add(self, mul(other, -1.0) if isinstance(other, Tensor) else -np.asarray(other))


def parameter(data, name=""):
    """A trainable leaf tensor."""
    return Tensor(data, requires_grad=True, name=name)


def constant(data, name=""):
    """A non-trainable leaf tensor."""
    return Tensor(data, requires_grad=False, name=name)


def _as_tensor(x):
    return x if isinstance(x, Tensor) else Tensor(x)


def _unbroadcast(grad, shape):
    """Sum ``grad`` down to ``shape`` along axes that were broadcast."""
    while grad.ndim > len(shape):
        grad = grad.sum(axis=0)
    for ax, n in enumerate(shape):
        if n == 1 and grad.shape[ax] != 1:
            grad = grad.sum(axis=ax, keepdims=True)
    return grad


# ---- arithmetic ---------------------------------------------------------


def add(a, b):
    a, b = _as_tensor(a), _as_tensor(b)
    out_data = a.data + b.data

    def bwd(g):
        if a.requires_grad:
            a._accumulate(_unbroadcast(g, a.data.shape))
        if b.requires_grad:
            b._accumulate(_unbroadcast(g, b.data.shape))

    return Tensor(out_data, _parents=(a, b), _backward=bwd, _op="add")


def mul(a, b):
    a = _as_tensor(a)
    b = _as_tensor(b)
    out_data = a.data * b.data

    def bwd(g):
        if a.requires_grad:
            a._accumulate(_unbroadcast(g * b.data, a.data.shape))
        if b.requires_grad:
            b._accumulate(_unbroadcast(g * a.data, b.data.shape))

    return Tensor(out_data, _parents=(a, b), _backward=bwd, _op="mul")


def matmul(a, b, transpose_b=False):
    """a @ b, or a @ b.T when ``transpose_b``."""
    a, b = _as_tensor(a), _as_tensor(b)
    bd = b.data.T if transpose_b else b.data
    out_data = a.data @ bd

    def bwd(g):
        if a.requires_grad:
            a._accumulate(g @ (b.data if transpose_b else b.data.T))
        if b.requires_grad:
            if transpose_b:
                b._accumulate(g.T @ a.data)
            else:
                b._accumulate(a.data.T @ g)

    return Tensor(out_data, _parents=(a, b), _backward=bwd, _op="matmul")


def tsum(a, axis=None):
    a = _as_tensor(a)
    out_data = a.data.sum(axis=axis)

    def bwd(g):
        if not a.requires_grad:
            return
        if axis is None:
            a._accumulate(np.full_like(a.data, g.item()))
        else:
            a._accumulate(np.broadcast_to(np.expand_dims(g, axis), a.data.shape).copy())

    return Tensor(out_data, _parents=(a,), _backward=bwd, _op="sum")


def tmean(a, axis=None):
    a = _as_tensor(a)
    n = a.data.size if axis is None else a.data.shape[axis]
    return mul(tsum(a, axis=axis), 1.0 / n)


# ---- layers -------------------------------------------------------------


class LayerParams:
    """Weights for one affine layer, with optional batch normalization.

    ``weight`` has shape (out_features, in_features); the forward map is
    x @ weight.T + bias.
    """

    def __init__(self, weight, bias, batchnorm=None, name=""):
        self.weight = weight if isinstance(weight, Tensor) else parameter(weight, name + ".weight")
        self.bias = bias if isinstance(bias, Tensor) else parameter(bias, name + ".bias")
        self.batchnorm = batchnorm
        self.name = name
        if self.weight.data.ndim != 2 or self.bias.data.ndim != 1:
            raise ValueError("weight must be 2-d and bias 1-d")
        if self.weight.data.shape[0] != self.bias.data.shape[0]:
            raise ValueError(
                f"layer '{name}': weight rows {self.weight.data.shape[0]} != bias size {self.bias.data.shape[0]}"
            )

    @property
    def in_features(self):
        return self.weight.data.shape[1]

    @property
    def out_features(self):
        return self.weight.data.shape[0]

    def tensors(self):
        out = [self.weight, self.bias]
        if self.batchnorm is not None:
            out.extend(self.batchnorm.tensors())
        return out


class BatchNormState:
    """Per-feature batch normalization state.

    A learnable shift is always present; a learnable scale is optional and
    off by default (stabler in front of softmax-style outputs). Running
    statistics use biased batch variance and are buffers, not parameters.
    """

    def __init__(self, n_features, momentum=0.1, eps=1e-5, scale=False, name=""):
        self.running_mean = np.zeros(n_features)
        self.running_var = np.ones(n_features)
        self.shift = parameter(np.zeros(n_features), name + ".shift")
        self.scale = parameter(np.ones(n_features), name + ".scale") if scale else None
        self.momentum = float(momentum)
        self.eps = float(eps)
        self.name = name

    def tensors(self):
        return [self.shift] if self.scale is None else [self.shift, self.scale]


def affine(x, params: LayerParams):
    """x @ W.T + b for a batch of row vectors."""
    x = _as_tensor(x)
    if x.data.shape[-1] != params.in_features:
        raise ValueError(
            f"affine '{params.name}': input width {x.data.shape[-1]} != expected {params.in_features}"
        )
    return add(matmul(x, params.weight, transpose_b=True), params.bias)


def batch_norm(x, state: BatchNormState, training):
    """Normalize per feature; batch statistics in training, running in eval.

    Training mode updates the running statistics in place as a side effect.
    """
    x = _as_tensor(x)
    if x.data.ndim != 2:
        raise ValueError("batch_norm expects a (batch, features) tensor")
    if training:
        b = x.data.shape[0]
        mu = x.data.mean(axis=0)
        var = x.data.var(axis=0)  # biased
        inv_std = 1.0 / np.sqrt(var + state.eps)
        xhat = (x.data - mu) * inv_std
        m = state.momentum
        state.running_mean = (1.0 - m) * state.running_mean + m * mu
        state.running_var = (1.0 - m) * state.running_var + m * var

        def bwd_x(g):
            if not x.requires_grad:
                return
            gsum = g.sum(axis=0)
            gx = g * xhat
            x._accumulate(inv_std / b * (b * g - gsum - xhat * gx.sum(axis=0)))

        normed = Tensor(xhat, _parents=(x,), _backward=bwd_x, _op="batch_norm")
    else:
        inv_std = 1.0 / np.sqrt(state.running_var + state.eps)
        shiftless = (x.data - state.running_mean) * inv_std

        def bwd_x_eval(g):
            if x.requires_grad:
                x._accumulate(g * inv_std)

        normed = Tensor(shiftless, _parents=(x,), _backward=bwd_x_eval, _op="batch_norm")
    if state.scale is not None:
        normed = mul(normed, state.scale)
    return add(normed, state.shift)


def relu(x):
    x = _as_tensor(x)
    mask = x.data > 0

    def bwd(g):
        if x.requires_grad:
            x._accumulate(g * mask)

    return Tensor(np.where(mask, x.data, 0.0), _parents=(x,), _backward=bwd, _op="relu")


def softplus(x):
    x = _as_tensor(x)
    out_data = np.logaddexp(0.0, x.data)

    def bwd(g):
        if x.requires_grad:
            x._accumulate(g * expit(x.data))

    return Tensor(out_data, _parents=(x,), _backward=bwd, _op="softplus")


def log_softmax(x):
    """Row-wise log softmax along the last axis."""
    x = _as_tensor(x)
    shifted = x.data - x.data.max(axis=-1, keepdims=True)
    lse = np.log(np.exp(shifted).sum(axis=-1, keepdims=True))
    out_data = shifted - lse
    probs = np.exp(out_data)

    def bwd(g):
        if x.requires_grad:
            x._accumulate(g - probs * g.sum(axis=-1, keepdims=True))

    return Tensor(out_data, _parents=(x,), _backward=bwd, _op="log_softmax")


def activation(x, kind):
    """Dispatch on one of {"relu", "softplus", "log_softmax"}."""
    if kind == "relu":
        return relu(x)
    if kind == "softplus":
        return softplus(x)
    if kind == "log_softmax":
        return log_softmax(x)
    raise ValueError(f"unknown activation kind: {kind!r}")


def dropout(x, keep_prob, training, rng):
    """Inverted dropout: survivors are scaled by 1/keep_prob, eval is identity.

    ``rng`` may be a numpy Generator or an integer seed.
    """
    if not (0.0 < keep_prob <= 1.0):
        raise ValueError(f"keep_prob must be in (0, 1], got {keep_prob}")
    x = _as_tensor(x)
    if not training or keep_prob == 1.0:
        return x
    if isinstance(rng, (int, np.integer)):
        rng = np.random.default_rng(int(rng))
    mask = rng.random(x.data.shape) < keep_prob
    return dropout_with_mask(x, mask, keep_prob)


def dropout_with_mask(x, mask, keep_prob):
    """Dropout with a caller-supplied boolean mask (for frozen-noise replay)."""
    x = _as_tensor(x)
    scale = mask / keep_prob

    def bwd(g):
        if x.requires_grad:
            x._accumulate(g * scale)

    return Tensor(x.data * scale, _parents=(x,), _backward=bwd, _op="dropout")
