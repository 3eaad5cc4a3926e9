"""Minimal reverse-mode automatic differentiation on dense numpy arrays.

Every operation records its parents and a closure computing the local
vector-Jacobian product, so ``backward`` on a scalar loss accumulates
exact gradients into every reachable tensor.  The op vocabulary is the
small fixed set needed by the encoders, samplers and aggregators in this
package; there is no graph compiler and no operator fusion.

float64 is the reference ("test mode") precision; float32 is the fast
mode.  Ops inherit the dtype of their inputs, so a model built from a
float32 parameter store runs entirely in float32.
"""

from __future__ import annotations

import numpy as np
from scipy.special import erf

_INV_SQRT2 = float(1.0 / np.sqrt(2.0))
_INV_SQRT2PI = float(1.0 / np.sqrt(2.0 * np.pi))

NEG_INF_LOGIT = -1e30  # sentinel for masked-out slots; never exponentiated


class DimensionError(ValueError):
    """Shape mismatch between operands."""


class ContractError(ValueError):
    """An op was called outside its contract (e.g. backward on a non-scalar)."""


class Tensor:
    """A dense array plus the tape bookkeeping for reverse mode.

    ``grad`` accumulates additively across backward calls until the tensor
    is discarded or a parameter store clears it.  Only leaves created with
    ``requires_grad=True`` and tensors flagged via ``retain_grad()`` store
    their gradient; everything else just propagates.
    """

    __slots__ = ("data", "parents", "_vjp", "requires_grad", "grad", "name", "retain")

    def __init__(self, data, parents=(), vjp=None, requires_grad=False, name=None):
        self.data = np.asarray(data)
        self.parents = parents
        self._vjp = vjp
        self.retain = requires_grad
        self.requires_grad = requires_grad or any(p.requires_grad for p in parents)
        self.grad = None
        self.name = name

    def retain_grad(self):
        self.retain = True
        return self

    @property
    def shape(self):
        return self.data.shape

    @property
    def dtype(self):
        return self.data.dtype

    def detach(self):
        """Cut gradient flow: a constant leaf sharing this tensor's values."""
        return Tensor(self.data, name=self.name)

    def item(self):
        return float(self.data)

    def _accumulate(self, g):
        if self.grad is None:
            self.grad = np.array(g, dtype=self.data.dtype, copy=True)
        else:
            self.grad += g

    # Operator sugar; the module-level functions are the actual ops.
    def __add__(self, other):
        return add(self, other)

    def __sub__(self, other):
        return sub(self, other)

    def __mul__(self, other):
        return mul(self, other)

    def __neg__(self):
        return scale(self, -1.0)

    def __matmul__(self, other):
        return matmul(self, other)

    def __repr__(self):
        tag = f" name={self.name!r}" if self.name else ""
        return f"Tensor(shape={self.data.shape}, dtype={self.data.dtype}{tag})"


def astensor(x, dtype=None):
    if isinstance(x, Tensor):
        return x
    return Tensor(np.asarray(x, dtype=dtype))


def _unbroadcast(g, shape):
    """Reduce a broadcasted gradient back to ``shape``."""
    if g.shape == shape:
        return g
    extra = g.ndim - len(shape)
    if extra:
        g = g.sum(axis=tuple(range(extra)))
    axes = tuple(i for i, (gs, ss) in enumerate(zip(g.shape, shape)) if ss == 1 and gs != 1)
    if axes:
        g = g.sum(axis=axes, keepdims=True)
    return g.reshape(shape)


def _make(data, parents, vjp, name=None):
    t = Tensor(data, parents=parents, vjp=vjp)
    if name:
        t.name = name
    return t


# ---------------------------------------------------------------------------
# elementwise / broadcast arithmetic
# ---------------------------------------------------------------------------

def add(a, b):
    a, b = astensor(a), astensor(b)
    out_data = a.data + b.data

    def vjp(g):
        return _unbroadcast(g, a.shape), _unbroadcast(g, b.shape)

    return _make(out_data, (a, b), vjp)


def sub(a, b):
    a, b = astensor(a), astensor(b)
    out_data = a.data - b.data

    def vjp(g):
        return _unbroadcast(g, a.shape), -_unbroadcast(g, b.shape)

    return _make(out_data, (a, b), vjp)


def mul(a, b):
    """Elementwise (broadcasting) product."""
    a, b = astensor(a), astensor(b)
    out_data = a.data * b.data

    def vjp(g):
        return _unbroadcast(g * b.data, a.shape), _unbroadcast(g * a.data, b.shape)

    return _make(out_data, (a, b), vjp)


def div(a, b):
    a, b = astensor(a), astensor(b)
    out_data = a.data / b.data

    def vjp(g):
        ga = _unbroadcast(g / b.data, a.shape)
        gb = _unbroadcast(-g * a.data / (b.data * b.data), b.shape)
        return ga, gb

    return _make(out_data, (a, b), vjp)


def scale(a, s):
    """Multiply by a python scalar."""
    a = astensor(a)
    s = float(s)
    out_data = a.data * s

    def vjp(g):
        return (g * s,)

    return _make(out_data, (a,), vjp)


# ---------------------------------------------------------------------------
# linear algebra and shape ops
# ---------------------------------------------------------------------------

def matmul(a, b):
    a, b = astensor(a), astensor(b)
    if a.data.ndim != 2 or b.data.ndim != 2:
        raise DimensionError(f"matmul expects 2-d operands, got {a.shape} @ {b.shape}")
    if a.shape[1] != b.shape[0]:
        raise DimensionError(f"matmul inner dims differ: {a.shape} @ {b.shape}")
    out_data = a.data @ b.data

    def vjp(g):
        return g @ b.data.T, a.data.T @ g

    return _make(out_data, (a, b), vjp)


def affine(x, W, b=None):
    """``x @ W + b`` fused into one tape node.  x is (N, in), W is (in, out)."""
    x, W = astensor(x), astensor(W)
    if x.data.ndim != 2 or W.data.ndim != 2 or x.shape[1] != W.shape[0]:
        raise DimensionError(f"affine shapes incompatible: {x.shape} @ {W.shape}")
    out_data = x.data @ W.data
    if b is not None:
        b = astensor(b)
        out_data = out_data + b.data

        def vjp(g):
            return g @ W.data.T, x.data.T @ g, _unbroadcast(g, b.shape)

        return _make(out_data, (x, W, b), vjp)

    def vjp(g):
        return g @ W.data.T, x.data.T @ g

    return _make(out_data, (x, W), vjp)


def reshape(a, shape):
    a = astensor(a)
    out_data = a.data.reshape(shape)

    def vjp(g):
        return (g.reshape(a.shape),)

    return _make(out_data, (a,), vjp)


def transpose(a, axes):
    a = astensor(a)
    axes = tuple(axes)
    inv = tuple(np.argsort(axes))
    out_data = np.transpose(a.data, axes)

    def vjp(g):
        return (np.transpose(g, inv),)

    return _make(out_data, (a,), vjp)


def concat(tensors, axis):
    tensors = [astensor(t) for t in tensors]
    out_data = np.concatenate([t.data for t in tensors], axis=axis)
    sizes = [t.shape[axis] for t in tensors]
    splits = np.cumsum(sizes)[:-1]

    def vjp(g):
        return tuple(np.split(g, splits, axis=axis))

    return _make(out_data, tuple(tensors), vjp)


def index(a, idx):
    """Advanced/basic indexing with scatter-add gradient (handles repeats)."""
    a = astensor(a)
    out_data = a.data[idx]

    def vjp(g):
        ga = np.zeros_like(a.data)
        np.add.at(ga, idx, g)
        return (ga,)

    return _make(out_data, (a,), vjp)


# ---------------------------------------------------------------------------
# reductions
# ---------------------------------------------------------------------------

def sum_over_axis(a, axis, keepdims=False):
    a = astensor(a)
    out_data = a.data.sum(axis=axis, keepdims=keepdims)

    def vjp(g):
        if not keepdims:
            g = np.expand_dims(g, axis)
        return (np.broadcast_to(g, a.shape).copy(),)

    return _make(out_data, (a,), vjp)


def mean_over_axis(a, axis, keepdims=False):
    a = astensor(a)
    n = a.shape[axis]
    out_data = a.data.mean(axis=axis, keepdims=keepdims)

    def vjp(g):
        if not keepdims:
            g = np.expand_dims(g, axis)
        return (np.broadcast_to(g / n, a.shape).copy(),)

    return _make(out_data, (a,), vjp)


def sum_all(a):
    a = astensor(a)
    out_data = np.asarray(a.data.sum())

    def vjp(g):
        return (np.broadcast_to(g, a.shape).copy(),)

    return _make(out_data, (a,), vjp)


# ---------------------------------------------------------------------------
# nonlinearities
# ---------------------------------------------------------------------------

def gelu(a):
    """Exact (erf-based) GeLU."""
    a = astensor(a)
    x = a.data
    cdf = 0.5 * (1.0 + erf(x * _INV_SQRT2))
    out_data = x * cdf

    def vjp(g):
        pdf = _INV_SQRT2PI * np.exp(-0.5 * x * x)
        return (g * (cdf + x * pdf),)

    return _make(out_data, (a,), vjp)


def relu(a):
    a = astensor(a)
    out_data = np.maximum(a.data, 0.0)

    def vjp(g):
        return (g * (a.data > 0.0),)

    return _make(out_data, (a,), vjp)


def leaky_relu(a, negative_slope=0.2):
    a = astensor(a)
    pos = a.data > 0.0
    out_data = np.where(pos, a.data, negative_slope * a.data)

    def vjp(g):
        return (g * np.where(pos, 1.0, negative_slope),)

    return _make(out_data, (a,), vjp)


def cosine_elementwise(a):
    a = astensor(a)
    out_data = np.cos(a.data)

    def vjp(g):
        return (-g * np.sin(a.data),)

    return _make(out_data, (a,), vjp)


def sigmoid(a):
    a = astensor(a)
    out_data = np.where(a.data >= 0, 1.0 / (1.0 + np.exp(-np.abs(a.data))),
                        np.exp(-np.abs(a.data)) / (1.0 + np.exp(-np.abs(a.data))))

    def vjp(g):
        return (g * out_data * (1.0 - out_data),)

    return _make(out_data, (a,), vjp)


def softplus(a):
    """log(1 + e^x), computed stably; derivative is sigmoid(x)."""
    a = astensor(a)
    x = a.data
    out_data = np.maximum(x, 0.0) + np.log1p(np.exp(-np.abs(x)))

    def vjp(g):
        s = np.where(x >= 0, 1.0 / (1.0 + np.exp(-np.abs(x))),
                     np.exp(-np.abs(x)) / (1.0 + np.exp(-np.abs(x))))
        return (g * s,)

    return _make(out_data, (a,), vjp)


def exp(a):
    a = astensor(a)
    out_data = np.exp(a.data)

    def vjp(g):
        return (g * out_data,)

    return _make(out_data, (a,), vjp)


# ---------------------------------------------------------------------------
# normalization and masked softmax
# ---------------------------------------------------------------------------

def layer_norm(a, gamma, beta, eps=1e-5):
    """Layer norm over the last axis with learnable affine terms."""
    a, gamma, beta = astensor(a), astensor(gamma), astensor(beta)
    x = a.data
    mu = x.mean(axis=-1, keepdims=True)
    var = x.var(axis=-1, keepdims=True)
    inv = 1.0 / np.sqrt(var + eps)
    xhat = (x - mu) * inv
    out_data = gamma.data * xhat + beta.data

    def vjp(g):
        red = tuple(range(g.ndim - 1))
        gx = g * xhat
        dgamma = _unbroadcast(gx.sum(axis=red) if red else gx, gamma.shape)
        dbeta = _unbroadcast(g.sum(axis=red) if red else g, beta.shape)
        dxhat = g * gamma.data
        m1 = dxhat.mean(axis=-1, keepdims=True)
        m2 = (gx * gamma.data).mean(axis=-1, keepdims=True)
        dx = inv * (dxhat - m1 - xhat * m2)
        return dx, dgamma, dbeta

    return _make(out_data, (a, gamma, beta), vjp)


def _masked_shift_exp(logits, mask):
    neg = np.where(mask, logits, -np.inf)
    mx = neg.max(axis=-1, keepdims=True)
    mx = np.where(np.isfinite(mx), mx, 0.0)  # rows with zero valid slots
    e = np.exp(np.where(mask, logits - mx, -np.inf))  # exp(-inf) = 0, no overflow
    return e, mx


def softmax_masked(logits, mask):
    """Softmax over the last axis restricted to ``mask``; masked slots get 0.

    Rows with no valid slot come out all-zero rather than NaN.
    """
    logits = astensor(logits)
    mask = np.asarray(mask, dtype=bool)
    e, _ = _masked_shift_exp(logits.data, mask)
    z = e.sum(axis=-1, keepdims=True)
    out_data = np.divide(e, z, out=np.zeros_like(e), where=z > 0)

    def vjp(g):
        dot = (g * out_data).sum(axis=-1, keepdims=True)
        return (out_data * (g - dot),)

    return _make(out_data, (logits,), vjp)


def log_softmax_masked(logits, mask):
    """Stable log-probabilities over valid slots; masked slots get a finite
    large-negative sentinel (they carry zero probability and are never
    selected, so their value only needs to be harmless)."""
    logits = astensor(logits)
    mask = np.asarray(mask, dtype=bool)
    e, mx = _masked_shift_exp(logits.data, mask)
    z = e.sum(axis=-1, keepdims=True)
    tiny = np.finfo(e.dtype).tiny
    lse = np.where(z > 0, np.log(np.maximum(z, tiny)) + mx, 0.0)
    out_data = np.where(mask, logits.data - lse, NEG_INF_LOGIT)
    p = np.divide(e, z, out=np.zeros_like(e), where=z > 0)

    def vjp(g):
        gm = np.where(mask, g, 0.0)
        return (gm - p * gm.sum(axis=-1, keepdims=True),)

    return _make(out_data, (logits,), vjp)


def where_mask(mask, a, b):
    """Differentiable select between two tensors by a constant boolean mask."""
    a, b = astensor(a), astensor(b)
    mask = np.asarray(mask, dtype=bool)
    out_data = np.where(mask, a.data, b.data)

    def vjp(g):
        return (_unbroadcast(np.where(mask, g, 0.0), a.shape),
                _unbroadcast(np.where(mask, 0.0, g), b.shape))

    return _make(out_data, (a, b), vjp)


elementwise_mul = mul


def softmax_over_axis(logits, mask=None):
    """Softmax over the last axis; an optional mask restricts the support."""
    logits = astensor(logits)
    if mask is None:
        mask = np.ones(logits.shape, dtype=bool)
    return softmax_masked(logits, mask)


# ---------------------------------------------------------------------------
# backward pass
# ---------------------------------------------------------------------------

def backward(loss):
    """Accumulate dLoss/dx into ``grad`` of every tensor reachable from loss.

    Repeated calls keep accumulating until grads are cleared.
    """
    if loss.data.size != 1:
        raise ContractError(f"backward requires a scalar loss, got shape {loss.shape}")

    topo = []
    seen = set()
    stack = [(loss, False)]
    while stack:
        node, expanded = stack.pop()
        if id(node) in seen:
            continue
        if expanded:
            seen.add(id(node))
            topo.append(node)
            continue
        stack.append((node, True))
        for p in node.parents:
            if id(p) not in seen and p.requires_grad:
                stack.append((p, False))

    grads = {id(loss): np.ones_like(loss.data)}
    for node in reversed(topo):
        g = grads.pop(id(node), None)
        if g is None:
            continue
        if node.retain or node is loss:
            node._accumulate(g)
        if node._vjp is None:
            continue
        parent_grads = node._vjp(g)
        for p, pg in zip(node.parents, parent_grads):
            if not p.requires_grad or pg is None:
                continue
            if id(p) in grads:
                grads[id(p)] = grads[id(p)] + pg
            else:
                grads[id(p)] = pg


def ancestors(t):
    """All tensors reachable from ``t`` through parent links (t excluded)."""
    out = []
    seen = {id(t)}
    stack = list(t.parents)
    while stack:
        node = stack.pop()
        if id(node) in seen:
            continue
        seen.add(id(node))
        out.append(node)
        stack.extend(node.parents)
    return out
