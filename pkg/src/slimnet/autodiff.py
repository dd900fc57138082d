"""Reverse-mode autodiff tape over the numpy kernels.

One tape per training step: ops append nodes in creation order, backward
walks the exact reverse order and accumulates gradients additively. Only
float data flows on the tape; parameters are leaf tensors with
requires_grad=True.
"""

import contextlib

import numpy as np

from . import kernels
from .errors import ContractError, NumericError, ShapeError, SliceError

_grad_enabled = True


@contextlib.contextmanager
def no_grad():
    """Disable tape construction (evaluation / teacher forwards)."""
    global _grad_enabled
    prev = _grad_enabled
    _grad_enabled = False
    try:
        yield
    finally:
        _grad_enabled = prev


def grad_enabled():
    return _grad_enabled


class Tensor:
    __slots__ = ("data", "grad", "requires_grad", "_backward", "_prev")

    def __init__(self, data, requires_grad=False, dtype=None):
        if isinstance(data, np.ndarray) and dtype is None:
            self.data = data if data.dtype in (np.float32, np.float64) else data.astype(np.float32)
        else:
            self.data = np.asarray(data, dtype=dtype or np.float32)
        self.grad = None
        self.requires_grad = requires_grad
        self._backward = None
        self._prev = ()

    @property
    def shape(self):
        return self.data.shape

    @property
    def size(self):
        return self.data.size

    def __repr__(self):
        return f"Tensor(shape={self.data.shape}, grad={'set' if self.grad is not None else 'none'})"

    def zero_grad(self):
        self.grad = None

    def accumulate(self, g):
        if self.grad is None:
            self.grad = np.zeros_like(self.data)
        self.grad += g

    def grad_or_zeros(self):
        return self.grad if self.grad is not None else np.zeros_like(self.data)

    def detach(self):
        return Tensor(self.data)

    def backward(self):
        backward(self)


def parameter(data, dtype=np.float32):
    return Tensor(np.array(data, dtype=dtype), requires_grad=True)


def _node(data, parents, backward_fn):
    """Create an op output; records on the tape only when gradients can flow."""
    if _grad_enabled and any(p.requires_grad for p in parents):
        out = Tensor(data)
        out.requires_grad = True
        out._prev = tuple(parents)
        out._backward = backward_fn
        return out
    return Tensor(data)


def backward(loss):
    """Backpropagate from a scalar node; gradients accumulate on every
    reachable tensor with requires_grad."""
    if loss.data.size != 1:
        raise ContractError(f"backward expects a scalar loss, got shape {loss.data.shape}")
    topo = []
    seen = set()
    stack = [(loss, False)]
    while stack:
        node, expanded = stack.pop()
        if expanded:
            topo.append(node)
            continue
        if id(node) in seen:
            continue
        seen.add(id(node))
        stack.append((node, True))
        for p in node._prev:
            if id(p) not in seen and p.requires_grad:
                stack.append((p, False))
    loss.accumulate(np.ones_like(loss.data))
    for node in reversed(topo):
        if node._backward is not None:
            node._backward(node.grad)


def grad_map(loss, params):
    """Gradients of loss for each named parameter; unreachable ones are exact zeros."""
    for p in params.values():
        p.zero_grad()
    backward(loss)
    return {name: p.grad_or_zeros() for name, p in params.items()}


def _unbroadcast(g, shape):
    """Sum g down to `shape` (adjoint of numpy broadcasting)."""
    while g.ndim > len(shape):
        g = g.sum(axis=0)
    for ax, s in enumerate(shape):
        if s == 1 and g.shape[ax] != 1:
            g = g.sum(axis=ax, keepdims=True)
    return g


# --- arithmetic -------------------------------------------------------------

def add(a, b):
    out_data = kernels.add(a.data, b.data)

    def bw(g):
        if a.requires_grad:
            a.accumulate(_unbroadcast(g, a.data.shape))
        if b.requires_grad:
            b.accumulate(_unbroadcast(g, b.data.shape))

    return _node(out_data, (a, b), bw)


def sub(a, b):
    out_data = a.data - b.data

    def bw(g):
        if a.requires_grad:
            a.accumulate(_unbroadcast(g, a.data.shape))
        if b.requires_grad:
            b.accumulate(_unbroadcast(-g, b.data.shape))

    return _node(out_data, (a, b), bw)


def mul(a, b):
    out_data = kernels.scale(a.data, b.data)

    def bw(g):
        if a.requires_grad:
            a.accumulate(_unbroadcast(g * b.data, a.data.shape))
        if b.requires_grad:
            b.accumulate(_unbroadcast(g * a.data, b.data.shape))

    return _node(out_data, (a, b), bw)


def mul_scalar(a, s):
    def bw(g):
        if a.requires_grad:
            a.accumulate(g * s)

    return _node(a.data * s, (a,), bw)


def add_scalar(a, s):
    def bw(g):
        if a.requires_grad:
            a.accumulate(g)

    return _node(a.data + s, (a,), bw)


def matmul(a, b):
    out_data = kernels.matmul(a.data, b.data)

    def bw(g):
        if a.requires_grad:
            a.accumulate(g @ b.data.T)
        if b.requires_grad:
            b.accumulate(a.data.T @ g)

    return _node(out_data, (a, b), bw)


def transpose(a):
    def bw(g):
        if a.requires_grad:
            a.accumulate(g.T)

    return _node(a.data.T, (a,), bw)


def reshape(a, shape):
    def bw(g):
        if a.requires_grad:
            a.accumulate(g.reshape(a.data.shape))

    return _node(a.data.reshape(shape), (a,), bw)


def sum_all(a):
    def bw(g):
        if a.requires_grad:
            a.accumulate(np.full_like(a.data, float(g)))

    return _node(np.sum(a.data, dtype=a.data.dtype), (a,), bw)


def sum_axis(a, axis, keepdims=False):
    out_data = a.data.sum(axis=axis, keepdims=keepdims)

    def bw(g):
        if a.requires_grad:
            gg = g if keepdims else np.expand_dims(g, axis)
            a.accumulate(np.broadcast_to(gg, a.data.shape).copy())

    return _node(out_data, (a,), bw)


def mean_all(a):
    n = a.data.size

    def bw(g):
        if a.requires_grad:
            a.accumulate(np.full_like(a.data, float(g) / n))

    return _node(np.mean(a.data, dtype=a.data.dtype), (a,), bw)


# --- nonlinearities ---------------------------------------------------------

def relu(a):
    out_data = kernels.relu(a.data)

    def bw(g):
        if a.requires_grad:
            a.accumulate(g * (a.data > 0))

    return _node(out_data, (a,), bw)


def tanh(a):
    out_data = kernels.tanh(a.data)

    def bw(g):
        if a.requires_grad:
            a.accumulate(g * (1.0 - out_data * out_data))

    return _node(out_data, (a,), bw)


def sigmoid(a):
    out_data = kernels.sigmoid(a.data)

    def bw(g):
        if a.requires_grad:
            a.accumulate(g * out_data * (1.0 - out_data))

    return _node(out_data, (a,), bw)


def log(a, eps=0.0):
    x = np.maximum(a.data, eps) if eps else a.data
    out_data = np.log(x)

    def bw(g):
        if a.requires_grad:
            mask = (a.data >= eps) if eps else 1.0
            a.accumulate(g / np.maximum(a.data, eps if eps else 1e-300) * mask)

    return _node(out_data, (a,), bw)


def softmax(a):
    """Row softmax over the last axis."""
    y = kernels.softmax(a.data)

    def bw(g):
        if a.requires_grad:
            dot = np.sum(g * y, axis=-1, keepdims=True)
            a.accumulate((g - dot) * y)

    return _node(y, (a,), bw)


# --- structural ops ---------------------------------------------------------

def prefix_slice(a, k, axis=0):
    """First-k prefix along axis 0 or 1; gradient is scattered into an
    otherwise exactly-zero tensor of the full shape."""
    if axis == 0:
        out_data = kernels.slice_channels(a.data, k)
    elif axis == 1:
        if k <= 0 or k > a.data.shape[1]:
            raise SliceError(f"slice extent {k} outside 1..{a.data.shape[1]}")
        out_data = a.data[:, :k]
    else:
        raise ContractError("prefix_slice supports axis 0 or 1 only")

    def bw(g):
        if a.requires_grad:
            full = np.zeros_like(a.data)
            if axis == 0:
                full[:k] = g
            else:
                full[:, :k] = g
            a.accumulate(full)

    return _node(out_data, (a,), bw)


def take_rows(a, idx):
    """Gather rows along the batch axis; backward scatter-adds."""
    idx = np.asarray(idx, dtype=np.int64)
    out_data = a.data[idx]

    def bw(g):
        if a.requires_grad:
            full = np.zeros_like(a.data)
            np.add.at(full, idx, g)
            a.accumulate(full)

    return _node(out_data, (a,), bw)


def concat_rows(parts):
    sizes = [p.data.shape[0] for p in parts]
    out_data = np.concatenate([p.data for p in parts], axis=0)

    def bw(g):
        ofs = 0
        for p, s in zip(parts, sizes):
            if p.requires_grad:
                p.accumulate(g[ofs:ofs + s])
            ofs += s

    return _node(out_data, tuple(parts), bw)


def global_avg_pool(a):
    n, c, h, w = a.data.shape
    out_data = kernels.global_avg_pool(a.data)

    def bw(g):
        if a.requires_grad:
            a.accumulate(np.broadcast_to(g[:, :, None, None] / (h * w), a.data.shape).copy())

    return _node(out_data, (a,), bw)


def conv2d(x, w, bias=None, stride=1, pad=0):
    n, c, h, w_sp = x.data.shape
    o, i, kh, kw = w.data.shape
    if c != i:
        raise ShapeError(f"input has {c} channels, filters expect {i}")
    cols, oh, ow = kernels.im2col(x.data, kh, kw, stride, pad)
    wmat = np.ascontiguousarray(w.data).reshape(o, i * kh * kw)
    out2 = cols @ wmat.T
    if bias is not None:
        out2 = out2 + bias.data
    out_data = np.ascontiguousarray(out2.reshape(n, oh, ow, o).transpose(0, 3, 1, 2))

    parents = (x, w) if bias is None else (x, w, bias)

    def bw(g):
        g2 = g.transpose(0, 2, 3, 1).reshape(n * oh * ow, o)
        if bias is not None and bias.requires_grad:
            bias.accumulate(g2.sum(axis=0))
        if w.requires_grad:
            w.accumulate((g2.T @ cols).reshape(o, i, kh, kw))
        if x.requires_grad:
            x.accumulate(kernels.col2im(g2 @ wmat, x.data.shape, kh, kw, stride, pad, oh, ow))

    return _node(out_data, parents, bw)


def linear(x, w, bias=None):
    """x [n, in] times w [out, in] (+ bias)."""
    out_data = kernels.linear(x.data, w.data, bias.data if bias is not None else None)
    parents = (x, w) if bias is None else (x, w, bias)

    def bw(g):
        if bias is not None and bias.requires_grad:
            bias.accumulate(g.sum(axis=0))
        if w.requires_grad:
            w.accumulate(g.T @ x.data)
        if x.requires_grad:
            x.accumulate(g @ w.data)

    return _node(out_data, parents, bw)


# --- normalization ----------------------------------------------------------

def group_norm(x, gamma, beta, groups, eps=1e-5):
    """Per-sample normalization over channel groups; gamma/beta are the
    active-width affine slices."""
    n, c, h, w = x.data.shape
    if c % groups:
        raise ShapeError(f"{c} channels not divisible into {groups} groups")
    cg = c // groups
    xg = x.data.reshape(n, groups, cg * h * w)
    mu = xg.mean(axis=2, keepdims=True)
    var = xg.var(axis=2, keepdims=True)
    inv = 1.0 / np.sqrt(var + eps)
    xhat = ((xg - mu) * inv).reshape(n, c, h, w)
    out_data = xhat * gamma.data[:, None, None] + beta.data[:, None, None]

    def bw(g):
        if beta.requires_grad:
            beta.accumulate(g.sum(axis=(0, 2, 3)))
        if gamma.requires_grad:
            gamma.accumulate((g * xhat).sum(axis=(0, 2, 3)))
        if x.requires_grad:
            m = cg * h * w
            dxh = (g * gamma.data[:, None, None]).reshape(n, groups, m)
            xh = xhat.reshape(n, groups, m)
            s1 = dxh.sum(axis=2, keepdims=True)
            s2 = (dxh * xh).sum(axis=2, keepdims=True)
            dx = inv / m * (m * dxh - s1 - xh * s2)
            x.accumulate(dx.reshape(n, c, h, w))

    return _node(out_data, (x, gamma, beta), bw)


def batch_norm_train(x, gamma, beta, eps=1e-5):
    """Batch-statistics normalization; returns (out, batch_mean, batch_var)
    with the statistics as plain arrays for running-table updates."""
    n, c, h, w = x.data.shape
    m = n * h * w
    mu = x.data.mean(axis=(0, 2, 3))
    var = x.data.var(axis=(0, 2, 3))
    inv = 1.0 / np.sqrt(var + eps)
    xhat = (x.data - mu[:, None, None]) * inv[:, None, None]
    out_data = xhat * gamma.data[:, None, None] + beta.data[:, None, None]

    def bw(g):
        if beta.requires_grad:
            beta.accumulate(g.sum(axis=(0, 2, 3)))
        if gamma.requires_grad:
            gamma.accumulate((g * xhat).sum(axis=(0, 2, 3)))
        if x.requires_grad:
            dxh = g * gamma.data[:, None, None]
            s1 = dxh.sum(axis=(0, 2, 3))
            s2 = (dxh * xhat).sum(axis=(0, 2, 3))
            dx = inv[:, None, None] / m * (m * dxh - s1[:, None, None] - xhat * s2[:, None, None])
            x.accumulate(dx)

    return _node(out_data, (x, gamma, beta), bw), mu, var


def batch_norm_eval(x, gamma, beta, mean, var, eps=1e-5):
    """Normalization with fixed recorded statistics (plain arrays)."""
    inv = 1.0 / np.sqrt(var + eps)
    scale = gamma.data * inv
    out_data = (x.data - mean[:, None, None]) * scale[:, None, None] + beta.data[:, None, None]
    xhat = (x.data - mean[:, None, None]) * inv[:, None, None]

    def bw(g):
        if beta.requires_grad:
            beta.accumulate(g.sum(axis=(0, 2, 3)))
        if gamma.requires_grad:
            gamma.accumulate((g * xhat).sum(axis=(0, 2, 3)))
        if x.requires_grad:
            x.accumulate(g * scale[:, None, None])

    return _node(out_data, (x, gamma, beta), bw)


# --- losses and gating ------------------------------------------------------

def log_softmax(a):
    z = a.data - np.max(a.data, axis=-1, keepdims=True)
    lse = np.log(np.sum(np.exp(z), axis=-1, keepdims=True))
    out_data = z - lse

    def bw(g):
        if a.requires_grad:
            sm = np.exp(out_data)
            a.accumulate(g - sm * g.sum(axis=-1, keepdims=True))

    return _node(out_data, (a,), bw)


def cross_entropy_logits(logits, labels):
    """Mean cross-entropy of logits against integer class labels."""
    labels = np.asarray(labels, dtype=np.int64)
    n = logits.data.shape[0]
    z = logits.data - np.max(logits.data, axis=-1, keepdims=True)
    lse = np.log(np.sum(np.exp(z), axis=-1, keepdims=True))
    logp = z - lse
    out_data = np.asarray(-np.mean(logp[np.arange(n), labels]), dtype=logits.data.dtype)

    def bw(g):
        if logits.requires_grad:
            sm = np.exp(logp)
            sm[np.arange(n), labels] -= 1.0
            logits.accumulate(sm * (float(g) / n))

    return _node(out_data, (logits,), bw)


def cross_entropy_soft(logits, target_probs):
    """Mean cross-entropy of logits against detached target distributions."""
    q = np.asarray(target_probs, dtype=logits.data.dtype)
    if q.shape != logits.data.shape:
        raise ShapeError(f"target shape {q.shape} differs from logits {logits.data.shape}")
    n = logits.data.shape[0]
    z = logits.data - np.max(logits.data, axis=-1, keepdims=True)
    lse = np.log(np.sum(np.exp(z), axis=-1, keepdims=True))
    logp = z - lse
    out_data = np.asarray(-np.mean(np.sum(q * logp, axis=-1)), dtype=logits.data.dtype)

    def bw(g):
        if logits.requires_grad:
            sm = np.exp(logp)
            logits.accumulate((sm - q) * (float(g) / n))

    return _node(out_data, (logits,), bw)


def gumbel_noise(rng, shape, dtype=np.float32):
    """Standard Gumbel(0,1) draws: -log(-log(u)), u uniform in (0,1)."""
    u = rng.random(shape, dtype=np.float64)
    u = np.clip(u, 1e-12, 1.0 - 1e-12)
    return (-np.log(-np.log(u))).astype(dtype)


def straight_through_argmax(scores, tau=1.0, rng=None, training=False):
    """Hard one-hot argmax forward; softmax((scores + noise)/tau) jacobian backward.

    Gumbel noise is drawn per call when training and rng is given; evaluation
    is noise-free. Ties break toward the lowest index. Forward output never
    depends on tau.
    """
    if not np.all(np.isfinite(scores.data)):
        raise NumericError("straight-through argmax received non-finite scores")
    z = scores.data
    if training and rng is not None:
        z = z + gumbel_noise(rng, z.shape, z.dtype)
    soft = kernels.softmax(z / tau)
    hard = np.zeros_like(z)
    choice = np.argmax(z, axis=-1)
    hard[np.arange(z.shape[0]), choice] = 1.0

    def bw(g):
        if scores.requires_grad:
            dot = np.sum(g * soft, axis=-1, keepdims=True)
            scores.accumulate((g - dot) * soft / tau)

    out = _node(hard, (scores,), bw)
    return out, choice
