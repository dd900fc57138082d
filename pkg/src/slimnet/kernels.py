"""Dense numpy kernels.

Convolution is im2col + one BLAS matmul; that is the timed path for the
latency benchmark, so the three channel-selection strategies live here:

* slicing  - a zero-copy prefix view of the stored filter bank,
* masking  - the full dense convolution with inactive outputs zeroed,
* indexing - an explicit gather of selected filters into a fresh buffer.

All kernels are pure functions of their inputs and preserve the input
dtype (float32 in production, float64 in verification tests).
"""

import numpy as np

from .errors import ShapeError, SliceError


def slice_channels(t, k):
    """Prefix view of the first k slabs along the leading axis.

    Aliases the parent buffer; no data is copied.
    """
    n = t.shape[0]
    if k <= 0 or k > n:
        raise SliceError(f"slice extent {k} outside 1..{n}")
    return t[:k]


def slice_filters(w, out_ch, in_ch=None):
    """Prefix view of a conv filter bank on output (and optionally input) channels."""
    w = slice_channels(w, out_ch)
    if in_ch is not None:
        if in_ch <= 0 or in_ch > w.shape[1]:
            raise SliceError(f"input slice extent {in_ch} outside 1..{w.shape[1]}")
        w = w[:, :in_ch]
    return w


def conv_out_size(size, k, stride, pad):
    out = (size + 2 * pad - k) // stride + 1
    if out <= 0:
        raise ShapeError(f"spatial extent {size} admits no output position (k={k}, pad={pad})")
    return out


def im2col(x, kh, kw, stride, pad):
    """Patch matrix of shape [N*OH*OW, C*kh*kw] plus the output spatial extents."""
    n, c, h, w = x.shape
    oh = conv_out_size(h, kh, stride, pad)
    ow = conv_out_size(w, kw, stride, pad)
    if pad:
        x = np.pad(x, ((0, 0), (0, 0), (pad, pad), (pad, pad)))
    sn, sc, sh, sw = x.strides
    windows = np.lib.stride_tricks.as_strided(
        x,
        shape=(n, oh, ow, c, kh, kw),
        strides=(sn, sh * stride, sw * stride, sc, sh, sw),
        writeable=False,
    )
    return windows.reshape(n * oh * ow, c * kh * kw), oh, ow


def col2im(dcols, x_shape, kh, kw, stride, pad, oh, ow):
    """Scatter-add the patch-matrix gradient back to input layout (adjoint of im2col)."""
    n, c, h, w = x_shape
    dx = np.zeros((n, c, h + 2 * pad, w + 2 * pad), dtype=dcols.dtype)
    d6 = dcols.reshape(n, oh, ow, c, kh, kw)
    for i in range(kh):
        for j in range(kw):
            dx[:, :, i:i + oh * stride:stride, j:j + ow * stride:stride] += (
                d6[:, :, :, :, i, j].transpose(0, 3, 1, 2))
    if pad:
        dx = dx[:, :, pad:-pad, pad:-pad]
    return dx


def conv2d(x, w, bias=None, stride=1, pad=0):
    """Cross-correlation of NCHW input with OIkk filters."""
    n, c, h, w_sp = x.shape
    o, i, kh, kw = w.shape
    if c != i:
        raise ShapeError(f"input has {c} channels, filters expect {i}")
    cols, oh, ow = im2col(x, kh, kw, stride, pad)
    # ascontiguousarray is a no-op view for contiguous w; for a sliced view it
    # is the one small copy the slicing strategy pays on the timed path.
    wmat = np.ascontiguousarray(w).reshape(o, i * kh * kw)
    out = cols @ wmat.T
    if bias is not None:
        out = out + bias
    return np.ascontiguousarray(out.reshape(n, oh, ow, o).transpose(0, 3, 1, 2))


def conv2d_masked(x, w, active, bias=None, stride=1, pad=0):
    """Full dense convolution with output channels >= active zeroed.

    The wasteful strategy under test in the benchmark, and the equivalence
    oracle for sliced forwards.
    """
    o = w.shape[0]
    if active < 0 or active > o:
        raise SliceError(f"active count {active} outside 0..{o}")
    out = conv2d(x, w, bias, stride, pad)
    out[:, active:] = 0.0
    return out


def conv2d_indexed(x, w, idx, bias=None, stride=1, pad=0):
    """Gather the filters named by idx into a fresh contiguous buffer, then convolve.

    The gather is intentionally part of the work: it models selection by
    copying, so benchmark timings include it.
    """
    o = w.shape[0]
    idx = list(idx)
    if any(j < 0 or j >= o for j in idx):
        raise IndexError(f"filter index outside 0..{o - 1}")
    if any(b <= a for a, b in zip(idx, idx[1:])):
        raise IndexError("filter indices must be strictly increasing")
    gathered = np.take(w, idx, axis=0)
    b = np.take(bias, idx) if bias is not None else None
    return conv2d(x, gathered, b, stride, pad)


# --- elementwise / reduction suite -----------------------------------------

def relu(x):
    return np.maximum(x, 0)


def tanh(x):
    return np.tanh(x)


def sigmoid(x):
    return 1.0 / (1.0 + np.exp(-x))


def add(a, b):
    try:
        return a + b
    except ValueError as e:
        raise ShapeError(str(e)) from e


def scale(x, s):
    try:
        return x * s
    except ValueError as e:
        raise ShapeError(str(e)) from e


def matmul(a, b):
    if a.shape[-1] != b.shape[0]:
        raise ShapeError(f"matmul inner extents differ: {a.shape} @ {b.shape}")
    return a @ b


def linear(x, w, bias=None):
    """x [n, in] times w [out, in] (+ bias [out])."""
    if x.shape[1] != w.shape[1]:
        raise ShapeError(f"linear expects {w.shape[1]} features, got {x.shape[1]}")
    out = x @ w.T
    if bias is not None:
        out = out + bias
    return out


def softmax(x):
    """Row-wise softmax over the last axis."""
    z = x - np.max(x, axis=-1, keepdims=True)
    e = np.exp(z)
    return e / np.sum(e, axis=-1, keepdims=True)


def global_avg_pool(x):
    """NCHW -> NC spatial mean."""
    if x.ndim != 4:
        raise ShapeError(f"expected NCHW input, got shape {x.shape}")
    return x.mean(axis=(2, 3))


def cross_entropy(probs, targets, eps=1e-12):
    """Mean cross-entropy between rows of probabilities and target distributions."""
    if probs.shape != targets.shape:
        raise ShapeError(f"probability shapes differ: {probs.shape} vs {targets.shape}")
    return float(-np.mean(np.sum(targets * np.log(np.maximum(probs, eps)), axis=-1)))
