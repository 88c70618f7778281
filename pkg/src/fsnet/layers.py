"""Neural-net layer primitives on numpy arrays (NCHW, float64 by default).

Every forward returns whatever the matching backward needs as an explicit
cache value; nothing is hidden in module state. Backwards are exact
analytic gradients and are checked against central finite differences in
the test suite.
"""

from __future__ import annotations

import numpy as np


# ---------------------------------------------------------------------------
# convolution

def conv_output_size(size: int, kernel: int, stride: int, pad: int) -> int:
    out = (size + 2 * pad - kernel) // stride + 1
    if out < 1:
        raise ValueError(
            f"conv/pool output collapses: size={size} kernel={kernel} "
            f"stride={stride} pad={pad}"
        )
    return out


def _im2col(x: np.ndarray, kh: int, kw: int, stride: int, pad: int) -> np.ndarray:
    n, c, h, w = x.shape
    oh = conv_output_size(h, kh, stride, pad)
    ow = conv_output_size(w, kw, stride, pad)
    if pad:
        x = np.pad(x, ((0, 0), (0, 0), (pad, pad), (pad, pad)))
    cols = np.empty((n, c, kh, kw, oh, ow), dtype=x.dtype)
    for i in range(kh):
        for j in range(kw):
            cols[:, :, i, j] = x[:, :, i : i + stride * oh : stride,
                                 j : j + stride * ow : stride]
    return cols.reshape(n, c * kh * kw, oh * ow)


def _col2im(cols: np.ndarray, x_shape, kh: int, kw: int, stride: int,
            pad: int) -> np.ndarray:
    n, c, h, w = x_shape
    oh = conv_output_size(h, kh, stride, pad)
    ow = conv_output_size(w, kw, stride, pad)
    xp = np.zeros((n, c, h + 2 * pad, w + 2 * pad), dtype=cols.dtype)
    cols = cols.reshape(n, c, kh, kw, oh, ow)
    for i in range(kh):
        for j in range(kw):
            xp[:, :, i : i + stride * oh : stride,
               j : j + stride * ow : stride] += cols[:, :, i, j]
    if pad:
        return xp[:, :, pad : pad + h, pad : pad + w]
    return xp


def conv2d_forward(x: np.ndarray, weight: np.ndarray, bias: np.ndarray,
                   stride: int = 1, pad: int = 0):
    """Cross-correlation of x (N,C,H,W) with weight (O,C,kh,kw) plus bias.

    Returns (out, cache) where out is (N,O,OH,OW).
    """
    n, c, h, w = x.shape
    co, ci, kh, kw = weight.shape
    if ci != c:
        raise ValueError(f"channel mismatch: input has {c}, kernel expects {ci}")
    cols = _im2col(x, kh, kw, stride, pad)
    w_mat = weight.reshape(co, ci * kh * kw)
    out = np.einsum("ok,nkp->nop", w_mat, cols) + bias[None, :, None]
    oh = conv_output_size(h, kh, stride, pad)
    ow = conv_output_size(w, kw, stride, pad)
    out = out.reshape(n, co, oh, ow)
    cache = (cols, x.shape, weight.shape, stride, pad)
    return out, cache


def conv2d_backward(grad_out: np.ndarray, weight: np.ndarray, cache):
    cols, x_shape, w_shape, stride, pad = cache
    co, ci, kh, kw = w_shape
    n = x_shape[0]
    g = grad_out.reshape(n, co, -1)
    w_mat = weight.reshape(co, ci * kh * kw)
    grad_w = np.einsum("nop,nkp->ok", g, cols).reshape(w_shape)
    grad_b = g.sum(axis=(0, 2))
    grad_cols = np.einsum("ok,nop->nkp", w_mat, g)
    grad_x = _col2im(grad_cols, x_shape, kh, kw, stride, pad)
    return grad_x, grad_w, grad_b


# ---------------------------------------------------------------------------
# relu

def relu_forward(x: np.ndarray):
    out = np.maximum(x, 0)
    return out, (x > 0)


def relu_backward(grad_out: np.ndarray, mask: np.ndarray) -> np.ndarray:
    return grad_out * mask


# ---------------------------------------------------------------------------
# local response normalization (across channels)

def _channel_window_sum(x: np.ndarray, radius: int) -> np.ndarray:
    # sum over channels j in [i-radius, i+radius], clipped to the valid range
    n, c = x.shape[:2]
    cs = np.concatenate(
        [np.zeros((n, 1) + x.shape[2:], dtype=x.dtype), np.cumsum(x, axis=1)],
        axis=1,
    )
    hi = np.minimum(np.arange(c) + radius + 1, c)
    lo = np.maximum(np.arange(c) - radius, 0)
    return cs[:, hi] - cs[:, lo]


def lrn_forward(x: np.ndarray, radius: int = 2, k: float = 2.0,
                alpha: float = 1e-4, beta: float = 0.75):
    """y_i = x_i / (k + alpha * sum_{|j-i|<=radius} x_j^2)^beta over channels."""
    s = _channel_window_sum(x * x, radius)
    denom = k + alpha * s
    out = x * denom ** (-beta)
    return out, (x, denom)


def lrn_backward(grad_out: np.ndarray, cache, radius: int = 2, k: float = 2.0,
                 alpha: float = 1e-4, beta: float = 0.75) -> np.ndarray:
    x, denom = cache
    t = _channel_window_sum(grad_out * x * denom ** (-beta - 1.0), radius)
    return grad_out * denom ** (-beta) - 2.0 * alpha * beta * x * t


# ---------------------------------------------------------------------------
# max pooling

def maxpool_forward(x: np.ndarray, kernel: int, stride: int):
    n, c, h, w = x.shape
    if kernel > h or kernel > w:
        raise ValueError(f"pool kernel {kernel} exceeds input {h}x{w}")
    oh = (h - kernel) // stride + 1
    ow = (w - kernel) // stride + 1
    windows = np.empty((n, c, kernel * kernel, oh, ow), dtype=x.dtype)
    for i in range(kernel):
        for j in range(kernel):
            windows[:, :, i * kernel + j] = x[:, :, i : i + stride * oh : stride,
                                              j : j + stride * ow : stride]
    arg = windows.argmax(axis=2)
    out = np.take_along_axis(windows, arg[:, :, None], axis=2)[:, :, 0]
    # translate window-local argmax to flat H*W indices for the backward pass
    oy, ox = np.meshgrid(np.arange(oh), np.arange(ow), indexing="ij")
    rows = oy[None, None] * stride + arg // kernel
    cols = ox[None, None] * stride + arg % kernel
    flat_idx = rows * w + cols
    return out, (flat_idx, x.shape)


def maxpool_backward(grad_out: np.ndarray, cache) -> np.ndarray:
    flat_idx, x_shape = cache
    n, c, h, w = x_shape
    grad_x = np.zeros((n, c, h * w), dtype=grad_out.dtype)
    nn, cc = np.meshgrid(np.arange(n), np.arange(c), indexing="ij")
    np.add.at(
        grad_x,
        (nn[:, :, None], cc[:, :, None], flat_idx.reshape(n, c, -1)),
        grad_out.reshape(n, c, -1),
    )
    return grad_x.reshape(x_shape)


# ---------------------------------------------------------------------------
# fully connected

def fc_forward(x: np.ndarray, weight: np.ndarray, bias: np.ndarray):
    """y = x @ weight.T + bias; x may be (D,) or (B, D)."""
    if x.shape[-1] != weight.shape[1]:
        raise ValueError(
            f"fc shape mismatch: input {x.shape[-1]} vs weight in-dim {weight.shape[1]}"
        )
    return x @ weight.T + bias, x


def fc_backward(grad_out: np.ndarray, weight: np.ndarray, x: np.ndarray):
    if grad_out.ndim == 1:
        grad_w = np.outer(grad_out, x)
        grad_b = grad_out.copy()
    else:
        grad_w = grad_out.T @ x
        grad_b = grad_out.sum(axis=0)
    grad_x = grad_out @ weight
    return grad_x, grad_w, grad_b


# ---------------------------------------------------------------------------
# dropout (inverted scaling so eval is identity)

def dropout_forward(x: np.ndarray, rate: float, train: bool,
                    rng: np.random.Generator | None = None):
    if not train or rate == 0.0:
        mask = np.ones_like(x)
        return x.copy(), mask
    if not 0.0 <= rate < 1.0:
        raise ValueError(f"dropout rate must be in [0, 1), got {rate}")
    if rng is None:
        raise ValueError("training-mode dropout needs an rng")
    keep = rng.random(x.shape) >= rate
    mask = keep.astype(x.dtype) / (1.0 - rate)
    return x * mask, mask


def dropout_backward(grad_out: np.ndarray, mask: np.ndarray) -> np.ndarray:
    return grad_out * mask


# ---------------------------------------------------------------------------
# softmax cross-entropy (binary head: logits have 2 entries per sample)

def softmax(logits: np.ndarray) -> np.ndarray:
    z = logits - logits.max(axis=-1, keepdims=True)
    e = np.exp(z)
    return e / e.sum(axis=-1, keepdims=True)


def softmax_xent(logits: np.ndarray, labels: np.ndarray):
    """Mean cross-entropy over a batch (or a single sample).

    labels are integer class indices. Returns (loss, grad wrt logits);
    the gradient is (softmax - onehot) / batch_size.
    """
    single = logits.ndim == 1
    lg = logits[None] if single else logits
    lb = np.atleast_1d(np.asarray(labels, dtype=np.intp))
    if lg.shape[0] != lb.shape[0]:
        raise ValueError(f"batch mismatch: {lg.shape[0]} logits vs {lb.shape[0]} labels")
    p = softmax(lg)
    b = lg.shape[0]
    # log-sum-exp form keeps the loss exact even for extreme logits
    z = lg - lg.max(axis=1, keepdims=True)
    log_p = z - np.log(np.exp(z).sum(axis=1, keepdims=True))
    loss = -log_p[np.arange(b), lb].mean()
    grad = p.copy()
    grad[np.arange(b), lb] -= 1.0
    grad /= b
    if single:
        grad = grad[0]
    return float(loss), grad
