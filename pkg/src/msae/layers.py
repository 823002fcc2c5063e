"""Layer primitives with explicit forward and backward passes.

Everything operates on float64 numpy arrays: (channels, height, width) for
spatial ops, flat vectors for dense ops. Convolutions are valid (no
padding). Each backward pass is checked against central finite differences
by the test suite and the gradcheck command.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np


def _f64(x) -> np.ndarray:
    return np.asarray(x, dtype=np.float64)


def _check(cond: bool, msg: str) -> None:
    if not cond:
        raise ValueError(msg)


# ---------------------------------------------------------------------------
# im2col machinery shared by conv and transposed conv


def _im2col(x: np.ndarray, k: int, stride: int):
    """Unfold (C,H,W) into (C*k*k, n_out) columns, one per output cell."""
    win = np.lib.stride_tricks.sliding_window_view(x, (k, k), axis=(1, 2))
    win = win[:, ::stride, ::stride]
    c, ho, wo = win.shape[:3]
    cols = win.transpose(0, 3, 4, 1, 2).reshape(c * k * k, ho * wo)
    return np.ascontiguousarray(cols), ho, wo


def _col2im(cols: np.ndarray, shape, k: int, stride: int) -> np.ndarray:
    """Adjoint of _im2col: scatter-add columns back onto a (C,H,W) canvas."""
    c, h, w = shape
    ho = (h - k) // stride + 1
    wo = (w - k) // stride + 1
    blocks = cols.reshape(c, k, k, ho, wo)
    out = np.zeros((c, h, w))
    for i in range(k):
        for j in range(k):
            out[:, i:i + stride * ho:stride, j:j + stride * wo:stride] += blocks[:, i, j]
    return out


# ---------------------------------------------------------------------------
# convolution


def conv2d_forward(x, kernels, bias, stride: int = 1) -> np.ndarray:
    """Valid cross-correlation of (C,H,W) with (F,C,k,k) kernels plus bias.

    Output is (F, (H-k)//stride + 1, (W-k)//stride + 1).
    """
    x, kernels, bias = _f64(x), _f64(kernels), _f64(bias)
    _check(x.ndim == 3, f"input must be (C,H,W), got shape {x.shape}")
    _check(kernels.ndim == 4, f"kernels must be (F,C,k,k), got shape {kernels.shape}")
    f, ck, k, k2 = kernels.shape
    c, h, w = x.shape
    _check(k == k2, f"kernels must be square, got {k}x{k2}")
    _check(ck == c, f"kernel channels ({ck}) do not match input channels ({c})")
    _check(bias.shape == (f,), f"bias must have {f} entries, got shape {bias.shape}")
    _check(stride >= 1, "stride must be positive")
    _check(k <= h and k <= w, f"window {k} exceeds input extent {h}x{w}")
    cols, ho, wo = _im2col(x, k, stride)
    out = kernels.reshape(f, -1) @ cols + bias[:, None]
    return out.reshape(f, ho, wo)


def conv2d_backward(x, kernels, stride: int, grad_out):
    """Gradients of conv2d_forward w.r.t. input, kernels and bias."""
    x, kernels, grad_out = _f64(x), _f64(kernels), _f64(grad_out)
    f, _, k, _ = kernels.shape
    cols, ho, wo = _im2col(x, k, stride)
    _check(
        grad_out.shape == (f, ho, wo),
        f"grad_out shape {grad_out.shape} does not match forward output ({f},{ho},{wo})",
    )
    g = grad_out.reshape(f, -1)
    grad_bias = g.sum(axis=1)
    grad_kernels = (g @ cols.T).reshape(kernels.shape)
    grad_input = _col2im(kernels.reshape(f, -1).T @ g, x.shape, k, stride)
    return grad_input, grad_kernels, grad_bias


# ---------------------------------------------------------------------------
# transposed convolution


def deconv2d_forward(x, kernels, bias, stride: int = 1) -> np.ndarray:
    """Transposed convolution: (Ci,H,W) -> (Co, (H-1)*stride + k, ...).

    Inverts conv2d's output-size formula for the same k and stride; each
    input cell scatters its kernel-weighted footprint onto the output.
    """
    x, kernels, bias = _f64(x), _f64(kernels), _f64(bias)
    _check(x.ndim == 3, f"input must be (C,H,W), got shape {x.shape}")
    _check(kernels.ndim == 4, f"kernels must be (Ci,Co,k,k), got shape {kernels.shape}")
    ci, co, k, k2 = kernels.shape
    c, h, w = x.shape
    _check(k == k2, f"kernels must be square, got {k}x{k2}")
    _check(ci == c, f"kernel channels ({ci}) do not match input channels ({c})")
    _check(bias.shape == (co,), f"bias must have {co} entries, got shape {bias.shape}")
    _check(stride >= 1, "stride must be positive")
    ho = (h - 1) * stride + k
    wo = (w - 1) * stride + k
    cols = kernels.reshape(ci, -1).T @ x.reshape(ci, h * w)
    out = _col2im(cols, (co, ho, wo), k, stride)
    return out + bias[:, None, None]


def deconv2d_backward(x, kernels, stride: int, grad_out):
    """Gradients of deconv2d_forward w.r.t. input, kernels and bias."""
    x, kernels, grad_out = _f64(x), _f64(kernels), _f64(grad_out)
    ci, co, k, _ = kernels.shape
    c, h, w = x.shape
    ho = (h - 1) * stride + k
    wo = (w - 1) * stride + k
    _check(
        grad_out.shape == (co, ho, wo),
        f"grad_out shape {grad_out.shape} does not match forward output ({co},{ho},{wo})",
    )
    gcols, gh, gw = _im2col(grad_out, k, stride)
    grad_bias = grad_out.sum(axis=(1, 2))
    grad_input = (kernels.reshape(ci, -1) @ gcols).reshape(x.shape)
    grad_kernels = (x.reshape(ci, h * w) @ gcols.T).reshape(kernels.shape)
    return grad_input, grad_kernels, grad_bias


# ---------------------------------------------------------------------------
# pooling


@dataclass
class PoolIndices:
    """Argmax bookkeeping for max-pool backward.

    ``indices`` holds, per output cell, the flat index of the selected
    maximum within the source tensor (ties resolved to the lowest index).
    """

    source_shape: tuple[int, int, int]
    indices: np.ndarray
    window: int
    stride: int


def maxpool_forward(x, window: int, stride: int):
    """Max over sliding windows; returns the pooled map plus PoolIndices."""
    x = _f64(x)
    _check(x.ndim == 3, f"input must be (C,H,W), got shape {x.shape}")
    c, h, w = x.shape
    _check(window >= 1 and stride >= 1, "window and stride must be positive")
    _check(window <= h and window <= w, f"pool window {window} exceeds input extent {h}x{w}")
    win = np.lib.stride_tricks.sliding_window_view(x, (window, window), axis=(1, 2))
    win = win[:, ::stride, ::stride]
    ho, wo = win.shape[1], win.shape[2]
    flat = win.reshape(c, ho, wo, window * window)
    local = flat.argmax(axis=-1)  # first occurrence = lowest flat index
    out = np.take_along_axis(flat, local[..., None], axis=-1)[..., 0]
    wi, wj = local // window, local % window
    rows = np.arange(ho)[None, :, None] * stride + wi
    colx = np.arange(wo)[None, None, :] * stride + wj
    chan = np.arange(c)[:, None, None]
    indices = (chan * h + rows) * w + colx
    return out, PoolIndices((c, h, w), indices.astype(np.int64), window, stride)


def maxpool_backward(indices: PoolIndices, grad_out) -> np.ndarray:
    """Route each output gradient to its recorded argmax cell."""
    grad_out = _f64(grad_out)
    idx = indices.indices
    _check(
        grad_out.shape == idx.shape,
        f"grad_out shape {grad_out.shape} does not match pool output {idx.shape}",
    )
    size = int(np.prod(indices.source_shape))
    flat_idx = idx.ravel()
    _check(
        bool((flat_idx >= 0).all() and (flat_idx < size).all()),
        "pool indices out of bounds for the source tensor",
    )
    grad = np.zeros(size)
    np.add.at(grad, flat_idx, grad_out.ravel())
    return grad.reshape(indices.source_shape)


def subspace_pool_forward(x, group_size: int) -> np.ndarray:
    """L2-pool channel groups: output m = sqrt(sum of squares over g channels)."""
    x = _f64(x)
    _check(x.ndim == 3, f"input must be (F,H,W), got shape {x.shape}")
    f, h, w = x.shape
    _check(group_size >= 1, "group_size must be positive")
    _check(f % group_size == 0, f"channel count {f} not divisible by group size {group_size}")
    grouped = x.reshape(f // group_size, group_size, h, w)
    return np.sqrt((grouped ** 2).sum(axis=1))


def subspace_pool_backward(x, group_size: int, grad_out) -> np.ndarray:
    """Backward of subspace pooling; denominator smoothed near zero."""
    x, grad_out = _f64(x), _f64(grad_out)
    f, h, w = x.shape
    m = f // group_size
    _check(
        grad_out.shape == (m, h, w),
        f"grad_out shape {grad_out.shape} does not match pool output ({m},{h},{w})",
    )
    grouped = x.reshape(m, group_size, h, w)
    denom = np.sqrt((grouped ** 2).sum(axis=1) + 1e-12)
    grad = grouped * (grad_out / denom)[:, None]
    return grad.reshape(f, h, w)


# ---------------------------------------------------------------------------
# dense, activations, softmax


def dense_forward(x, weight, bias) -> np.ndarray:
    """Affine map: weight (out,in) @ x (in,) + bias (out,)."""
    x, weight, bias = _f64(x), _f64(weight), _f64(bias)
    _check(x.ndim == 1, f"dense input must be a flat vector, got shape {x.shape}")
    _check(
        weight.ndim == 2 and weight.shape[1] == x.shape[0],
        f"weight shape {weight.shape} does not accept input of length {x.shape[0]}",
    )
    _check(bias.shape == (weight.shape[0],), "bias length does not match weight rows")
    return weight @ x + bias


def dense_backward(x, weight, grad_out):
    """Gradients of dense_forward w.r.t. input, weight and bias."""
    x, weight, grad_out = _f64(x), _f64(weight), _f64(grad_out)
    _check(grad_out.shape == (weight.shape[0],), "grad_out length does not match weight rows")
    return weight.T @ grad_out, np.outer(grad_out, x), grad_out.copy()


def sigmoid(x) -> np.ndarray:
    """Numerically stable elementwise logistic function."""
    x = _f64(x)
    out = np.empty_like(x)
    pos = x >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-x[pos]))
    ex = np.exp(x[~pos])
    out[~pos] = ex / (1.0 + ex)
    return out


def sigmoid_backward(y, grad_out) -> np.ndarray:
    """Backward of sigmoid given its forward output y."""
    y, grad_out = _f64(y), _f64(grad_out)
    return grad_out * y * (1.0 - y)


def softmax(logits) -> np.ndarray:
    """Probabilities via max-subtracted exponentials; sums to 1."""
    logits = _f64(logits)
    _check(logits.ndim == 1, f"logits must be a flat vector, got shape {logits.shape}")
    _check(logits.size > 0, "softmax of empty logits is undefined")
    shifted = logits - logits.max()
    e = np.exp(shifted)
    return e / e.sum()


def softmax_backward(probs, grad_probs) -> np.ndarray:
    """Backward of softmax given its forward output probs."""
    probs, grad_probs = _f64(probs), _f64(grad_probs)
    return probs * (grad_probs - float(grad_probs @ probs))
