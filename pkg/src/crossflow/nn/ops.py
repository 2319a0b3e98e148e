"""Primitive layer operations with hand-derived backward passes.

Conventions: activations are (batch, ...) arrays; convolutions are valid
(no padding) cross-correlations with square kernels; dense weights are
(out, in). All ops preserve the input dtype, so the same code runs the
float32 production path and the float64 gradient-check path.
"""

from __future__ import annotations

import numpy as np
from numpy.lib.stride_tricks import as_strided


def conv_out_len(size: int, kernel: int, stride: int) -> int:
    """Output length of a valid convolution: floor((size - kernel)/stride)+1."""
    if size < kernel:
        raise ValueError(f"input {size} smaller than kernel {kernel}")
    return (size - kernel) // stride + 1


def _patches(x: np.ndarray, kernel: int, stride: int) -> np.ndarray:
    """im2col: (B, C, H, W) -> (B*Ho*Wo, C*K*K), a contiguous copy."""
    b, c, h, w = x.shape
    ho = conv_out_len(h, kernel, stride)
    wo = conv_out_len(w, kernel, stride)
    sb, sc, sh, sw = x.strides
    view = as_strided(
        x,
        shape=(b, ho, wo, c, kernel, kernel),
        strides=(sb, sh * stride, sw * stride, sc, sh, sw),
        writeable=False)
    return np.ascontiguousarray(view).reshape(b * ho * wo, c * kernel * kernel)


def conv2d_forward(x: np.ndarray, w: np.ndarray, b: np.ndarray,
                   stride: int):
    """y = cross_correlate(x, w) + b.

    x: (B, Cin, H, W); w: (Cout, Cin, K, K); b: (Cout,).
    Returns (y, cache) with y: (B, Cout, Ho, Wo).
    """
    bs, cin, h, wd = x.shape
    cout, _, k, _ = w.shape
    ho = conv_out_len(h, k, stride)
    wo = conv_out_len(wd, k, stride)
    cols = _patches(x, k, stride)                      # (B*Ho*Wo, Cin*K*K)
    y = cols @ w.reshape(cout, -1).T + b
    y = y.reshape(bs, ho, wo, cout).transpose(0, 3, 1, 2)
    cache = (cols, x.shape, w, stride)
    return np.ascontiguousarray(y), cache


def conv2d_backward(dy: np.ndarray, cache):
    """Gradients of a valid strided cross-correlation.

    dy: (B, Cout, Ho, Wo). Returns (dx, dw, db).
    """
    cols, x_shape, w, stride = cache
    bs, cin, h, wd = x_shape
    cout, _, k, _ = w.shape
    _, _, ho, wo = dy.shape
    dy_cols = np.ascontiguousarray(
        dy.transpose(0, 2, 3, 1)).reshape(-1, cout)    # (B*Ho*Wo, Cout)
    db = dy_cols.sum(axis=0)
    dw = (dy_cols.T @ cols).reshape(w.shape)
    dcols = dy_cols @ w.reshape(cout, -1)              # (B*Ho*Wo, Cin*K*K)
    dcols = dcols.reshape(bs, ho, wo, cin, k, k)
    dx = np.zeros(x_shape, dtype=dy.dtype)
    # scatter each kernel offset back onto the (strided) input positions
    for i in range(k):
        for j in range(k):
            dx[:, :, i:i + stride * ho:stride, j:j + stride * wo:stride] += \
                dcols[:, :, :, :, i, j].transpose(0, 3, 1, 2)
    return dx, dw, db


def dense_forward(x: np.ndarray, w: np.ndarray, b: np.ndarray):
    """y = x @ w.T + b with x: (B, in), w: (out, in)."""
    return x @ w.T + b


def dense_backward(dy: np.ndarray, x: np.ndarray, w: np.ndarray):
    dx = dy @ w
    dw = dy.T @ x
    db = dy.sum(axis=0)
    return dx, dw, db


def elu(x: np.ndarray) -> np.ndarray:
    """ELU(x) = x for x > 0, exp(x) - 1 otherwise."""
    return np.where(x > 0, x, np.expm1(x))


def elu_backward(dy: np.ndarray, y: np.ndarray) -> np.ndarray:
    """Uses the activation output: ELU'(x) = 1 for x > 0, ELU(x)+1 otherwise."""
    one = y.dtype.type(1)
    return dy * np.where(y > 0, one, y + one)
