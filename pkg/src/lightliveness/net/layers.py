"""Differentiable layer primitives over numpy arrays.

Every forward returns (output, cache); the matching backward consumes the
upstream gradient and the cache and returns input/parameter gradients.
Arrays are (batch, channel, height, width) unless stated otherwise. Dtype is
whatever the caller supplies; training runs float32, gradient checking
float64.

Convolutions are 3x3 with one-pixel zero padding, stride 1 or 2, computed as
nine shifted slices stacked into a column matrix and one matrix product.
"""

from __future__ import annotations

import numpy as np


def _out_size(n: int, stride: int) -> int:
    return (n - 1) // stride + 1


def _im2col3(x: np.ndarray, stride: int) -> np.ndarray:
    B, C, H, W = x.shape
    Ho = _out_size(H, stride)
    Wo = _out_size(W, stride)
    xp = np.zeros((B, C, H + 2, W + 2), dtype=x.dtype)
    xp[:, :, 1 : H + 1, 1 : W + 1] = x
    cols = np.empty((C, 9, B, Ho, Wo), dtype=x.dtype)
    for r in range(3):
        for c in range(3):
            sl = xp[:, :, r : r + stride * (Ho - 1) + 1 : stride,
                    c : c + stride * (Wo - 1) + 1 : stride]
            cols[:, r * 3 + c] = sl.transpose(1, 0, 2, 3)
    return cols.reshape(C * 9, B * Ho * Wo)


def _col2im3(gcols: np.ndarray, x_shape: tuple, stride: int) -> np.ndarray:
    B, C, H, W = x_shape
    Ho = _out_size(H, stride)
    Wo = _out_size(W, stride)
    g = gcols.reshape(C, 3, 3, B, Ho, Wo)
    gxp = np.zeros((B, C, H + 2, W + 2), dtype=gcols.dtype)
    for r in range(3):
        for c in range(3):
            gxp[:, :, r : r + stride * (Ho - 1) + 1 : stride,
                c : c + stride * (Wo - 1) + 1 : stride] += g[:, r, c].transpose(1, 0, 2, 3)
    return gxp[:, :, 1 : H + 1, 1 : W + 1]


def conv3x3_forward(x: np.ndarray, w: np.ndarray, b: np.ndarray, stride: int = 1):
    """w is (C_out, C_in, 3, 3); b is (C_out,)."""
    if x.ndim != 4 or w.shape[1] != x.shape[1]:
        raise ValueError("conv input channels do not match weights")
    if stride not in (1, 2):
        raise ValueError("stride must be 1 or 2")
    B, C, H, W = x.shape
    Co = w.shape[0]
    cols = _im2col3(x, stride)
    y = (w.reshape(Co, C * 9) @ cols).reshape(Co, B, _out_size(H, stride), _out_size(W, stride))
    y = np.ascontiguousarray(y.transpose(1, 0, 2, 3))
    y += b.reshape(1, Co, 1, 1)
    return y, (cols, w, stride, x.shape)


def conv3x3_backward(gy: np.ndarray, cache, need_gx: bool = True):
    cols, w, stride, x_shape = cache
    B, C, H, W = x_shape
    Co = w.shape[0]
    g = np.ascontiguousarray(gy.transpose(1, 0, 2, 3)).reshape(Co, -1)
    gw = np.ascontiguousarray((cols @ g.T).T).reshape(w.shape)
    gb = g.sum(axis=1)
    if not need_gx:
        return None, gw, gb
    if stride == 1 and Co <= C:
        # full correlation with the channel-transposed, spatially flipped
        # kernel; cheaper than col2im when gy has no more channels than x
        wf = np.ascontiguousarray(w.transpose(1, 0, 2, 3)[:, :, ::-1, ::-1])
        gx = (wf.reshape(C, Co * 9) @ _im2col3(gy, 1)).reshape(C, B, H, W)
        gx = np.ascontiguousarray(gx.transpose(1, 0, 2, 3))
    else:
        gcols = w.reshape(Co, C * 9).T @ g
        gx = _col2im3(gcols, x_shape, stride)
    return gx, gw, gb


def relu_forward(x: np.ndarray):
    y = np.maximum(x, 0)
    return y, (x > 0)


def relu_backward(gy: np.ndarray, cache):
    return gy * cache


def upsample2_forward(x: np.ndarray):
    """Nearest-neighbor 2x upsampling."""
    y = np.repeat(np.repeat(x, 2, axis=2), 2, axis=3)
    return y, x.shape


def upsample2_backward(gy: np.ndarray, cache):
    return (gy[:, :, 0::2, 0::2] + gy[:, :, 0::2, 1::2]
            + gy[:, :, 1::2, 0::2] + gy[:, :, 1::2, 1::2])


def concat_forward(a: np.ndarray, b: np.ndarray):
    if a.shape[0] != b.shape[0] or a.shape[2:] != b.shape[2:]:
        raise ValueError("concat inputs must agree outside the channel axis")
    return np.concatenate([a, b], axis=1), a.shape[1]


def concat_backward(gy: np.ndarray, cache):
    return gy[:, :cache], gy[:, cache:]


def gap_forward(x: np.ndarray):
    """Global average pool to (batch, channel)."""
    return x.mean(axis=(2, 3)), x.shape


def gap_backward(gy: np.ndarray, cache):
    B, C, H, W = cache
    return np.broadcast_to(gy[:, :, None, None] / (H * W), cache).astype(gy.dtype, copy=False)


def linear_forward(x: np.ndarray, w: np.ndarray, b: np.ndarray):
    """x is (batch, n_in); w is (n_out, n_in)."""
    return x @ w.T + b, (x, w)


def linear_backward(gy: np.ndarray, cache):
    x, w = cache
    return gy @ w, gy.T @ x, gy.sum(axis=0)


def sigmoid(x: np.ndarray) -> np.ndarray:
    out = np.empty_like(x)
    pos = x >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-x[pos]))
    ex = np.exp(x[~pos])
    out[~pos] = ex / (1.0 + ex)
    return out


def bce_with_logits(logits: np.ndarray, targets: np.ndarray):
    """Mean binary cross-entropy over the batch, stable in the logit.

    Returns (loss, grad wrt logits).
    """
    if logits.shape != targets.shape:
        raise ValueError("logit and target dimensions differ")
    z = logits
    # log(1 + exp(-|z|)) + max(z, 0) - z*t
    loss = np.log1p(np.exp(-np.abs(z))) + np.maximum(z, 0) - z * targets
    grad = (sigmoid(z) - targets) / z.size
    return float(loss.mean()), grad.astype(z.dtype, copy=False)


def softmax_channel(x: np.ndarray) -> np.ndarray:
    """Softmax over axis 1 of a (batch, K, H, W) array."""
    m = x.max(axis=1, keepdims=True)
    e = np.exp(x - m)
    return e / e.sum(axis=1, keepdims=True)


def softmax_ce_map(logits: np.ndarray, labels: np.ndarray):
    """Pixel-wise cross-entropy against integer bin labels, averaged over
    batch and pixels.

    logits is (batch, K, H, W); labels is (batch, H, W) with values in 1..K.
    Returns (loss, grad wrt logits).
    """
    B, K, H, W = logits.shape
    if labels.shape != (B, H, W):
        raise ValueError("label dimensions do not match logits")
    if labels.min() < 1 or labels.max() > K:
        raise ValueError("bin labels out of range")
    m = logits.max(axis=1, keepdims=True)
    e = np.exp(logits - m)
    se = e.sum(axis=1, keepdims=True)
    idx = (labels - 1).astype(np.intp)
    bi, hi, wi = np.ix_(np.arange(B), np.arange(H), np.arange(W))
    picked = logits[bi, idx, hi, wi] - m[:, 0] - np.log(se[:, 0])
    loss = float(-picked.mean())
    grad = e / se
    # one label per (b, h, w) position, so indexed assignment is unambiguous
    grad[bi, idx, hi, wi] -= 1.0
    grad /= B * H * W
    return loss, grad.astype(logits.dtype, copy=False)


def expected_bin_forward(logits: np.ndarray):
    """Softmax expectation over bins 1..K per pixel.

    logits is (batch, K, H, W); output is (batch, 1, H, W) in [1, K].
    """
    p = softmax_channel(logits)
    K = logits.shape[1]
    bins = np.arange(1, K + 1, dtype=logits.dtype).reshape(1, K, 1, 1)
    y = (p * bins).sum(axis=1, keepdims=True)
    return y, (p, bins, y)


def expected_bin_backward(gy: np.ndarray, cache):
    p, bins, y = cache
    # d E/d logit_k = p_k (k - E)
    return gy * p * (bins - y)
