"""Multi-task losses.

Classification couples liveness BCE with pixel-wise depth cross-entropy
under a single lambda_depth mix; regression is squared error on the
predicted light change; the total averages per-session sums over the batch
and halves them.

Two entry layers: ForwardOut-sequence functions mirror the per-cue
definitions for tests and reporting; CueBatch routines fuse the same math
over a flat cue batch and also emit parameter gradients for training.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import layers as L
from . import model as M


def _check_lambda_depth(lambda_depth: float) -> None:
    if not 0.0 <= lambda_depth < 1.0:
        raise ValueError("lambda_depth must lie in [0, 1)")


def loss_cls(outputs, labels, gt_depths, lambda_depth: float) -> float:
    """Mean over cues of (1-lambda)*BCE(liveness) + lambda*pixel-averaged
    depth cross-entropy. labels are 0/1 per cue; gt_depths are integer bin
    maps (values 1..K)."""
    _check_lambda_depth(lambda_depth)
    outputs = list(outputs)
    labels = np.asarray(labels, dtype=np.float64)
    if len(outputs) == 0 or len(outputs) != len(labels):
        raise ValueError("outputs and labels must be non-empty and equal length")
    total = 0.0
    for out, c, gt in zip(outputs, labels, gt_depths, strict=True):
        p = min(max(out.liveness_prob, 1e-12), 1.0 - 1e-12)
        bce = -(c * np.log(p) + (1.0 - c) * np.log(1.0 - p))
        gt_arr = gt.labels if hasattr(gt, "labels") else np.asarray(gt)
        ce, _ = L.softmax_ce_map(out.depth_logits[None], gt_arr[None])
        total += (1.0 - lambda_depth) * bce + lambda_depth * ce
    return float(total / len(outputs))


def loss_reg(outputs, truth) -> float:
    """Mean squared Euclidean distance between predicted and true light
    changes. truth is a ResidualSeq or an (m, 2) array."""
    outputs = list(outputs)
    deltas = truth.deltas if hasattr(truth, "deltas") else np.asarray(truth, dtype=np.float64)
    if len(outputs) != len(deltas):
        raise ValueError("outputs and truth must have equal length")
    if len(outputs) == 0:
        raise ValueError("empty output sequence")
    err = np.stack([o.delta_r_hat for o in outputs]) - deltas
    return float(np.mean(np.sum(err**2, axis=1)))


def loss_total(cls, reg, lambda_reg: float = 1.0) -> float:
    """(1 / 2V) * sum over sessions of (cls_v + lambda_reg * reg_v)."""
    cls = np.atleast_1d(np.asarray(cls, dtype=np.float64))
    reg = np.atleast_1d(np.asarray(reg, dtype=np.float64))
    if cls.shape != reg.shape:
        raise ValueError("per-session loss lists must match")
    if lambda_reg < 0:
        raise ValueError("lambda_reg must be non-negative")
    return float(np.sum(cls + lambda_reg * reg) / (2.0 * cls.size))


@dataclass(frozen=True)
class CueBatch:
    """Flat batch of cues drawn from v_sessions sessions with m cues each.

    x: (B, C, H, W) net inputs, B = v_sessions * m
    labels: (B,) liveness in {0, 1}, session label broadcast to its cues
    gt_bins: (B, H, W) integer depth bins in 1..K
    reg_truth: (B, 2) true (delta alpha, delta beta)
    reg_mask: (B,) 1 where the session's frames encode its own challenge
    """

    x: np.ndarray
    labels: np.ndarray
    gt_bins: np.ndarray
    reg_truth: np.ndarray
    reg_mask: np.ndarray
    v_sessions: int
    m: int

    def __post_init__(self):
        B = self.x.shape[0]
        if B != self.v_sessions * self.m or B == 0:
            raise ValueError("batch size must equal v_sessions * m")
        for arr, shape in ((self.labels, (B,)), (self.reg_truth, (B, 2)), (self.reg_mask, (B,))):
            if arr.shape != shape:
                raise ValueError("batch field dimensions are inconsistent")


def batch_loss_and_grads(
    params: dict[str, np.ndarray],
    batch: CueBatch,
    lambda_depth: float,
    lambda_reg: float,
):
    """Total loss over one batch and its gradients w.r.t. every parameter.

    Equals loss_total over the batch's sessions because every session
    carries the same cue count m.
    """
    _check_lambda_depth(lambda_depth)
    if lambda_reg < 0:
        raise ValueError("lambda_reg must be non-negative")
    cls_logits, reg, depth_logits, cache = M.forward_batch(params, batch.x)
    B = batch.x.shape[0]
    w = 1.0 / (2.0 * batch.v_sessions * batch.m)

    dtype = batch.x.dtype
    bce, g_bce = L.bce_with_logits(cls_logits, batch.labels.astype(dtype))
    ce, g_ce = L.softmax_ce_map(depth_logits, batch.gt_bins)
    diff = reg - batch.reg_truth.astype(dtype)
    masked = diff * batch.reg_mask.astype(dtype)[:, None]
    reg_sq = float(np.sum(masked * diff))

    loss = (1.0 - lambda_depth) * B * w * bce
    loss += lambda_depth * B * w * ce
    loss += lambda_reg * w * reg_sq

    g_cls = ((1.0 - lambda_depth) * B * w) * g_bce
    g_depth = (lambda_depth * B * w) * g_ce
    g_reg = (2.0 * lambda_reg * w) * masked
    grads = M.backward_batch(params, cache, g_cls, g_reg.astype(dtype), g_depth)
    return loss, grads
