"""Mini-batch RMSprop training over session examples.

A session example carries the m cue inputs of one session plus its labels:
liveness, ground-truth depth bins, true light changes, and whether the
regression target is meaningful for that session (replayed frames do not
encode the challenge the session claims, so their light-change loss is
masked out).
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import losses
from . import model as M
from . import optim


@dataclass(frozen=True)
class TrainConfig:
    lambda_depth: float = 0.5
    lambda_reg: float = 1.0
    learning_rate: float = 3e-3
    rmsprop_decay: float = 0.9
    rmsprop_epsilon: float = 1e-8
    epochs: int = 80
    batch_size: int = 4
    seed: int = 0

    def validate(self) -> None:
        if not 0.0 <= self.lambda_depth < 1.0:
            raise ValueError("lambda_depth must lie in [0, 1)")
        if self.lambda_reg < 0:
            raise ValueError("lambda_reg must be non-negative")
        if self.learning_rate <= 0 or self.rmsprop_epsilon <= 0:
            raise ValueError("learning_rate and rmsprop_epsilon must be positive")
        if not 0.0 <= self.rmsprop_decay < 1.0:
            raise ValueError("rmsprop_decay must lie in [0, 1)")
        if self.epochs < 1 or self.batch_size < 1:
            raise ValueError("epochs and batch_size must be positive")


@dataclass(frozen=True)
class SessionExample:
    """inputs: (m, C, H, W) float32 cue stack; gt_bins: (H, W) int depth
    bins; deltas: (m, 2) true light changes; label: 1 live, 0 spoof;
    reg_active: frames encode the claimed challenge."""

    inputs: np.ndarray
    label: int
    gt_bins: np.ndarray
    deltas: np.ndarray
    reg_active: bool
    session_id: str = ""

    def __post_init__(self):
        if self.inputs.ndim != 4 or self.inputs.shape[0] < 1:
            raise ValueError("inputs must be (m, C, H, W) with m >= 1")
        if self.deltas.shape != (self.inputs.shape[0], 2):
            raise ValueError("deltas must be (m, 2)")
        if self.label not in (0, 1):
            raise ValueError("label must be 0 or 1")


def _to_batch(examples: list[SessionExample]) -> losses.CueBatch:
    m = examples[0].inputs.shape[0]
    if any(e.inputs.shape[0] != m for e in examples):
        raise ValueError("sessions in one batch must share the cue count")
    x = np.concatenate([e.inputs for e in examples]).astype(np.float32)
    labels = np.repeat([e.label for e in examples], m).astype(np.float32)
    gt = np.concatenate([np.broadcast_to(e.gt_bins, (m,) + e.gt_bins.shape) for e in examples])
    deltas = np.concatenate([e.deltas for e in examples]).astype(np.float32)
    mask = np.repeat([1.0 if e.reg_active else 0.0 for e in examples], m).astype(np.float32)
    return losses.CueBatch(
        x=x, labels=labels, gt_bins=gt, reg_truth=deltas, reg_mask=mask,
        v_sessions=len(examples), m=m,
    )


@dataclass(frozen=True)
class TrainResult:
    params: dict
    epoch_losses: tuple[float, ...]


def train(
    dataset: list[SessionExample],
    model_cfg: M.ModelConfig,
    cfg: TrainConfig,
) -> TrainResult:
    """Returns final weights and the per-epoch mean batch loss."""
    cfg.validate()
    model_cfg.validate()
    if len(dataset) == 0:
        raise ValueError("empty training set")
    labels = {e.label for e in dataset}
    if len(labels) < 2:
        raise ValueError("training set must contain both labels")
    rng = np.random.default_rng(cfg.seed)
    params = M.init_params(model_cfg, rng)
    state = optim.init_state(params)
    curve = []
    order = np.arange(len(dataset))
    for _ in range(cfg.epochs):
        rng.shuffle(order)
        total = 0.0
        batches = 0
        for start in range(0, len(order), cfg.batch_size):
            chunk = [dataset[i] for i in order[start : start + cfg.batch_size]]
            batch = _to_batch(chunk)
            loss, grads = losses.batch_loss_and_grads(
                params, batch, cfg.lambda_depth, cfg.lambda_reg
            )
            optim.rmsprop_step(
                params, grads, state, cfg.learning_rate, cfg.rmsprop_decay, cfg.rmsprop_epsilon
            )
            total += loss
            batches += 1
        curve.append(total / batches)
    return TrainResult(params=params, epoch_losses=tuple(curve))
