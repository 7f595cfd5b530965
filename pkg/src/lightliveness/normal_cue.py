"""Frame registration and normal-cue extraction.

Consecutive frames are aligned with a landmark-fitted affine warp, then the
per-channel intensity difference divided by the known per-channel light
change yields a scalar map proportional to l.n (the normal cue). The raw
registered color difference is kept alongside: it is what the learned model
consumes, because it carries the casted-light signature that the normalized
scalar map cancels out by construction.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .captcha import LightParam
from .render import LightingConfig, ReflectionFrame, Session, channel_weights
from .scene import Landmarks

# minimum per-channel light change that counts as signal
EPS_DK = 1e-3


class DegenerateGeometryError(ValueError):
    """Landmarks too degenerate to fit an affine transform."""


class DegenerateLightingError(ValueError):
    """No channel carries a usable light change."""


@dataclass(frozen=True)
class Affine2D:
    matrix: np.ndarray  # 2x3, maps source pixel coords to destination

    def __post_init__(self):
        if self.matrix.shape != (2, 3):
            raise ValueError("affine matrix must be 2x3")
        if not np.all(np.isfinite(self.matrix)):
            raise ValueError("affine matrix must be finite")
        if abs(np.linalg.det(self.matrix[:, :2])) < 1e-9:
            raise DegenerateGeometryError("affine linear part is singular")

    def apply(self, pts: np.ndarray) -> np.ndarray:
        return pts @ self.matrix[:, :2].T + self.matrix[:, 2]

    def inverse(self) -> "Affine2D":
        inv = np.linalg.inv(self.matrix[:, :2])
        return Affine2D(matrix=np.hstack([inv, -inv @ self.matrix[:, 2:3]]))


@dataclass(frozen=True)
class NormalCueMap:
    """Extraction products of one registered frame pair.

    values: scalar per-pixel map, the per-channel differences divided by the
        claimed per-channel light change and averaged over channels carrying
        signal. Equals rho * (l.n) for a truthful pair (up to noise).
    color_diff: the registered raw difference, all 3 channels, untouched by
        the claimed lights. Model input is assembled from this field only,
        so the model judges what the frames actually show rather than what
        the verifier claims was cast.
    """

    values: np.ndarray  # (H, W)
    color_diff: np.ndarray  # (H, W, 3)
    pair_index: int

    def net_input(self) -> np.ndarray:
        """Model input stack: 3 signed diff channels plus their magnitude."""
        mag = np.linalg.norm(self.color_diff, axis=2)
        return np.concatenate(
            [self.color_diff.transpose(2, 0, 1), mag[None]], axis=0
        ).astype(np.float32)


def estimate_affine(src: Landmarks, dst: Landmarks) -> Affine2D:
    """Least-squares affine sending src landmark coords onto dst."""
    a, b = src.points, dst.points
    if a.shape != b.shape:
        raise ValueError("landmark sets must have equal size")
    design = np.hstack([a, np.ones((len(a), 1))])
    if np.linalg.matrix_rank(design, tol=1e-6) < 3:
        raise DegenerateGeometryError("landmarks do not span the plane")
    sol, *_ = np.linalg.lstsq(design, b, rcond=None)
    return Affine2D(matrix=sol.T)


def warp(frame: ReflectionFrame, t: Affine2D) -> ReflectionFrame:
    """Resample a frame through an affine transform (bilinear, clamp-to-edge)."""
    H, W = frame.pixels.shape[:2]
    if np.allclose(t.matrix, np.array([[1.0, 0.0, 0.0], [0.0, 1.0, 0.0]])):
        return ReflectionFrame(
            pixels=frame.pixels.copy(),
            landmarks=Landmarks(points=frame.landmarks.points.copy()),
        )
    inv = t.inverse()
    yy, xx = np.mgrid[0:H, 0:W].astype(np.float64)
    src = inv.apply(np.stack([xx.ravel(), yy.ravel()], axis=1))
    sx = np.clip(src[:, 0].reshape(H, W), 0.0, W - 1.0)
    sy = np.clip(src[:, 1].reshape(H, W), 0.0, H - 1.0)
    x0 = np.floor(sx).astype(np.intp)
    y0 = np.floor(sy).astype(np.intp)
    x1 = np.minimum(x0 + 1, W - 1)
    y1 = np.minimum(y0 + 1, H - 1)
    fx = (sx - x0)[..., None]
    fy = (sy - y0)[..., None]
    img = frame.pixels.astype(np.float64)
    top = img[y0, x0] * (1 - fx) + img[y0, x1] * fx
    bot = img[y1, x0] * (1 - fx) + img[y1, x1] * fx
    out = (top * (1 - fy) + bot * fy).astype(np.float32)
    return ReflectionFrame(pixels=out, landmarks=Landmarks(points=t.apply(frame.landmarks.points)))


def extract_normal_cue(
    f_prev: ReflectionFrame,
    f_curr: ReflectionFrame,
    light_prev: LightParam,
    light_curr: LightParam,
    cfg: LightingConfig = LightingConfig(),
    pair_index: int = 0,
) -> NormalCueMap:
    """Register the earlier frame onto the later one and difference them."""
    dk = channel_weights(light_curr, cfg) - channel_weights(light_prev, cfg)
    usable = np.abs(dk) > EPS_DK
    if not usable.any():
        raise DegenerateLightingError("adjacent lights identical in every channel")
    t = estimate_affine(f_prev.landmarks, f_curr.landmarks)
    aligned = warp(f_prev, t)
    diff = f_curr.pixels.astype(np.float64) - aligned.pixels.astype(np.float64)
    values = diff[:, :, usable] / dk[usable]
    return NormalCueMap(
        values=values.mean(axis=2),
        color_diff=diff,
        pair_index=pair_index,
    )


def extract_session(session: Session, cfg: LightingConfig = LightingConfig()) -> list[NormalCueMap]:
    """One cue map per consecutive frame pair; m = n - 1 maps."""
    if len(session.frames) < 2:
        raise ValueError("session needs at least 2 frames")
    return [
        extract_normal_cue(
            session.frames[i - 1],
            session.frames[i],
            session.captcha.params[i - 1],
            session.captcha.params[i],
            cfg,
            pair_index=i - 1,
        )
        for i in range(1, len(session.frames))
    ]
