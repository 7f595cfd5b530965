"""Lambertian rendering of reflection frames driven by a light challenge.

Per channel c the model is  F(p)[c] = rho_p[c] * (k_a + k_r[c] * max(l.n_p, 0)),
plus sensor noise, clamped to [0, 1]. Colored casting light is realized as
per-channel diffuse weights derived from the light's hue. Projection is
orthographic (weak perspective): the height-field grid is the image lattice,
and per-frame subject motion is an in-plane rigid transform.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Optional

import numpy as np

from .captcha import LightCaptcha, LightParam, PALETTE_ALPHAS
from .scene import Landmarks, SceneKind, SubjectScene, normals

# hue (turns) -> unit per-channel weight direction
_HUE_WEIGHTS = {
    0.0: (1.0, 0.0, 0.0),
    0.25: (0.0, 1.0, 0.0),
    0.5: (0.0, 0.0, 1.0),
    0.75: (0.5, 0.5, 0.5),
}


@dataclass(frozen=True)
class LightingConfig:
    k_a: float = 0.15
    l: tuple[float, float, float] = (0.0, 0.0, 1.0)
    noise_sigma: float = 0.005
    screen_gain: float = 0.25  # flat reflection gain of a replay screen

    def __post_init__(self):
        if not math.isclose(float(np.linalg.norm(self.l)), 1.0, rel_tol=1e-9):
            raise ValueError("light direction must be a unit vector")
        if self.k_a < 0 or self.noise_sigma < 0:
            raise ValueError("k_a and noise_sigma must be nonnegative")


@dataclass(frozen=True)
class ReflectionFrame:
    pixels: np.ndarray  # (H, W, 3) float32 in [0, 1]
    landmarks: Landmarks


@dataclass(frozen=True)
class Session:
    frames: tuple[ReflectionFrame, ...]
    captcha: LightCaptcha
    label: bool  # True = live
    scene_id: str = ""

    def __post_init__(self):
        if len(self.frames) != len(self.captcha):
            raise ValueError("frame count must equal challenge length")


def channel_weights(light: LightParam, cfg: LightingConfig = LightingConfig()) -> np.ndarray:
    """Per-channel diffuse weights k_r[c] = beta * w_c(alpha)."""
    for alpha, w in _HUE_WEIGHTS.items():
        if math.isclose(light.alpha, alpha):
            return light.beta * np.array(w, dtype=np.float64)
    raise ValueError(f"hue {light.alpha} outside palette {PALETTE_ALPHAS}")


@dataclass(frozen=True)
class RigidJitter:
    """In-plane rigid motion: rotation (degrees) about image center, then shift."""

    angle_deg: float = 0.0
    tx: float = 0.0
    ty: float = 0.0

    @property
    def identity(self) -> bool:
        return self.angle_deg == 0.0 and self.tx == 0.0 and self.ty == 0.0


def _bilinear(img: np.ndarray, x: np.ndarray, y: np.ndarray) -> np.ndarray:
    """Sample img (H, W, C) at float coords, clamping to the border."""
    H, W = img.shape[:2]
    x = np.clip(x, 0.0, W - 1.0)
    y = np.clip(y, 0.0, H - 1.0)
    x0 = np.floor(x).astype(np.intp)
    y0 = np.floor(y).astype(np.intp)
    x1 = np.minimum(x0 + 1, W - 1)
    y1 = np.minimum(y0 + 1, H - 1)
    fx = (x - x0)[..., None]
    fy = (y - y0)[..., None]
    top = img[y0, x0] * (1 - fx) + img[y0, x1] * fx
    bot = img[y1, x0] * (1 - fx) + img[y1, x1] * fx
    return top * (1 - fy) + bot * fy


def _scene_normals(scene: SubjectScene) -> np.ndarray:
    if scene.normal_override is not None:
        return scene.normal_override
    return normals(scene.height)


def render_frame(
    scene: SubjectScene,
    light: LightParam,
    cfg: LightingConfig = LightingConfig(),
    jitter: RigidJitter = RigidJitter(),
    rng: Optional[np.random.Generator] = None,
) -> ReflectionFrame:
    if scene.kind is SceneKind.REPLAY:
        raise ValueError("replay scenes are rendered through render_session")
    H, W = scene.height.z.shape
    rho = scene.albedo.rho
    n = _scene_normals(scene)
    pts = scene.landmarks.points
    if jitter.identity:
        marks = pts.copy()
    else:
        theta = math.radians(jitter.angle_deg)
        c, s = math.cos(theta), math.sin(theta)
        cx, cy = (W - 1) / 2.0, (H - 1) / 2.0
        # destination pixel -> source surface point (inverse rigid map)
        yy, xx = np.mgrid[0:H, 0:W].astype(np.float64)
        dx = xx - cx - jitter.tx
        dy = yy - cy - jitter.ty
        sx = c * dx + s * dy + cx
        sy = -s * dx + c * dy + cy
        rho = _bilinear(rho, sx, sy)
        n = _bilinear(n, sx, sy)
        # in-plane rotation turns the normals' tangential components with it
        nx = c * n[:, :, 0] - s * n[:, :, 1]
        ny = s * n[:, :, 0] + c * n[:, :, 1]
        n = np.stack([nx, ny, n[:, :, 2]], axis=2)
        n /= np.linalg.norm(n, axis=2, keepdims=True)
        fx = c * (pts[:, 0] - cx) - s * (pts[:, 1] - cy) + cx + jitter.tx
        fy = s * (pts[:, 0] - cx) + c * (pts[:, 1] - cy) + cy + jitter.ty
        marks = np.stack([fx, fy], axis=1)
    shade = np.clip(n @ np.asarray(cfg.l, dtype=np.float64), 0.0, None)
    k_r = channel_weights(light, cfg)
    img = rho * (cfg.k_a + k_r[None, None, :] * shade[:, :, None])
    if cfg.noise_sigma > 0:
        if rng is None:
            raise ValueError("noise_sigma > 0 requires an rng")
        img = img + rng.normal(0.0, cfg.noise_sigma, size=img.shape)
    img = np.clip(img, 0.0, 1.0).astype(np.float32)
    return ReflectionFrame(pixels=img, landmarks=Landmarks(points=marks))


def _sample_jitter(scene: SubjectScene, rng: np.random.Generator) -> RigidJitter:
    t, r = scene.jitter_translation, scene.jitter_rotation_deg
    if t == 0.0 and r == 0.0:
        return RigidJitter()
    return RigidJitter(
        angle_deg=rng.uniform(-r, r),
        tx=rng.uniform(-t, t),
        ty=rng.uniform(-t, t),
    )


def render_session(
    scene: SubjectScene,
    captcha: LightCaptcha,
    cfg: LightingConfig = LightingConfig(),
    rng: Optional[np.random.Generator] = None,
    scene_id: str = "",
) -> Session:
    """Render one verification attempt.

    Live and print subjects reflect the casted lights directly. A replay
    spoof shows its leaked video: with the interference blocked the captured
    frames are the recorded ones verbatim and the fresh challenge leaves no
    trace; otherwise the challenge adds a flat screen reflection on top.
    """
    n = len(captcha)
    if scene.kind is SceneKind.REPLAY:
        rec = scene.recorded
        if rec is None or len(rec.frames) < n:
            raise ValueError("recorded session shorter than the challenge")
        if scene.interference_blocked:
            frames = rec.frames[:n]
        else:
            if rng is None and cfg.noise_sigma > 0:
                raise ValueError("noise_sigma > 0 requires an rng")
            frames = []
            for rec_frame, light in zip(rec.frames[:n], captcha.params):
                add = channel_weights(light, cfg) * cfg.screen_gain
                img = rec_frame.pixels.astype(np.float64) + add[None, None, :]
                if cfg.noise_sigma > 0:
                    img += rng.normal(0.0, cfg.noise_sigma, size=img.shape)
                frames.append(
                    ReflectionFrame(
                        pixels=np.clip(img, 0.0, 1.0).astype(np.float32),
                        landmarks=rec_frame.landmarks,
                    )
                )
            frames = tuple(frames)
        return Session(frames=tuple(frames), captcha=captcha, label=False, scene_id=scene_id)
    if rng is None:
        raise ValueError("live/print rendering requires an rng")
    frames = tuple(
        render_frame(scene, light, cfg, _sample_jitter(scene, rng), rng)
        for light in captcha.params
    )
    label = scene.kind is SceneKind.LIVE
    return Session(frames=frames, captcha=captcha, label=label, scene_id=scene_id)
