"""Synthetic subjects: live relief surfaces and flat or bent spoof surfaces.

A subject is a height field plus per-channel albedo and a handful of feature
landmarks. Live subjects get face-like relief (nose ridge, brows, cheeks,
chin) over a smooth random base; print spoofs are planes or cylindrical bends
carrying a baked face texture; replay spoofs wrap a previously rendered
session behind a flat screen.
"""

from __future__ import annotations

import enum
from dataclasses import dataclass, field
from typing import TYPE_CHECKING, Optional

import numpy as np
from scipy.ndimage import gaussian_filter

if TYPE_CHECKING:
    from .render import Session


class SceneKind(enum.Enum):
    LIVE = "live"
    PRINT = "print"
    REPLAY = "replay"


@dataclass(frozen=True)
class HeightField:
    z: np.ndarray  # (H, W) scene units
    dx: float

    def __post_init__(self):
        if self.z.ndim != 2 or min(self.z.shape) < 16:
            raise ValueError("height field must be 2-d with H, W >= 16")
        if not np.all(np.isfinite(self.z)):
            raise ValueError("height field must be finite")
        if self.dx <= 0:
            raise ValueError("grid spacing must be positive")


@dataclass(frozen=True)
class AlbedoMap:
    rho: np.ndarray  # (H, W, 3) in [0, 1]

    def __post_init__(self):
        if self.rho.ndim != 3 or self.rho.shape[2] != 3:
            raise ValueError("albedo must be (H, W, 3)")
        if self.rho.min() < 0 or self.rho.max() > 1:
            raise ValueError("albedo values must lie in [0, 1]")


@dataclass(frozen=True)
class Landmarks:
    points: np.ndarray  # (K, 2) pixel coordinates (x, y)

    def __post_init__(self):
        pts = self.points
        if pts.ndim != 2 or pts.shape[0] < 3 or pts.shape[1] != 2:
            raise ValueError("need at least 3 2-d landmark points")
        # collinearity check: rank of centered points must be 2
        centered = pts - pts.mean(axis=0)
        if np.linalg.matrix_rank(centered, tol=1e-6) < 2:
            raise ValueError("landmarks are collinear")


@dataclass(frozen=True)
class SceneConfig:
    height: int = 64
    width: int = 64
    dx: float = 1.0 / 16.0
    relief: float = 1.0  # live relief span in scene units
    base_field: float = 0.15  # low-frequency random relief amplitude
    albedo_lo: float = 0.3
    albedo_hi: float = 0.9
    jitter_translation: float = 2.0  # px, per-frame rigid motion bound
    jitter_rotation_deg: float = 2.0

    def validate(self, live: bool = False) -> None:
        if self.height < 16 or self.width < 16:
            raise ValueError("scene must be at least 16x16")
        if not 0 <= self.albedo_lo <= self.albedo_hi <= 1:
            raise ValueError("albedo range must satisfy 0 <= lo <= hi <= 1")
        if live and self.relief <= 0:
            raise ValueError("live subjects require relief amplitude > 0")
        if self.jitter_translation < 0 or self.jitter_rotation_deg < 0:
            raise ValueError("jitter amplitudes must be nonnegative")


@dataclass(frozen=True)
class SubjectScene:
    height: HeightField
    albedo: AlbedoMap
    landmarks: Landmarks
    kind: SceneKind
    curvature: float = 0.0  # print spoofs: cylindrical bend amplitude
    recorded: Optional["Session"] = None  # replay spoofs: the leaked session
    interference_blocked: bool = False
    jitter_translation: float = 0.0
    jitter_rotation_deg: float = 0.0
    # Optional exact normals; when None the renderer differentiates `height`.
    normal_override: Optional[np.ndarray] = field(default=None, repr=False)


# Face feature layout as (x, y) fractions of (W, H) with bump width fractions
# and relative amplitudes. Centers double as landmark positions.
_FACE_BUMPS = (
    # name, cx, cy, sx, sy, amp
    ("nose", 0.50, 0.52, 0.055, 0.16, 0.90),
    ("brow_l", 0.36, 0.33, 0.065, 0.045, 0.35),
    ("brow_r", 0.64, 0.33, 0.065, 0.045, 0.35),
    ("cheek_l", 0.30, 0.60, 0.10, 0.09, 0.45),
    ("cheek_r", 0.70, 0.60, 0.10, 0.09, 0.45),
    ("chin", 0.50, 0.84, 0.09, 0.06, 0.40),
)


def _smooth_noise(rng: np.random.Generator, shape, sigma: float) -> np.ndarray:
    return gaussian_filter(rng.standard_normal(shape), sigma=sigma, mode="reflect")


def _rescale(a: np.ndarray, lo: float, hi: float) -> np.ndarray:
    amin, amax = a.min(), a.max()
    if amax - amin < 1e-12:
        return np.full_like(a, (lo + hi) / 2.0)
    return lo + (a - amin) * (hi - lo) / (amax - amin)


def make_live(rng: np.random.Generator, cfg: SceneConfig = SceneConfig()) -> SubjectScene:
    """Face-like relief: parameterized Gaussian bumps over a smooth base."""
    cfg.validate(live=True)
    H, W = cfg.height, cfg.width
    yy, xx = np.mgrid[0:H, 0:W].astype(np.float64)
    z = np.zeros((H, W), dtype=np.float64)
    marks = []
    for _, cx, cy, sx, sy, amp in _FACE_BUMPS:
        # jitter each feature a little so subjects differ
        px = (cx + rng.uniform(-0.03, 0.03)) * (W - 1)
        py = (cy + rng.uniform(-0.03, 0.03)) * (H - 1)
        a = amp * rng.uniform(0.8, 1.2)
        z += a * np.exp(-0.5 * (((xx - px) / (sx * W)) ** 2 + ((yy - py) / (sy * H)) ** 2))
        marks.append((px, py))
    if cfg.base_field > 0:
        z += cfg.base_field * _smooth_noise(rng, (H, W), sigma=H / 8.0)
    z = _rescale(z, 0.0, cfg.relief)
    rho = np.stack(
        [_rescale(_smooth_noise(rng, (H, W), sigma=6.0), cfg.albedo_lo, cfg.albedo_hi) for _ in range(3)],
        axis=2,
    )
    return SubjectScene(
        height=HeightField(z=z, dx=cfg.dx),
        albedo=AlbedoMap(rho=rho),
        landmarks=Landmarks(points=np.array(marks, dtype=np.float64)),
        kind=SceneKind.LIVE,
        jitter_translation=cfg.jitter_translation,
        jitter_rotation_deg=cfg.jitter_rotation_deg,
    )


def make_print_spoof(
    rng: np.random.Generator, cfg: SceneConfig = SceneConfig(), curvature: float = 0.0
) -> SubjectScene:
    """Printed photo: flat (curvature 0) or cylindrically bent sheet.

    The albedo carries a shaded rendering of a live subject, so the print
    shows a believable face while its geometry stays that of the sheet.
    """
    if curvature < 0:
        raise ValueError("curvature amplitude must be >= 0")
    cfg.validate(live=False)
    H, W = cfg.height, cfg.width
    donor = make_live(rng, cfg)
    # Bake the donor face under neutral frontal light into the print texture.
    n = normals(donor.height)
    shading = 0.15 + 0.5 * np.clip(n[:, :, 2], 0.0, None)
    tex = np.clip(donor.albedo.rho * shading[:, :, None], 0.0, 1.0)
    u = np.linspace(0.0, 1.0, W)
    z = np.broadcast_to(curvature * np.sin(np.pi * u), (H, W)).copy()
    return SubjectScene(
        height=HeightField(z=z, dx=cfg.dx),
        albedo=AlbedoMap(rho=tex),
        landmarks=donor.landmarks,
        kind=SceneKind.PRINT,
        curvature=curvature,
        jitter_translation=cfg.jitter_translation,
        jitter_rotation_deg=cfg.jitter_rotation_deg,
    )


def make_replay_spoof(recorded: "Session", interference_blocked: bool) -> SubjectScene:
    """Replay screen showing a leaked session. The screen itself is flat."""
    first = recorded.frames[0]
    H, W = first.pixels.shape[:2]
    # The 16-px floor of HeightField does not bind here; sessions satisfy it.
    flat = HeightField(z=np.zeros((H, W), dtype=np.float64), dx=1.0 / 16.0)
    gray = AlbedoMap(rho=np.full((H, W, 3), 0.5, dtype=np.float64))
    return SubjectScene(
        height=flat,
        albedo=gray,
        landmarks=first.landmarks,
        kind=SceneKind.REPLAY,
        recorded=recorded,
        interference_blocked=interference_blocked,
    )


def normals(height: HeightField) -> np.ndarray:
    """Unit normals n = normalize(-dz/dx, -dz/dy, 1), central differences.

    np.gradient uses one-sided differences at the borders, central inside.
    """
    zy, zx = np.gradient(height.z, height.dx)
    n = np.stack([-zx, -zy, np.ones_like(zx)], axis=2)
    return n / np.linalg.norm(n, axis=2, keepdims=True)


@dataclass(frozen=True)
class DepthMap:
    labels: np.ndarray  # (H, W) int, values in [1, k_bins]
    k_bins: int

    def __post_init__(self):
        if self.labels.min() < 1 or self.labels.max() > self.k_bins:
            raise ValueError("depth labels out of range")


def gt_depth(scene: SubjectScene, k_bins: int) -> DepthMap:
    """Quantized ground-truth depth labels on the fixed [0, 1] relief scale.

    Height 0 maps to bin 1, height 1 to bin k_bins; replay screens are flat
    by definition regardless of what their video shows.
    """
    if k_bins < 2:
        raise ValueError("need at least 2 depth bins")
    if scene.kind is SceneKind.REPLAY:
        labels = np.ones_like(scene.height.z, dtype=np.int32)
    else:
        z = np.clip(scene.height.z, 0.0, 1.0)
        labels = np.rint(1.0 + z * (k_bins - 1)).astype(np.int32)
    return DepthMap(labels=labels, k_bins=k_bins)
