"""Synthetic benchmark generation, on-disk format, and loading.

Layout under a dataset directory:
  manifest.json                   sorted-key JSON index of every session
  sessions/<id>/frames.f32        (n, H, W, 3) little-endian float32, C order
  sessions/<id>/landmarks.f32     (n, K, 2) little-endian float32
  sessions/<id>/captcha.txt       n lines "alpha beta"
  sessions/<id>/depth.u16         (H, W) little-endian uint16 depth bins

Three parts mirror the benchmark taxonomy: part 1 pits live faces against
flat prints, part 2 against replays (half with the cast light blocked, half
with it reflecting off the screen), part 3 against curved prints mixed with
unblocked replays. Each part holds equal live and spoof counts, split
3:1:1 into train/dev/test per label group. A handful of extra hue-only live
sessions live in split "attack" as replay-attack source loops.

All randomness descends from one SeedSequence, one spawned child per
session, so datasets are byte-identical given the seed.
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .captcha import PALETTE_ALPHAS, LightCaptcha, LightParam, generate_captcha, residuals
from .net.train import SessionExample
from .normal_cue import extract_session
from .render import LightingConfig, ReflectionFrame, Session, render_session
from .scene import (
    Landmarks,
    SceneConfig,
    gt_depth,
    make_live,
    make_print_spoof,
    make_replay_spoof,
)

MANIFEST_VERSION = 1

LIVE_KIND = "live"
SPOOF_KINDS = ("print_flat", "print_curved", "replay_blocked", "replay_unblocked")
REG_ACTIVE_KINDS = (LIVE_KIND, "print_flat", "print_curved")


@dataclass(frozen=True)
class GenConfig:
    seed: int = 0
    sessions_per_part: int = 200
    frames_per_session: int = 5
    height: int = 64
    width: int = 64
    k_bins: int = 32
    attack_loops: int = 5
    attack_loop_frames: int = 8
    curvature_lo: float = 0.3
    curvature_hi: float = 0.8

    def validate(self) -> None:
        if self.sessions_per_part < 2 or self.sessions_per_part % 2 != 0:
            raise ValueError("sessions_per_part must be even and at least 2")
        if self.frames_per_session < 2:
            raise ValueError("frames_per_session must be at least 2")
        if self.attack_loop_frames < self.frames_per_session:
            raise ValueError("attack loops must be at least one challenge long")
        if not 0.0 < self.curvature_lo <= self.curvature_hi:
            raise ValueError("curvature range must be positive and ordered")


@dataclass(frozen=True)
class SessionRecord:
    session_id: str
    label: int
    part: int
    split: str
    kind: str
    n_frames: int
    height: int
    width: int
    k_bins: int


def _split_of(index_in_group: int, group_size: int) -> str:
    train_n = (group_size * 3) // 5
    dev_n = group_size // 5
    if index_in_group < train_n:
        return "train"
    if index_in_group < train_n + dev_n:
        return "dev"
    return "test"


def _loop_captcha(n: int, rng: np.random.Generator) -> LightCaptcha:
    """Hue-only loop: full intensity, adjacent AND wrap-around hues differ,
    so every cyclic window of the loop is a valid light sequence."""
    alphas = [float(rng.choice(PALETTE_ALPHAS))]
    for _ in range(n - 1):
        a = float(rng.choice(PALETTE_ALPHAS))
        while a == alphas[-1]:
            a = float(rng.choice(PALETTE_ALPHAS))
        alphas.append(a)
    while alphas[-1] == alphas[0]:
        a = float(rng.choice(PALETTE_ALPHAS))
        if a != alphas[-2]:
            alphas[-1] = a
    return LightCaptcha(params=tuple(LightParam(a, 1.0) for a in alphas))


def _render_live(rng, scene_cfg, light_cfg, captcha):
    scene = make_live(rng, scene_cfg)
    return scene, render_session(scene, captcha, light_cfg, rng)


def _make_session(kind, part_rng, scene_cfg, light_cfg, cfg: GenConfig):
    """Returns (scene, session). The claimed captcha always comes first off
    the generator so sibling kinds stay aligned stream-wise."""
    n_frames = cfg.frames_per_session
    captcha = generate_captcha(n_frames, part_rng)
    if kind == LIVE_KIND:
        return _render_live(part_rng, scene_cfg, light_cfg, captcha)
    if kind in ("print_flat", "print_curved"):
        curvature = 0.0
        if kind == "print_curved":
            curvature = float(part_rng.uniform(cfg.curvature_lo, cfg.curvature_hi))
        scene = make_print_spoof(part_rng, scene_cfg, curvature=curvature)
        return scene, render_session(scene, captcha, light_cfg, part_rng)
    if kind in ("replay_blocked", "replay_unblocked"):
        donor_captcha = generate_captcha(n_frames, part_rng)
        _, recorded = _render_live(part_rng, scene_cfg, light_cfg, donor_captcha)
        scene = make_replay_spoof(recorded, interference_blocked=(kind == "replay_blocked"))
        return scene, render_session(scene, captcha, light_cfg, part_rng)
    raise ValueError(f"unknown session kind: {kind}")


def _spoof_kind(part: int, spoof_index: int) -> str:
    if part == 1:
        return "print_flat"
    if part == 2:
        return "replay_blocked" if spoof_index % 2 == 0 else "replay_unblocked"
    if part == 3:
        return "print_curved" if spoof_index % 2 == 0 else "replay_unblocked"
    raise ValueError(f"unknown part: {part}")


def _write_session(out_dir: Path, rec: SessionRecord, session: Session, depth_bins: np.ndarray):
    d = out_dir / "sessions" / rec.session_id
    d.mkdir(parents=True, exist_ok=True)
    frames = np.stack([f.pixels for f in session.frames]).astype("<f4")
    (d / "frames.f32").write_bytes(frames.tobytes())
    lm = np.stack([f.landmarks.points for f in session.frames]).astype("<f4")
    (d / "landmarks.f32").write_bytes(lm.tobytes())
    lines = [f"{p.alpha!r} {p.beta!r}" for p in session.captcha.params]
    (d / "captcha.txt").write_text("\n".join(lines) + "\n")
    (d / "depth.u16").write_bytes(depth_bins.astype("<u2").tobytes())


def generate_dataset(
    out_dir: str | Path,
    cfg: GenConfig,
    scene_cfg: SceneConfig | None = None,
    light_cfg: LightingConfig | None = None,
) -> list[SessionRecord]:
    cfg.validate()
    scene_cfg = scene_cfg or SceneConfig(height=cfg.height, width=cfg.width)
    light_cfg = light_cfg or LightingConfig()
    scene_cfg.validate(live=True)
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)

    per_label = cfg.sessions_per_part // 2
    plan: list[tuple[str, int, str, str]] = []  # (id, part, split, kind)
    for part in (1, 2, 3):
        for i in range(per_label):
            plan.append((f"p{part}_live_{i:03d}", part, _split_of(i, per_label), LIVE_KIND))
        for i in range(per_label):
            kind = _spoof_kind(part, i)
            plan.append((f"p{part}_spoof_{i:03d}", part, _split_of(i, per_label), kind))
    for i in range(cfg.attack_loops):
        plan.append((f"attack_loop_{i:03d}", 0, "attack", LIVE_KIND))

    children = np.random.SeedSequence(cfg.seed).spawn(len(plan))
    records = []
    for (sid, part, split, kind), child in zip(plan, children):
        rng = np.random.default_rng(child)
        if split == "attack":
            captcha = _loop_captcha(cfg.attack_loop_frames, rng)
            scene, session = _render_live(rng, scene_cfg, light_cfg, captcha)
        else:
            scene, session = _make_session(kind, rng, scene_cfg, light_cfg, cfg)
        depth = gt_depth(scene, cfg.k_bins)
        rec = SessionRecord(
            session_id=sid,
            label=int(session.label),
            part=part,
            split=split,
            kind=kind,
            n_frames=len(session.frames),
            height=cfg.height,
            width=cfg.width,
            k_bins=cfg.k_bins,
        )
        _write_session(out_dir, rec, session, depth.labels)
        records.append(rec)

    manifest = {
        "version": MANIFEST_VERSION,
        "seed": cfg.seed,
        "sessions": [vars(r) for r in records],
    }
    (out_dir / "manifest.json").write_text(
        json.dumps(manifest, sort_keys=True, indent=1) + "\n"
    )
    return records


@dataclass(frozen=True)
class StoredSession:
    record: SessionRecord
    session: Session
    depth_bins: np.ndarray

    @property
    def reg_active(self) -> bool:
        return self.record.kind in REG_ACTIVE_KINDS


def load_manifest(dataset_dir: str | Path) -> list[SessionRecord]:
    path = Path(dataset_dir) / "manifest.json"
    data = json.loads(path.read_text())
    if data.get("version") != MANIFEST_VERSION:
        raise ValueError(f"unrecognized manifest version: {data.get('version')}")
    return [SessionRecord(**r) for r in data["sessions"]]


def load_session(dataset_dir: str | Path, rec: SessionRecord) -> StoredSession:
    d = Path(dataset_dir) / "sessions" / rec.session_id
    n, H, W = rec.n_frames, rec.height, rec.width
    frames = np.frombuffer((d / "frames.f32").read_bytes(), dtype="<f4")
    if frames.size != n * H * W * 3:
        raise ValueError(f"{rec.session_id}: frame payload does not match manifest dimensions")
    frames = frames.reshape(n, H, W, 3)
    lm = np.frombuffer((d / "landmarks.f32").read_bytes(), dtype="<f4").reshape(n, -1, 2)
    params = []
    for line in (d / "captcha.txt").read_text().splitlines():
        a, b = line.split()
        params.append(LightParam(alpha=float(a), beta=float(b)))
    captcha = LightCaptcha(params=tuple(params))
    depth = np.frombuffer((d / "depth.u16").read_bytes(), dtype="<u2").reshape(H, W)
    sess = Session(
        frames=tuple(
            ReflectionFrame(
                pixels=frames[i].astype(np.float32),
                landmarks=Landmarks(points=lm[i].astype(np.float64)),
            )
            for i in range(n)
        ),
        captcha=captcha,
        label=bool(rec.label),
        scene_id=rec.session_id,
    )
    return StoredSession(record=rec, session=sess, depth_bins=depth.astype(np.int64))


def load_split(
    dataset_dir: str | Path,
    part: int | None = None,
    split: str | None = None,
) -> list[StoredSession]:
    out = []
    for rec in load_manifest(dataset_dir):
        if part is not None and rec.part != part:
            continue
        if split is not None and rec.split != split:
            continue
        out.append(load_session(dataset_dir, rec))
    return out


def to_example(stored: StoredSession, light_cfg: LightingConfig | None = None) -> SessionExample:
    """Extract cues and bundle the training targets for one session."""
    light_cfg = light_cfg or LightingConfig()
    cues = extract_session(stored.session, light_cfg)
    x = np.stack([c.net_input() for c in cues]).astype(np.float32)
    return SessionExample(
        inputs=x,
        label=int(stored.record.label),
        gt_bins=stored.depth_bins,
        deltas=residuals(stored.session.captcha).deltas.astype(np.float32),
        reg_active=stored.reg_active,
        session_id=stored.record.session_id,
    )
