"""Key=value run configuration shared by all CLI commands.

Format: one "key = value" per line; blank lines and #-comments ignored;
unknown keys are errors. Every key has a default, so an empty file is a
valid config.
"""

from __future__ import annotations

from dataclasses import dataclass, fields
from pathlib import Path

from .dataset import GenConfig
from .net.model import ModelConfig
from .net.train import TrainConfig
from .render import LightingConfig
from .scene import SceneConfig


@dataclass(frozen=True)
class RunConfig:
    # generation
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
    # scene and lighting
    relief: float = 1.0
    k_a: float = 0.15
    noise_sigma: float = 0.005
    screen_gain: float = 0.25
    # model and training
    base_channels: int = 8
    lambda_depth: float = 0.5
    lambda_reg: float = 1.0
    learning_rate: float = 3e-3
    rmsprop_decay: float = 0.9
    rmsprop_epsilon: float = 1e-8
    epochs: int = 80
    batch_size: int = 4
    # protocol
    part: int = 1
    tau_reg: float = 0.35
    trials: int = 3000
    challenge_n: int = 0  # 0 means frames_per_session
    # paths
    data_dir: str = "data"
    out_dir: str = "run"

    def validate(self) -> None:
        if self.height != self.width:
            raise ValueError("height and width must match (square frames)")
        if self.part not in (1, 2, 3):
            raise ValueError("part must be 1, 2 or 3")
        if self.trials < 0:
            raise ValueError("trials must be nonnegative")
        if not self.data_dir or not self.out_dir:
            raise ValueError("data_dir and out_dir must be nonempty")
        self.gen_config().validate()
        self.train_config().validate()
        self.model_config().validate()
        self.scene_config().validate(live=True)
        self.lighting_config()

    def gen_config(self) -> GenConfig:
        return GenConfig(
            seed=self.seed,
            sessions_per_part=self.sessions_per_part,
            frames_per_session=self.frames_per_session,
            height=self.height,
            width=self.width,
            k_bins=self.k_bins,
            attack_loops=self.attack_loops,
            attack_loop_frames=self.attack_loop_frames,
            curvature_lo=self.curvature_lo,
            curvature_hi=self.curvature_hi,
        )

    def scene_config(self) -> SceneConfig:
        return SceneConfig(height=self.height, width=self.width, relief=self.relief)

    def lighting_config(self) -> LightingConfig:
        return LightingConfig(
            k_a=self.k_a, noise_sigma=self.noise_sigma, screen_gain=self.screen_gain
        )

    def model_config(self) -> ModelConfig:
        return ModelConfig(input_size=self.height, k_bins=self.k_bins, base=self.base_channels)

    def train_config(self) -> TrainConfig:
        return TrainConfig(
            lambda_depth=self.lambda_depth,
            lambda_reg=self.lambda_reg,
            learning_rate=self.learning_rate,
            rmsprop_decay=self.rmsprop_decay,
            rmsprop_epsilon=self.rmsprop_epsilon,
            epochs=self.epochs,
            batch_size=self.batch_size,
            seed=self.seed,
        )

    @property
    def attack_challenge_n(self) -> int:
        return self.challenge_n if self.challenge_n else self.frames_per_session


_FIELD_TYPES = {f.name: f.type for f in fields(RunConfig)}


def parse_config_text(text: str) -> dict[str, str]:
    out: dict[str, str] = {}
    for lineno, raw in enumerate(text.splitlines(), 1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ValueError(f"line {lineno}: expected key = value, got {raw!r}")
        key, value = (s.strip() for s in line.split("=", 1))
        if not key or not value:
            raise ValueError(f"line {lineno}: empty key or value")
        if key in out:
            raise ValueError(f"line {lineno}: duplicate key {key!r}")
        out[key] = value
    return out


def run_config_from_mapping(mapping: dict[str, str]) -> RunConfig:
    kwargs = {}
    for key, value in mapping.items():
        if key not in _FIELD_TYPES:
            raise ValueError(f"unknown config key: {key!r}")
        t = _FIELD_TYPES[key]
        try:
            if t == "int" or t is int:
                kwargs[key] = int(value)
            elif t == "float" or t is float:
                kwargs[key] = float(value)
            else:
                kwargs[key] = value
        except ValueError as e:
            raise ValueError(f"config key {key!r}: {e}") from None
    cfg = RunConfig(**kwargs)
    cfg.validate()
    return cfg


def load_run_config(path: str | Path | None, seed_override: int | None = None) -> RunConfig:
    mapping = parse_config_text(Path(path).read_text()) if path else {}
    if seed_override is not None:
        mapping["seed"] = str(seed_override)
    return run_config_from_mapping(mapping)
