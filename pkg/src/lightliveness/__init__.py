"""Light-reflection liveness: CAPTCHA lighting, rendering, cues, depth, nets."""

from .captcha import (
    DEFAULT_TAU_REG,
    LightCaptcha,
    LightParam,
    MatchResult,
    ResidualSeq,
    generate_captcha,
    match_captcha,
    replay_match_probability,
    residuals,
    wrap_hue,
)
from .depth_oracle import DepthMetrics, depth_metrics, integrate_normals
from .evaluation import (
    ScoreSet,
    Verdict,
    cross_generalization,
    eer,
    far_frr_hter,
    replay_attack_experiment,
    score_session,
    verdict,
)
from .normal_cue import NormalCueMap, extract_normal_cue, extract_session
from .render import LightingConfig, ReflectionFrame, Session, render_session
from .scene import (
    HeightField,
    SceneConfig,
    gt_depth,
    make_live,
    make_print_spoof,
    make_replay_spoof,
    normals,
)

__version__ = "0.1.0"

__all__ = [
    "DEFAULT_TAU_REG",
    "DepthMetrics",
    "HeightField",
    "LightCaptcha",
    "LightParam",
    "LightingConfig",
    "MatchResult",
    "NormalCueMap",
    "ReflectionFrame",
    "ResidualSeq",
    "SceneConfig",
    "ScoreSet",
    "Session",
    "Verdict",
    "cross_generalization",
    "depth_metrics",
    "eer",
    "extract_normal_cue",
    "extract_session",
    "far_frr_hter",
    "generate_captcha",
    "gt_depth",
    "integrate_normals",
    "make_live",
    "make_print_spoof",
    "make_replay_spoof",
    "match_captcha",
    "normals",
    "render_session",
    "replay_attack_experiment",
    "replay_match_probability",
    "residuals",
    "score_session",
    "verdict",
    "wrap_hue",
]
