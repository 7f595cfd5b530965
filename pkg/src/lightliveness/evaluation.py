"""Verdict fusion, error-rate metrics, the split protocol grid, and the
replay-attack experiment.

A session passes verification only if the classifier accepts AND the
regressed light sequence matches the challenge; every pipeline error counts
as a spoof (fail closed). Benchmark scores are challenge-gated: a session
whose light check fails scores 0 regardless of classifier output, which is
what the fused system exposes to a threshold sweep.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .captcha import (
    LightCaptcha,
    MatchResult,
    ResidualSeq,
    match_captcha,
    replay_match_probability,
    residuals,
    uniform_hue_captcha,
)
from .dataset import StoredSession, to_example
from .net import losses
from .net import model as M
from .net.layers import sigmoid
from .net.train import SessionExample, TrainConfig, train
from .normal_cue import DegenerateGeometryError, DegenerateLightingError, extract_session
from .render import LightingConfig, Session

LIVE = 1
SPOOF = 0


@dataclass(frozen=True)
class ScoreSet:
    ids: tuple[str, ...]
    scores: np.ndarray
    labels: np.ndarray  # 1 live, 0 spoof

    def __post_init__(self):
        if len(self.ids) != self.scores.size or self.scores.size != self.labels.size:
            raise ValueError("ids, scores and labels must align")
        if self.scores.size and not np.all(np.isfinite(self.scores)):
            raise ValueError("scores must be finite")

    def __len__(self) -> int:
        return self.scores.size


def _require_both_classes(labels: np.ndarray) -> None:
    if labels.size == 0 or labels.min() == labels.max():
        raise ValueError("need at least one live and one spoof score")


def far_frr_hter(scores: ScoreSet, tau_cls: float) -> tuple[float, float, float]:
    """FAR: spoof scores >= tau accepted; FRR: live scores < tau rejected."""
    _require_both_classes(scores.labels)
    live = scores.scores[scores.labels == LIVE]
    spoof = scores.scores[scores.labels == SPOOF]
    far = float(np.mean(spoof >= tau_cls))
    frr = float(np.mean(live < tau_cls))
    return far, frr, (far + frr) / 2.0


def eer(scores: ScoreSet) -> tuple[float, float]:
    """Sweep every distinct score (plus one above the maximum) as threshold
    and return the HTER at the |FAR - FRR| minimizer, with ties broken by
    smaller HTER then smaller threshold. The returned pair is
    (EER, tau_at_eer) and satisfies HTER(tau_at_eer) = EER exactly."""
    _require_both_classes(scores.labels)
    live = np.sort(scores.scores[scores.labels == LIVE])
    spoof = np.sort(scores.scores[scores.labels == SPOOF])
    taus = np.unique(scores.scores)
    taus = np.append(taus, taus[-1] + 1.0)
    # FAR(t) = frac spoof >= t, FRR(t) = frac live < t
    far = 1.0 - np.searchsorted(spoof, taus, side="left") / spoof.size
    frr = np.searchsorted(live, taus, side="left") / live.size
    gap = np.abs(far - frr)
    hter = (far + frr) / 2.0
    order = np.lexsort((taus, hter, gap))
    best = order[0]
    return float(hter[best]), float(taus[best])


@dataclass(frozen=True)
class Verdict:
    liveness_score: float
    classifier_pass: bool
    captcha: MatchResult
    final_live: bool
    error: str = ""

    def __post_init__(self):
        if self.final_live != (self.classifier_pass and self.captcha.matched):
            raise ValueError("final_live must equal classifier_pass AND captcha.matched")


@dataclass(frozen=True)
class SessionScore:
    session_id: str
    label: int
    cls_score: float
    match: MatchResult
    error: str = ""

    @property
    def fused(self) -> float:
        return self.cls_score if self.match.matched else 0.0


def _net_outputs(params: dict, session: Session, light_cfg: LightingConfig):
    cues = extract_session(session, light_cfg)
    x = np.stack([c.net_input() for c in cues]).astype(np.float32)
    cls_logits, reg, _, _ = M.forward_batch(params, x)
    return float(np.mean(sigmoid(cls_logits))), reg.astype(np.float64)


def score_session(
    params: dict,
    session: Session,
    tau_reg: float,
    light_cfg: LightingConfig | None = None,
) -> SessionScore:
    light_cfg = light_cfg or LightingConfig()
    try:
        cls_score, est = _net_outputs(params, session, light_cfg)
    except (DegenerateGeometryError, DegenerateLightingError) as e:
        return SessionScore(
            session_id=session.scene_id,
            label=int(session.label),
            cls_score=0.0,
            match=MatchResult(nsr=float("inf"), matched=False, threshold=tau_reg),
            error=str(e),
        )
    match = match_captcha(ResidualSeq(deltas=est), residuals(session.captcha), tau_reg)
    return SessionScore(
        session_id=session.scene_id,
        label=int(session.label),
        cls_score=cls_score,
        match=match,
    )


def verdict(
    params: dict,
    session: Session,
    tau_cls: float,
    tau_reg: float,
    light_cfg: LightingConfig | None = None,
) -> Verdict:
    s = score_session(params, session, tau_reg, light_cfg)
    cls_pass = bool(s.cls_score >= tau_cls) and not s.error
    return Verdict(
        liveness_score=s.cls_score,
        classifier_pass=cls_pass,
        captcha=s.match,
        final_live=cls_pass and s.match.matched,
        error=s.error,
    )


def score_sessions(
    params: dict,
    stored: list[StoredSession],
    tau_reg: float,
    light_cfg: LightingConfig | None = None,
) -> list[SessionScore]:
    return [score_session(params, s.session, tau_reg, light_cfg) for s in stored]


def fused_score_set(scores: list[SessionScore]) -> ScoreSet:
    return ScoreSet(
        ids=tuple(s.session_id for s in scores),
        scores=np.array([s.fused for s in scores], dtype=np.float64),
        labels=np.array([s.label for s in scores], dtype=np.int64),
    )


def classifier_score_set(scores: list[SessionScore]) -> ScoreSet:
    return ScoreSet(
        ids=tuple(s.session_id for s in scores),
        scores=np.array([s.cls_score for s in scores], dtype=np.float64),
        labels=np.array([s.label for s in scores], dtype=np.int64),
    )


@dataclass(frozen=True)
class GridCell:
    train_part: int
    eval_part: int
    eer: float
    tau: float
    far: float
    frr: float
    hter: float


def evaluate_cell(
    params: dict,
    dev: list[StoredSession],
    test: list[StoredSession],
    tau_reg: float,
    light_cfg: LightingConfig | None = None,
) -> tuple[float, float, float, float, float]:
    """Dev split picks the operating threshold; test reports its own EER and
    the FAR/FRR/HTER at the dev threshold. Returns (eer, tau, far, frr, hter)."""
    dev_set = fused_score_set(score_sessions(params, dev, tau_reg, light_cfg))
    _, tau = eer(dev_set)
    test_set = fused_score_set(score_sessions(params, test, tau_reg, light_cfg))
    test_eer, _ = eer(test_set)
    far, frr, hter = far_frr_hter(test_set, tau)
    return test_eer, tau, far, frr, hter


def cross_generalization(
    dataset_dir,
    model_cfg: M.ModelConfig,
    train_cfg: TrainConfig,
    tau_reg: float,
    light_cfg: LightingConfig | None = None,
    parts: tuple[int, ...] = (1, 2, 3),
) -> list[GridCell]:
    """Train per part, evaluate on every part's test split (the 3x3 grid)."""
    from .dataset import load_split

    light_cfg = light_cfg or LightingConfig()
    loaded = {
        p: {s: load_split(dataset_dir, part=p, split=s) for s in ("train", "dev", "test")}
        for p in parts
    }
    for p in parts:
        if not loaded[p]["train"]:
            raise ValueError(f"part {p} has no training sessions")
    examples = {
        p: [to_example(s, light_cfg) for s in loaded[p]["train"]] for p in parts
    }
    cells = []
    for tp in parts:
        result = train(examples[tp], model_cfg, train_cfg)
        for ep in parts:
            e, tau, far, frr, hter = evaluate_cell(
                result.params, loaded[ep]["dev"], loaded[ep]["test"], tau_reg, light_cfg
            )
            cells.append(GridCell(tp, ep, e, tau, far, frr, hter))
    return cells


@dataclass(frozen=True)
class AttackReport:
    loop_id: str
    n_trials: int
    bypasses: int
    rejected_degenerate: int
    analytic_p: float
    tau_cls: float
    tau_reg: float
    n_challenge: int
    validated_trials: int
    validation_mismatches: int

    @property
    def rate(self) -> float:
        return self.bypasses / self.n_trials if self.n_trials else 0.0


def _loop_window_session(loop: Session, offset: int, n: int, claim: LightCaptcha) -> Session:
    L = len(loop.frames)
    frames = tuple(loop.frames[(offset + i) % L] for i in range(n))
    return Session(frames=frames, captcha=claim, label=False, scene_id=f"{loop.scene_id}@{offset}")


def replay_attack_experiment(
    params: dict,
    loop: Session,
    n_challenge: int,
    n_trials: int,
    rng: np.random.Generator,
    tau_cls: float,
    tau_reg: float,
    light_cfg: LightingConfig | None = None,
    validate_trials: int = 8,
) -> AttackReport:
    """Blocked-replay attack: a fixed recorded loop faces fresh random
    challenges; a trial bypasses if ANY cyclic alignment of the loop passes
    the fused verdict, matching the alignment semantics of
    replay_match_probability.

    The captured frames do not depend on the claimed challenge (the cast
    light is blocked), so per-alignment classifier scores and light-change
    estimates are computed once; every trial then only re-runs the residual
    match. The first validate_trials trials are re-checked end to end
    through the full verdict path.
    """
    light_cfg = light_cfg or LightingConfig()
    L = len(loop.frames)
    if n_challenge < 2 or n_challenge > L:
        raise ValueError("challenge must be at least 2 and at most the loop length")

    per_offset = []
    for off in range(L):
        ref_claim = _cyclic_claim(loop.captcha, off, n_challenge)
        sess = _loop_window_session(loop, off, n_challenge, ref_claim)
        cls_score, est = _net_outputs(params, sess, light_cfg)
        per_offset.append((cls_score, est))

    bypasses = 0
    rejected = 0
    mismatches = 0
    validated = 0
    for t in range(n_trials):
        claim = uniform_hue_captcha(n_challenge, rng)
        truth = residuals(claim)
        degenerate = bool(np.any(np.all(truth.deltas == 0.0, axis=1)))
        if degenerate:
            rejected += 1
            hit = False
        else:
            hit = False
            for cls_score, est in per_offset:
                if cls_score >= tau_cls and match_captcha(
                    ResidualSeq(deltas=est), truth, tau_reg
                ).matched:
                    hit = True
                    break
        if t < validate_trials:
            validated += 1
            full = any(
                verdict(params, _loop_window_session(loop, off, n_challenge, claim),
                        tau_cls, tau_reg, light_cfg).final_live
                for off in range(L)
            )
            if full != hit:
                mismatches += 1
        if hit:
            bypasses += 1

    analytic = replay_match_probability(loop.captcha, n_challenge, tau_reg)
    return AttackReport(
        loop_id=loop.scene_id,
        n_trials=n_trials,
        bypasses=bypasses,
        rejected_degenerate=rejected,
        analytic_p=analytic,
        tau_cls=tau_cls,
        tau_reg=tau_reg,
        n_challenge=n_challenge,
        validated_trials=validated,
        validation_mismatches=mismatches,
    )


def _cyclic_claim(loop_captcha: LightCaptcha, offset: int, n: int) -> LightCaptcha:
    L = len(loop_captcha)
    params = tuple(loop_captcha.params[(offset + i) % L] for i in range(n))
    return LightCaptcha(params=params)
