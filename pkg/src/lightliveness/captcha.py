"""Light challenge generation and response matching.

A challenge is a short sequence of screen-light parameters. Each light is a
(hue, intensity) pair: hue is a fraction of a full color circle restricted to
a 4-entry palette, intensity is quantized to 3 levels. What the verifier
checks is not the absolute sequence but the sequence of adjacent parameter
changes (residuals), which is what reflection frames can actually reveal.
"""

from __future__ import annotations

import itertools
import math
from dataclasses import dataclass
from typing import Optional, Sequence

import numpy as np

PALETTE_ALPHAS = (0.0, 0.25, 0.5, 0.75)
BETA_LEVELS = (0.2, 0.6, 1.0)

# Default accept threshold for the normalized residual error statistic.
DEFAULT_TAU_REG = 0.35


def wrap_hue(delta: float) -> float:
    """Wrap a hue difference onto the half-open circle (-0.5, 0.5]."""
    return float(delta - math.ceil(delta - 0.5))


@dataclass(frozen=True)
class LightParam:
    """One casted light: hue in turns, relative intensity."""

    alpha: float
    beta: float


@dataclass(frozen=True)
class LightCaptcha:
    """An ordered light sequence of length n >= 2.

    ``seed`` records the PRNG seed when the sequence came from
    :func:`generate_captcha`; sequences built by other samplers carry None.
    """

    params: tuple[LightParam, ...]
    seed: Optional[int] = None

    def __len__(self) -> int:
        return len(self.params)

    def validate(self) -> None:
        if len(self.params) < 2:
            raise ValueError("challenge needs at least 2 lights")
        for p in self.params:
            if not any(math.isclose(p.alpha, a) for a in PALETTE_ALPHAS):
                raise ValueError(f"hue {p.alpha} outside palette")
            if not 0.2 <= p.beta <= 1.0:
                raise ValueError(f"intensity {p.beta} outside [0.2, 1.0]")
        for a, b in itertools.pairwise(self.params):
            if a == b:
                raise ValueError("adjacent lights must differ in hue or intensity")


@dataclass(frozen=True)
class ResidualSeq:
    """Adjacent-light parameter changes: deltas[i] = (wrapped dalpha, dbeta)."""

    deltas: np.ndarray  # shape (m, 2)

    def __len__(self) -> int:
        return len(self.deltas)


@dataclass(frozen=True)
class MatchResult:
    nsr: float
    matched: bool
    threshold: float


def generate_captcha(n: int, seed: int | np.random.Generator) -> LightCaptcha:
    """Draw n lights uniformly from the palette grid, no adjacent repeats.

    Deterministic for a fixed (n, seed); an existing Generator may be passed
    to draw from a shared stream.
    """
    if n < 2:
        raise ValueError("challenge needs at least 2 lights")
    rng = np.random.default_rng(seed)
    params: list[LightParam] = []
    while len(params) < n:
        cand = LightParam(
            alpha=PALETTE_ALPHAS[rng.integers(len(PALETTE_ALPHAS))],
            beta=BETA_LEVELS[rng.integers(len(BETA_LEVELS))],
        )
        if params and cand == params[-1]:
            continue
        params.append(cand)
    cap = LightCaptcha(params=tuple(params), seed=seed if isinstance(seed, int) else None)
    cap.validate()
    return cap


def uniform_hue_captcha(n: int, rng: np.random.Generator, beta: float = 1.0) -> LightCaptcha:
    """Sample n hues i.i.d. uniform over the palette at a fixed intensity.

    This is the challenge distribution of the replay-attack experiment; it
    matches the equiprobable enumeration of :func:`replay_match_probability`
    exactly, so adjacent repeats are allowed (the pipeline rejects them
    fail-closed at extraction time, and the enumeration discounts them).
    """
    if n < 2:
        raise ValueError("challenge needs at least 2 lights")
    idx = rng.integers(len(PALETTE_ALPHAS), size=n)
    params = tuple(LightParam(alpha=PALETTE_ALPHAS[i], beta=beta) for i in idx)
    return LightCaptcha(params=params, seed=None)


def residuals(captcha: LightCaptcha) -> ResidualSeq:
    """Adjacent deltas of a challenge; length is one less than the challenge."""
    if len(captcha) < 2:
        raise ValueError("need at least 2 lights to form residuals")
    out = np.empty((len(captcha) - 1, 2), dtype=np.float64)
    for i, (a, b) in enumerate(itertools.pairwise(captcha.params)):
        out[i, 0] = wrap_hue(b.alpha - a.alpha)
        out[i, 1] = b.beta - a.beta
    return ResidualSeq(deltas=out)


def _delta_array(seq: ResidualSeq | np.ndarray) -> np.ndarray:
    arr = seq.deltas if isinstance(seq, ResidualSeq) else np.asarray(seq, dtype=np.float64)
    if arr.ndim != 2 or arr.shape[1] != 2:
        raise ValueError("residual sequence must have shape (m, 2)")
    return arr


def nsr_statistic(estimated: ResidualSeq | np.ndarray, truth: ResidualSeq | np.ndarray) -> float:
    """Normalized squared residual error between two delta sequences.

    nsr = sum ||est_i - truth_i||^2 / sum ||truth_i||^2, with the hue
    component of each difference taken through the shortest wrapped distance.
    A zero-energy truth gives 0.0 against an identical estimate and +inf
    otherwise.
    """
    est = _delta_array(estimated)
    tru = _delta_array(truth)
    if est.shape != tru.shape:
        raise ValueError(f"length mismatch: {est.shape[0]} vs {tru.shape[0]}")
    dalpha = est[:, 0] - tru[:, 0]
    dalpha -= np.ceil(dalpha - 0.5)
    dbeta = est[:, 1] - tru[:, 1]
    num = float(np.sum(dalpha**2) + np.sum(dbeta**2))
    den = float(np.sum(tru**2))
    if den == 0.0:
        return 0.0 if num == 0.0 else math.inf
    return num / den


def match_captcha(
    estimated: ResidualSeq | np.ndarray,
    truth: ResidualSeq | np.ndarray,
    tau_reg: float = DEFAULT_TAU_REG,
) -> MatchResult:
    """Accept iff the normalized residual error does not exceed tau_reg."""
    nsr = nsr_statistic(estimated, truth)
    return MatchResult(nsr=nsr, matched=bool(nsr <= tau_reg), threshold=tau_reg)


def cyclic_window_residuals(loop: LightCaptcha, offset: int, n: int) -> ResidualSeq:
    """Residuals seen when n frames are grabbed from a repeating loop.

    Frame j of the capture shows loop light (offset + j) mod L, so the
    deltas are taken between cyclically adjacent loop entries.
    """
    L = len(loop)
    if n > L:
        raise ValueError("window longer than the loop")
    out = np.empty((n - 1, 2), dtype=np.float64)
    for j in range(n - 1):
        a = loop.params[(offset + j) % L]
        b = loop.params[(offset + j + 1) % L]
        out[j, 0] = wrap_hue(b.alpha - a.alpha)
        out[j, 1] = b.beta - a.beta
    return ResidualSeq(deltas=out)


def replay_match_probability(
    loop: LightCaptcha, n: int, tau_reg: float = DEFAULT_TAU_REG, beta: float = 1.0
) -> float:
    """Chance that a fresh random challenge is answered by a fixed loop.

    Enumerates all 4**n equiprobable hue orderings at fixed intensity and
    counts those whose residuals are matched by SOME cyclic alignment of the
    loop. Orderings containing a zero parameter change at any index cannot
    bypass the pipeline (extraction rejects the degenerate light pair
    fail-closed), so they never count as a match.
    """
    if n < 2:
        raise ValueError("challenge needs at least 2 lights")
    if len(loop) < n:
        raise ValueError("loop shorter than the challenge")
    loop_windows = [cyclic_window_residuals(loop, o, n) for o in range(len(loop))]
    hits = 0
    for combo in itertools.product(range(len(PALETTE_ALPHAS)), repeat=n):
        alphas = [PALETTE_ALPHAS[i] for i in combo]
        deltas = np.empty((n - 1, 2), dtype=np.float64)
        for j in range(n - 1):
            deltas[j, 0] = wrap_hue(alphas[j + 1] - alphas[j])
            deltas[j, 1] = 0.0
        if np.any(np.all(deltas == 0.0, axis=1)):
            continue
        for win in loop_windows:
            if nsr_statistic(win, deltas) <= tau_reg:
                hits += 1
                break
    return hits / len(PALETTE_ALPHAS) ** n
