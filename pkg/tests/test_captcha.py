"""Challenge generation, residual matching, and loop-replay enumeration."""

import itertools
import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from lightliveness.captcha import (
    BETA_LEVELS,
    DEFAULT_TAU_REG,
    PALETTE_ALPHAS,
    LightCaptcha,
    LightParam,
    ResidualSeq,
    cyclic_window_residuals,
    generate_captcha,
    match_captcha,
    nsr_statistic,
    replay_match_probability,
    residuals,
    uniform_hue_captcha,
    wrap_hue,
)


def make_captcha(*pairs):
    return LightCaptcha(params=tuple(LightParam(alpha=a, beta=b) for a, b in pairs))


# ---------------------------------------------------------------- wrap_hue


def test_wrap_hue_known_values():
    assert wrap_hue(0.0) == 0.0
    assert wrap_hue(0.25) == 0.25
    assert wrap_hue(0.5) == 0.5
    assert wrap_hue(0.75) == -0.25
    assert wrap_hue(-0.25) == -0.25
    assert wrap_hue(-0.5) == 0.5
    assert wrap_hue(-0.75) == 0.25
    assert wrap_hue(1.0) == 0.0
    assert wrap_hue(1.25) == 0.25


@given(st.floats(min_value=-50.0, max_value=50.0))
def test_wrap_hue_range_and_periodicity(d):
    w = wrap_hue(d)
    assert -0.5 < w <= 0.5
    assert math.isclose(wrap_hue(d + 1.0), w, abs_tol=1e-9)
    # difference from the input is a whole number of turns
    assert math.isclose((d - w) % 1.0, 0.0, abs_tol=1e-9) or math.isclose(
        (d - w) % 1.0, 1.0, abs_tol=1e-9
    )


def test_wrap_hue_palette_deltas_are_fixed_points_or_half_turn():
    for a in PALETTE_ALPHAS:
        for b in PALETTE_ALPHAS:
            w = wrap_hue(b - a)
            assert w in (0.0, 0.25, -0.25, 0.5)


# ----------------------------------------------------- validation and sampling


def test_validate_accepts_palette_sequence():
    cap = make_captcha((0.0, 0.2), (0.25, 0.6), (0.5, 1.0))
    cap.validate()


def test_validate_rejects_short_sequence():
    with pytest.raises(ValueError):
        make_captcha((0.0, 0.2)).validate()


def test_validate_rejects_off_palette_hue():
    with pytest.raises(ValueError):
        make_captcha((0.1, 0.2), (0.25, 0.6)).validate()


def test_validate_rejects_out_of_range_intensity():
    with pytest.raises(ValueError):
        make_captcha((0.0, 0.1), (0.25, 0.6)).validate()
    with pytest.raises(ValueError):
        make_captcha((0.0, 1.2), (0.25, 0.6)).validate()


def test_validate_rejects_adjacent_repeat():
    with pytest.raises(ValueError):
        make_captcha((0.25, 0.6), (0.25, 0.6), (0.5, 1.0)).validate()
    # same hue with a different intensity is a real change
    make_captcha((0.25, 0.6), (0.25, 1.0)).validate()


def test_generate_captcha_deterministic_and_valid():
    a = generate_captcha(6, seed=123)
    b = generate_captcha(6, seed=123)
    assert a == b
    assert a.seed == 123
    assert len(a) == 6
    a.validate()


def test_generate_captcha_draws_from_parameter_grid():
    for s in range(40):
        cap = generate_captcha(5, seed=s)
        for p in cap.params:
            assert p.alpha in PALETTE_ALPHAS
            assert p.beta in BETA_LEVELS


def test_generate_captcha_rejects_single_light():
    with pytest.raises(ValueError):
        generate_captcha(1, seed=0)


def test_generate_captcha_residuals_never_all_zero():
    # adjacent lights always differ, so no residual row can vanish
    for s in range(200):
        d = residuals(generate_captcha(4, seed=s)).deltas
        assert np.all(np.any(d != 0.0, axis=1))


def test_uniform_hue_captcha_fixed_intensity_and_iid_repeats():
    rng = np.random.default_rng(7)
    caps = [uniform_hue_captcha(4, rng) for _ in range(60)]
    for cap in caps:
        assert all(p.beta == 1.0 for p in cap.params)
        assert all(p.alpha in PALETTE_ALPHAS for p in cap.params)
        assert cap.seed is None
    # i.i.d. sampling must produce adjacent repeats now and then
    has_repeat = any(
        any(a.alpha == b.alpha for a, b in itertools.pairwise(cap.params)) for cap in caps
    )
    assert has_repeat


def test_uniform_hue_captcha_rejects_single_light():
    with pytest.raises(ValueError):
        uniform_hue_captcha(1, np.random.default_rng(0))


# ------------------------------------------------------------------ residuals


def test_residuals_known_sequence():
    cap = make_captcha((0.0, 0.2), (0.25, 0.2), (0.75, 1.0))
    d = residuals(cap).deltas
    assert d.shape == (2, 2)
    np.testing.assert_allclose(d[0], [0.25, 0.0])
    np.testing.assert_allclose(d[1], [0.5, 0.8])


def test_residuals_wrap_shortest_direction():
    cap = make_captcha((0.75, 1.0), (0.0, 1.0))
    d = residuals(cap).deltas
    # 0.75 -> 0.0 is a quarter turn forward, not three quarters back
    np.testing.assert_allclose(d[0], [0.25, 0.0])


def test_residuals_length_is_one_less():
    for n in (2, 3, 5, 8):
        cap = generate_captcha(n, seed=n)
        assert len(residuals(cap)) == n - 1


def test_residuals_needs_two_lights():
    with pytest.raises(ValueError):
        residuals(make_captcha((0.0, 0.2)))


# -------------------------------------------------------------- nsr statistic


def test_nsr_zero_on_identical_sequences():
    truth = residuals(generate_captcha(5, seed=11))
    assert nsr_statistic(truth, truth) == 0.0
    res = match_captcha(truth, truth)
    assert res.matched
    assert res.nsr == 0.0
    assert res.threshold == DEFAULT_TAU_REG


def test_nsr_negated_estimate_is_four():
    # deltas stay off the half-turn line so negation doubles every component
    truth = np.array([[0.25, 0.4], [-0.25, -0.4]])
    est = -truth
    nsr = nsr_statistic(est, truth)
    assert math.isclose(nsr, 4.0, rel_tol=1e-12)
    assert not match_captcha(est, truth).matched


def test_nsr_negated_half_turn_delta_wraps_back():
    # -0.5 and 0.5 are the same hue change, so negation there costs nothing
    truth = np.array([[0.5, 0.0]])
    est = np.array([[-0.5, 0.0]])
    assert nsr_statistic(est, truth) == 0.0


def test_nsr_error_uses_wrapped_hue_distance():
    truth = np.array([[-0.25, 0.0]])
    est = np.array([[0.5, 0.0]])
    # raw difference 0.75 wraps to -0.25
    nsr = nsr_statistic(est, truth)
    assert math.isclose(nsr, 0.0625 / 0.0625, rel_tol=1e-12)


def test_nsr_scales_with_perturbation_energy():
    truth = np.array([[0.25, 0.0], [0.0, 0.4]])
    est = truth + np.array([[0.0, 0.1], [0.0, -0.1]])
    expect = (0.01 + 0.01) / (0.0625 + 0.16)
    assert math.isclose(nsr_statistic(est, truth), expect, rel_tol=1e-12)


def test_nsr_zero_energy_truth_conventions():
    z = np.zeros((3, 2))
    assert nsr_statistic(z, z) == 0.0
    assert nsr_statistic(z + 0.01, z) == math.inf


def test_nsr_length_mismatch_raises():
    with pytest.raises(ValueError):
        nsr_statistic(np.zeros((2, 2)), np.zeros((3, 2)))


def test_nsr_rejects_malformed_shape():
    with pytest.raises(ValueError):
        nsr_statistic(np.zeros((2, 3)), np.zeros((2, 3)))


def test_nsr_accepts_arrays_and_residual_seqs():
    arr = np.array([[0.25, 0.0], [0.0, -0.4]])
    seq = ResidualSeq(deltas=arr.copy())
    assert nsr_statistic(arr, seq) == nsr_statistic(seq, arr) == 0.0


@given(st.integers(min_value=0, max_value=10_000))
@settings(max_examples=40, deadline=None)
def test_nsr_nonnegative_and_match_consistent(seed):
    rng = np.random.default_rng(seed)
    truth = residuals(generate_captcha(4, seed=seed))
    est = ResidualSeq(deltas=truth.deltas + rng.normal(0.0, 0.2, size=truth.deltas.shape))
    nsr = nsr_statistic(est, truth)
    assert nsr >= 0.0
    res = match_captcha(est, truth, tau_reg=0.35)
    assert res.matched == (nsr <= 0.35)


def test_match_threshold_boundary_inclusive():
    truth = np.array([[0.25, 0.0]])
    # error energy exactly tau_reg * truth energy
    est = truth + np.array([[0.0, math.sqrt(0.35 * 0.0625)]])
    res = match_captcha(est, truth, tau_reg=0.35)
    assert math.isclose(res.nsr, 0.35, rel_tol=1e-12)
    assert res.matched


# --------------------------------------------------------------- loop windows


def test_cyclic_window_offset_zero_matches_prefix_residuals():
    loop = generate_captcha(6, seed=3)
    win = cyclic_window_residuals(loop, 0, 4)
    pre = residuals(LightCaptcha(params=loop.params[:4]))
    np.testing.assert_allclose(win.deltas, pre.deltas)


def test_cyclic_window_wraps_through_seam():
    loop = make_captcha((0.0, 1.0), (0.25, 1.0), (0.5, 1.0), (0.75, 1.0))
    win = cyclic_window_residuals(loop, 3, 3)
    # frames show lights 3, 0, 1: the seam delta wraps 0.75 -> 0.0
    np.testing.assert_allclose(win.deltas, [[0.25, 0.0], [0.25, 0.0]])


def test_cyclic_window_full_lap_covers_every_edge():
    loop = generate_captcha(5, seed=9)
    win = cyclic_window_residuals(loop, 2, 5)
    assert win.deltas.shape == (4, 2)


def test_cyclic_window_rejects_overlong_window():
    loop = generate_captcha(4, seed=1)
    with pytest.raises(ValueError):
        cyclic_window_residuals(loop, 0, 5)


# ----------------------------------------------------- replay enumeration


def four_hue_loop():
    return make_captcha((0.0, 1.0), (0.25, 1.0), (0.5, 1.0), (0.75, 1.0))


def test_replay_probability_frozen_values():
    loop = four_hue_loop()
    assert replay_match_probability(loop, 2) == 0.5
    assert replay_match_probability(loop, 3) == 0.25
    assert replay_match_probability(loop, 4) == 0.125


def test_replay_probability_frozen_value_longer_loop():
    loop = make_captcha(
        (0.0, 1.0), (0.5, 1.0), (0.25, 1.0), (0.75, 1.0), (0.5, 1.0)
    )
    assert replay_match_probability(loop, 4) == 0.28125


def test_replay_probability_brute_force_oracle():
    # independent re-enumeration: try every cyclic alignment explicitly
    loop = four_hue_loop()
    n = 3
    hits = 0
    for combo in itertools.product(PALETTE_ALPHAS, repeat=n):
        if any(a == b for a, b in itertools.pairwise(combo)):
            continue
        chal = np.array(
            [[wrap_hue(b - a), 0.0] for a, b in itertools.pairwise(combo)]
        )
        for off in range(len(loop)):
            win = cyclic_window_residuals(loop, off, n)
            if match_captcha(win, chal).matched:
                hits += 1
                break
    assert replay_match_probability(loop, n) == hits / 4**n


def test_replay_probability_loop_equal_to_challenge_always_hits_itself():
    loop = four_hue_loop()
    p = replay_match_probability(loop, 4)
    assert p >= 1 / 4**4


def test_replay_probability_monotone_in_threshold():
    loop = generate_captcha(6, seed=21)
    p_tight = replay_match_probability(loop, 3, tau_reg=0.05)
    p_default = replay_match_probability(loop, 3, tau_reg=0.35)
    p_loose = replay_match_probability(loop, 3, tau_reg=5.0)
    assert p_tight <= p_default <= p_loose


def test_replay_probability_huge_threshold_caps_at_nondegenerate_mass():
    # even an accept-everything threshold cannot claim challenges with a
    # repeated adjacent hue: those die at extraction
    loop = four_hue_loop()
    n = 3
    p = replay_match_probability(loop, n, tau_reg=1e9)
    assert math.isclose(p, (3 / 4) ** (n - 1), rel_tol=1e-12)


def test_replay_probability_argument_errors():
    loop = four_hue_loop()
    with pytest.raises(ValueError):
        replay_match_probability(loop, 1)
    with pytest.raises(ValueError):
        replay_match_probability(loop, 5)
