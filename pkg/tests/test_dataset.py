"""Benchmark generation, on-disk format, split protocol, and loading."""

import json
from pathlib import Path

import numpy as np
import pytest

from lightliveness.captcha import residuals
from lightliveness.dataset import (
    GenConfig,
    LIVE_KIND,
    SPOOF_KINDS,
    generate_dataset,
    load_manifest,
    load_session,
    load_split,
    to_example,
)

RNG = np.random.default_rng

TINY = GenConfig(
    seed=5, sessions_per_part=10, frames_per_session=3,
    height=16, width=16, k_bins=6, attack_loops=2, attack_loop_frames=4,
)


@pytest.fixture(scope="module")
def dataset(tmp_path_factory):
    out = tmp_path_factory.mktemp("ds") / "bench"
    records = generate_dataset(out, TINY)
    return out, records


def tree_bytes(root: Path) -> dict:
    return {
        str(p.relative_to(root)): p.read_bytes()
        for p in sorted(root.rglob("*"))
        if p.is_file()
    }


def test_gen_config_validation():
    TINY.validate()
    with pytest.raises(ValueError):
        GenConfig(sessions_per_part=7).validate()
    with pytest.raises(ValueError):
        GenConfig(sessions_per_part=0).validate()
    with pytest.raises(ValueError):
        GenConfig(frames_per_session=1).validate()
    with pytest.raises(ValueError):
        GenConfig(frames_per_session=6, attack_loop_frames=5).validate()
    with pytest.raises(ValueError):
        GenConfig(curvature_lo=0.0).validate()
    with pytest.raises(ValueError):
        GenConfig(curvature_lo=0.9, curvature_hi=0.3).validate()


def test_parts_hold_equal_live_and_spoof_counts(dataset):
    _, records = dataset
    for part in (1, 2, 3):
        live = [r for r in records if r.part == part and r.label == 1]
        spoof = [r for r in records if r.part == part and r.label == 0]
        assert len(live) == len(spoof) == TINY.sessions_per_part // 2


def test_split_ratios_and_disjointness(dataset):
    _, records = dataset
    for part in (1, 2, 3):
        for label in (0, 1):
            group = [r for r in records if r.part == part and r.label == label]
            counts = {s: sum(r.split == s for r in group) for s in ("train", "dev", "test")}
            assert counts == {"train": 3, "dev": 1, "test": 1}
    ids = [r.session_id for r in records]
    assert len(ids) == len(set(ids))


def test_part_kind_taxonomy(dataset):
    _, records = dataset
    by_part = {p: [r for r in records if r.part == p and r.label == 0] for p in (1, 2, 3)}
    assert {r.kind for r in by_part[1]} == {"print_flat"}
    assert {r.kind for r in by_part[2]} == {"replay_blocked", "replay_unblocked"}
    assert {r.kind for r in by_part[3]} == {"print_curved", "replay_unblocked"}
    for r in records:
        if r.label == 1:
            assert r.kind == LIVE_KIND
        else:
            assert r.kind in SPOOF_KINDS


def test_attack_loops_are_live_full_intensity_cyclic(dataset):
    out, records = dataset
    loops = [r for r in records if r.split == "attack"]
    assert len(loops) == TINY.attack_loops
    for rec in loops:
        assert rec.label == 1
        assert rec.part == 0
        stored = load_session(out, rec)
        params = stored.session.captcha.params
        assert len(params) == TINY.attack_loop_frames
        assert all(p.beta == 1.0 for p in params)
        hues = [p.alpha for p in params]
        for a, b in zip(hues, hues[1:] + hues[:1]):
            assert a != b  # every cyclic window stays a valid sequence


def test_same_seed_gives_byte_identical_trees(tmp_path):
    a = tmp_path / "a"
    b = tmp_path / "b"
    generate_dataset(a, TINY)
    generate_dataset(b, TINY)
    ta, tb = tree_bytes(a), tree_bytes(b)
    assert ta.keys() == tb.keys()
    for k in ta:
        assert ta[k] == tb[k], k


def test_different_seed_changes_frames(tmp_path, dataset):
    out, records = dataset
    other = tmp_path / "other"
    generate_dataset(other, GenConfig(
        seed=6, sessions_per_part=10, frames_per_session=3,
        height=16, width=16, k_bins=6, attack_loops=2, attack_loop_frames=4,
    ))
    rec = records[0]
    w1 = (Path(out) / "sessions" / rec.session_id / "frames.f32").read_bytes()
    w2 = (other / "sessions" / rec.session_id / "frames.f32").read_bytes()
    assert w1 != w2


def test_manifest_roundtrip(dataset):
    out, records = dataset
    loaded = load_manifest(out)
    assert loaded == records


def test_manifest_version_rejected(dataset, tmp_path):
    out, _ = dataset
    manifest = json.loads((Path(out) / "manifest.json").read_text())
    manifest["version"] = 99
    bad = tmp_path / "bad"
    bad.mkdir()
    (bad / "manifest.json").write_text(json.dumps(manifest))
    with pytest.raises(ValueError, match="version"):
        load_manifest(bad)


def test_stored_session_shapes_and_ranges(dataset):
    out, records = dataset
    rec = next(r for r in records if r.kind == LIVE_KIND and r.part == 1)
    stored = load_session(out, rec)
    sess = stored.session
    assert len(sess.frames) == TINY.frames_per_session
    for f in sess.frames:
        assert f.pixels.shape == (16, 16, 3)
        assert f.pixels.dtype == np.float32
        assert f.pixels.min() >= 0.0 and f.pixels.max() <= 1.0
    assert len(sess.captcha) == TINY.frames_per_session
    assert stored.depth_bins.shape == (16, 16)
    assert stored.depth_bins.min() >= 1
    assert stored.depth_bins.max() <= TINY.k_bins
    assert sess.label is True


def test_replay_depth_is_flat_screen(dataset):
    out, records = dataset
    rec = next(r for r in records if r.kind == "replay_blocked")
    stored = load_session(out, rec)
    assert np.all(stored.depth_bins == 1)
    assert stored.session.label is False


def test_frame_payload_size_checked(dataset, tmp_path):
    out, records = dataset
    rec = records[0]
    src = Path(out) / "sessions" / rec.session_id
    broken_root = tmp_path / "trunc"
    dst = broken_root / "sessions" / rec.session_id
    dst.mkdir(parents=True)
    for f in src.iterdir():
        (dst / f.name).write_bytes(f.read_bytes())
    payload = (dst / "frames.f32").read_bytes()
    (dst / "frames.f32").write_bytes(payload[:-8])
    with pytest.raises(ValueError, match="payload"):
        load_session(broken_root, rec)


def test_load_split_filters(dataset):
    out, records = dataset
    part2_test = load_split(out, part=2, split="test")
    want = [r for r in records if r.part == 2 and r.split == "test"]
    assert [s.record.session_id for s in part2_test] == [r.session_id for r in want]
    everything = load_split(out)
    assert len(everything) == len(records)


def test_to_example_bundles_training_targets(dataset):
    out, records = dataset
    live = next(r for r in records if r.kind == LIVE_KIND)
    stored = load_session(out, live)
    ex = to_example(stored)
    m = TINY.frames_per_session - 1
    assert ex.inputs.shape == (m, 4, 16, 16)
    assert ex.inputs.dtype == np.float32
    assert ex.label == 1
    assert ex.reg_active is True
    np.testing.assert_allclose(
        ex.deltas, residuals(stored.session.captcha).deltas, atol=1e-7
    )
    replay = next(r for r in records if r.kind == "replay_unblocked")
    assert to_example(load_session(out, replay)).reg_active is False
    curved = next(r for r in records if r.kind == "print_curved")
    assert to_example(load_session(out, curved)).reg_active is True


def test_generated_files_complete(dataset):
    out, records = dataset
    for rec in records:
        d = Path(out) / "sessions" / rec.session_id
        for name in ("frames.f32", "landmarks.f32", "captcha.txt", "depth.u16"):
            assert (d / name).is_file(), f"{rec.session_id}/{name}"
        raw = (d / "frames.f32").read_bytes()
        assert len(raw) == rec.n_frames * rec.height * rec.width * 3 * 4
        depth = (d / "depth.u16").read_bytes()
        assert len(depth) == rec.height * rec.width * 2
