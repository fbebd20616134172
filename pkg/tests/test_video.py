import json

import numpy as np
import pytest
from videogen import constant_clip, panning_clip, static_clip

from kinepose.formats import read_ppm
from kinepose.video import (
    Clip,
    ClipClass,
    build_manifest,
    classify_clip,
    clip_motion_score,
    median_background,
    motion_statistics,
)


def test_identical_frames_give_that_frame():
    clip = constant_clip()
    assert np.array_equal(median_background(clip, 4, 5), clip.frames[0])


def test_median_of_three():
    frames = np.zeros((3, 1, 1, 3), dtype=np.uint8)
    frames[:, 0, 0, 0] = [10, 200, 12]
    bg = median_background(Clip(frames, 10.0, "x"), 1, 3)
    assert bg[0, 0, 0] == 12


def test_even_window_takes_lower_median():
    frames = np.zeros((4, 1, 1, 3), dtype=np.uint8)
    frames[:, 0, 0, 0] = [40, 10, 30, 20]
    assert median_background(Clip(frames, 10.0, "x"), 2, 4)[0, 0, 0] == 20


def test_window_clamped_at_ends():
    frames = np.zeros((9, 1, 1, 3), dtype=np.uint8)
    frames[:, 0, 0, 0] = [0, 0, 0, 50, 50, 50, 90, 90, 90]
    clip = Clip(frames, 10.0, "x")
    assert median_background(clip, 0, 3)[0, 0, 0] == 0
    assert median_background(clip, 8, 3)[0, 0, 0] == 90
    assert median_background(clip, 4, 3)[0, 0, 0] == 50


def test_median_errors():
    clip = constant_clip()
    with pytest.raises(ValueError):
        median_background(clip, 0, 2)
    with pytest.raises(ValueError):
        Clip(np.zeros((0, 2, 2, 3), np.uint8), 10.0, "e")
        median_background(Clip(np.zeros((0, 2, 2, 3), np.uint8), 10.0, "e"), 0, 3)


def test_median_recovers_static_background():
    clip, bg, occluded = static_clip()
    assert occluded.max() < clip.count / 2
    assert np.array_equal(median_background(clip, 100, 200), bg)


def test_median_permutation_invariant():
    clip, _, _ = static_clip(n=31)
    perm = np.random.default_rng(0).permutation(31)
    shuffled = Clip(clip.frames[perm], clip.fps, "s")
    assert np.array_equal(median_background(clip, 15, 31), median_background(shuffled, 15, 31))


def test_constant_clip_scores_zero():
    stats = motion_statistics(constant_clip())
    assert stats.score == 0.0 and stats.mean_l2 == 0.0


def test_score_needs_two_frames():
    with pytest.raises(ValueError):
        clip_motion_score(constant_clip(n=1))


def test_small_mover_scores_below_panning():
    static, _, _ = static_clip()
    assert clip_motion_score(static) < clip_motion_score(panning_clip())


def test_brightness_ramp_positive():
    frames = np.stack([np.full((6, 6, 3), 10 + 5 * t, np.uint8) for t in range(10)])
    assert clip_motion_score(Clip(frames, 10.0, "ramp")) > 0


def test_score_permutation_invariant():
    clip = panning_clip(n=40)
    perm = np.random.default_rng(3).permutation(40)
    shuffled = Clip(clip.frames[perm], clip.fps, "p")
    assert motion_statistics(clip) == motion_statistics(shuffled)


def test_classify():
    assert classify_clip(0.0, 0.02) is ClipClass.PAIRED
    assert classify_clip(1.0, 0.02) is ClipClass.UNPAIRED
    with pytest.raises(ValueError):
        classify_clip(0.1, 1.0)


def test_classify_constructed_clips():
    static, _, _ = static_clip()
    panning = panning_clip()
    lo, hi = clip_motion_score(static), clip_motion_score(panning)
    thr = (lo + hi) / 2
    assert classify_clip(lo, thr) is ClipClass.PAIRED
    assert classify_clip(hi, thr) is ClipClass.UNPAIRED


def test_manifest_gap_constraint():
    clip, _, _ = static_clip(n=60, fps=10.0)
    m = build_manifest([clip], gap_s=1.0, threshold=0.5, window=21)
    assert m.paired and not m.unpaired
    for e in m.paired:
        s = int(e["source"].split("#")[1])
        t = int(e["target"].split("#")[1])
        assert abs(t - s) >= 10


def test_manifest_dynamic_clip_unpaired():
    m = build_manifest([panning_clip(n=150)], threshold=0.02)
    assert not m.paired and m.unpaired
    assert all(set(e) == {"source", "target"} for e in m.unpaired)


def test_manifest_mixed_counts(tmp_path):
    clips = [
        static_clip(n=125, seed=1, source_id="s1")[0],
        panning_clip(n=125, seed=2, source_id="p1"),
        static_clip(n=150, seed=3, source_id="s2")[0],
        panning_clip(n=150, seed=4, speed=3, source_id="p2"),
    ]
    scores = {c.source_id: clip_motion_score(c) for c in clips}
    thr = (max(scores["s1"], scores["s2"]) + min(scores["p1"], scores["p2"])) / 2
    m = build_manifest(clips, gap_s=1.0, threshold=thr, window=31, background_dir=tmp_path)
    classes = {k: v["class"] for k, v in m.meta["scores"].items()}
    assert classes == {"s1": "paired", "p1": "unpaired", "s2": "paired", "p2": "unpaired"}
    # one pair per 25-frame stride
    assert len(m.paired) == 5 + 6
    assert len(m.unpaired) == 5 + 6
    for e in m.paired:
        bg = read_ppm(e["background"])
        assert bg.shape == (40, 48, 3)


def test_short_clip_skipped(caplog):
    short = static_clip(n=100, fps=25.0)[0]
    m = build_manifest([short], threshold=0.5)
    assert m.meta["skipped"] == ["static"]
    assert not m.paired and not m.unpaired
    assert "shorter" in caplog.text


def test_manifest_deterministic():
    clips = [static_clip(n=130)[0], panning_clip(n=130)]
    a = json.dumps(build_manifest(clips, threshold=0.05).to_json())
    b = json.dumps(build_manifest(clips, threshold=0.05).to_json())
    assert a == b
