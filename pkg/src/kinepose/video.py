"""Clip preprocessing: median backgrounds, background-motion scoring and the
paired/unpaired tuple manifest.

Frames are ``(H, W, 3)`` uint8 arrays; a clip stores them stacked as
``(N, H, W, 3)``.
"""

from __future__ import annotations

import enum
import logging
import math
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .formats import read_ppm, write_ppm

log = logging.getLogger(__name__)

MIN_CLIP_SECONDS = 5.0
DEFAULT_WINDOW = 121
DEFAULT_THRESHOLD = 0.02
DEFAULT_GAP_S = 1.0
SCORE_PERCENTILE = 30.0
# largest temporal std a channel in [0, 255] can have
_MAX_STD = 127.5
_MAX_DIST = 255.0 * math.sqrt(3.0)


class ClipClass(str, enum.Enum):
    PAIRED = "paired"
    UNPAIRED = "unpaired"


@dataclass(frozen=True, eq=False)
class Clip:
    frames: np.ndarray
    fps: float
    source_id: str
    frame_paths: tuple[str, ...] | None = None

    def __post_init__(self):
        f = np.asarray(self.frames)
        if f.ndim != 4 or f.shape[3] != 3 or f.dtype != np.uint8:
            raise ValueError(f"clip frames must be (N, H, W, 3) uint8, got {f.shape} {f.dtype}")
        if not self.fps > 0:
            raise ValueError("fps must be positive")
        if self.frame_paths is not None and len(self.frame_paths) != len(f):
            raise ValueError("frame_paths length does not match frame count")
        object.__setattr__(self, "frames", f)

    @property
    def count(self) -> int:
        return len(self.frames)

    @property
    def duration(self) -> float:
        return self.count / self.fps

    def frame_ref(self, i: int) -> str:
        return self.frame_paths[i] if self.frame_paths else f"{self.source_id}#{i}"

    @classmethod
    def from_directory(cls, path, fps: float, source_id: str | None = None) -> "Clip":
        """Load every ``*.ppm`` in ``path`` in name order."""
        path = Path(path)
        files = sorted(path.glob("*.ppm"))
        if not files:
            raise ValueError(f"no .ppm frames in {path}")
        frames = np.stack([read_ppm(f) for f in files])
        return cls(frames, fps, source_id or path.name, tuple(str(f) for f in files))


def _window_bounds(n: int, center: int, window: int) -> tuple[int, int]:
    size = min(window, n)
    start = center - window // 2
    start = max(0, min(start, n - size))
    return start, start + size


def median_background(clip: Clip, center: int, window: int = DEFAULT_WINDOW) -> np.ndarray:
    """Per-pixel, per-channel temporal median around ``center``.

    The window is shifted (not shrunk) to stay inside the clip; for an even
    number of frames the lower median is taken.
    """
    if clip.count == 0:
        raise ValueError("empty clip")
    if window < 3:
        raise ValueError(f"median window must be at least 3 frames, got {window}")
    if not 0 <= center < clip.count:
        raise ValueError(f"center {center} outside clip of {clip.count} frames")
    lo, hi = _window_bounds(clip.count, center, window)
    stack = clip.frames[lo:hi]
    k = (len(stack) - 1) // 2
    return np.partition(stack, k, axis=0)[k]


def _lower_median(frames: np.ndarray) -> np.ndarray:
    k = (len(frames) - 1) // 2
    return np.partition(frames, k, axis=0)[k]


@dataclass(frozen=True)
class MotionStats:
    score: float
    """30th percentile of per-pixel temporal std, normalized to [0, 1]."""
    mean_l2: float
    """Mean per-pixel RGB distance to the median frame, normalized to [0, 1]."""


def motion_statistics(clip: Clip) -> MotionStats:
    """Both background-motion statistics; exactly invariant to frame order."""
    if clip.count < 2:
        raise ValueError("motion scoring needs at least two frames")
    x = clip.frames.astype(np.int64)
    n = clip.count
    s1 = x.sum(axis=0)
    s2 = (x * x).sum(axis=0)
    # n^2 * variance per channel, in exact integer arithmetic
    var_num = (n * s2 - s1 * s1).sum(axis=-1)
    std = np.sqrt(var_num / (3.0 * n * n)) / _MAX_STD
    score = float(np.percentile(std, SCORE_PERCENTILE))

    diff = x - _lower_median(clip.frames).astype(np.int64)
    dist = np.sqrt((diff * diff).sum(axis=-1).astype(float))
    dist.sort(axis=0)
    mean_l2 = float(dist.sum(axis=0).sum() / dist.size / _MAX_DIST)
    return MotionStats(score, mean_l2)


def clip_motion_score(clip: Clip) -> float:
    """Background-motion score in [0, 1].

    A low percentile of the per-pixel temporal standard deviation ignores
    the minority of pixels covered by the moving person and measures how
    much the rest of the frame changes.
    """
    return motion_statistics(clip).score


def classify_clip(score: float, threshold: float = DEFAULT_THRESHOLD) -> ClipClass:
    if not 0.0 < threshold < 1.0:
        raise ValueError(f"threshold must lie in (0, 1), got {threshold}")
    return ClipClass.PAIRED if score < threshold else ClipClass.UNPAIRED


@dataclass
class TupleManifest:
    paired: list[dict] = field(default_factory=list)
    unpaired: list[dict] = field(default_factory=list)
    meta: dict = field(default_factory=dict)

    def to_json(self) -> dict:
        return {"paired": self.paired, "unpaired": self.unpaired, "meta": self.meta}


def _pairs(n: int, gap: int, stride: int):
    for t in range(0, n, stride):
        if t - gap >= 0:
            yield t - gap, t
        elif t + gap < n:
            yield t + gap, t


def build_manifest(
    clips,
    gap_s: float = DEFAULT_GAP_S,
    threshold: float = DEFAULT_THRESHOLD,
    window: int = DEFAULT_WINDOW,
    background_dir=None,
    stride: int | None = None,
) -> TupleManifest:
    """Classify clips and emit source/target tuples.

    For every ``stride``-th target frame ``t`` (default stride: the gap) one
    source ``s`` with ``|t - s| = ceil(gap_s * fps)`` is chosen.  Paired
    clips also get a median background for ``t``; it is written as PPM into
    ``background_dir`` when given, otherwise referenced symbolically.
    Clips shorter than five seconds are skipped with a warning.
    """
    classify_clip(0.0, threshold)
    if gap_s < 0:
        raise ValueError("gap_s must be nonnegative")
    out = TupleManifest(meta={
        "threshold": threshold, "gap_s": gap_s, "window": window, "scores": {}, "skipped": [],
    })
    if background_dir is not None:
        Path(background_dir).mkdir(parents=True, exist_ok=True)

    for clip in clips:
        if clip.duration < MIN_CLIP_SECONDS:
            log.warning("skipping clip %s: %.2f s is shorter than %.0f s",
                        clip.source_id, clip.duration, MIN_CLIP_SECONDS)
            out.meta["skipped"].append(clip.source_id)
            continue
        stats = motion_statistics(clip)
        label = classify_clip(stats.score, threshold)
        out.meta["scores"][clip.source_id] = {
            "score": stats.score, "mean_l2": stats.mean_l2, "class": label.value,
            "frames": clip.count, "fps": clip.fps,
        }
        gap = max(1, math.ceil(gap_s * clip.fps - 1e-9))
        for s, t in _pairs(clip.count, gap, stride or gap):
            entry = {"source": clip.frame_ref(s), "target": clip.frame_ref(t)}
            if label is ClipClass.PAIRED:
                if background_dir is not None:
                    bg_path = Path(background_dir) / f"{clip.source_id}_bg_{t:06d}.ppm"
                    write_ppm(bg_path, median_background(clip, t, window))
                    entry["background"] = str(bg_path)
                else:
                    entry["background"] = f"{clip.source_id}#bg{t}"
                out.paired.append(entry)
            else:
                out.unpaired.append(entry)
    return out
