"""Video preprocessing: frame-rate resampling, crop/pad, resolution
reduction, and clip extraction.

Every operation is pure per video and appends a step to the provenance
chain. Pixel storage stays uint8 between steps; fractional values round
half-to-even. Clips are float32 scaled to [0, 1].
"""
from __future__ import annotations

from collections import Counter
from dataclasses import dataclass, field

import numpy as np

from ..errors import ConfigError, DataError
from .evid import RawVideo

TARGET_FPS = 30.0
CLIP_FRAMES = 60
MIN_DURATION_S = 1.0


def _store_u8(frames: np.ndarray) -> np.ndarray:
    return np.clip(np.rint(frames), 0, 255).astype(np.uint8)


def resample_fps(video: RawVideo, target: float = TARGET_FPS) -> RawVideo:
    """Linear time interpolation onto a uniform `target` fps grid.

    Output frame count is floor((T-1) * target / fps) + 1; output frame i
    blends the two bracketing input frames at time i / target, and the
    first frame is preserved exactly.
    """
    if target <= 0:
        raise ConfigError("target fps must be positive")
    if video.fps == target:
        return video.derive(video.frames.copy(), f"resample:identity@{target:g}")
    t = video.frames.shape[0]
    if t < 2:
        raise DataError("cannot resample a single-frame video to a new rate")
    n_out = int(np.floor((t - 1) * target / video.fps)) + 1
    # source position of output frame i, in input-frame units
    pos = np.arange(n_out) * (video.fps / target)
    lo = np.floor(pos).astype(np.int64)
    lo = np.minimum(lo, t - 1)
    hi = np.minimum(lo + 1, t - 1)
    frac = (pos - lo).astype(np.float64)
    src = video.frames.astype(np.float64)
    blend = src[lo] * (1.0 - frac).reshape(-1, *([1] * (src.ndim - 1))) \
        + src[hi] * frac.reshape(-1, *([1] * (src.ndim - 1)))
    blend[0] = src[0]
    return video.derive(_store_u8(blend), f"resample:{video.fps:g}->{target:g}",
                        fps=float(target))


def _split(diff: int) -> tuple[int, int]:
    """Centered split of a remainder: floor before, ceil after."""
    return diff // 2, diff - diff // 2


def crop_pad(video: RawVideo, target_h: int, target_w: int) -> RawVideo:
    """Center-crop and/or zero-pad each frame to (target_h, target_w)."""
    if target_h < 1 or target_w < 1:
        raise ConfigError("crop/pad targets must be >= 1")
    frames = video.frames
    t = frames.shape[0]
    h, w = frames.shape[1], frames.shape[2]
    if (h, w) == (target_h, target_w):
        return video.derive(frames.copy(), f"crop_pad:identity@{target_h}x{target_w}")
    out_shape = (t, target_h, target_w) + frames.shape[3:]
    out = np.zeros(out_shape, dtype=np.uint8)

    def spans(src: int, dst: int):
        if src >= dst:
            off, _ = _split(src - dst)
            return slice(off, off + dst), slice(0, dst)
        off, _ = _split(dst - src)
        return slice(0, src), slice(off, off + src)

    src_h, dst_h = spans(h, target_h)
    src_w, dst_w = spans(w, target_w)
    out[:, dst_h, dst_w] = frames[:, src_h, src_w]
    return video.derive(out, f"crop_pad:{h}x{w}->{target_h}x{target_w}")


def reduce_resolution(video: RawVideo, factor: int) -> RawVideo:
    """Non-overlapping factor x factor block averaging; trailing remainder
    rows/columns are dropped (floor output dims)."""
    if factor not in (1, 2, 3, 4):
        raise ConfigError(f"reduction factor must be 1..4, got {factor}")
    if factor == 1:
        return video.derive(video.frames.copy(), "reduce:identity")
    frames = video.frames
    h, w = frames.shape[1], frames.shape[2]
    if h < factor or w < factor:
        raise DataError(f"frame {h}x{w} smaller than reduction factor {factor}")
    nh, nw = h // factor, w // factor
    trimmed = frames[:, :nh * factor, :nw * factor].astype(np.float64)
    t = frames.shape[0]
    rest = frames.shape[3:]
    blocks = trimmed.reshape((t, nh, factor, nw, factor) + rest)
    means = blocks.mean(axis=(2, 4))
    return video.derive(_store_u8(means), f"reduce:x{factor}")


@dataclass
class Clip:
    """Network-ready tensor (T, H, W, 1) in [0, 1] with its provenance."""

    tensor: np.ndarray
    source_id: str
    provenance: tuple = field(default_factory=tuple)

    @property
    def shape(self):
        return self.tensor.shape


def to_clip(video: RawVideo, frames: int = CLIP_FRAMES) -> Clip:
    """First `frames` frames of a 30 fps video, scaled to [0, 1].

    Shorter videos repeat their final frame; anything past `frames` is
    discarded. Requires a prior resample to the canonical rate and at
    least one second of footage.
    """
    if video.fps != TARGET_FPS:
        raise DataError(f"clip extraction expects {TARGET_FPS:g} fps input, got {video.fps:g}")
    if video.duration < MIN_DURATION_S:
        raise DataError(f"video lasts {video.duration:.3f} s, under the 1 s minimum")
    if video.channels != 1:
        raise DataError("clips are single-channel; got a color video")
    t = video.frames.shape[0]
    take = min(t, frames)
    stack = video.frames[:take]
    if take < frames:
        pad = np.repeat(stack[-1:], frames - take, axis=0)
        stack = np.concatenate([stack, pad], axis=0)
        step = f"clip:taken={take},padded={frames - take}"
    elif t > frames:
        step = f"clip:taken={frames},discarded={t - frames}"
    else:
        step = f"clip:taken={frames}"
    tensor = (stack.astype(np.float32) / 255.0)[..., np.newaxis]
    return Clip(tensor=tensor, source_id=video.acquisition_id,
                provenance=video.provenance + (step,))


def modal_dims(videos) -> tuple[int, int]:
    """The exact mode of (H, W) pairs; ties break toward the larger area."""
    counts = Counter((v.frames.shape[1], v.frames.shape[2]) for v in videos)
    if not counts:
        raise DataError("no videos to take modal dimensions from")
    best = max(counts.items(), key=lambda kv: (kv[1], kv[0][0] * kv[0][1]))
    return best[0]


def preprocess_video(video: RawVideo, target_h: int, target_w: int,
                     factor: int = 1, frames: int = CLIP_FRAMES) -> Clip:
    """The canonical chain: resample -> crop/pad -> reduce -> clip."""
    v = resample_fps(video, TARGET_FPS)
    v = crop_pad(v, target_h, target_w)
    v = reduce_resolution(v, factor)
    return to_clip(v, frames=frames)
