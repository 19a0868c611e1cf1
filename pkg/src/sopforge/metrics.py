"""Self-defined video metrics over a fixed deterministic feature extractor.

One seeded random projection stands in for every learned encoder, and it is
used on both sides of every cosine: metric formulas and identities carry
over exactly even though absolute values are not comparable to any
model-based scorer.
"""

from __future__ import annotations

import numpy as np

from .core import Frame, Video
from .errors import DimensionMismatch, LengthMismatch, ZeroVector
from .toyworld import prompt_vector, rng_stream

FEATURE_LEN = 16
_PROJECTION_SEED = 0xFEA7

# Fixed 16x32 projection shared by video features and the text/frame mix.
_PROJECTION = rng_stream(_PROJECTION_SEED, FEATURE_LEN * 32).reshape(FEATURE_LEN, 32)


def cosine(u: np.ndarray, v: np.ndarray) -> float:
    u = np.asarray(u, dtype=np.float64).reshape(-1)
    v = np.asarray(v, dtype=np.float64).reshape(-1)
    if u.size != v.size:
        raise LengthMismatch(f"vector lengths differ: {u.size} vs {v.size}")
    nu = np.linalg.norm(u)
    nv = np.linalg.norm(v)
    if nu == 0.0 or nv == 0.0:
        raise ZeroVector("cosine of a zero vector is undefined")
    return float(np.dot(u, v) / (nu * nv))


def _pool_2x2(img: np.ndarray) -> np.ndarray:
    """8x8 -> 4x4 block means, flattened to 16."""
    return img.reshape(4, 2, 4, 2).mean(axis=(1, 3)).reshape(-1)


def video_feature(v: Video) -> np.ndarray:
    """16-float video descriptor: pooled mean frame + pooled mean |temporal diff|,
    concatenated and passed through the fixed projection."""
    if v.height != 8 or v.width != 8:
        raise DimensionMismatch("video features are defined for 8x8 frames")
    arr = v.to_array().astype(np.float64)
    mean_frame = _pool_2x2(arr.mean(axis=0))
    if v.t > 1:
        diff = np.abs(np.diff(arr, axis=0)).mean(axis=0)
    else:
        diff = np.zeros((8, 8))
    pooled = np.concatenate([mean_frame, _pool_2x2(diff)])
    return _PROJECTION @ pooled


def tcon(v_in: Video, v_out: Video) -> float:
    """Cosine similarity of the two videos' features."""
    return cosine(video_feature(v_in), video_feature(v_out))


def tmean(prev: Video, mid: Video, next_: Video) -> float:
    """Average of mid's feature similarity to its two neighbours."""
    return (tcon(mid, prev) + tcon(mid, next_)) / 2.0


def video_ti(prompt_text: str, input_frame: Frame | None, generated: Video) -> float:
    """Instruction-adherence proxy: cosine between the projected
    [prompt vector ; pooled input frame] mix and the generated video's feature."""
    pv = prompt_vector(prompt_text)
    mix = np.zeros(32)
    mix[: pv.size] = pv
    if input_frame is not None:
        if input_frame.height != 8 or input_frame.width != 8:
            raise DimensionMismatch("input frame must be 8x8")
        mix[16:] = _pool_2x2(input_frame.as_2d().astype(np.float64))
    embed_mix = _PROJECTION @ mix
    return cosine(embed_mix, video_feature(generated))


def dynamic_degree(v: Video) -> float:
    """Mean absolute frame-to-frame change; 0 for a single frame."""
    if v.t == 1:
        return 0.0
    arr = v.to_array().astype(np.float64)
    return float(np.abs(np.diff(arr, axis=0)).mean())


def motion_smoothness(v: Video) -> float:
    """1 minus the mean |second temporal difference| / 4; in [0, 1]."""
    if v.t <= 2:
        return 1.0
    arr = v.to_array().astype(np.float64)
    second = arr[2:] - 2.0 * arr[1:-1] + arr[:-2]
    return float(1.0 - np.abs(second).mean() / 4.0)


def metric_report(
    generated: Video,
    prompt_text: str | None = None,
    input_frame: Frame | None = None,
    reference: Video | None = None,
    prev: Video | None = None,
    next_: Video | None = None,
) -> dict:
    """The standard metrics object; entries are None when inputs are missing."""
    return {
        "video_ti": video_ti(prompt_text, input_frame, generated) if prompt_text else None,
        "tcon": tcon(reference, generated) if reference is not None else None,
        "tmean": tmean(prev, generated, next_) if prev is not None and next_ is not None else None,
        "dynamic_degree": dynamic_degree(generated),
        "motion_smoothness": motion_smoothness(generated),
    }
