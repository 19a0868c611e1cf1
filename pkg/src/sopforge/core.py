"""Domain value types shared by every other module.

A Frame is an 8x8 (by default) grayscale image with intensities in [-1, 1],
stored row-major as float32. A Video is a nonempty, dimension-homogeneous
sequence of Frames. Both are immutable value types: all pixel buffers are
read-only numpy arrays, and equality is bit-exact.

Prompt vectors and text embeddings are plain float64 numpy arrays; the
float32 world starts where trainable state does (see agents / selfmod).
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .errors import DimensionMismatch, EmptyPrompt, EmptyVideo

DEFAULT_HEIGHT = 8
DEFAULT_WIDTH = 8
PROMPT_VEC_LEN = 8
EMBED_LEN = 16


def _readonly(a: np.ndarray) -> np.ndarray:
    a = np.ascontiguousarray(a)
    a.setflags(write=False)
    return a


@dataclass(frozen=True, eq=False)
class Frame:
    """One grayscale image; `pixels` is row-major, length height*width."""

    height: int
    width: int
    pixels: np.ndarray  # float32, read-only

    def __post_init__(self):
        px = np.asarray(self.pixels, dtype=np.float32).reshape(-1)
        if px.size != self.height * self.width:
            raise DimensionMismatch(
                f"expected {self.height * self.width} pixels, got {px.size}"
            )
        if not np.all(np.isfinite(px)):
            raise DimensionMismatch("pixels must be finite")
        if px.size and (px.min() < -1.0 or px.max() > 1.0):
            raise DimensionMismatch("pixels must lie in [-1, 1]")
        object.__setattr__(self, "pixels", _readonly(px))

    @classmethod
    def from_array(cls, arr: np.ndarray) -> "Frame":
        """Build a frame from a 2-D (H, W) array."""
        arr = np.asarray(arr)
        if arr.ndim != 2:
            raise DimensionMismatch(f"expected 2-D array, got shape {arr.shape}")
        return cls(height=arr.shape[0], width=arr.shape[1], pixels=arr.reshape(-1))

    @classmethod
    def zeros(cls, height: int = DEFAULT_HEIGHT, width: int = DEFAULT_WIDTH) -> "Frame":
        return cls(height, width, np.zeros(height * width, dtype=np.float32))

    def as_2d(self) -> np.ndarray:
        return self.pixels.reshape(self.height, self.width)

    def __eq__(self, other: object) -> bool:
        if not isinstance(other, Frame):
            return NotImplemented
        return (
            self.height == other.height
            and self.width == other.width
            and self.pixels.tobytes() == other.pixels.tobytes()
        )


@dataclass(frozen=True, eq=False)
class Video:
    """Ordered, nonempty sequence of same-sized frames."""

    frames: tuple[Frame, ...]

    def __post_init__(self):
        frames = tuple(self.frames)
        if not frames:
            raise EmptyVideo("a video needs at least one frame")
        h, w = frames[0].height, frames[0].width
        for f in frames[1:]:
            if f.height != h or f.width != w:
                raise DimensionMismatch(
                    f"frame {f.height}x{f.width} differs from {h}x{w}"
                )
        object.__setattr__(self, "frames", frames)

    @property
    def t(self) -> int:
        return len(self.frames)

    @property
    def height(self) -> int:
        return self.frames[0].height

    @property
    def width(self) -> int:
        return self.frames[0].width

    def to_array(self) -> np.ndarray:
        """(T, H, W) float32 copy."""
        return np.stack([f.as_2d() for f in self.frames])

    @classmethod
    def from_array(cls, arr: np.ndarray) -> "Video":
        arr = np.asarray(arr)
        if arr.ndim != 3:
            raise DimensionMismatch(f"expected 3-D array, got shape {arr.shape}")
        return cls(tuple(Frame.from_array(a) for a in arr))

    def __eq__(self, other: object) -> bool:
        if not isinstance(other, Video):
            return NotImplemented
        return self.frames == other.frames


@dataclass(frozen=True)
class TextPrompt:
    """User-supplied prompt text; nonempty after trimming."""

    text: str

    def __post_init__(self):
        if not self.text.strip():
            raise EmptyPrompt("prompt text is empty")


@dataclass(frozen=True, eq=False)
class EnhancedPrompt:
    """Annotated prompt plus its numeric stand-in vector (length 8, float64)."""

    text: str
    vector: np.ndarray

    def __post_init__(self):
        vec = np.asarray(self.vector, dtype=np.float64).reshape(-1)
        if vec.size != PROMPT_VEC_LEN:
            raise DimensionMismatch(f"prompt vector must have length {PROMPT_VEC_LEN}")
        if np.any(np.abs(vec) > 1.0) or not np.all(np.isfinite(vec)):
            raise DimensionMismatch("prompt vector values must lie in [-1, 1]")
        object.__setattr__(self, "vector", _readonly(vec))

    def __eq__(self, other: object) -> bool:
        if not isinstance(other, EnhancedPrompt):
            return NotImplemented
        return self.text == other.text and np.array_equal(self.vector, other.vector)


# ── elementary operations ─────────────────────────────────────────────────────

def video_from_frames(frames: list[Frame]) -> Video:
    """Wrap frames in order; rejects empty lists and mixed dimensions."""
    if not frames:
        raise EmptyVideo("cannot build a video from zero frames")
    return Video(tuple(frames))


def last_frame(v: Video) -> Frame:
    return v.frames[-1]


def first_frame(v: Video) -> Frame:
    return v.frames[0]


def concat_videos(a: Video, b: Video) -> Video:
    if a.height != b.height or a.width != b.width:
        raise DimensionMismatch(
            f"cannot concat {a.height}x{a.width} with {b.height}x{b.width}"
        )
    return Video(a.frames + b.frames)


def frame_l2_distance(a: Frame, b: Frame) -> float:
    """Euclidean distance between two frames of equal dimensions."""
    if a.height != b.height or a.width != b.width:
        raise DimensionMismatch("frames differ in shape")
    diff = a.pixels.astype(np.float64) - b.pixels.astype(np.float64)
    return float(np.sqrt(np.dot(diff, diff)))
