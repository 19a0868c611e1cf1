"""Deterministic synthetic universe.

Everything downstream (embeddings, oracle videos, prompt synthesis, noise
seeds) bottoms out in two bit-exact primitives that double as wire-level
contracts: FNV-1a 64 for hashing text and splitmix64 for number streams.
Any reimplementation in another language must match them bit for bit.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .core import EMBED_LEN, PROMPT_VEC_LEN, EnhancedPrompt, Frame, TextPrompt, Video
from .errors import EmptyPrompt, InvalidCount, InvalidLength

Seed64 = int  # 64-bit unsigned; helpers mask to width

_MASK64 = (1 << 64) - 1

FNV_OFFSET = 0xCBF29CE484222325
FNV_PRIME = 0x100000001B3

SPLITMIX_GAMMA = 0x9E3779B97F4A7C15
_MIX1 = 0xBF58476D1CE4E5B9
_MIX2 = 0x94D049BB133111EB

# Modulation embeddings are initialised from this token's embedding.
MODULATION_TOKEN = "[Mod]"

ENHANCE_SUFFIX = " | enhanced: subject, motion, style"
DIGITAL_STYLE_SUFFIX = "In digital world style"


def hash_text(s: str) -> Seed64:
    """FNV-1a 64-bit over the UTF-8 bytes of `s`."""
    h = FNV_OFFSET
    for byte in s.encode("utf-8"):
        h ^= byte
        h = (h * FNV_PRIME) & _MASK64
    return h


def _splitmix_next(state: int) -> tuple[int, int]:
    state = (state + SPLITMIX_GAMMA) & _MASK64
    z = state
    z = ((z ^ (z >> 30)) * _MIX1) & _MASK64
    z = ((z ^ (z >> 27)) * _MIX2) & _MASK64
    z ^= z >> 31
    return state, z


def rng_u64(seed: Seed64, count: int) -> list[int]:
    """Raw splitmix64 outputs; the float stream and seed derivation build on this."""
    if count < 0:
        raise InvalidCount("count must be >= 0")
    state = seed & _MASK64
    out = []
    for _ in range(count):
        state, z = _splitmix_next(state)
        out.append(z)
    return out


def rng_stream(seed: Seed64, count: int) -> np.ndarray:
    """`count` float64 values in [-1, 1): top 53 bits of each output, affinely mapped."""
    raw = rng_u64(seed, count)
    return np.array([((z >> 11) / 2.0**53) * 2.0 - 1.0 for z in raw], dtype=np.float64)


def derive_seed(base: Seed64, *labels: int | str) -> Seed64:
    """Stable sub-seed: fold labels into `base` via the hash, then one splitmix step."""
    h = base & _MASK64
    for label in labels:
        h ^= hash_text(str(label))
        _, h = _splitmix_next(h)
    return h


# ── text to numbers ───────────────────────────────────────────────────────────

def embed_text(agent_id: int, text: str) -> np.ndarray:
    """Per-agent text embedding: 16 floats, deterministic in (agent_id, text)."""
    if not 1 <= agent_id <= 5:
        raise InvalidCount(f"agent_id must be in 1..5, got {agent_id}")
    seed = hash_text(text) ^ ((agent_id * SPLITMIX_GAMMA) & _MASK64)
    return rng_stream(seed, EMBED_LEN)


def prompt_vector(text: str) -> np.ndarray:
    """8-float numeric stand-in for prompt semantics."""
    if not text.strip():
        raise EmptyPrompt("prompt text is empty")
    return rng_stream(hash_text(text), PROMPT_VEC_LEN)


def enhance_prompt(p: TextPrompt) -> EnhancedPrompt:
    """Annotate the prompt text; the vector stays anchored to the original text."""
    return EnhancedPrompt(text=p.text + ENHANCE_SUFFIX, vector=prompt_vector(p.text))


# ── the hidden oracle renderer ────────────────────────────────────────────────

@dataclass(frozen=True)
class OracleParams:
    prompt_vec: np.ndarray  # length 8, values in [-1, 1]
    digital_style: bool = False


def oracle_render(params: OracleParams, t_frames: int, height: int = 8, width: int = 8) -> Video:
    """Ground-truth video: a Gaussian blob drifting at constant velocity.

    The prompt vector fixes start position (p0, p1), velocity (p2, p3),
    radius (p4) and amplitude (p5); p6 and p7 are reserved. Pixel values are
    2*g - 1 for blob intensity g, optionally overlaid with a +-0.1 parity
    checkerboard in digital style, clamped to [-1, 1].
    """
    if t_frames < 1:
        raise InvalidLength("t_frames must be >= 1")
    p = np.asarray(params.prompt_vec, dtype=np.float64).reshape(-1)
    cx0 = (p[0] + 1.0) / 2.0 * (width - 1)
    cy0 = (p[1] + 1.0) / 2.0 * (height - 1)
    vx = 0.8 * p[2]
    vy = 0.8 * p[3]
    r = 1.0 + 1.5 * (p[4] + 1.0) / 2.0
    a = 0.5 + (p[5] + 1.0) / 4.0

    ys, xs = np.mgrid[0:height, 0:width].astype(np.float64)
    parity = 0.1 * np.where((xs + ys) % 2 == 0, 1.0, -1.0)
    frames = []
    for t in range(t_frames):
        cx = cx0 + vx * t
        cy = cy0 + vy * t
        g = a * np.exp(-((xs - cx) ** 2 + (ys - cy) ** 2) / (2.0 * r * r))
        value = 2.0 * g - 1.0
        if params.digital_style:
            value = np.clip(value + parity, -1.0, 1.0)
        frames.append(Frame.from_array(value.astype(np.float32)))
    return Video(tuple(frames))


def oracle_target(prompt: EnhancedPrompt, t_frames: int, digital_style: bool = False) -> Video:
    """Target video the trainable chain is graded against."""
    return oracle_render(OracleParams(prompt.vector, digital_style), t_frames)


# ── prompt synthesis (deterministic LLM stand-in) ─────────────────────────────

_SIZES = ("tiny", "small", "large", "huge")
_TEXTURES = ("smooth", "fuzzy", "glowing", "dim")
_DIRECTIONS = ("left", "right", "up", "down")
_SPEEDS = ("slowly", "quickly", "steadily", "erratically")

PROMPT_GRAMMAR_SIZE = len(_SIZES) * len(_TEXTURES) * len(_DIRECTIONS) * len(_SPEEDS)


def _pick(value: float, options: tuple[str, ...]) -> str:
    idx = int((value + 1.0) / 2.0 * len(options))
    return options[min(idx, len(options) - 1)]


def synthesize_prompts(seed: Seed64, count: int) -> list[TextPrompt]:
    """`count` distinct prompts from the template grammar, deterministic in seed."""
    if count < 1:
        raise InvalidCount("count must be >= 1")
    if count > PROMPT_GRAMMAR_SIZE:
        raise InvalidCount(f"grammar only has {PROMPT_GRAMMAR_SIZE} distinct prompts")
    state = seed & _MASK64
    seen: set[str] = set()
    prompts: list[TextPrompt] = []
    while len(prompts) < count:
        draws = []
        for _ in range(4):
            state, z = _splitmix_next(state)
            draws.append(((z >> 11) / 2.0**53) * 2.0 - 1.0)
        text = "a {} {} blob moving {} {}".format(
            _pick(draws[0], _SIZES),
            _pick(draws[1], _TEXTURES),
            _pick(draws[2], _DIRECTIONS),
            _pick(draws[3], _SPEEDS),
        )
        if text not in seen:
            seen.add(text)
            prompts.append(TextPrompt(text))
    return prompts
