"""The five agent roles as tiny differentiable generators.

Each trainable role is a single tanh layer over a flattened 8x8 frame and/or
a 32-wide augmented embedding (16 text + 16 modulation). Forward passes are
pure; every role also exposes a vector-Jacobian product so the training loop
can chain exact reverse-mode gradients through the whole agent pipeline.

Compute dtype follows the parameter tensors (float32 by default, float64 for
gradient checking).
"""

from __future__ import annotations

from dataclasses import dataclass
from enum import IntEnum
from typing import Callable

import numpy as np

from .core import Frame, Video
from .errors import InvalidLength, NoParams, RoleMismatch, ShapeMismatch
from .toyworld import Seed64, derive_seed, rng_stream

FRAME_PIXELS = 64  # 8x8 flattened
AUG_LEN = 32  # 16 text embedding + 16 modulation embedding


class AgentId(IntEnum):
    PROMPT_ENHANCE = 1
    TEXT_TO_IMAGE = 2
    IMAGE_TO_IMAGE = 3
    IMAGE_TO_VIDEO = 4
    VIDEO_CONNECT = 5


@dataclass(frozen=True)
class TensorSpec:
    name: str
    shape: tuple[int, ...]
    fan_in: int


ROLE_SPECS: dict[AgentId, tuple[TensorSpec, ...]] = {
    AgentId.TEXT_TO_IMAGE: (
        TensorSpec("W2", (64, 32), 32),
        TensorSpec("b2", (64,), 32),
    ),
    AgentId.IMAGE_TO_IMAGE: (
        TensorSpec("U3", (64, 64), 64),
        TensorSpec("V3", (64, 32), 32),
        TensorSpec("b3", (64,), 64),
    ),
    AgentId.IMAGE_TO_VIDEO: (
        TensorSpec("U4", (64, 64), 64),
        TensorSpec("V4", (64, 32), 32),
        TensorSpec("b4", (64,), 64),
    ),
    AgentId.VIDEO_CONNECT: (
        TensorSpec("Ua", (64, 64), 64),
        TensorSpec("Ub", (64, 64), 64),
        TensorSpec("V5", (64, 32), 32),
        TensorSpec("c5", (64,), 1),
        TensorSpec("b5", (64,), 64),
    ),
}


@dataclass
class AgentParams:
    """Named parameter tensors of one agent; the trainable state."""

    role: AgentId
    tensors: dict[str, np.ndarray]

    def __post_init__(self):
        specs = ROLE_SPECS.get(self.role)
        if specs is None:
            raise NoParams(f"{self.role.name} has no parameter tensors")
        expected = {s.name: s.shape for s in specs}
        got = {k: tuple(v.shape) for k, v in self.tensors.items()}
        if got != expected:
            raise ShapeMismatch(f"expected tensors {expected}, got {got}")
        for v in self.tensors.values():
            if not np.all(np.isfinite(v)):
                raise ShapeMismatch("parameter tensors must be finite")

    def copy(self) -> "AgentParams":
        return AgentParams(self.role, {k: v.copy() for k, v in self.tensors.items()})

    def astype(self, dtype) -> "AgentParams":
        return AgentParams(self.role, {k: v.astype(dtype) for k, v in self.tensors.items()})

    @property
    def dtype(self):
        return next(iter(self.tensors.values())).dtype


def init_params(role: AgentId, seed: Seed64, dtype=np.float32) -> AgentParams:
    """Fill each tensor with uniform [-1, 1) noise scaled by 1/sqrt(fan_in)."""
    if role not in ROLE_SPECS:
        raise NoParams(f"{AgentId(role).name} has no parameter tensors")
    tensors = {}
    for spec in ROLE_SPECS[role]:
        size = int(np.prod(spec.shape))
        values = rng_stream(derive_seed(seed, "init", int(role), spec.name), size)
        scale = 1.0 / np.sqrt(spec.fan_in)
        tensors[spec.name] = (values * scale).reshape(spec.shape).astype(dtype)
    return AgentParams(AgentId(role), tensors)


def make_augmented(text_embedding: np.ndarray, modulation: np.ndarray, dtype=None) -> np.ndarray:
    """Concatenate [e_i ; z_i] into the 32-wide agent input."""
    e = np.asarray(text_embedding).reshape(-1)
    z = np.asarray(modulation).reshape(-1)
    if e.size != 16 or z.size != 16:
        raise ShapeMismatch("text and modulation embeddings must each have length 16")
    aug = np.concatenate([e, z])
    return aug.astype(dtype if dtype is not None else z.dtype)


def _require_role(params: AgentParams, role: AgentId):
    if params.role != role:
        raise RoleMismatch(f"expected {role.name} params, got {params.role.name}")


def _as_dtype(x: np.ndarray, dtype) -> np.ndarray:
    return np.asarray(x, dtype=dtype).reshape(-1)


# ── raw array kernels (forward + VJP) ─────────────────────────────────────────
#
# tanh layer rule used throughout: with out = tanh(pre), an upstream gradient g
# becomes d = g * (1 - out^2) on the pre-activation; weight gradients are outer
# products of d with the corresponding input.

def t2i_run(params: AgentParams, aug: np.ndarray) -> np.ndarray:
    _require_role(params, AgentId.TEXT_TO_IMAGE)
    t = params.tensors
    aug = _as_dtype(aug, params.dtype)
    return np.tanh(t["W2"] @ aug + t["b2"])


def t2i_vjp(params: AgentParams, aug: np.ndarray, out: np.ndarray, g_out: np.ndarray):
    t = params.tensors
    aug = _as_dtype(aug, params.dtype)
    d = g_out * (1.0 - out * out)
    grads = {"W2": np.outer(d, aug), "b2": d.copy()}
    return grads, t["W2"].T @ d


def i2i_run(params: AgentParams, frame: np.ndarray, aug: np.ndarray) -> np.ndarray:
    _require_role(params, AgentId.IMAGE_TO_IMAGE)
    t = params.tensors
    frame = _as_dtype(frame, params.dtype)
    aug = _as_dtype(aug, params.dtype)
    return np.tanh(t["U3"] @ frame + t["V3"] @ aug + t["b3"])


def i2i_vjp(params: AgentParams, frame: np.ndarray, aug: np.ndarray,
            out: np.ndarray, g_out: np.ndarray):
    t = params.tensors
    frame = _as_dtype(frame, params.dtype)
    aug = _as_dtype(aug, params.dtype)
    d = g_out * (1.0 - out * out)
    grads = {"U3": np.outer(d, frame), "V3": np.outer(d, aug), "b3": d.copy()}
    return grads, t["U3"].T @ d, t["V3"].T @ d


def i2v_run(params: AgentParams, f0: np.ndarray, aug: np.ndarray, t_frames: int) -> np.ndarray:
    """(t_frames, 64) rollout; row 0 is f0 verbatim."""
    _require_role(params, AgentId.IMAGE_TO_VIDEO)
    if t_frames < 1:
        raise InvalidLength("t_frames must be >= 1")
    t = params.tensors
    f = _as_dtype(f0, params.dtype)
    aug = _as_dtype(aug, params.dtype)
    drive = t["V4"] @ aug + t["b4"]
    outs = np.empty((t_frames, FRAME_PIXELS), dtype=params.dtype)
    outs[0] = f
    for step in range(1, t_frames):
        f = np.tanh(t["U4"] @ f + drive)
        outs[step] = f
    return outs


def i2v_vjp(params: AgentParams, f0: np.ndarray, aug: np.ndarray,
            outs: np.ndarray, g_outs: np.ndarray):
    """Reverse-time accumulation through the frame recurrence."""
    t = params.tensors
    aug = _as_dtype(aug, params.dtype)
    dU = np.zeros_like(t["U4"])
    dV = np.zeros_like(t["V4"])
    db = np.zeros_like(t["b4"])
    d_aug = np.zeros(AUG_LEN, dtype=params.dtype)
    carry = g_outs[-1].astype(params.dtype, copy=True)
    for step in range(outs.shape[0] - 1, 0, -1):
        d = carry * (1.0 - outs[step] * outs[step])
        dU += np.outer(d, outs[step - 1])
        dV += np.outer(d, aug)
        db += d
        d_aug += t["V4"].T @ d
        carry = t["U4"].T @ d + g_outs[step - 1]
    # carry now holds dL/d f0, including the verbatim pass-through term
    return {"U4": dU, "V4": dV, "b4": db}, carry, d_aug


def connect_run(params: AgentParams, f_a: np.ndarray, f_b: np.ndarray,
                aug: np.ndarray, m_frames: int) -> np.ndarray:
    """(m_frames, 64) transition frames, phase-indexed m/(M+1)."""
    _require_role(params, AgentId.VIDEO_CONNECT)
    if m_frames < 1:
        raise InvalidLength("m_frames must be >= 1")
    t = params.tensors
    f_a = _as_dtype(f_a, params.dtype)
    f_b = _as_dtype(f_b, params.dtype)
    aug = _as_dtype(aug, params.dtype)
    base = t["Ua"] @ f_a + t["Ub"] @ f_b + t["V5"] @ aug + t["b5"]
    outs = np.empty((m_frames, FRAME_PIXELS), dtype=params.dtype)
    for m in range(1, m_frames + 1):
        phase = params.dtype.type(m) / params.dtype.type(m_frames + 1)
        outs[m - 1] = np.tanh(base + t["c5"] * phase)
    return outs


def connect_vjp(params: AgentParams, f_a: np.ndarray, f_b: np.ndarray, aug: np.ndarray,
                outs: np.ndarray, g_outs: np.ndarray):
    t = params.tensors
    f_a = _as_dtype(f_a, params.dtype)
    f_b = _as_dtype(f_b, params.dtype)
    aug = _as_dtype(aug, params.dtype)
    m_frames = outs.shape[0]
    grads = {name: np.zeros_like(t[name]) for name in ("Ua", "Ub", "V5", "c5", "b5")}
    d_fa = np.zeros(FRAME_PIXELS, dtype=params.dtype)
    d_fb = np.zeros(FRAME_PIXELS, dtype=params.dtype)
    d_aug = np.zeros(AUG_LEN, dtype=params.dtype)
    for m in range(1, m_frames + 1):
        phase = params.dtype.type(m) / params.dtype.type(m_frames + 1)
        out = outs[m - 1]
        d = g_outs[m - 1] * (1.0 - out * out)
        grads["Ua"] += np.outer(d, f_a)
        grads["Ub"] += np.outer(d, f_b)
        grads["V5"] += np.outer(d, aug)
        grads["c5"] += d * phase
        grads["b5"] += d
        d_fa += t["Ua"].T @ d
        d_fb += t["Ub"].T @ d
        d_aug += t["V5"].T @ d
    return grads, d_fa, d_fb, d_aug


# ── domain-typed wrappers ─────────────────────────────────────────────────────

def frame_from_flat(flat: np.ndarray) -> Frame:
    return Frame(8, 8, flat.astype(np.float32))


def t2i_forward(params: AgentParams, aug: np.ndarray) -> Frame:
    return frame_from_flat(t2i_run(params, aug))


def i2i_forward(params: AgentParams, f: Frame, aug: np.ndarray) -> Frame:
    return frame_from_flat(i2i_run(params, f.pixels, aug))


def i2v_forward(params: AgentParams, f0: Frame, aug: np.ndarray, t_frames: int) -> Video:
    outs = i2v_run(params, f0.pixels, aug, t_frames)
    frames = [f0] + [frame_from_flat(row) for row in outs[1:]]
    return Video(tuple(frames))


def connect_forward(params: AgentParams, f_a: Frame, f_b: Frame,
                    aug: np.ndarray, m_frames: int) -> Video:
    outs = connect_run(params, f_a.pixels, f_b.pixels, aug, m_frames)
    return Video(tuple(frame_from_flat(row) for row in outs))


def forward_jacobians(role: AgentId, params: AgentParams, inputs: dict) -> tuple[np.ndarray, Callable]:
    """Run one agent and return (output, vjp).

    `inputs` carries the role's arguments as flat arrays: always `aug`;
    `frame` for i2i/i2v; `frame_a`/`frame_b` for connect; `t_frames` or
    `m_frames` where a length is needed. The returned vjp maps an upstream
    gradient on the output to a dict with `tensors`, `aug`, and per-input
    frame gradients.
    """
    aug = inputs["aug"]
    if role == AgentId.TEXT_TO_IMAGE:
        out = t2i_run(params, aug)

        def vjp(g_out):
            grads, d_aug = t2i_vjp(params, aug, out, g_out)
            return {"tensors": grads, "aug": d_aug}

        return out, vjp
    if role == AgentId.IMAGE_TO_IMAGE:
        frame = inputs["frame"]
        out = i2i_run(params, frame, aug)

        def vjp(g_out):
            grads, d_frame, d_aug = i2i_vjp(params, frame, aug, out, g_out)
            return {"tensors": grads, "frame": d_frame, "aug": d_aug}

        return out, vjp
    if role == AgentId.IMAGE_TO_VIDEO:
        frame = inputs["frame"]
        outs = i2v_run(params, frame, aug, inputs["t_frames"])

        def vjp(g_outs):
            grads, d_frame, d_aug = i2v_vjp(params, frame, aug, outs, g_outs)
            return {"tensors": grads, "frame": d_frame, "aug": d_aug}

        return outs, vjp
    if role == AgentId.VIDEO_CONNECT:
        f_a, f_b = inputs["frame_a"], inputs["frame_b"]
        outs = connect_run(params, f_a, f_b, aug, inputs["m_frames"])

        def vjp(g_outs):
            grads, d_fa, d_fb, d_aug = connect_vjp(params, f_a, f_b, aug, outs, g_outs)
            return {"tensors": grads, "frame_a": d_fa, "frame_b": d_fb, "aug": d_aug}

        return outs, vjp
    raise RoleMismatch(f"{role.name} has no forward pass")
