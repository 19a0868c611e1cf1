"""Candidate-ranking judges and the criteria catalog.

Two deterministic built-ins stand in for the two multimodal LLM judges:
one ranks by distance to the hidden oracle target, the other by a quality
proxy built from the motion metrics. They disagree on some candidate sets
by design, which is what keeps the human-screening path alive. A third
kind forwards the ranking request to an external HTTP judge.
"""

from __future__ import annotations

import base64
from dataclasses import dataclass
from enum import Enum

import requests

from .core import Video
from .errors import (
    CountMismatch,
    DimensionMismatch,
    JudgeUnavailable,
    MalformedRanking,
    TooFewCandidates,
)
from .metrics import dynamic_degree, motion_smoothness
from .selfmod import loss_mse
from .toyworld import Seed64

EXTERNAL_TIMEOUT_S = 10.0

# Fixed catalog of ranking instructions, ids 1..10.
_CRITERIA_TEXTS = (
    "Evaluate the visual clarity and resolution, ranking videos based on image "
    "sharpness, smoothness of transitions, and noise levels.",
    "Assess object consistency and scene stability across frames, ranking videos "
    "on object motion and interactions.",
    "Examine the temporal coherence, identifying the best frame-to-frame continuity.",
    "Evaluate the narrative coherence or logical progression, ranking based on "
    "storytelling consistency.",
    "Assess color grading and lighting consistency, determining the best video "
    "based on smooth lighting transitions and uniform color.",
    "Evaluate the realism of objects, background textures, and scene complexity, "
    "ranking videos from most realistic to least.",
    "Analyze content relevance to the task, ranking videos based on theme "
    "alignment and task appropriateness.",
    "Compare the aesthetic quality, focusing on artistic composition, balance, "
    "and overall visual appeal.",
    "Evaluate noise and artifact levels, identifying the video with the cleanest "
    "and smoothest output.",
    "Examine frame rate consistency and smoothness of motion, ranking videos "
    "based on natural motion without lag or stuttering.",
)


@dataclass(frozen=True)
class Criterion:
    id: int
    text: str


def criteria_catalog() -> list[Criterion]:
    return [Criterion(i + 1, text) for i, text in enumerate(_CRITERIA_TEXTS)]


def criterion_by_id(criterion_id: int) -> Criterion:
    catalog = criteria_catalog()
    if not 1 <= criterion_id <= len(catalog):
        raise CountMismatch(f"criterion id must be in 1..{len(catalog)}")
    return catalog[criterion_id - 1]


@dataclass(frozen=True)
class Ranking:
    """Permutation of candidate indices, best first."""

    order: tuple[int, ...]

    def __post_init__(self):
        order = tuple(int(i) for i in self.order)
        if sorted(order) != list(range(len(order))):
            raise MalformedRanking(f"not a permutation of 0..{len(order) - 1}: {order}")
        object.__setattr__(self, "order", order)

    @property
    def top1(self) -> int:
        return self.order[0]


class JudgeKind(str, Enum):
    ORACLE_DISTANCE = "oracle_distance"
    QUALITY_PROXY = "quality_proxy"
    EXTERNAL = "external"


@dataclass(frozen=True)
class JudgeSpec:
    kind: JudgeKind
    endpoint: str | None = None
    seed: Seed64 = 0

    def __post_init__(self):
        if self.kind == JudgeKind.EXTERNAL and not self.endpoint:
            raise JudgeUnavailable("external judge requires an endpoint")


def _check_candidates(candidates: list[Video]):
    if len(candidates) < 2:
        raise TooFewCandidates("ranking needs at least two candidates")


def oracle_judge_rank(candidates: list[Video], target: Video) -> Ranking:
    """Ascending MSE to the target; ties broken by lower index."""
    _check_candidates(candidates)
    for c in candidates:
        if (c.t, c.height, c.width) != (target.t, target.height, target.width):
            raise DimensionMismatch("candidate dimensions differ from target")
    losses = [loss_mse(c, target) for c in candidates]
    order = sorted(range(len(candidates)), key=lambda i: (losses[i], i))
    return Ranking(tuple(order))


def quality_judge_rank(candidates: list[Video]) -> Ranking:
    """Descending quality score; prefers smooth motion near a mild activity level."""
    _check_candidates(candidates)
    scores = [
        motion_smoothness(c) - abs(dynamic_degree(c) - 0.15) for c in candidates
    ]
    order = sorted(range(len(candidates)), key=lambda i: (-scores[i], i))
    return Ranking(tuple(order))


def _tvid_b64(video: Video) -> str:
    from .store import tvid_bytes

    return base64.b64encode(tvid_bytes(video)).decode("ascii")


def external_judge_rank(endpoint: str, criterion: Criterion, candidates: list[Video]) -> Ranking:
    """POST the candidate set to an external judge and validate its ranking."""
    _check_candidates(candidates)
    body = {
        "criterion_text": criterion.text,
        "candidates": [_tvid_b64(c) for c in candidates],
    }
    try:
        resp = requests.post(endpoint, json=body, timeout=EXTERNAL_TIMEOUT_S)
        resp.raise_for_status()
        payload = resp.json()
    except (requests.RequestException, ValueError) as exc:
        raise JudgeUnavailable(f"external judge at {endpoint} failed: {exc}") from exc
    order = payload.get("order") if isinstance(payload, dict) else None
    if not isinstance(order, list) or len(order) != len(candidates):
        raise MalformedRanking(f"external judge returned {payload!r}")
    try:
        return Ranking(tuple(int(i) for i in order))
    except (TypeError, ValueError) as exc:
        raise MalformedRanking(f"external judge returned {order!r}") from exc


def rank_candidates(
    spec: JudgeSpec,
    candidates: list[Video],
    criterion: Criterion,
    target: Video | None = None,
) -> Ranking:
    """Dispatch to the judge named by `spec`; always yields a valid permutation."""
    _check_candidates(candidates)
    if spec.kind == JudgeKind.ORACLE_DISTANCE:
        if target is None:
            raise JudgeUnavailable("oracle-distance judge needs a target video")
        return oracle_judge_rank(candidates, target)
    if spec.kind == JudgeKind.QUALITY_PROXY:
        return quality_judge_rank(candidates)
    return external_judge_rank(spec.endpoint, criterion, candidates)
