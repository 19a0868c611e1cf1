"""SOP state machine: six task kinds, staged execution, human checkpoints.

Every stage execution parks the run at a checkpoint (AwaitingDecision); a
human (or the headless auto-runner) then approves, retries, routes the first
frame to the edit agent, or aborts. Retries are capped at three per stage
and re-seed that stage's jitter so a re-generation actually differs.
"""

from __future__ import annotations

import datetime as _dt
import itertools
from dataclasses import dataclass, field
from enum import Enum

import numpy as np

from . import agents as agents_mod
from .agents import AgentId, AgentParams, make_augmented
from .core import (
    EnhancedPrompt,
    Frame,
    TextPrompt,
    Video,
    concat_videos,
    first_frame,
    last_frame,
)
from .errors import (
    AgentFailure,
    EmptyPrompt,
    InputMismatch,
    NotAwaitingDecision,
    RetryExhausted,
    WrongStage,
)
from .selfmod import init_modulation
from .toyworld import (
    DIGITAL_STYLE_SUFFIX,
    Seed64,
    derive_seed,
    embed_text,
    enhance_prompt,
    rng_stream,
)

MAX_RETRIES_PER_STAGE = 3

_run_counter = itertools.count(1)


class TaskKind(str, Enum):
    TEXT_TO_VIDEO = "text_to_video"
    IMAGE_TO_VIDEO = "image_to_video"
    EXTEND_VIDEO = "extend_video"
    VIDEO_EDIT = "video_edit"
    CONNECT_VIDEOS = "connect_videos"
    SIMULATE_DIGITAL_WORLD = "simulate_digital_world"


class StageId(str, Enum):
    ENHANCE = "enhance"
    FIRST_FRAME = "first_frame"
    EDIT_FRAME = "edit_frame"
    GENERATE_VIDEO = "generate_video"
    CONNECT = "connect"
    DONE = "done"


class HumanDecision(str, Enum):
    APPROVE = "approve"
    RETRY = "retry"
    ROUTE_TO_EDIT = "route_to_edit"
    ABORT = "abort"


class RunStatus(str, Enum):
    RUNNING = "running"
    AWAITING_DECISION = "awaiting_decision"
    DONE = "done"
    FAILED = "failed"


# Base stage path per task; EditFrame joins a path only via RouteToEdit
# (TextToVideo-style tasks) or as a fixed first stage (VideoEdit).
STAGE_TABLE: dict[TaskKind, tuple[StageId, ...]] = {
    TaskKind.TEXT_TO_VIDEO: (StageId.ENHANCE, StageId.FIRST_FRAME, StageId.GENERATE_VIDEO),
    TaskKind.SIMULATE_DIGITAL_WORLD: (StageId.ENHANCE, StageId.FIRST_FRAME, StageId.GENERATE_VIDEO),
    TaskKind.IMAGE_TO_VIDEO: (StageId.ENHANCE, StageId.GENERATE_VIDEO),
    TaskKind.EXTEND_VIDEO: (StageId.GENERATE_VIDEO,),
    TaskKind.VIDEO_EDIT: (StageId.EDIT_FRAME, StageId.GENERATE_VIDEO),
    TaskKind.CONNECT_VIDEOS: (StageId.CONNECT,),
}

_DEFAULT_PROMPTS = {
    TaskKind.EXTEND_VIDEO: "extend the video",
    TaskKind.CONNECT_VIDEOS: "connect the videos",
}


@dataclass(frozen=True)
class RunInputs:
    prompt: str | None = None
    frame: Frame | None = None
    videos: tuple[Video, ...] = ()


@dataclass(frozen=True)
class PipelineConfig:
    seed: Seed64 = 0
    t_frames: int = 6
    m_frames: int | None = None  # transition length; defaults to t_frames - 2
    retry_noise_sigma: float = 0.1

    @property
    def transition_frames(self) -> int:
        return self.m_frames if self.m_frames is not None else max(1, self.t_frames - 2)


@dataclass
class PipelineRun:
    run_id: str
    task: TaskKind
    inputs: RunInputs
    config: PipelineConfig
    stage: StageId
    status: RunStatus = RunStatus.RUNNING
    retry_counts: dict[StageId, int] = field(default_factory=dict)
    artifacts: dict[StageId, object] = field(default_factory=dict)
    history: list[dict] = field(default_factory=list)
    _seq: int = 0

    def log(self, stage: StageId, event: str, detail: dict | None = None):
        self._seq += 1
        self.history.append(
            {
                "seq": self._seq,
                "timestamp": _dt.datetime.now(_dt.timezone.utc).isoformat(),
                "stage": stage.value,
                "event": event,
                "detail": detail or {},
            }
        )

    def attempts(self, stage: StageId) -> int:
        return self.retry_counts.get(stage, 0)


def _validate_inputs(task: TaskKind, inputs: RunInputs):
    needs_prompt = task in (
        TaskKind.TEXT_TO_VIDEO,
        TaskKind.IMAGE_TO_VIDEO,
        TaskKind.VIDEO_EDIT,
        TaskKind.SIMULATE_DIGITAL_WORLD,
    )
    if needs_prompt:
        if inputs.prompt is None:
            raise InputMismatch(f"{task.value} requires a prompt")
        if not inputs.prompt.strip():
            raise EmptyPrompt("prompt text is empty")
    if task == TaskKind.IMAGE_TO_VIDEO:
        if inputs.frame is None:
            raise InputMismatch("image_to_video requires an input frame")
    elif inputs.frame is not None:
        raise InputMismatch(f"{task.value} does not take an input frame")
    expected_videos = {
        TaskKind.EXTEND_VIDEO: 1,
        TaskKind.VIDEO_EDIT: 1,
        TaskKind.CONNECT_VIDEOS: 2,
    }.get(task, 0)
    if len(inputs.videos) != expected_videos:
        raise InputMismatch(
            f"{task.value} requires {expected_videos} input video(s), got {len(inputs.videos)}"
        )
    for v in inputs.videos:
        if v.height != 8 or v.width != 8:
            raise InputMismatch("input videos must have 8x8 frames")
    if inputs.frame is not None and (inputs.frame.height != 8 or inputs.frame.width != 8):
        raise InputMismatch("input frame must be 8x8")


def create_run(task: TaskKind, inputs: RunInputs, config: PipelineConfig | None = None) -> PipelineRun:
    """Validated run parked at its task's first stage, ready to execute."""
    config = config or PipelineConfig()
    task = TaskKind(task)
    _validate_inputs(task, inputs)
    run = PipelineRun(
        run_id=f"run-{next(_run_counter):06d}",
        task=task,
        inputs=inputs,
        config=config,
        stage=STAGE_TABLE[task][0],
    )
    run.log(run.stage, "created", {"task": task.value})
    return run


def default_system(seed: Seed64 = 0):
    """Parameters and modulation embeddings for every tensor-bearing role."""
    roles = (
        AgentId.TEXT_TO_IMAGE,
        AgentId.IMAGE_TO_IMAGE,
        AgentId.IMAGE_TO_VIDEO,
        AgentId.VIDEO_CONNECT,
    )
    thetas = {
        r: agents_mod.init_params(r, derive_seed(seed, "theta", int(r))) for r in roles
    }
    zs = init_modulation(roles)
    return thetas, zs


def _prompt_text_for_agents(run: PipelineRun) -> str:
    art = run.artifacts.get(StageId.ENHANCE)
    if isinstance(art, EnhancedPrompt):
        return art.text
    if run.inputs.prompt is not None:
        return run.inputs.prompt
    return _DEFAULT_PROMPTS[run.task]


def _augmented(run: PipelineRun, role: AgentId, modulation) -> np.ndarray:
    z = modulation[role]
    attempt = run.attempts(run.stage)
    if attempt > 0:
        noise = rng_stream(
            derive_seed(run.config.seed, "retry", run.stage.value, attempt), z.size
        )
        z = z + (noise * run.config.retry_noise_sigma).astype(z.dtype)
    e = embed_text(int(role), _prompt_text_for_agents(run))
    return make_augmented(e, z, dtype=z.dtype)


def _generation_seed_frame(run: PipelineRun) -> Frame:
    if StageId.EDIT_FRAME in run.artifacts:
        return run.artifacts[StageId.EDIT_FRAME]
    if StageId.FIRST_FRAME in run.artifacts:
        return run.artifacts[StageId.FIRST_FRAME]
    if run.task == TaskKind.IMAGE_TO_VIDEO:
        return run.inputs.frame
    if run.task == TaskKind.EXTEND_VIDEO:
        return last_frame(run.inputs.videos[0])
    raise InputMismatch(f"no seed frame available for {run.task.value}")


def execute_stage(run: PipelineRun, agent_params: dict[AgentId, AgentParams], modulation) -> PipelineRun:
    """Produce the current stage's artifact and park the run at its checkpoint."""
    if run.status != RunStatus.RUNNING:
        raise NotAwaitingDecision(f"run is {run.status.value}, not running")
    stage = run.stage
    try:
        if stage == StageId.ENHANCE:
            enhanced = enhance_prompt(TextPrompt(run.inputs.prompt))
            if run.task == TaskKind.SIMULATE_DIGITAL_WORLD:
                enhanced = EnhancedPrompt(
                    enhanced.text + " " + DIGITAL_STYLE_SUFFIX, enhanced.vector
                )
            artifact: object = enhanced
        elif stage == StageId.FIRST_FRAME:
            aug = _augmented(run, AgentId.TEXT_TO_IMAGE, modulation)
            artifact = agents_mod.t2i_forward(agent_params[AgentId.TEXT_TO_IMAGE], aug)
        elif stage == StageId.EDIT_FRAME:
            source = run.artifacts.get(StageId.FIRST_FRAME)
            if source is None:
                source = first_frame(run.inputs.videos[0])
            aug = _augmented(run, AgentId.IMAGE_TO_IMAGE, modulation)
            artifact = agents_mod.i2i_forward(
                agent_params[AgentId.IMAGE_TO_IMAGE], source, aug
            )
        elif stage == StageId.GENERATE_VIDEO:
            aug = _augmented(run, AgentId.IMAGE_TO_VIDEO, modulation)
            artifact = agents_mod.i2v_forward(
                agent_params[AgentId.IMAGE_TO_VIDEO],
                _generation_seed_frame(run),
                aug,
                run.config.t_frames,
            )
        elif stage == StageId.CONNECT:
            v1, v2 = run.inputs.videos
            aug = _augmented(run, AgentId.VIDEO_CONNECT, modulation)
            transition = agents_mod.connect_forward(
                agent_params[AgentId.VIDEO_CONNECT],
                last_frame(v1),
                first_frame(v2),
                aug,
                run.config.transition_frames,
            )
            artifact = concat_videos(concat_videos(v1, transition), v2)
        else:
            raise WrongStage(f"stage {stage.value} is not executable")
    except (EmptyPrompt, WrongStage):
        raise
    except Exception as exc:
        run.status = RunStatus.FAILED
        run.log(stage, "failed", {"reason": str(exc)})
        raise AgentFailure(f"stage {stage.value} failed: {exc}") from exc

    run.artifacts[stage] = artifact
    run.status = RunStatus.AWAITING_DECISION
    run.log(stage, "stage_executed", {"attempt": run.attempts(stage)})
    return run


def _successor(run: PipelineRun) -> StageId | None:
    table = STAGE_TABLE[run.task]
    if run.stage == StageId.EDIT_FRAME and run.stage not in table:
        return StageId.GENERATE_VIDEO  # detour taken via RouteToEdit
    idx = table.index(run.stage)
    return table[idx + 1] if idx + 1 < len(table) else None


def apply_decision(run: PipelineRun, stage: StageId, decision: HumanDecision) -> PipelineRun:
    """Route a human decision at the current checkpoint."""
    decision = HumanDecision(decision)
    stage = StageId(stage)
    if run.status != RunStatus.AWAITING_DECISION:
        raise NotAwaitingDecision(f"run is {run.status.value}")
    if stage != run.stage:
        raise WrongStage(f"run is at {run.stage.value}, not {stage.value}")

    if decision == HumanDecision.APPROVE:
        run.log(stage, "decision", {"decision": "approve"})
        nxt = _successor(run)
        if nxt is None:
            run.stage = StageId.DONE
            run.status = RunStatus.DONE
            run.log(StageId.DONE, "done")
        else:
            run.stage = nxt
            run.status = RunStatus.RUNNING
    elif decision == HumanDecision.RETRY:
        if run.attempts(stage) >= MAX_RETRIES_PER_STAGE:
            run.status = RunStatus.FAILED
            run.log(stage, "retry_exhausted")
            raise RetryExhausted(
                f"stage {stage.value} already retried {MAX_RETRIES_PER_STAGE} times"
            )
        run.retry_counts[stage] = run.attempts(stage) + 1
        run.status = RunStatus.RUNNING
        run.log(stage, "decision", {"decision": "retry", "attempt": run.retry_counts[stage]})
    elif decision == HumanDecision.ROUTE_TO_EDIT:
        if stage != StageId.FIRST_FRAME:
            raise WrongStage("route_to_edit is only legal at the first-frame checkpoint")
        run.log(stage, "decision", {"decision": "route_to_edit"})
        run.stage = StageId.EDIT_FRAME
        run.status = RunStatus.RUNNING
    else:  # ABORT
        run.status = RunStatus.FAILED
        run.log(stage, "decision", {"decision": "abort"})
    return run


def auto_run(run: PipelineRun, agent_params, modulation) -> PipelineRun:
    """Headless mode: execute and approve every checkpoint until done or failed."""
    while run.status == RunStatus.RUNNING:
        execute_stage(run, agent_params, modulation)
        if run.status == RunStatus.AWAITING_DECISION:
            apply_decision(run, run.stage, HumanDecision.APPROVE)
    return run


def final_artifact(run: PipelineRun) -> Video:
    """The finished run's product video."""
    if run.status != RunStatus.DONE:
        raise WrongStage(f"run is {run.status.value}, not done")
    last_stage = STAGE_TABLE[run.task][-1]
    return run.artifacts[last_stage]


def replay_decisions(run: PipelineRun) -> list[tuple[StageId, HumanDecision]]:
    """Decision sequence recorded in the history log, for replaying a run."""
    out = []
    for event in run.history:
        if event["event"] == "decision":
            out.append(
                (StageId(event["stage"]), HumanDecision(event["detail"]["decision"]))
            )
    return out
