"""Data-free training loop: synthesize prompts, generate candidate sets,
route them through judge consensus and human screening, fine-tune, iterate.

Per prompt the chain generates four candidates that differ only by a seeded
noise vector added to each agent's modulation embedding for that forward
pass. All judges ranking the same top-1 auto-accepts that candidate into the
iteration's dataset; any disagreement escalates to human review, where the
reviewer either picks one candidate or discards the whole set.
"""

from __future__ import annotations

import itertools
from dataclasses import dataclass, field
from enum import Enum

from . import selfmod
from .core import EnhancedPrompt, Video
from .errors import (
    AlreadyResolved,
    BadIndex,
    CountMismatch,
    InvalidCount,
    PendingHumanReviews,
)
from .judges import Criterion, JudgeKind, JudgeSpec, Ranking, criterion_by_id, rank_candidates
from .selfmod import ThetaMap, TrainConfig, TrainSample, ZMap
from .toyworld import Seed64, derive_seed, enhance_prompt, oracle_target, rng_stream, synthesize_prompts

CANDIDATES_PER_SET = 4

_item_counter = itertools.count(1)


class HitlMode(str, Enum):
    INTERACTIVE = "interactive"
    AUTO_ORACLE = "auto_oracle"  # simulated reviewer accepts the oracle judge's top-1
    AUTO_DISCARD = "auto_discard"  # simulated reviewer discards every escalated set


@dataclass
class DataFreeConfig:
    iterations: int = 3
    prompts_per_iter: int = 16
    judges: tuple[JudgeSpec, ...] = (
        JudgeSpec(JudgeKind.ORACLE_DISTANCE),
        JudgeSpec(JudgeKind.QUALITY_PROXY),
    )
    candidate_noise_sigma: float = 0.1
    train_cfg: TrainConfig = field(default_factory=TrainConfig)
    hitl_mode: HitlMode = HitlMode.AUTO_ORACLE

    def __post_init__(self):
        if self.iterations < 1:
            raise InvalidCount("iterations must be >= 1")
        if self.prompts_per_iter < 1:
            raise InvalidCount("prompts_per_iter must be >= 1")
        if len(self.judges) < 2:
            raise InvalidCount("need at least two judges")
        self.hitl_mode = HitlMode(self.hitl_mode)


@dataclass
class CandidateSet:
    set_id: str
    prompt: EnhancedPrompt
    candidates: tuple[Video, ...]
    gen_seeds: tuple[Seed64, ...]
    target: Video  # hidden oracle target for this prompt
    criterion: Criterion
    rankings: dict[str, Ranking] = field(default_factory=dict)

    def __post_init__(self):
        if len(self.candidates) != CANDIDATES_PER_SET:
            raise InvalidCount(f"a candidate set holds exactly {CANDIDATES_PER_SET} videos")


class ReviewStatus(str, Enum):
    PENDING_HUMAN = "pending_human"
    RESOLVED = "resolved"


@dataclass(frozen=True)
class Resolution:
    kind: str  # "accepted" | "discarded"
    index: int | None = None


@dataclass
class ReviewItem:
    item_id: str
    candidate_set: CandidateSet
    status: ReviewStatus = ReviewStatus.PENDING_HUMAN
    resolution: Resolution | None = None


@dataclass(frozen=True)
class RouteOutcome:
    kind: str  # "auto_accepted" | "needs_human"
    index: int | None = None


@dataclass(frozen=True)
class DatasetRecord:
    prompt: EnhancedPrompt
    video: Video
    provenance: dict  # {"iteration", "set_id", "route"}


@dataclass
class DataFreeState:
    thetas: ThetaMap
    zs: ZMap


# ── seed derivation (public so replays and tests can reproduce any piece) ─────

def prompt_seed(cfg: DataFreeConfig, iteration: int) -> Seed64:
    return derive_seed(cfg.train_cfg.seed, "prompts", iteration)


def set_seed(cfg: DataFreeConfig, iteration: int, prompt_index: int) -> Seed64:
    return derive_seed(cfg.train_cfg.seed, "candset", iteration, prompt_index)


# ── candidate generation ──────────────────────────────────────────────────────

def generate_candidates(
    thetas: ThetaMap,
    zs: ZMap,
    prompt: EnhancedPrompt,
    cfg: DataFreeConfig,
    gen_base_seed: Seed64 = 0,
) -> CandidateSet:
    """Four chain outputs under per-candidate modulation jitter; zs untouched."""
    target = oracle_target(prompt, cfg.train_cfg.t_frames)
    sample = TrainSample(prompt=prompt, target=target)
    gen_seeds = tuple(derive_seed(gen_base_seed, "cand", j) for j in range(CANDIDATES_PER_SET))
    candidates = []
    for seed in gen_seeds:
        noise = rng_stream(seed, 16) * cfg.candidate_noise_sigma
        jittered = {role: z + noise.astype(z.dtype) for role, z in zs.items()}
        outputs, _ = selfmod.forward_chain(thetas, jittered, sample, cfg.train_cfg)
        candidates.append(outputs[-1])
    crit_draw = rng_stream(derive_seed(gen_base_seed, "criterion"), 1)[0]
    criterion = criterion_by_id(min(int((crit_draw + 1.0) / 2.0 * 10) + 1, 10))
    return CandidateSet(
        set_id=f"set-{gen_base_seed:016x}",
        prompt=prompt,
        candidates=tuple(candidates),
        gen_seeds=gen_seeds,
        target=target,
        criterion=criterion,
    )


def judge_set(cand_set: CandidateSet, cfg: DataFreeConfig) -> CandidateSet:
    """Fill in one ranking per configured judge."""
    rankings = {}
    for i, spec in enumerate(cfg.judges):
        rankings[f"judge_{i + 1}"] = rank_candidates(
            spec, list(cand_set.candidates), cand_set.criterion, target=cand_set.target
        )
    cand_set.rankings = rankings
    return cand_set


def consensus_route(rankings: dict[str, Ranking]) -> RouteOutcome:
    """Unanimous top-1 auto-accepts; any disagreement escalates to a human."""
    if len(rankings) < 2:
        raise CountMismatch("consensus needs at least two rankings")
    sizes = {len(r.order) for r in rankings.values()}
    if len(sizes) != 1:
        raise CountMismatch(f"rankings cover different candidate counts: {sizes}")
    tops = {r.top1 for r in rankings.values()}
    if len(tops) == 1:
        return RouteOutcome("auto_accepted", tops.pop())
    return RouteOutcome("needs_human")


def resolve_review(item: ReviewItem, resolution: Resolution) -> ReviewItem:
    """Apply the human (or simulated) decision exactly once."""
    if item.status == ReviewStatus.RESOLVED:
        raise AlreadyResolved(f"review {item.item_id} is already resolved")
    if resolution.kind == "accepted":
        if resolution.index is None or not 0 <= resolution.index < CANDIDATES_PER_SET:
            raise BadIndex(f"candidate index {resolution.index} not in 0..3")
    elif resolution.kind != "discarded":
        raise BadIndex(f"unknown resolution kind {resolution.kind!r}")
    item.resolution = resolution
    item.status = ReviewStatus.RESOLVED
    return item


def record_from_resolution(item: ReviewItem, iteration: int) -> DatasetRecord | None:
    if item.status != ReviewStatus.RESOLVED:
        raise PendingHumanReviews(f"review {item.item_id} is unresolved")
    if item.resolution.kind == "discarded":
        return None
    cand_set = item.candidate_set
    return DatasetRecord(
        prompt=cand_set.prompt,
        video=cand_set.candidates[item.resolution.index],
        provenance={
            "iteration": iteration,
            "set_id": cand_set.set_id,
            "route": "human_accepted",
        },
    )


def run_iteration(
    state: DataFreeState,
    cfg: DataFreeConfig,
    iteration_index: int,
) -> tuple[list[DatasetRecord], list[ReviewItem]]:
    """One data-construction pass: S prompts -> candidate sets -> routing.

    Auto modes resolve escalations inline; interactive mode returns them as
    pending review items for the caller to resolve before training.
    """
    prompts = synthesize_prompts(prompt_seed(cfg, iteration_index), cfg.prompts_per_iter)
    records: list[DatasetRecord] = []
    pending: list[ReviewItem] = []
    for s_idx, raw_prompt in enumerate(prompts):
        prompt = enhance_prompt(raw_prompt)
        cand_set = generate_candidates(
            state.thetas, state.zs, prompt, cfg, gen_base_seed=set_seed(cfg, iteration_index, s_idx)
        )
        judge_set(cand_set, cfg)
        outcome = consensus_route(cand_set.rankings)
        if outcome.kind == "auto_accepted":
            records.append(
                DatasetRecord(
                    prompt=prompt,
                    video=cand_set.candidates[outcome.index],
                    provenance={
                        "iteration": iteration_index,
                        "set_id": cand_set.set_id,
                        "route": "auto_accepted",
                    },
                )
            )
            continue
        item = ReviewItem(item_id=f"review-{next(_item_counter):06d}", candidate_set=cand_set)
        if cfg.hitl_mode == HitlMode.AUTO_ORACLE:
            from .judges import oracle_judge_rank

            best = oracle_judge_rank(list(cand_set.candidates), cand_set.target).top1
            resolve_review(item, Resolution("accepted", best))
            records.append(record_from_resolution(item, iteration_index))
        elif cfg.hitl_mode == HitlMode.AUTO_DISCARD:
            resolve_review(item, Resolution("discarded"))
        else:
            pending.append(item)
    return records, pending


def datafree_train(
    cfg: DataFreeConfig,
    thetas: ThetaMap | None = None,
    zs: ZMap | None = None,
    review_handler=None,
    on_batch=None,
    on_iteration=None,
):
    """N iterations of dataset construction + fine-tuning; returns (thetas, zs, report).

    `review_handler(pending_items)` must block until every pending item is
    resolved (interactive mode); without one, unresolved items abort the run.
    """
    if thetas is None:
        thetas = selfmod.init_chain_params(cfg.train_cfg)
    if zs is None:
        zs = selfmod.init_modulation(cfg.train_cfg.chain, dtype=cfg.train_cfg.dtype)
    state = DataFreeState(thetas=thetas, zs=zs)

    iterations_report = []
    for n in range(1, cfg.iterations + 1):
        if on_iteration is not None:
            on_iteration(n)
        records, pending = run_iteration(state, cfg, n)
        routed_counts = {
            "auto_accepted": sum(
                1 for r in records if r.provenance["route"] == "auto_accepted"
            ),
            "human_accepted": sum(
                1 for r in records if r.provenance["route"] == "human_accepted"
            ),
            "discarded": 0,
            "escalated": len(pending),
        }
        if pending:
            if review_handler is None:
                raise PendingHumanReviews(
                    f"iteration {n} has {len(pending)} unresolved review items"
                )
            review_handler(pending)
            for item in pending:
                rec = record_from_resolution(item, n)
                if rec is None:
                    routed_counts["discarded"] += 1
                else:
                    records.append(rec)
                    routed_counts["human_accepted"] += 1
        entry = {
            "iteration": n,
            "dataset_size": len(records),
            "routes": routed_counts,
            "skipped": False,
            "history": [],
        }
        if not records:
            entry["skipped"] = True
            entry["warning"] = "empty dataset; no training this iteration"
            iterations_report.append(entry)
            continue
        dataset = [TrainSample(prompt=r.prompt, target=r.video) for r in records]
        state.thetas, state.zs, history = selfmod.train(
            dataset, cfg.train_cfg, thetas=state.thetas, zs=state.zs, on_batch=on_batch
        )
        entry["history"] = history
        entry["loss_first"] = history[0]["loss"]
        entry["loss_last"] = history[-1]["loss"]
        iterations_report.append(entry)

    report = {
        "hitl_mode": cfg.hitl_mode.value,
        "iterations": iterations_report,
        "total_records": sum(e["dataset_size"] for e in iterations_report),
    }
    return state.thetas, state.zs, report
