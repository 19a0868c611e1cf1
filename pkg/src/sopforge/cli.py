"""Command-line frontend: run tasks, train, gradient-check, metrics, serve.

Machine-readable output (metrics, train report, gradcheck result) goes to
stdout as a single JSON document; progress chatter goes to stderr.
"""

from __future__ import annotations

import argparse
import json
import os
import sys

from . import datafree, metrics, pipeline as pl, selfmod, store
from .core import first_frame, last_frame
from .datafree import DataFreeConfig, HitlMode
from .errors import SopforgeError
from .selfmod import TrainConfig


def _say(msg: str):
    print(msg, file=sys.stderr)


def _load_video(path: str):
    try:
        return store.read_tvid(path)
    except (OSError, SopforgeError) as exc:
        raise SystemExit(f"cannot read {path}: {exc}")


def _build_inputs(args, parser) -> pl.RunInputs:
    task = pl.TaskKind(args.task)
    inputs = args.input or []
    needed = {
        pl.TaskKind.TEXT_TO_VIDEO: 0,
        pl.TaskKind.SIMULATE_DIGITAL_WORLD: 0,
        pl.TaskKind.IMAGE_TO_VIDEO: 1,
        pl.TaskKind.EXTEND_VIDEO: 1,
        pl.TaskKind.VIDEO_EDIT: 1,
        pl.TaskKind.CONNECT_VIDEOS: 2,
    }[task]
    if len(inputs) != needed:
        parser.error(f"task {task.value} needs {needed} --input file(s), got {len(inputs)}")
    videos = [_load_video(p) for p in inputs]
    if task == pl.TaskKind.IMAGE_TO_VIDEO:
        return pl.RunInputs(prompt=args.prompt, frame=first_frame(videos[0]))
    return pl.RunInputs(prompt=args.prompt, videos=tuple(videos))


def _interactive_decide(run: pl.PipelineRun) -> pl.HumanDecision:
    options = "[a]pprove / [r]etry"
    if run.stage == pl.StageId.FIRST_FRAME:
        options += " / [e]dit"
    options += " / a[b]ort"
    while True:
        _say(f"stage {run.stage.value} complete; {options}?")
        choice = input("> ").strip().lower()
        mapping = {
            "a": pl.HumanDecision.APPROVE,
            "r": pl.HumanDecision.RETRY,
            "e": pl.HumanDecision.ROUTE_TO_EDIT,
            "b": pl.HumanDecision.ABORT,
        }
        if choice in mapping:
            if mapping[choice] == pl.HumanDecision.ROUTE_TO_EDIT and run.stage != pl.StageId.FIRST_FRAME:
                _say("edit is only available at the first-frame checkpoint")
                continue
            return mapping[choice]
        _say("unrecognised choice")


def cmd_run(args, parser) -> int:
    inputs = _build_inputs(args, parser)
    config = pl.PipelineConfig(seed=args.seed, t_frames=args.frames)
    agent_params, modulation = pl.default_system(args.seed)
    try:
        run = pl.create_run(pl.TaskKind(args.task), inputs, config)
        if args.auto:
            pl.auto_run(run, agent_params, modulation)
        else:
            while run.status == pl.RunStatus.RUNNING:
                pl.execute_stage(run, agent_params, modulation)
                if run.status != pl.RunStatus.AWAITING_DECISION:
                    break
                decision = _interactive_decide(run)
                try:
                    pl.apply_decision(run, run.stage, decision)
                except SopforgeError as exc:
                    _say(str(exc))
                    break
    except SopforgeError as exc:
        _say(f"pipeline failed: {exc}")
        return 1
    if run.status != pl.RunStatus.DONE:
        _say(f"run ended {run.status.value}")
        return 1
    video = pl.final_artifact(run)
    if args.out:
        store.write_tvid(video, args.out)
        _say(f"wrote {args.out}")
    report = metrics.metric_report(video, prompt_text=args.prompt)
    print(json.dumps(report))
    return 0


def cmd_train(args, parser) -> int:
    hitl = {"auto-oracle": HitlMode.AUTO_ORACLE, "auto-discard": HitlMode.AUTO_DISCARD}[args.hitl]
    cfg = DataFreeConfig(
        iterations=args.iterations,
        prompts_per_iter=args.prompts,
        train_cfg=TrainConfig(seed=args.seed, epochs=args.epochs),
        hitl_mode=hitl,
    )
    try:
        thetas, zs, report = datafree.datafree_train(cfg)
    except SopforgeError as exc:
        _say(f"training failed: {exc}")
        return 1
    if args.out:
        meta = {"iteration": cfg.iterations, "epoch": cfg.train_cfg.epochs, "seed": args.seed}
        store.write_checkpoint(thetas, zs, meta, args.out)
        log = os.path.join(args.out, "history.jsonl")
        for entry in report["iterations"]:
            for record in entry["history"]:
                store.append_history(record, log)
        _say(f"checkpoint written to {args.out}")
    summary = {
        "hitl_mode": report["hitl_mode"],
        "total_records": report["total_records"],
        "iterations": [
            {k: e[k] for k in ("iteration", "dataset_size", "routes", "skipped")}
            | ({"loss_first": e["loss_first"], "loss_last": e["loss_last"]} if not e["skipped"] else {})
            for e in report["iterations"]
        ],
    }
    print(json.dumps(summary))
    return 0


def cmd_gradcheck(args, parser) -> int:
    results = {}
    worst = 0.0
    for label, chain in (("2-agent", selfmod.DEFAULT_CHAIN), ("3-agent", selfmod.THREE_AGENT_CHAIN)):
        err = selfmod.gradient_check(TrainConfig(seed=args.seed, chain=chain), args.eps)
        results[label] = err
        worst = max(worst, err)
    print(json.dumps({"chains": results, "max_relative_error": worst, "epsilon": args.eps}))
    return 0 if worst < 1e-4 else 1


def cmd_metrics(args, parser) -> int:
    video = _load_video(args.video)
    report = metrics.metric_report(
        video,
        prompt_text=args.prompt,
        input_frame=first_frame(_load_video(args.input_frame)) if args.input_frame else None,
        reference=_load_video(args.ref) if args.ref else None,
        prev=_load_video(args.prev) if args.prev else None,
        next_=_load_video(args.next) if args.next else None,
    )
    print(json.dumps(report))
    return 0


def cmd_serve(args, parser) -> int:
    from .server import serve

    serve(host=args.host, port=args.port, data_dir=args.data_dir, system_seed=args.seed)
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="sopforge")
    sub = parser.add_subparsers(dest="command", required=True)

    p_run = sub.add_parser("run", help="execute one task through the staged pipeline")
    p_run.add_argument("--task", required=True, choices=[t.value for t in pl.TaskKind])
    p_run.add_argument("--prompt")
    p_run.add_argument("--input", action="append", help="input TVID file (repeatable)")
    p_run.add_argument("--out", help="write the final video here as TVID")
    p_run.add_argument("--seed", type=int, default=0)
    p_run.add_argument("--frames", type=int, default=6)
    p_run.add_argument("--auto", action="store_true", help="approve every checkpoint")
    p_run.set_defaults(func=cmd_run)

    p_train = sub.add_parser("train", help="run the data-free training loop")
    p_train.add_argument("--iterations", type=int, default=3)
    p_train.add_argument("--prompts", type=int, default=16)
    p_train.add_argument("--epochs", type=int, default=50)
    p_train.add_argument("--hitl", choices=["auto-oracle", "auto-discard"], default="auto-oracle")
    p_train.add_argument("--seed", type=int, default=0)
    p_train.add_argument("--out", help="checkpoint directory")
    p_train.set_defaults(func=cmd_train)

    p_grad = sub.add_parser("gradcheck", help="compare analytic gradients to finite differences")
    p_grad.add_argument("--eps", type=float, default=1e-4)
    p_grad.add_argument("--seed", type=int, default=7)
    p_grad.set_defaults(func=cmd_gradcheck)

    p_metrics = sub.add_parser("metrics", help="compute the metrics JSON for a video")
    p_metrics.add_argument("--video", required=True)
    p_metrics.add_argument("--prompt")
    p_metrics.add_argument("--ref", help="reference video for tcon")
    p_metrics.add_argument("--prev", help="preceding video for tmean")
    p_metrics.add_argument("--next", help="following video for tmean")
    p_metrics.add_argument("--input-frame", dest="input_frame", help="input frame for video_ti")
    p_metrics.set_defaults(func=cmd_metrics)

    p_serve = sub.add_parser("serve", help="start the HTTP API")
    p_serve.add_argument("--host", default="127.0.0.1")
    p_serve.add_argument("--port", type=int, default=7700)
    p_serve.add_argument("--data-dir", default=os.environ.get("SOPFORGE_DATA_DIR"))
    p_serve.add_argument("--seed", type=int, default=0)
    p_serve.set_defaults(func=cmd_serve)

    return parser


def main(argv: list[str] | None = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    return args.func(args, parser)


if __name__ == "__main__":
    sys.exit(main())
