"""Acceptance suite: one test per primary criterion, tolerances pinned inline.

Run with `pytest tests/test_acceptance.py -v`; the terminal summary prints one
PASS/FAIL line per criterion.
"""

import base64
import itertools
import json
import subprocess
import sys
import time

import numpy as np
import pytest
from fastapi.testclient import TestClient

from sopforge import datafree, pipeline as pl, selfmod, store
from sopforge.agents import AgentId
from sopforge.core import Video, last_frame
from sopforge.datafree import (
    DataFreeConfig,
    DataFreeState,
    HitlMode,
    Resolution,
    consensus_route,
    generate_candidates,
    record_from_resolution,
    resolve_review,
    run_iteration,
)
from sopforge.errors import RetryExhausted, WrongStage
from sopforge.judges import Ranking
from sopforge.metrics import dynamic_degree, motion_smoothness, tcon, tmean, video_ti
from sopforge.selfmod import (
    DEFAULT_CHAIN,
    THREE_AGENT_CHAIN,
    GradientSet,
    TrainConfig,
    dataset_loss,
    gradient_check,
    init_chain_params,
    init_modulation,
    make_oracle_dataset,
    sgd_step,
    train,
)
from sopforge.server import create_app
from sopforge.toyworld import (
    DIGITAL_STYLE_SUFFIX,
    OracleParams,
    enhance_prompt,
    hash_text,
    oracle_render,
    rng_stream,
    rng_u64,
    synthesize_prompts,
)

from reference_oracles import floats_reference, fnv1a_reference


def blob_video(seed: int, t: int = 4) -> Video:
    return oracle_render(OracleParams(rng_stream(seed, 8)), t)


def test_gradient_exactness():
    """Analytic gradients match central differences to 1e-4 on both chains."""
    start = time.time()
    err_two = gradient_check(TrainConfig(seed=7, chain=DEFAULT_CHAIN), epsilon=1e-4)
    err_three = gradient_check(TrainConfig(seed=7, chain=THREE_AGENT_CHAIN), epsilon=1e-4)
    elapsed = time.time() - start
    assert err_two < 1e-4, f"2-agent chain error {err_two}"
    assert err_three < 1e-4, f"3-agent chain error {err_three}"
    assert elapsed < 60.0, f"gradcheck took {elapsed:.1f}s"


def test_update_order_conformance():
    """alpha is computed from the post-update z; hand case gives step 0.5*eta."""
    cfg = TrainConfig(seed=1, eta_theta=0.1, eta_z=0.0)
    thetas = init_chain_params(cfg)
    zs = init_modulation(cfg.chain)
    hand_z = np.zeros(16, dtype=np.float32)
    hand_z[0], hand_z[1] = 0.6, 0.8
    zs = {r: hand_z.copy() for r in cfg.chain}
    ones = GradientSet(
        d_theta={
            r: {n: np.ones_like(t) for n, t in thetas[r].tensors.items()} for r in cfg.chain
        },
        d_z={r: np.zeros(16, dtype=np.float32) for r in cfg.chain},
    )
    new_thetas, _ = sgd_step(thetas, zs, ones, cfg)
    for r in cfg.chain:
        for name in thetas[r].tensors:
            delta = thetas[r].tensors[name] - new_thetas[r].tensors[name]
            # ||z||/n = 1.0/2 = 0.5 exactly; step = 0.5 * 0.1 = 0.05
            assert np.allclose(delta, 0.05, atol=1e-7)

    # instrumented proof that the factor reads the *updated* z: shrink z by a
    # known factor during the same step and verify the theta delta shrinks by
    # exactly that post-update norm
    cfg2 = TrainConfig(seed=1, eta_theta=1.0, eta_z=1.0)
    zs2 = init_modulation(cfg2.chain)
    role = AgentId.TEXT_TO_IMAGE
    grads = GradientSet(
        d_theta={
            r: {n: np.ones_like(t) if r == role else np.zeros_like(t)
                for n, t in thetas[r].tensors.items()}
            for r in cfg2.chain
        },
        d_z={r: (zs2[r] * np.float32(0.5) if r == role else np.zeros(16, np.float32))
             for r in cfg2.chain},
    )
    new_thetas2, new_zs2 = sgd_step(thetas, zs2, grads, cfg2)
    post_norm = float(np.linalg.norm(new_zs2[role]))
    pre_norm = float(np.linalg.norm(zs2[role]))
    assert post_norm == pytest.approx(0.5 * pre_norm, rel=1e-5)
    observed_step = float((thetas[role].tensors["b2"] - new_thetas2[role].tensors["b2"])[0])
    n = len(cfg2.chain)
    assert observed_step == pytest.approx(post_norm / n, rel=1e-5)
    assert observed_step != pytest.approx(pre_norm / n, rel=1e-3)


def test_training_effectiveness():
    """Default config halves the loss on a seeded 16-sample oracle dataset."""
    start = time.time()
    cfg = TrainConfig(seed=42)  # all defaults: B=4, K=50, etas, T=6
    dataset = make_oracle_dataset(42, 16, cfg.t_frames)
    thetas = init_chain_params(cfg)
    zs = init_modulation(cfg.chain)
    initial = dataset_loss(dataset, thetas, zs, cfg)
    new_thetas, new_zs, _ = train(dataset, cfg, thetas=thetas, zs=zs)
    final = dataset_loss(dataset, new_thetas, new_zs, cfg)
    elapsed = time.time() - start
    assert final <= 0.5 * initial, f"loss went {initial:.4f} -> {final:.4f}"
    assert elapsed < 120.0, f"training took {elapsed:.1f}s"


def test_self_modulation_ablation_direction():
    """Learned modulation never loses to fixed alpha=1/n with frozen z (3 seeds)."""
    for seed in (1, 2, 3):
        dataset = make_oracle_dataset(seed, 16, 6)
        cfg_on = TrainConfig(seed=seed)
        cfg_off = TrainConfig(seed=seed, self_modulated=False)
        t_on, z_on, _ = train(dataset, cfg_on)
        t_off, z_off, _ = train(dataset, cfg_off)
        loss_on = dataset_loss(dataset, t_on, z_on, cfg_on)
        loss_off = dataset_loss(dataset, t_off, z_off, cfg_off)
        assert loss_on <= loss_off, f"seed {seed}: {loss_on} > {loss_off}"


def test_consensus_routing():
    """Routing equals the brute-force rule; discard drops the entire set."""

    def brute(rankings):
        tops = [r.order[0] for r in rankings.values()]
        return tops[0] if len(set(tops)) == 1 else "human"

    perms3 = list(itertools.permutations(range(3)))
    for p1 in perms3:
        for p2 in perms3:
            rankings = {"a": Ranking(p1), "b": Ranking(p2)}
            outcome = consensus_route(rankings)
            expected = brute(rankings)
            if expected == "human":
                assert outcome.kind == "needs_human"
            else:
                assert outcome.kind == "auto_accepted" and outcome.index == expected

    perms4 = list(itertools.permutations(range(4)))
    rng = np.random.default_rng(1)
    for _ in range(10_000):
        rankings = {
            "a": Ranking(perms4[rng.integers(len(perms4))]),
            "b": Ranking(perms4[rng.integers(len(perms4))]),
        }
        outcome = consensus_route(rankings)
        expected = brute(rankings)
        assert (outcome.kind == "needs_human") == (expected == "human")
        if expected != "human":
            assert outcome.index == expected

    # a discarded review contributes nothing to the dataset
    cfg = DataFreeConfig(train_cfg=TrainConfig(seed=5, epochs=1, t_frames=3))
    state = DataFreeState(
        thetas=init_chain_params(cfg.train_cfg), zs=init_modulation(cfg.train_cfg.chain)
    )
    cand = generate_candidates(
        state.thetas, state.zs, enhance_prompt(synthesize_prompts(5, 1)[0]), cfg, 99
    )
    item = datafree.ReviewItem(item_id="review-acc", candidate_set=cand)
    resolve_review(item, Resolution("discarded"))
    assert record_from_resolution(item, 1) is None


def test_datafree_bounds_and_selection_pressure():
    """N=3, S=16, AutoOracle: bounded dataset, oracle-ward selection, full report."""
    cfg = DataFreeConfig(
        iterations=3, prompts_per_iter=16, hitl_mode=HitlMode.AUTO_ORACLE,
        train_cfg=TrainConfig(seed=99),
    )
    thetas, zs, report = datafree.datafree_train(cfg)
    assert report["total_records"] <= 3 * 16
    assert len(report["iterations"]) == 3
    for entry in report["iterations"]:
        assert entry["dataset_size"] <= 16
        assert {"iteration", "dataset_size", "routes", "skipped", "history"} <= set(entry)
        assert {"auto_accepted", "human_accepted", "discarded", "escalated"} == set(
            entry["routes"]
        )
        assert not entry["skipped"] and entry["history"]

    # selection pressure over iteration 1, regenerated deterministically
    state = DataFreeState(
        thetas=init_chain_params(cfg.train_cfg),
        zs=init_modulation(cfg.train_cfg.chain),
    )
    records, _ = run_iteration(state, cfg, 1)
    accepted, non_selected = [], []
    for s_idx, raw in enumerate(synthesize_prompts(datafree.prompt_seed(cfg, 1), 16)):
        prompt = enhance_prompt(raw)
        cand = generate_candidates(
            state.thetas, state.zs, prompt, cfg, datafree.set_seed(cfg, 1, s_idx)
        )
        record = next(r for r in records if r.provenance["set_id"] == cand.set_id)
        for c in cand.candidates:
            (accepted if c == record.video else non_selected).append(
                selfmod.loss_mse(c, cand.target)
            )
        assert any(record.video == c for c in cand.candidates)
    assert np.mean(accepted) < np.mean(non_selected)


def test_hitl_retry_cap():
    """10k random decision sequences never push any retry count past 3."""
    system = pl.default_system(3)
    rng = np.random.default_rng(7)
    decisions = [
        pl.HumanDecision.APPROVE,
        pl.HumanDecision.RETRY,
        pl.HumanDecision.ROUTE_TO_EDIT,
        pl.HumanDecision.ABORT,
    ]
    exhausted_seen = 0
    for _ in range(10_000):
        run = pl.create_run(
            pl.TaskKind.TEXT_TO_VIDEO,
            pl.RunInputs(prompt="blob"),
            pl.PipelineConfig(seed=int(rng.integers(2**32)), t_frames=2),
        )
        for _ in range(int(rng.integers(1, 9))):
            if run.status == pl.RunStatus.RUNNING:
                pl.execute_stage(run, *system)
            if run.status != pl.RunStatus.AWAITING_DECISION:
                break
            # bias towards retries so the cap actually gets hammered
            decision = decisions[int(rng.choice([0, 1, 1, 1, 2, 3]))]
            try:
                pl.apply_decision(run, run.stage, decision)
            except RetryExhausted:
                exhausted_seen += 1
                assert run.status == pl.RunStatus.FAILED
            except WrongStage:
                pass
            assert all(c <= 3 for c in run.retry_counts.values())
        assert all(c <= 3 for c in run.retry_counts.values())
    assert exhausted_seen > 0  # the 4th retry path was actually exercised

    # deterministic check: the 4th retry always reports exhaustion
    run = pl.create_run(
        pl.TaskKind.TEXT_TO_VIDEO, pl.RunInputs(prompt="blob"), pl.PipelineConfig(seed=1)
    )
    pl.execute_stage(run, *system)
    for _ in range(3):
        pl.apply_decision(run, run.stage, pl.HumanDecision.RETRY)
        pl.execute_stage(run, *system)
    with pytest.raises(RetryExhausted):
        pl.apply_decision(run, run.stage, pl.HumanDecision.RETRY)


def test_metric_identities():
    """tcon/tmean/VideoTI/dynamic-degree/smoothness identities at tolerance."""
    for seed in range(10):
        v = blob_video(seed)
        assert abs(tcon(v, v) - 1.0) <= 1e-9

    prev, mid, nxt = blob_video(11), blob_video(12), blob_video(13)
    assert tmean(prev, mid, nxt) == pytest.approx(tmean(nxt, mid, prev), abs=1e-12)

    for seed in range(100):
        v = blob_video(seed + 500, t=3)
        frame = v.frames[0] if seed % 2 else None
        value = video_ti(f"case {seed}", frame, v)
        assert -1.0 <= value <= 1.0

    static = Video.from_array(np.full((5, 8, 8), 0.3, dtype=np.float32))
    assert dynamic_degree(static) == 0.0

    alternating = np.empty((6, 8, 8), dtype=np.float32)
    alternating[0::2] = 1.0
    alternating[1::2] = -1.0
    assert motion_smoothness(Video.from_array(alternating)) == 0.0

    base = np.linspace(-0.4, 0.4, 64, dtype=np.float32).reshape(8, 8)
    ramp = np.stack([base + 0.05 * t for t in range(6)]).astype(np.float32)
    assert motion_smoothness(Video.from_array(ramp)) == pytest.approx(1.0, abs=1e-7)


def test_task_semantics():
    """Extend/connect/digital-world behaviours forced by the task definitions."""
    system = pl.default_system(17)

    source = blob_video(21, t=5)
    run = pl.auto_run(
        pl.create_run(
            pl.TaskKind.EXTEND_VIDEO, pl.RunInputs(videos=(source,)), pl.PipelineConfig(seed=2)
        ),
        *system,
    )
    extended = pl.final_artifact(run)
    assert extended.frames[0].pixels.tobytes() == last_frame(source).pixels.tobytes()

    v1, v2 = blob_video(22, t=3), blob_video(23, t=4)
    run = pl.auto_run(
        pl.create_run(
            pl.TaskKind.CONNECT_VIDEOS,
            pl.RunInputs(videos=(v1, v2)),
            pl.PipelineConfig(seed=3, m_frames=2),
        ),
        *system,
    )
    assert pl.final_artifact(run).t == 3 + 2 + 4

    run = pl.create_run(
        pl.TaskKind.SIMULATE_DIGITAL_WORLD,
        pl.RunInputs(prompt="a pixel city"),
        pl.PipelineConfig(seed=4),
    )
    pl.execute_stage(run, *system)
    assert DIGITAL_STYLE_SUFFIX in run.artifacts[pl.StageId.ENHANCE].text
    assert DIGITAL_STYLE_SUFFIX == "In digital world style"


def test_bit_exact_persistence_and_replay(tmp_path):
    """TVID, checkpoint, resume, and seeded CLI runs are all bit-exact."""
    video = blob_video(31, t=6)
    assert store.parse_tvid(store.tvid_bytes(video)) == video

    cfg1 = TrainConfig(seed=77, epochs=1, t_frames=4)
    cfg2 = TrainConfig(seed=77, epochs=2, t_frames=4)
    dataset = make_oracle_dataset(77, 6, 4)
    t_a, z_a, _ = train(dataset, cfg1)
    store.write_checkpoint(t_a, z_a, {"iteration": 0, "epoch": 1, "seed": 77}, tmp_path / "ck")
    t_l, z_l, _ = store.read_checkpoint(tmp_path / "ck")
    t_resumed, z_resumed, _ = train(dataset, cfg1, thetas=t_l, zs=z_l)
    t_straight, z_straight, _ = train(dataset, cfg2)
    for role in cfg2.chain:
        for name in t_straight[role].tensors:
            assert (
                t_resumed[role].tensors[name].tobytes()
                == t_straight[role].tensors[name].tobytes()
            )
        assert z_resumed[role].tobytes() == z_straight[role].tobytes()

    outs = []
    for name in ("r1.tvid", "r2.tvid"):
        path = tmp_path / name
        result = subprocess.run(
            [
                sys.executable, "-m", "sopforge.cli", "run", "--task", "text_to_video",
                "--prompt", "blob", "--auto", "--seed", "7", "--out", str(path),
            ],
            capture_output=True, text=True, timeout=120,
        )
        assert result.returncode == 0, result.stderr
        outs.append(path.read_bytes())
    assert outs[0] == outs[1]


def test_prng_hash_conformance():
    """splitmix64 and FNV-1a match published reference vectors."""
    assert hash_text("") == 0xCBF29CE484222325
    assert hash_text("a") == 0xAF63DC4C8601EC8C
    assert hash_text("foobar") == 0x85944171F73967E8
    assert hash_text("[Mod]") == fnv1a_reference("[Mod]")

    assert rng_u64(0, 3) == [0xE220A8397B1DCDAF, 0x6E789E6AA1B965F4, 0x06C45D188009454F]
    assert rng_u64(1234567, 5) == [
        6457827717110365317,
        3203168211198807973,
        9817491932198370423,
        4593380528125082431,
        16408922859458223821,
    ]
    assert list(rng_stream(1, 4)) == floats_reference(1, 4)


def test_api_robustness():
    """Every documented error code is reachable; fuzzed bodies never 500."""
    with TestClient(create_app()) as client:
        reachable = {}

        r = client.post("/v1/runs", json={"task": "connect_videos"})
        reachable["input_mismatch"] = (r.status_code, r.json()["error"]["code"])
        r = client.post("/v1/runs", json={"task": "text_to_video", "prompt": " "})
        reachable["empty_prompt"] = (r.status_code, r.json()["error"]["code"])

        run = client.post("/v1/runs", json={"task": "text_to_video", "prompt": "x"}).json()
        rid = run["run_id"]
        r = client.post(
            f"/v1/runs/{rid}/decision", json={"stage": "generate_video", "decision": "approve"}
        )
        reachable["wrong_stage"] = (r.status_code, r.json()["error"]["code"])
        for _ in range(3):
            client.post(f"/v1/runs/{rid}/decision", json={"stage": "enhance", "decision": "retry"})
        r = client.post(f"/v1/runs/{rid}/decision", json={"stage": "enhance", "decision": "retry"})
        reachable["retry_exhausted"] = (r.status_code, r.json()["error"]["code"])
        r = client.post(f"/v1/runs/{rid}/decision", json={"stage": "enhance", "decision": "approve"})
        reachable["not_awaiting"] = (r.status_code, r.json()["error"]["code"])

        r = client.get("/v1/runs/run-999999")
        reachable["unknown_run"] = (r.status_code, r.json()["error"]["code"])
        r = client.post("/v1/review/review-999999", json={"select": 0})
        reachable["unknown_item"] = (r.status_code, r.json()["error"]["code"])
        r = client.get("/v1/training/train-9999")
        reachable["unknown_training"] = (r.status_code, r.json()["error"]["code"])
        r = client.get("/v1/artifacts/missing")
        reachable["unknown_artifact"] = (r.status_code, r.json()["error"]["code"])
        r = client.post("/v1/training", json={"iterations": -1})
        reachable["bad_config"] = (r.status_code, r.json()["error"]["code"])
        r = client.post("/v1/runs", content="{]", headers={"Content-Type": "application/json"})
        reachable["bad_request"] = (r.status_code, r.json()["error"]["code"])

        expected = {
            "input_mismatch": 400,
            "empty_prompt": 422,
            "wrong_stage": 409,
            "retry_exhausted": 409,
            "not_awaiting": 409,
            "unknown_run": 404,
            "unknown_item": 404,
            "unknown_training": 404,
            "unknown_artifact": 404,
            "bad_config": 400,
            "bad_request": 400,
        }
        for code, status in expected.items():
            observed_status, observed_code = reachable[code]
            assert observed_code == code, f"{code}: got {observed_code}"
            assert observed_status == status, f"{code}: got HTTP {observed_status}"

        # already_resolved and bad_index need a pending review; exercised via the
        # review endpoints in the server suite. Here: fuzz for 500s.
        rng = np.random.default_rng(3)
        for _ in range(200):
            junk = bytes(rng.integers(0, 256, size=int(rng.integers(0, 80)))).decode("latin1")
            endpoint = ["/v1/runs", "/v1/training", f"/v1/runs/{rid}/decision"][
                int(rng.integers(3))
            ]
            r = client.post(endpoint, content=junk, headers={"Content-Type": "application/json"})
            assert r.status_code < 500, (endpoint, junk[:20], r.status_code)
