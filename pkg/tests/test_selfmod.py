import numpy as np
import pytest

from sopforge.agents import AgentId
from sopforge.core import Video
from sopforge.errors import (
    DimensionMismatch,
    EmptyDataset,
    InvalidCount,
    InvalidN,
)
from sopforge.selfmod import (
    DEFAULT_CHAIN,
    THREE_AGENT_CHAIN,
    GradientSet,
    TrainConfig,
    TrainSample,
    backward_chain,
    dataset_loss,
    forward_chain,
    gradient_check,
    init_chain_params,
    init_modulation,
    loss_mse,
    make_oracle_dataset,
    modulation_factor,
    sgd_step,
    train,
)
from sopforge.toyworld import MODULATION_TOKEN, embed_text

from reference_oracles import mse_reference


def small_cfg(**kw) -> TrainConfig:
    defaults = dict(seed=7, epochs=2, t_frames=4)
    defaults.update(kw)
    return TrainConfig(**defaults)


class TestInitModulation:
    def test_two_agent_chain(self):
        zs = init_modulation(DEFAULT_CHAIN)
        assert set(zs) == {AgentId.TEXT_TO_IMAGE, AgentId.IMAGE_TO_VIDEO}
        assert not np.array_equal(zs[AgentId.TEXT_TO_IMAGE], zs[AgentId.IMAGE_TO_VIDEO])

    def test_deterministic(self):
        a = init_modulation(DEFAULT_CHAIN)
        b = init_modulation(DEFAULT_CHAIN)
        for role in a:
            assert a[role].tobytes() == b[role].tobytes()

    def test_values_are_token_embeddings(self):
        zs = init_modulation(DEFAULT_CHAIN, dtype=np.float64)
        for role in zs:
            assert np.array_equal(zs[role], embed_text(int(role), MODULATION_TOKEN))

    def test_norms_positive(self):
        for z in init_modulation(THREE_AGENT_CHAIN).values():
            assert float(np.linalg.norm(z)) > 0.0

    def test_empty_chain_rejected(self):
        with pytest.raises(InvalidCount):
            init_modulation([])


class TestForwardChain:
    def test_default_chain_output_shapes(self):
        cfg = small_cfg()
        sample = make_oracle_dataset(1, 1, cfg.t_frames)[0]
        outputs, cache = forward_chain(init_chain_params(cfg), init_modulation(cfg.chain), sample, cfg)
        assert len(outputs) == 2
        assert outputs[-1].t == cfg.t_frames
        assert len(cache.steps) == 2

    def test_three_agent_chain(self):
        cfg = small_cfg(chain=THREE_AGENT_CHAIN)
        sample = make_oracle_dataset(2, 1, cfg.t_frames)[0]
        outputs, cache = forward_chain(init_chain_params(cfg), init_modulation(cfg.chain), sample, cfg)
        assert len(outputs) == 3 and outputs[-1].t == cfg.t_frames

    def test_first_video_frame_is_t2i_output(self):
        cfg = small_cfg()
        sample = make_oracle_dataset(3, 1, cfg.t_frames)[0]
        outputs, _ = forward_chain(init_chain_params(cfg), init_modulation(cfg.chain), sample, cfg)
        assert outputs[1].frames[0] == outputs[0]


class TestLossMse:
    def test_identical_zero(self):
        v = make_oracle_dataset(4, 1, 3)[0].target
        assert loss_mse(v, v) == 0.0

    def test_zeros_vs_ones(self):
        zeros = Video.from_array(np.zeros((2, 8, 8), dtype=np.float32))
        ones = Video.from_array(np.ones((2, 8, 8), dtype=np.float32))
        assert loss_mse(zeros, ones) == 1.0

    def test_matches_elementwise_oracle(self):
        a = make_oracle_dataset(5, 1, 3)[0].target
        b = make_oracle_dataset(6, 1, 3)[0].target
        expected = mse_reference(
            [float(x) for x in a.to_array().ravel()],
            [float(x) for x in b.to_array().ravel()],
        )
        assert loss_mse(a, b) == pytest.approx(expected, rel=1e-12)

    def test_shape_mismatch(self):
        a = make_oracle_dataset(5, 1, 3)[0].target
        b = make_oracle_dataset(5, 1, 4)[0].target
        with pytest.raises(DimensionMismatch):
            loss_mse(a, b)


class TestBackwardChain:
    def test_zero_gradients_at_minimum(self):
        cfg = small_cfg()
        thetas = init_chain_params(cfg)
        zs = init_modulation(cfg.chain)
        sample = make_oracle_dataset(7, 1, cfg.t_frames)[0]
        outputs, cache = forward_chain(thetas, zs, sample, cfg)
        grads = backward_chain(cache, outputs[-1])  # target == own output
        for role in cfg.chain:
            for g in grads.d_theta[role].values():
                assert np.allclose(g, 0.0)
            assert np.allclose(grads.d_z[role], 0.0)

    def test_first_agent_modulation_gets_cross_chain_gradient(self):
        cfg = small_cfg()
        thetas = init_chain_params(cfg)
        zs = init_modulation(cfg.chain)
        sample = make_oracle_dataset(8, 1, cfg.t_frames)[0]
        _, cache = forward_chain(thetas, zs, sample, cfg)
        grads = backward_chain(cache, sample.target)
        # loss touches only the final video, yet z of the first agent moves
        assert float(np.max(np.abs(grads.d_z[AgentId.TEXT_TO_IMAGE]))) > 0.0


class TestModulationFactor:
    def test_three_four_five(self):
        z = np.zeros(16)
        z[0], z[1] = 0.6, 0.8
        assert modulation_factor(z, 2) == pytest.approx(0.5)

    def test_zero_vector(self):
        assert modulation_factor(np.zeros(16), 3) == 0.0

    def test_homogeneous_scaling(self):
        z = np.arange(16, dtype=np.float64) / 16.0
        assert modulation_factor(3.0 * z, 4) == pytest.approx(3.0 * modulation_factor(z, 4))

    def test_invalid_n(self):
        with pytest.raises(InvalidN):
            modulation_factor(np.ones(16), 0)


def _zero_grads(cfg: TrainConfig, thetas) -> GradientSet:
    return GradientSet(
        d_theta={
            r: {name: np.zeros_like(t) for name, t in thetas[r].tensors.items()}
            for r in cfg.chain
        },
        d_z={r: np.zeros(16, dtype=cfg.dtype) for r in cfg.chain},
    )


class TestSgdStep:
    def test_zero_gradients_change_nothing(self):
        cfg = small_cfg()
        thetas = init_chain_params(cfg)
        zs = init_modulation(cfg.chain)
        new_thetas, new_zs = sgd_step(thetas, zs, _zero_grads(cfg, thetas), cfg)
        for r in cfg.chain:
            for name in thetas[r].tensors:
                assert np.array_equal(new_thetas[r].tensors[name], thetas[r].tensors[name])
            assert np.array_equal(new_zs[r], zs[r])

    def test_zeroed_modulation_freezes_theta(self):
        # choose d_z so the updated z is exactly zero: alpha = 0, theta untouched
        cfg = small_cfg(eta_z=1.0)
        thetas = init_chain_params(cfg)
        zs = init_modulation(cfg.chain)
        grads = _zero_grads(cfg, thetas)
        role = AgentId.TEXT_TO_IMAGE
        grads.d_z[role] = zs[role].copy()  # z - 1.0 * z = 0
        grads.d_theta[role] = {
            name: np.ones_like(t) for name, t in thetas[role].tensors.items()
        }
        new_thetas, new_zs = sgd_step(thetas, zs, grads, cfg)
        assert np.all(new_zs[role] == 0.0)
        for name in thetas[role].tensors:
            assert np.array_equal(new_thetas[role].tensors[name], thetas[role].tensors[name])

    def test_hand_case_alpha_half(self):
        # z' = (0.6, 0.8, 0...), n=2 -> alpha = 0.5; eta_theta = 0.1 -> step 0.05
        cfg = small_cfg(eta_theta=0.1, eta_z=0.0)
        thetas = init_chain_params(cfg)
        zs = init_modulation(cfg.chain)
        for r in cfg.chain:
            z = np.zeros(16, dtype=cfg.dtype)
            z[0], z[1] = 0.6, 0.8
            zs[r] = z
        grads = _zero_grads(cfg, thetas)
        for r in cfg.chain:
            grads.d_theta[r] = {
                name: np.ones_like(t) for name, t in thetas[r].tensors.items()
            }
        new_thetas, _ = sgd_step(thetas, zs, grads, cfg)
        for r in cfg.chain:
            for name in thetas[r].tensors:
                delta = thetas[r].tensors[name] - new_thetas[r].tensors[name]
                assert np.allclose(delta, 0.05, atol=1e-7)

    def test_alpha_uses_post_update_z(self):
        # two scenarios identical except d_z: theta steps must differ exactly by
        # the ratio of post-update norms, proving alpha reads the updated z
        cfg = small_cfg(eta_z=1.0, eta_theta=1.0)
        thetas = init_chain_params(cfg)
        zs = init_modulation(cfg.chain)
        role = AgentId.TEXT_TO_IMAGE
        other = AgentId.IMAGE_TO_VIDEO

        def run_with_dz(scale: float):
            grads = _zero_grads(cfg, thetas)
            grads.d_z[role] = zs[role] * np.float32(scale)
            grads.d_theta[role] = {
                name: np.ones_like(t) for name, t in thetas[role].tensors.items()
            }
            grads.d_theta[other] = {
                name: np.zeros_like(t) for name, t in thetas[other].tensors.items()
            }
            new_thetas, new_zs = sgd_step(thetas, zs, grads, cfg)
            delta = thetas[role].tensors["b2"] - new_thetas[role].tensors["b2"]
            return float(delta[0]), float(np.linalg.norm(new_zs[role]))

        step_a, norm_a = run_with_dz(0.5)   # halves z
        step_b, norm_b = run_with_dz(0.75)  # quarters z
        n = len(cfg.chain)
        assert step_a == pytest.approx(norm_a / n, rel=1e-5)
        assert step_b == pytest.approx(norm_b / n, rel=1e-5)
        assert step_a > step_b  # smaller surviving z => smaller theta step


class TestTrain:
    def test_requires_dataset(self):
        with pytest.raises(EmptyDataset):
            train([], small_cfg())

    def test_epochs_must_be_positive(self):
        with pytest.raises(InvalidCount):
            TrainConfig(epochs=0)

    def test_perfect_targets_keep_loss_zero(self):
        cfg = small_cfg(epochs=3)
        thetas = init_chain_params(cfg)
        zs = init_modulation(cfg.chain)
        base = make_oracle_dataset(11, 1, cfg.t_frames)[0]
        outputs, _ = forward_chain(thetas, zs, base, cfg)
        sample = TrainSample(prompt=base.prompt, target=outputs[-1])
        _, _, history = train([sample], cfg, thetas=thetas, zs=zs)
        assert all(rec["loss"] == 0.0 for rec in history)

    def test_halves_loss_on_oracle_dataset(self):
        cfg = TrainConfig(seed=42)
        dataset = make_oracle_dataset(42, 16, cfg.t_frames)
        thetas = init_chain_params(cfg)
        zs = init_modulation(cfg.chain)
        initial = dataset_loss(dataset, thetas, zs, cfg)
        new_thetas, new_zs, _ = train(dataset, cfg, thetas=thetas, zs=zs)
        final = dataset_loss(dataset, new_thetas, new_zs, cfg)
        assert final < 0.5 * initial

    def test_bit_identical_reruns(self):
        cfg = small_cfg(epochs=3)
        dataset = make_oracle_dataset(12, 6, cfg.t_frames)
        t1, z1, h1 = train(dataset, cfg)
        t2, z2, h2 = train(dataset, cfg)
        assert h1 == h2
        for r in cfg.chain:
            for name in t1[r].tensors:
                assert t1[r].tensors[name].tobytes() == t2[r].tensors[name].tobytes()
            assert z1[r].tobytes() == z2[r].tobytes()

    def test_history_structure(self):
        cfg = small_cfg(epochs=2, batch_size=4)
        dataset = make_oracle_dataset(13, 6, cfg.t_frames)
        _, _, history = train(dataset, cfg)
        assert len(history) == 2 * 2  # two epochs x two batches (6 samples, B=4)
        for rec in history:
            assert set(rec) == {"epoch", "batch", "loss", "alpha"}
            assert set(rec["alpha"]) == {"2", "4"}

    def test_mostly_monotone_at_small_lr(self):
        cfg = TrainConfig(seed=3, epochs=100, batch_size=1, eta_theta=1e-3, eta_z=1e-3, t_frames=4)
        dataset = make_oracle_dataset(14, 1, cfg.t_frames)
        _, _, history = train(dataset, cfg)
        losses = [rec["loss"] for rec in history]
        non_increasing = sum(1 for a, b in zip(losses, losses[1:]) if b <= a + 1e-12)
        assert non_increasing >= 0.95 * (len(losses) - 1)

    def test_self_modulated_beats_fixed_alpha(self):
        for seed in (1, 2, 3):
            dataset = make_oracle_dataset(seed, 16, 6)
            cfg_on = TrainConfig(seed=seed)
            cfg_off = TrainConfig(seed=seed, self_modulated=False)
            t_on, z_on, _ = train(dataset, cfg_on)
            t_off, z_off, _ = train(dataset, cfg_off)
            assert dataset_loss(dataset, t_on, z_on, cfg_on) <= dataset_loss(
                dataset, t_off, z_off, cfg_off
            )

    def test_frozen_z_under_ablation(self):
        cfg = small_cfg(self_modulated=False)
        dataset = make_oracle_dataset(15, 4, cfg.t_frames)
        zs = init_modulation(cfg.chain)
        _, new_zs, history = train(dataset, cfg, zs=zs)
        for r in cfg.chain:
            assert np.array_equal(new_zs[r], zs[r])
        assert all(rec["alpha"] == {"2": 0.5, "4": 0.5} for rec in history)


class TestGradientCheck:
    def test_two_agent_chain(self):
        assert gradient_check(TrainConfig(seed=7), 1e-4) < 1e-4

    def test_three_agent_chain(self):
        assert gradient_check(TrainConfig(seed=7, chain=THREE_AGENT_CHAIN), 1e-4) < 1e-4

    def test_epsilon_scaling_sane(self):
        small = gradient_check(TrainConfig(seed=9, t_frames=3), 1e-4)
        large = gradient_check(TrainConfig(seed=9, t_frames=3), 1e-2)
        assert np.isfinite(small) and np.isfinite(large)

    def test_bad_epsilon(self):
        with pytest.raises(InvalidCount):
            gradient_check(TrainConfig(), 0.0)
