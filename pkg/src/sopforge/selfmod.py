"""Self-modulated end-to-end fine-tuning of the agent chain.

Each chain agent i carries a 16-float modulation embedding z_i, initialised
from that agent's embedding of the modulation token. Per batch the update
schedule is, per agent and in this order:

    1. z_i  <- z_i - eta_z * dL/dz_i
    2. alpha_i = ||z_i||_2 / n        (from the *updated* z_i)
    3. theta_i <- theta_i - alpha_i * eta_theta * dL/dtheta_i

The loss is the batch mean of per-sample MSE between the chain's final video
and the target video; gradients are exact reverse-mode through every agent,
with the text-embedding half of each augmented input treated as a frozen
feature (only the modulation half is trainable).
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from . import agents
from .agents import AgentId, AgentParams, make_augmented
from .core import EnhancedPrompt, Video
from .errors import (
    CacheIncomplete,
    DimensionMismatch,
    EmptyDataset,
    InvalidCount,
    InvalidN,
    ShapeMismatch,
)
from .toyworld import (
    MODULATION_TOKEN,
    Seed64,
    derive_seed,
    embed_text,
    enhance_prompt,
    oracle_target,
    synthesize_prompts,
)

DEFAULT_CHAIN = (AgentId.TEXT_TO_IMAGE, AgentId.IMAGE_TO_VIDEO)
THREE_AGENT_CHAIN = (AgentId.TEXT_TO_IMAGE, AgentId.IMAGE_TO_IMAGE, AgentId.IMAGE_TO_VIDEO)

ThetaMap = dict[AgentId, AgentParams]
ZMap = dict[AgentId, np.ndarray]


@dataclass
class TrainConfig:
    batch_size: int = 4
    epochs: int = 50
    eta_theta: float | dict[AgentId, float] = 0.05
    eta_z: float | dict[AgentId, float] = 0.01
    t_frames: int = 6
    chain: tuple[AgentId, ...] = DEFAULT_CHAIN
    seed: Seed64 = 0
    shuffle: bool = False
    self_modulated: bool = True  # False: frozen z, fixed alpha = 1/n (ablation arm)
    alpha_max: float | None = None  # numerical guard, off by default
    dtype: type = np.float32

    def __post_init__(self):
        if self.batch_size < 1:
            raise InvalidCount("batch_size must be >= 1")
        if self.epochs < 1:
            raise InvalidCount("epochs must be >= 1")
        if self.t_frames < 1:
            raise InvalidCount("t_frames must be >= 1")
        chain = tuple(AgentId(a) for a in self.chain)
        if not chain:
            raise InvalidCount("chain must be nonempty")
        if chain[0] != AgentId.TEXT_TO_IMAGE:
            raise InvalidCount("chain must start with the text-to-image agent")
        if chain[-1] != AgentId.IMAGE_TO_VIDEO:
            raise InvalidCount("chain must end with the image-to-video agent")
        for mid in chain[1:-1]:
            if mid != AgentId.IMAGE_TO_IMAGE:
                raise InvalidCount("only the image-to-image agent may sit mid-chain")
        self.chain = chain

    def eta_theta_for(self, agent: AgentId) -> float:
        if isinstance(self.eta_theta, dict):
            return float(self.eta_theta[agent])
        return float(self.eta_theta)

    def eta_z_for(self, agent: AgentId) -> float:
        if isinstance(self.eta_z, dict):
            return float(self.eta_z[agent])
        return float(self.eta_z)


@dataclass(frozen=True)
class TrainSample:
    prompt: EnhancedPrompt
    target: Video


@dataclass
class ChainStep:
    role: AgentId
    aug: np.ndarray
    inputs: dict
    output: np.ndarray  # flat (64,) or (T, 64)
    vjp: object


@dataclass
class ChainCache:
    chain: tuple[AgentId, ...]
    steps: list[ChainStep] = field(default_factory=list)

    def validate(self):
        if len(self.steps) != len(self.chain):
            raise CacheIncomplete(
                f"cache has {len(self.steps)} steps for a chain of {len(self.chain)}"
            )


@dataclass
class GradientSet:
    d_theta: dict[AgentId, dict[str, np.ndarray]]
    d_z: dict[AgentId, np.ndarray]


def init_modulation(chain: tuple[AgentId, ...] | list[AgentId], dtype=np.float32) -> ZMap:
    """z_i = embedding of the modulation token under agent i's embedder."""
    if not chain:
        raise InvalidCount("chain must be nonempty")
    return {
        AgentId(a): embed_text(int(a), MODULATION_TOKEN).astype(dtype)
        for a in chain
    }


def init_chain_params(cfg: TrainConfig) -> ThetaMap:
    """Fresh per-agent parameters, seeded per (cfg.seed, agent)."""
    return {
        a: agents.init_params(a, derive_seed(cfg.seed, "theta", int(a)), dtype=cfg.dtype)
        for a in cfg.chain
    }


def forward_chain(thetas: ThetaMap, zs: ZMap, sample: TrainSample, cfg: TrainConfig):
    """Run the agent chain on one sample; returns (domain outputs, cache)."""
    cache = ChainCache(chain=cfg.chain)
    outputs = []
    carry: np.ndarray | None = None  # flat frame handed to the next agent
    for role in cfg.chain:
        params = thetas[role]
        e = embed_text(int(role), sample.prompt.text)
        aug = make_augmented(e, zs[role], dtype=params.dtype)
        if role == AgentId.TEXT_TO_IMAGE:
            inputs = {"aug": aug}
        elif role == AgentId.IMAGE_TO_IMAGE:
            inputs = {"aug": aug, "frame": carry}
        else:  # IMAGE_TO_VIDEO
            inputs = {"aug": aug, "frame": carry, "t_frames": cfg.t_frames}
        out, vjp = agents.forward_jacobians(role, params, inputs)
        cache.steps.append(ChainStep(role, aug, inputs, out, vjp))
        if out.ndim == 1:
            carry = out
            outputs.append(agents.frame_from_flat(out))
        else:
            outputs.append(Video.from_array(out.reshape(out.shape[0], 8, 8)))
    return outputs, cache


def loss_mse(output: Video, target: Video) -> float:
    """Mean squared error over all T*H*W entries."""
    if (output.t, output.height, output.width) != (target.t, target.height, target.width):
        raise DimensionMismatch("output and target videos differ in shape")
    a = output.to_array().astype(np.float64)
    b = target.to_array().astype(np.float64)
    return float(np.mean((a - b) ** 2))


def _raw_chain_loss(thetas: ThetaMap, zs: ZMap, sample: TrainSample, cfg: TrainConfig) -> float:
    """Loss on the raw final chain array, bypassing the float32 Frame container.

    Needed by the finite-difference harness: in float64 mode the domain types
    would quantize outputs to float32 and swamp the difference quotient.
    """
    _, cache = forward_chain(thetas, zs, sample, cfg)
    out = cache.steps[-1].output
    tgt = sample.target.to_array().reshape(out.shape)
    return float(np.mean((out.astype(np.float64) - tgt.astype(np.float64)) ** 2))


def backward_chain(cache: ChainCache, target: Video) -> GradientSet:
    """Exact reverse-mode gradients of one sample's MSE w.r.t. every theta and z."""
    cache.validate()
    last = cache.steps[-1]
    out = last.output
    if out.ndim != 2:
        raise CacheIncomplete("final chain output must be a video")
    tgt = target.to_array().reshape(out.shape)
    dtype = out.dtype
    # d MSE / d out
    g = (2.0 / out.size) * (out.astype(np.float64) - tgt.astype(np.float64))
    g = g.astype(dtype)

    d_theta: dict[AgentId, dict[str, np.ndarray]] = {}
    d_z: dict[AgentId, np.ndarray] = {}
    upstream: np.ndarray = g
    for step in reversed(cache.steps):
        parts = step.vjp(upstream)
        d_theta[step.role] = parts["tensors"]
        d_z[step.role] = parts["aug"][16:].copy()
        upstream = parts.get("frame")
    return GradientSet(d_theta=d_theta, d_z=d_z)


def modulation_factor(z: np.ndarray, n: int) -> float:
    """alpha = ||z||_2 / n."""
    if n < 1:
        raise InvalidN("n must be >= 1")
    z = np.asarray(z, dtype=np.float64).reshape(-1)
    return float(np.sqrt(np.dot(z, z)) / n)


def sgd_step(thetas: ThetaMap, zs: ZMap, grads: GradientSet, cfg: TrainConfig):
    """One update of every chain agent, z before alpha before theta."""
    n = len(cfg.chain)
    new_thetas: ThetaMap = {}
    new_zs: ZMap = {}
    for role in cfg.chain:
        params = thetas[role]
        z = zs[role]
        dz = grads.d_z.get(role)
        dth = grads.d_theta.get(role)
        if dz is None or dth is None:
            raise ShapeMismatch(f"gradients missing for agent {role.name}")
        if dz.shape != z.shape:
            raise ShapeMismatch("modulation gradient shape mismatch")
        if cfg.self_modulated:
            z = z - z.dtype.type(cfg.eta_z_for(role)) * dz.astype(z.dtype)
            alpha = modulation_factor(z, n)
            if cfg.alpha_max is not None:
                alpha = min(alpha, cfg.alpha_max)
        else:
            alpha = 1.0 / n
        scale = params.dtype.type(alpha * cfg.eta_theta_for(role))
        tensors = {}
        for name, tensor in params.tensors.items():
            grad = dth[name]
            if grad.shape != tensor.shape:
                raise ShapeMismatch(f"gradient shape mismatch for {role.name}.{name}")
            tensors[name] = tensor - scale * grad.astype(tensor.dtype)
        new_thetas[role] = AgentParams(role, tensors)
        new_zs[role] = z
    return new_thetas, new_zs


def current_alphas(zs: ZMap, cfg: TrainConfig) -> dict[AgentId, float]:
    n = len(cfg.chain)
    if not cfg.self_modulated:
        return {role: 1.0 / n for role in cfg.chain}
    return {role: modulation_factor(zs[role], n) for role in cfg.chain}


def _average_grads(per_sample: list[GradientSet], cfg: TrainConfig) -> GradientSet:
    """Mean gradient, summed in fixed index order for bit-stable results."""
    count = len(per_sample)
    inv = 1.0 / count
    d_theta: dict[AgentId, dict[str, np.ndarray]] = {}
    d_z: dict[AgentId, np.ndarray] = {}
    for role in cfg.chain:
        acc = {name: g.copy() for name, g in per_sample[0].d_theta[role].items()}
        for gs in per_sample[1:]:
            for name, g in gs.d_theta[role].items():
                acc[name] += g
        d_theta[role] = {name: (g * g.dtype.type(inv)) for name, g in acc.items()}
        zacc = per_sample[0].d_z[role].copy()
        for gs in per_sample[1:]:
            zacc += gs.d_z[role]
        d_z[role] = zacc * zacc.dtype.type(inv)
    return GradientSet(d_theta=d_theta, d_z=d_z)


def _batches(n_samples: int, cfg: TrainConfig, epoch: int) -> list[list[int]]:
    order = list(range(n_samples))
    if cfg.shuffle:
        from .toyworld import rng_u64

        keys = rng_u64(derive_seed(cfg.seed, "shuffle", epoch), n_samples)
        order = [i for _, i in sorted(zip(keys, order))]
    return [order[i : i + cfg.batch_size] for i in range(0, n_samples, cfg.batch_size)]


def train(
    dataset: list[TrainSample],
    cfg: TrainConfig,
    thetas: ThetaMap | None = None,
    zs: ZMap | None = None,
    on_batch=None,
):
    """K epochs of batched SGD; returns (thetas, zs, history).

    history is one record per batch: {"epoch", "batch", "loss", "alpha"}, with
    alpha the post-update modulation factor actually applied to theta.
    `on_batch`, when given, is called with each record as it is appended.
    """
    if not dataset:
        raise EmptyDataset("training dataset is empty")
    for s in dataset:
        if s.target.t != cfg.t_frames:
            raise DimensionMismatch(
                f"target has {s.target.t} frames, config expects {cfg.t_frames}"
            )
    if thetas is None:
        thetas = init_chain_params(cfg)
    if zs is None:
        zs = init_modulation(cfg.chain, dtype=cfg.dtype)
    thetas = {r: p.copy() for r, p in thetas.items()}
    zs = {r: z.copy() for r, z in zs.items()}

    history: list[dict] = []
    for epoch in range(1, cfg.epochs + 1):
        for batch_idx, batch in enumerate(_batches(len(dataset), cfg, epoch)):
            losses = []
            grads = []
            for i in batch:
                sample = dataset[i]
                outputs, cache = forward_chain(thetas, zs, sample, cfg)
                losses.append(loss_mse(outputs[-1], sample.target))
                grads.append(backward_chain(cache, sample.target))
            thetas, zs = sgd_step(thetas, zs, _average_grads(grads, cfg), cfg)
            record = {
                "epoch": epoch,
                "batch": batch_idx,
                "loss": float(np.mean(losses)),
                "alpha": {str(int(r)): a for r, a in current_alphas(zs, cfg).items()},
            }
            history.append(record)
            if on_batch is not None:
                on_batch(record)
    return thetas, zs, history


def dataset_loss(dataset: list[TrainSample], thetas: ThetaMap, zs: ZMap, cfg: TrainConfig) -> float:
    """Mean per-sample loss over the whole dataset, no updates."""
    losses = [
        loss_mse(forward_chain(thetas, zs, s, cfg)[0][-1], s.target) for s in dataset
    ]
    return float(np.mean(losses))


def make_oracle_dataset(seed: Seed64, count: int, t_frames: int = 6) -> list[TrainSample]:
    """Synthesised prompts paired with their hidden ground-truth videos."""
    samples = []
    for p in synthesize_prompts(seed, count):
        enh = enhance_prompt(p)
        samples.append(TrainSample(prompt=enh, target=oracle_target(enh, t_frames)))
    return samples


def gradient_check(cfg: TrainConfig, epsilon: float = 1e-4) -> float:
    """Worst relative error of the analytic gradients vs central differences.

    Runs in float64 regardless of cfg.dtype so the comparison probes the math
    rather than float32 rounding.
    """
    if epsilon <= 0:
        raise InvalidCount("epsilon must be > 0")
    cfg64 = TrainConfig(
        batch_size=1,
        epochs=1,
        eta_theta=cfg.eta_theta,
        eta_z=cfg.eta_z,
        t_frames=cfg.t_frames,
        chain=cfg.chain,
        seed=cfg.seed,
        dtype=np.float64,
    )
    thetas = init_chain_params(cfg64)
    zs = init_modulation(cfg64.chain, dtype=np.float64)
    sample = make_oracle_dataset(derive_seed(cfg64.seed, "gradcheck"), 1, cfg64.t_frames)[0]

    def eval_loss() -> float:
        return _raw_chain_loss(thetas, zs, sample, cfg64)

    _, cache = forward_chain(thetas, zs, sample, cfg64)
    analytic = backward_chain(cache, sample.target)

    worst = 0.0

    def check(array: np.ndarray, grad: np.ndarray):
        nonlocal worst
        flat = array.reshape(-1)
        gflat = grad.reshape(-1)
        for idx in range(flat.size):
            keep = flat[idx]
            flat[idx] = keep + epsilon
            up = eval_loss()
            flat[idx] = keep - epsilon
            down = eval_loss()
            flat[idx] = keep
            fd = (up - down) / (2.0 * epsilon)
            a = float(gflat[idx])
            rel = abs(a - fd) / max(abs(a), abs(fd), 1e-8)
            worst = max(worst, rel)

    for role in cfg64.chain:
        for name in thetas[role].tensors:
            check(thetas[role].tensors[name], analytic.d_theta[role][name])
        check(zs[role], analytic.d_z[role])
    return worst
