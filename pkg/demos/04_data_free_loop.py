"""The data-free training loop end to end.

No external dataset: each iteration synthesizes prompts, generates four
jittered candidates per prompt, lets two judges rank them, auto-accepts
unanimous winners, resolves the rest through the (simulated) reviewer, and
fine-tunes on whatever survived. Parameters roll forward across iterations.
"""

from pathlib import Path

import matplotlib.pyplot as plt

from sopforge.datafree import DataFreeConfig, HitlMode, datafree_train
from sopforge.selfmod import TrainConfig

OUT = Path(__file__).parent / "output"
OUT.mkdir(exist_ok=True)

cfg = DataFreeConfig(
    iterations=3,
    prompts_per_iter=16,
    hitl_mode=HitlMode.AUTO_ORACLE,  # simulated reviewer: oracle judge's pick
    train_cfg=TrainConfig(seed=99),
)

thetas, zs, report = datafree_train(cfg)

print(f"hitl mode: {report['hitl_mode']}")
print(f"total accepted records: {report['total_records']} (cap {cfg.iterations * cfg.prompts_per_iter})")
for entry in report["iterations"]:
    routes = entry["routes"]
    print(
        f"iteration {entry['iteration']}: {entry['dataset_size']} records "
        f"(auto {routes['auto_accepted']}, reviewer {routes['human_accepted']}, "
        f"discarded {routes['discarded']}), "
        f"loss {entry['loss_first']:.5f} -> {entry['loss_last']:.5f}"
    )

fig, ax = plt.subplots(figsize=(8, 4))
offset = 0
for entry in report["iterations"]:
    losses = [h["loss"] for h in entry["history"]]
    ax.plot(range(offset, offset + len(losses)), losses, label=f"iteration {entry['iteration']}")
    offset += len(losses)
ax.set_xlabel("batch step (across iterations)")
ax.set_ylabel("batch loss")
ax.set_yscale("log")
ax.legend()
ax.set_title("data-free loop: per-iteration fine-tuning on self-curated data")
fig.tight_layout()
fig.savefig(OUT / "data_free_loop.png", dpi=120)
print("saved", OUT / "data_free_loop.png")
