"""A tour of the synthetic video world.

Every artifact in this project bottoms out in two bit-exact primitives
(FNV-1a text hashing and a splitmix64 number stream), so every prompt,
embedding, and ground-truth video is reproducible from a single seed.
"""

from pathlib import Path

import matplotlib.pyplot as plt
import numpy as np

from sopforge import store
from sopforge.toyworld import (
    OracleParams,
    enhance_prompt,
    oracle_render,
    prompt_vector,
    synthesize_prompts,
)

OUT = Path(__file__).parent / "output"
OUT.mkdir(exist_ok=True)

# ── 1. deterministic prompt synthesis ────────────────────────────────────────
# The template grammar stands in for an LLM prompt generator: diverse,
# distinct, and exactly reproducible.
prompts = synthesize_prompts(seed=2024, count=8)
print("synthesized prompts:")
for p in prompts:
    print("  -", p.text)

# ── 2. enhancement annotates, the vector anchors to the original text ────────
enhanced = enhance_prompt(prompts[0])
print("\nenhanced:", enhanced.text)
print("prompt vector:", np.round(enhanced.vector, 3))

# ── 3. the hidden oracle renders the ground-truth video ──────────────────────
# Position, velocity, radius, and brightness of a drifting Gaussian blob all
# come from the prompt vector.
video = oracle_render(OracleParams(enhanced.vector), t_frames=6)
digital = oracle_render(OracleParams(enhanced.vector, digital_style=True), t_frames=6)

fig, axes = plt.subplots(2, 6, figsize=(12, 4))
for t in range(6):
    axes[0, t].imshow(video.frames[t].as_2d(), cmap="gray", vmin=-1, vmax=1)
    axes[0, t].set_title(f"t={t}")
    axes[1, t].imshow(digital.frames[t].as_2d(), cmap="gray", vmin=-1, vmax=1)
    axes[0, t].axis("off")
    axes[1, t].axis("off")
axes[0, 0].set_ylabel("plain")
axes[1, 0].set_ylabel("digital")
fig.suptitle(f'oracle video for "{prompts[0].text}"')
fig.tight_layout()
fig.savefig(OUT / "toy_world_oracle.png", dpi=120)
print("\nsaved", OUT / "toy_world_oracle.png")

# ── 4. videos round-trip bit-exactly through the TVID container ──────────────
path = OUT / "oracle.tvid"
store.write_tvid(video, path)
assert store.read_tvid(path) == video
print("TVID round trip OK:", path, f"({path.stat().st_size} bytes)")
