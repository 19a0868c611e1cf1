"""The self-defined metrics on hand-built edge cases and real pipeline output.

One fixed random projection embeds both sides of every cosine, so the metric
formulas behave exactly as defined even though the absolute numbers belong to
this toy world only.
"""

import numpy as np

from sopforge import pipeline as pl
from sopforge.core import Video
from sopforge.metrics import (
    dynamic_degree,
    metric_report,
    motion_smoothness,
    tcon,
    tmean,
    video_ti,
)
from sopforge.toyworld import OracleParams, oracle_render, prompt_vector, rng_stream


def show(name, value):
    print(f"  {name:<22} {value:+.4f}")


# ── identities on hand-built videos ───────────────────────────────────────────
blob = oracle_render(OracleParams(rng_stream(5, 8)), 6)
static = Video.from_array(np.full((6, 8, 8), 0.3, dtype=np.float32))
alternating = np.empty((6, 8, 8), dtype=np.float32)
alternating[0::2], alternating[1::2] = 1.0, -1.0
strobing = Video.from_array(alternating)
ramp = Video.from_array(
    np.stack([np.full((8, 8), -0.5 + 0.15 * t) for t in range(6)]).astype(np.float32)
)

print("identities:")
show("tcon(v, v)", tcon(blob, blob))                      # exactly 1
show("dynamic(static)", dynamic_degree(static))            # exactly 0
show("dynamic(strobing)", dynamic_degree(strobing))        # the 2.0 extreme
show("smooth(ramp)", motion_smoothness(ramp))              # linear in time: 1
show("smooth(strobing)", motion_smoothness(strobing))      # worst case: 0
show("tmean(a, m, b)", tmean(blob, static, strobing))
show("tmean(b, m, a)", tmean(strobing, static, blob))      # swap-invariant

# ── instruction adherence on real pipeline output ─────────────────────────────
prompt = "a small glowing blob moving down quickly"
system = pl.default_system(3)
run = pl.auto_run(
    pl.create_run(pl.TaskKind.TEXT_TO_VIDEO, pl.RunInputs(prompt=prompt), pl.PipelineConfig(seed=3)),
    *system,
)
generated = pl.final_artifact(run)
oracle = oracle_render(OracleParams(prompt_vector(prompt)), 6)

print("\ngenerated vs oracle for the same prompt:")
show("video_ti(generated)", video_ti(prompt, None, generated))
show("video_ti(oracle)", video_ti(prompt, None, oracle))
show("tcon(oracle, gen)", tcon(oracle, generated))

print("\nfull metric report for the generated video:")
print(" ", metric_report(generated, prompt_text=prompt, reference=oracle))
