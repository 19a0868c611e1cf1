"""Walking a run through the staged pipeline with scripted human decisions.

The run parks at a checkpoint after every stage. Here the "human" retries the
first frame once, routes it to the edit agent, and then approves everything —
exactly the decision surface the review UI exposes.
"""

from sopforge import pipeline as pl

agent_params, modulation = pl.default_system(seed=11)

run = pl.create_run(
    pl.TaskKind.TEXT_TO_VIDEO,
    pl.RunInputs(prompt="a large glowing blob moving right slowly"),
    pl.PipelineConfig(seed=11),
)

script = [
    pl.HumanDecision.APPROVE,        # enhance looks fine
    pl.HumanDecision.RETRY,          # first frame: ask for a re-generation
    pl.HumanDecision.ROUTE_TO_EDIT,  # still unhappy: send to the edit agent
    pl.HumanDecision.APPROVE,        # edited frame accepted
    pl.HumanDecision.APPROVE,        # final video accepted
]

for decision in script:
    pl.execute_stage(run, agent_params, modulation)
    print(f"checkpoint at {run.stage.value:<14} -> {decision.value}")
    pl.apply_decision(run, run.stage, decision)

print("\nrun finished:", run.status.value)
video = pl.final_artifact(run)
print("final video frames:", video.t)
print("retry counts:", {s.value: c for s, c in run.retry_counts.items()})

print("\nevent log:")
for event in run.history:
    detail = event["detail"] or ""
    print(f"  #{event['seq']:<3} {event['stage']:<14} {event['event']:<16} {detail}")

# The log is the replay recipe: the same decisions on a fresh seeded run
# reproduce the final video bit for bit.
replayed = pl.create_run(pl.TaskKind.TEXT_TO_VIDEO, run.inputs, run.config)
for stage, decision in pl.replay_decisions(run):
    pl.execute_stage(replayed, agent_params, modulation)
    pl.apply_decision(replayed, stage, decision)
assert pl.final_artifact(replayed) == video
print("\nreplay reproduced the final artifact bit-exactly")
