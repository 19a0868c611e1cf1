import { describe, expect, it } from "vitest";

import type { RunView, TrainingStatus } from "../src/api.js";
import {
  applyTrainingStatus,
  decisionAvailability,
  emptyDashboard,
  needsReviewBanner,
  nextFrameIndex,
} from "../src/logic.js";

function runAt(stage: string, retries = 0, status: RunView["status"] = "awaiting_decision"): RunView {
  return {
    run_id: "run-000001",
    task: "text_to_video",
    stage,
    status,
    retry_counts: retries ? { [stage]: retries } : {},
    artifacts: {},
  };
}

describe("decisionAvailability", () => {
  it("enables approve/retry/abort at a fresh checkpoint", () => {
    const a = decisionAvailability(runAt("enhance"));
    expect(a.canApprove).toBe(true);
    expect(a.canRetry).toBe(true);
    expect(a.canAbort).toBe(true);
    expect(a.canEdit).toBe(false);
    expect(a.retryDisabledReason).toBeNull();
  });

  it("disables retry with a tooltip after three retries", () => {
    const a = decisionAvailability(runAt("first_frame", 3));
    expect(a.canRetry).toBe(false);
    expect(a.retryDisabledReason).toMatch(/retry limit/);
  });

  it("keeps retry alive through the first three attempts", () => {
    for (const retries of [0, 1, 2]) {
      expect(decisionAvailability(runAt("enhance", retries)).canRetry).toBe(true);
    }
  });

  it("offers edit only at the first-frame checkpoint", () => {
    expect(decisionAvailability(runAt("first_frame")).canEdit).toBe(true);
    expect(decisionAvailability(runAt("generate_video")).canEdit).toBe(false);
    expect(decisionAvailability(runAt("enhance")).canEdit).toBe(false);
  });

  it("disables everything when not at a checkpoint", () => {
    const a = decisionAvailability(runAt("generate_video", 0, "done"));
    expect(a.canApprove).toBe(false);
    expect(a.canRetry).toBe(false);
    expect(a.canAbort).toBe(false);
  });
});

function status(partial: Partial<TrainingStatus>): TrainingStatus {
  return {
    training_id: "train-0001",
    state: "running",
    iteration: 1,
    epoch: 1,
    last_loss: null,
    alphas: {},
    pending_reviews: 0,
    report: null,
    error: null,
    ...partial,
  };
}

describe("training dashboard state", () => {
  it("stores loss and alpha values verbatim", () => {
    const observed = status({ last_loss: 0.123456789, alphas: { "2": 1.00000012, "4": 0.5 } });
    const state = applyTrainingStatus(emptyDashboard(), observed);
    expect(state.lossSeries).toEqual([0.123456789]);
    expect(state.alphaSeries["2"]).toEqual([1.00000012]);
    expect(state.alphaSeries["4"]).toEqual([0.5]);
  });

  it("appends only when the loss actually changes", () => {
    let state = emptyDashboard();
    state = applyTrainingStatus(state, status({ last_loss: 0.5, alphas: { "2": 1 } }));
    state = applyTrainingStatus(state, status({ last_loss: 0.5, alphas: { "2": 1 } }));
    state = applyTrainingStatus(state, status({ last_loss: 0.25, alphas: { "2": 1.1 } }));
    expect(state.lossSeries).toEqual([0.5, 0.25]);
    expect(state.alphaSeries["2"]).toEqual([1, 1.1]);
  });

  it("raises the review banner only while reviews are pending", () => {
    let state = applyTrainingStatus(
      emptyDashboard(),
      status({ state: "awaiting_review", pending_reviews: 2 }),
    );
    expect(needsReviewBanner(state)).toBe(true);
    state = applyTrainingStatus(state, status({ state: "running", pending_reviews: 0 }));
    expect(needsReviewBanner(state)).toBe(false);
  });

  it("one alpha series per chain agent", () => {
    const state = applyTrainingStatus(
      emptyDashboard(),
      status({ last_loss: 0.4, alphas: { "2": 1.0, "4": 1.2 } }),
    );
    expect(Object.keys(state.alphaSeries).sort()).toEqual(["2", "4"]);
  });
});

describe("playback cursor", () => {
  it("wraps around the frame count", () => {
    expect(nextFrameIndex(0, 6)).toBe(1);
    expect(nextFrameIndex(5, 6)).toBe(0);
    expect(nextFrameIndex(3, 0)).toBe(0);
  });
});
