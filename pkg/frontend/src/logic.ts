/**
 * Pure view logic: which decision buttons are live at a checkpoint, how the
 * training dashboard accumulates its series. Kept DOM-free so the scripted
 * acceptance flows can drive it headlessly.
 */

import type { RunView, TrainingStatus } from "./api.js";

export const MAX_RETRIES = 3;

export interface DecisionAvailability {
  canApprove: boolean;
  canRetry: boolean;
  retryDisabledReason: string | null;
  canEdit: boolean;
  canAbort: boolean;
}

export function decisionAvailability(run: RunView): DecisionAvailability {
  const awaiting = run.status === "awaiting_decision";
  const retries = run.retry_counts[run.stage] ?? 0;
  const retriesLeft = retries < MAX_RETRIES;
  return {
    canApprove: awaiting,
    canRetry: awaiting && retriesLeft,
    retryDisabledReason:
      awaiting && !retriesLeft ? `retry limit reached (${MAX_RETRIES} per stage)` : null,
    canEdit: awaiting && run.stage === "first_frame",
    canAbort: awaiting,
  };
}

export function stageLabel(stage: string): string {
  return stage.replace(/_/g, " ");
}

/** Training dashboard model. Numbers are stored verbatim from the API. */
export interface DashboardState {
  trainingId: string | null;
  state: TrainingStatus["state"] | "idle";
  iteration: number;
  epoch: number;
  pendingReviews: number;
  lossSeries: number[];
  alphaSeries: Record<string, number[]>;
  lastError: string | null;
}

export function emptyDashboard(): DashboardState {
  return {
    trainingId: null,
    state: "idle",
    iteration: 0,
    epoch: 0,
    pendingReviews: 0,
    lossSeries: [],
    alphaSeries: {},
    lastError: null,
  };
}

/** Fold one poll result into the dashboard; series grow only on change. */
export function applyTrainingStatus(prev: DashboardState, status: TrainingStatus): DashboardState {
  const next: DashboardState = {
    ...prev,
    trainingId: status.training_id,
    state: status.state,
    iteration: status.iteration,
    epoch: status.epoch,
    pendingReviews: status.pending_reviews,
    lossSeries: prev.lossSeries,
    alphaSeries: prev.alphaSeries,
    lastError: status.error,
  };
  const last = prev.lossSeries[prev.lossSeries.length - 1];
  if (status.last_loss !== null && status.last_loss !== last) {
    next.lossSeries = [...prev.lossSeries, status.last_loss];
    const alphaSeries: Record<string, number[]> = { ...prev.alphaSeries };
    for (const [agent, value] of Object.entries(status.alphas)) {
      alphaSeries[agent] = [...(alphaSeries[agent] ?? []), value];
    }
    next.alphaSeries = alphaSeries;
  }
  return next;
}

export function needsReviewBanner(state: DashboardState): boolean {
  return state.state === "awaiting_review" && state.pendingReviews > 0;
}

/** Playback cursor for a synchronized group of players. */
export function nextFrameIndex(current: number, frameCount: number): number {
  if (frameCount <= 0) return 0;
  return (current + 1) % frameCount;
}
