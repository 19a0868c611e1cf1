/**
 * DOM panels: run checkpoints, the 4-candidate review grid, and the training
 * dashboard. All state changes go through the ApiClient; panels re-render
 * from whatever the server returned.
 */

import { ApiClient, ReviewItemView, RunView } from "./api.js";
import { DashboardState, decisionAvailability, needsReviewBanner, stageLabel } from "./logic.js";
import { errorCard, FramePlayer, SyncGroup } from "./player.js";
import { decodeTvid, TvidError } from "./tvid.js";

function el(doc: Document, tag: string, className?: string, text?: string): HTMLElement {
  const node = doc.createElement(tag);
  if (className) node.className = className;
  if (text !== undefined) node.textContent = text;
  return node;
}

// ── checkpoint panel ──────────────────────────────────────────────────────────

export function checkpointPanel(
  doc: Document,
  run: RunView,
  client: ApiClient,
  onUpdate: (run: RunView) => void,
  onError: (message: string) => void,
): HTMLElement {
  const panel = el(doc, "div", "panel run-panel");
  panel.appendChild(el(doc, "h3", "", `${run.run_id} — ${run.task}`));
  const statusLine = `${stageLabel(run.stage)} · ${run.status}`;
  panel.appendChild(el(doc, "p", "status", statusLine));

  const retries = Object.entries(run.retry_counts)
    .map(([stage, count]) => `${stageLabel(stage)}: ${count}`)
    .join(", ");
  if (retries) panel.appendChild(el(doc, "p", "retries", `retries — ${retries}`));

  const enhanceArtifact = run.artifacts["enhance"];
  if (enhanceArtifact?.text) {
    panel.appendChild(el(doc, "p", "prompt-text", enhanceArtifact.text));
  }

  const availability = decisionAvailability(run);
  const buttons = el(doc, "div", "buttons");
  panel.appendChild(buttons);

  const send = async (decision: string) => {
    try {
      onUpdate(await client.decide(run.run_id, run.stage, decision));
    } catch (error) {
      onError(error instanceof Error ? error.message : String(error));
    }
  };

  const mk = (label: string, decision: string, enabled: boolean, tooltip?: string) => {
    const button = el(doc, "button", "", label) as HTMLButtonElement;
    button.disabled = !enabled;
    if (tooltip) button.title = tooltip;
    button.addEventListener("click", () => void send(decision));
    buttons.appendChild(button);
    return button;
  };

  mk("Approve", "approve", availability.canApprove);
  mk("Retry", "retry", availability.canRetry, availability.retryDisabledReason ?? undefined);
  if (run.stage === "first_frame") {
    mk("Edit", "route_to_edit", availability.canEdit);
  }
  mk("Abort", "abort", availability.canAbort);

  if (run.status === "done" && run.final_artifact_url) {
    void attachVideo(doc, panel, client, run.final_artifact_url);
  }
  return panel;
}

async function attachVideo(
  doc: Document,
  parent: HTMLElement,
  client: ApiClient,
  url: string,
): Promise<void> {
  try {
    const video = decodeTvid(await client.artifactBytes(url));
    const group = new SyncGroup();
    const player = new FramePlayer(video, doc);
    parent.appendChild(player.canvas);
    group.add(player);
  } catch (error) {
    const message = error instanceof TvidError ? error.message : "fetch failed";
    parent.appendChild(errorCard(message, doc));
  }
}

// ── review grid ───────────────────────────────────────────────────────────────

export function reviewGrid(
  doc: Document,
  item: ReviewItemView,
  client: ApiClient,
  onResolved: () => void,
  onError: (message: string) => void,
): HTMLElement {
  const panel = el(doc, "div", "panel review-panel");
  panel.appendChild(el(doc, "h3", "", item.prompt));
  panel.appendChild(el(doc, "p", "criterion", item.criterion));

  const rankings = Object.entries(item.rankings)
    .map(([judge, order]) => `${judge}: [${order.join(", ")}]`)
    .join("   ");
  panel.appendChild(el(doc, "p", "rankings", rankings));

  const grid = el(doc, "div", "candidate-grid");
  panel.appendChild(grid);
  const group = new SyncGroup();

  item.candidate_urls.forEach((url, index) => {
    const cell = el(doc, "div", "candidate");
    grid.appendChild(cell);
    cell.appendChild(el(doc, "p", "", `candidate ${index}`));
    void (async () => {
      try {
        const video = decodeTvid(await client.artifactBytes(url));
        const player = new FramePlayer(video, doc);
        cell.appendChild(player.canvas);
        group.add(player);
      } catch (error) {
        const message = error instanceof TvidError ? error.message : "fetch failed";
        cell.appendChild(errorCard(message, doc));
      }
      const pick = el(doc, "button", "", "Select this") as HTMLButtonElement;
      pick.addEventListener("click", () => {
        void client
          .selectCandidate(item.item_id, index)
          .then(onResolved)
          .catch((error) => onError(error.message));
      });
      cell.appendChild(pick);
    })();
  });

  const discard = el(doc, "button", "discard", "Discard all") as HTMLButtonElement;
  discard.addEventListener("click", () => {
    void client
      .discardSet(item.item_id)
      .then(onResolved)
      .catch((error) => onError(error.message));
  });
  panel.appendChild(discard);
  return panel;
}

// ── training dashboard ────────────────────────────────────────────────────────

export function renderDashboard(doc: Document, state: DashboardState): HTMLElement {
  const panel = el(doc, "div", "panel dashboard");
  const headline =
    state.trainingId === null
      ? "no training job"
      : `${state.trainingId} · ${state.state} · iteration ${state.iteration}, epoch ${state.epoch}`;
  panel.appendChild(el(doc, "h3", "", headline));

  if (needsReviewBanner(state)) {
    const banner = el(
      doc,
      "div",
      "banner",
      `${state.pendingReviews} candidate set(s) await review — open the Review tab to resume training`,
    );
    panel.appendChild(banner);
  }
  if (state.lastError) {
    panel.appendChild(el(doc, "div", "error-card", state.lastError));
  }

  const lastLoss = state.lossSeries[state.lossSeries.length - 1];
  if (lastLoss !== undefined) {
    panel.appendChild(el(doc, "p", "loss", `last batch loss: ${lastLoss}`));
    const alphaBits = Object.entries(state.alphaSeries)
      .map(([agent, series]) => `agent ${agent}: ${series[series.length - 1]}`)
      .join("   ");
    panel.appendChild(el(doc, "p", "alphas", `modulation factors — ${alphaBits}`));
    panel.appendChild(plotSeries(doc, state));
  }
  return panel;
}

function plotSeries(doc: Document, state: DashboardState): HTMLCanvasElement {
  const canvas = doc.createElement("canvas");
  canvas.width = 560;
  canvas.height = 180;
  canvas.className = "plot";
  const ctx = canvas.getContext("2d");
  if (!ctx) return canvas;
  ctx.fillStyle = "#10131a";
  ctx.fillRect(0, 0, canvas.width, canvas.height);
  drawLine(ctx, state.lossSeries, canvas, "#6fd08c");
  const palette = ["#7aa2f7", "#e0af68", "#f7768e"];
  Object.values(state.alphaSeries).forEach((series, index) => {
    drawLine(ctx, series, canvas, palette[index % palette.length]);
  });
  return canvas;
}

function drawLine(
  ctx: CanvasRenderingContext2D,
  series: number[],
  canvas: HTMLCanvasElement,
  color: string,
): void {
  if (series.length < 2) return;
  const max = Math.max(...series);
  const min = Math.min(...series);
  const span = max - min || 1;
  ctx.strokeStyle = color;
  ctx.lineWidth = 1.5;
  ctx.beginPath();
  series.forEach((value, index) => {
    const x = (index / (series.length - 1)) * (canvas.width - 10) + 5;
    const y = canvas.height - 5 - ((value - min) / span) * (canvas.height - 10);
    if (index === 0) ctx.moveTo(x, y);
    else ctx.lineTo(x, y);
  });
  ctx.stroke();
}
