/**
 * App shell: three tabs (Runs, Review, Training) polling the server at 1s.
 */

import { ApiClient, RunView } from "./api.js";
import { applyTrainingStatus, DashboardState, emptyDashboard } from "./logic.js";
import { checkpointPanel, renderDashboard, reviewGrid } from "./panels.js";
import { createPoller, Poller } from "./poller.js";

const client = new ApiClient("");
const doc = document;

function byId(id: string): HTMLElement {
  const node = doc.getElementById(id);
  if (!node) throw new Error(`missing #${id}`);
  return node;
}

function flash(message: string): void {
  const bar = byId("flash");
  bar.textContent = message;
  bar.classList.add("visible");
  setTimeout(() => bar.classList.remove("visible"), 4000);
}

// ── runs tab ──────────────────────────────────────────────────────────────────

function renderRuns(runs: RunView[]): void {
  const host = byId("runs");
  host.textContent = "";
  if (!runs.length) {
    host.appendChild(doc.createElement("p")).textContent = "no runs yet";
  }
  for (const run of [...runs].reverse()) {
    host.appendChild(
      checkpointPanel(doc, run, client, () => void runsPoller.refresh(), flash),
    );
  }
}

const runsPoller: Poller = createPoller(
  () => client.listRuns(),
  (body) => renderRuns(body.runs),
  () => byId("runs-stale").classList.add("visible"),
);

byId("create-run").addEventListener("click", () => {
  const task = (byId("task") as HTMLSelectElement).value;
  const prompt = (byId("prompt") as HTMLInputElement).value;
  const seed = Number((byId("seed") as HTMLInputElement).value || "0");
  void client
    .createRun({ task, prompt: prompt || undefined, seed })
    .then(() => runsPoller.refresh())
    .catch((error) => flash(error.message));
});

// ── review tab ────────────────────────────────────────────────────────────────

const reviewPoller: Poller = createPoller(
  () => client.reviewQueue(),
  (body) => {
    byId("review-count").textContent = String(body.items.length);
    const host = byId("review");
    host.textContent = "";
    if (!body.items.length) {
      host.appendChild(doc.createElement("p")).textContent = "review queue is empty";
    }
    for (const item of body.items) {
      host.appendChild(
        reviewGrid(doc, item, client, () => void reviewPoller.refresh(), flash),
      );
    }
  },
  () => undefined,
);

// ── training tab ──────────────────────────────────────────────────────────────

let dashboard: DashboardState = emptyDashboard();
let trainingPoller: Poller | null = null;

function watchTraining(trainingId: string): void {
  trainingPoller?.stop();
  dashboard = emptyDashboard();
  trainingPoller = createPoller(
    () => client.trainingStatus(trainingId),
    (status) => {
      dashboard = applyTrainingStatus(dashboard, status);
      const host = byId("training");
      host.textContent = "";
      host.appendChild(renderDashboard(doc, dashboard));
      if (status.state === "awaiting_review") void reviewPoller.refresh();
    },
    () => byId("training").classList.add("stale"),
  );
}

byId("start-training").addEventListener("click", () => {
  const iterations = Number((byId("iterations") as HTMLInputElement).value || "3");
  const prompts = Number((byId("prompts") as HTMLInputElement).value || "16");
  const interactive = (byId("interactive") as HTMLInputElement).checked;
  void client
    .startTraining({
      iterations,
      prompts,
      hitl_mode: interactive ? "interactive" : "auto_oracle",
    })
    .then((body) => watchTraining(body.training_id))
    .catch((error) => flash(error.message));
});

// ── tab switching ─────────────────────────────────────────────────────────────

for (const tab of Array.from(doc.querySelectorAll("[data-tab]"))) {
  tab.addEventListener("click", () => {
    for (const section of Array.from(doc.querySelectorAll(".tab-body"))) {
      section.classList.remove("active");
    }
    for (const other of Array.from(doc.querySelectorAll("[data-tab]"))) {
      other.classList.remove("active");
    }
    tab.classList.add("active");
    byId(`tab-${(tab as HTMLElement).dataset.tab}`).classList.add("active");
  });
}
