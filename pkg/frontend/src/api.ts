/**
 * Typed client for the /v1 API. The UI mutates server state exclusively
 * through these POST helpers; every displayed number is taken verbatim
 * from the JSON bodies returned here.
 */

export interface ArtifactRef {
  kind: "enhanced_prompt" | "frame" | "video";
  text?: string;
  artifact_id?: string;
}

export interface RunView {
  run_id: string;
  task: string;
  stage: string;
  status: "running" | "awaiting_decision" | "done" | "failed";
  retry_counts: Record<string, number>;
  artifacts: Record<string, ArtifactRef>;
  final_artifact_url?: string;
}

export interface ReviewItemView {
  item_id: string;
  prompt: string;
  criterion: string;
  candidate_urls: string[];
  rankings: Record<string, number[]>;
}

export interface TrainingStatus {
  training_id: string;
  state: "queued" | "running" | "awaiting_review" | "done" | "failed";
  iteration: number;
  epoch: number;
  last_loss: number | null;
  alphas: Record<string, number>;
  pending_reviews: number;
  report: unknown | null;
  error: string | null;
}

export class ApiError extends Error {
  constructor(public status: number, public code: string, message: string) {
    super(message);
    this.name = "ApiError";
  }
}

async function parseError(response: Response): Promise<ApiError> {
  let code = "unknown";
  let message = response.statusText;
  try {
    const body = await response.json();
    code = body?.error?.code ?? code;
    message = body?.error?.message ?? message;
  } catch {
    // non-JSON error body; keep the status text
  }
  return new ApiError(response.status, code, message);
}

export class ApiClient {
  constructor(private baseUrl: string = "") {}

  private async request<T>(path: string, init?: RequestInit): Promise<T> {
    const response = await fetch(this.baseUrl + path, init);
    if (!response.ok) {
      throw await parseError(response);
    }
    return (await response.json()) as T;
  }

  private post<T>(path: string, body: unknown): Promise<T> {
    return this.request<T>(path, {
      method: "POST",
      headers: { "Content-Type": "application/json" },
      body: JSON.stringify(body),
    });
  }

  createRun(body: {
    task: string;
    prompt?: string;
    seed?: number;
    t_frames?: number;
    frame_b64?: string;
    videos_b64?: string[];
  }): Promise<RunView> {
    return this.post<RunView>("/v1/runs", body);
  }

  listRuns(): Promise<{ runs: RunView[] }> {
    return this.request<{ runs: RunView[] }>("/v1/runs");
  }

  getRun(runId: string): Promise<RunView> {
    return this.request<RunView>(`/v1/runs/${runId}`);
  }

  decide(runId: string, stage: string, decision: string): Promise<RunView> {
    return this.post<RunView>(`/v1/runs/${runId}/decision`, { stage, decision });
  }

  reviewQueue(): Promise<{ items: ReviewItemView[] }> {
    return this.request<{ items: ReviewItemView[] }>("/v1/review");
  }

  selectCandidate(itemId: string, index: number): Promise<unknown> {
    return this.post(`/v1/review/${itemId}`, { select: index });
  }

  discardSet(itemId: string): Promise<unknown> {
    return this.post(`/v1/review/${itemId}`, { discard: true });
  }

  startTraining(config: Record<string, unknown>): Promise<{ training_id: string }> {
    return this.post<{ training_id: string }>("/v1/training", config);
  }

  trainingStatus(trainingId: string): Promise<TrainingStatus> {
    return this.request<TrainingStatus>(`/v1/training/${trainingId}`);
  }

  async artifactBytes(url: string): Promise<Uint8Array> {
    const response = await fetch(this.baseUrl + url);
    if (!response.ok) {
      throw await parseError(response);
    }
    return new Uint8Array(await response.arrayBuffer());
  }
}
