import { ApiClient, ServiceError } from "../api/client.js";
import type { JobInfo, ServiceErrorBody } from "../api/types.js";

export type UploadPhase =
  | "idle"
  | "uploading"
  | "indexing"
  | "analyzing"
  | "done"
  | "failed";

export interface UploadState {
  phase: UploadPhase;
  docId: string | null;
  jobId: string | null;
  progress: { done: number; total: number };
  finalState: JobInfo["state"] | null;
  error: ServiceErrorBody | null;
}

export interface UploadOptions {
  format?: string;
  title?: string;
}

export interface UploadFlowOptions {
  /** Initial delay between job polls; each poll backs off by 1.5x. */
  pollIntervalMs?: number;
  maxPollIntervalMs?: number;
  onChange?: (state: UploadState) => void;
}

const TERMINAL_STATES: ReadonlySet<JobInfo["state"]> = new Set(["partial", "complete", "failed"]);

function sleep(ms: number): Promise<void> {
  return new Promise((resolve) => setTimeout(resolve, ms));
}

/**
 * Drives one report through upload, indexing, and analysis, exposing a
 * single observable state object the upload view renders from.
 */
export class UploadFlow {
  readonly state: UploadState = {
    phase: "idle",
    docId: null,
    jobId: null,
    progress: { done: 0, total: 0 },
    finalState: null,
    error: null,
  };

  private readonly pollIntervalMs: number;
  private readonly maxPollIntervalMs: number;
  private readonly onChange: (state: UploadState) => void;
  private lastContent: string | Uint8Array | null = null;
  private lastOptions: UploadOptions = {};

  constructor(
    private readonly client: ApiClient,
    options: UploadFlowOptions = {},
  ) {
    this.pollIntervalMs = options.pollIntervalMs ?? 500;
    this.maxPollIntervalMs = options.maxPollIntervalMs ?? 5000;
    this.onChange = options.onChange ?? (() => {});
  }

  /** Upload the document, wait for indexing, then run the full analysis. */
  async run(content: string | Uint8Array, options: UploadOptions = {}): Promise<JobInfo | null> {
    this.lastContent = content;
    this.lastOptions = options;
    this.set({ phase: "uploading", error: null, finalState: null, progress: { done: 0, total: 0 } });
    try {
      const accepted = await this.client.uploadReport(content, options);
      this.set({ docId: accepted.doc_id, jobId: accepted.job_id, phase: "indexing" });
      const ingest = await this.pollJob(accepted.job_id);
      if (ingest.state === "failed") return this.fail(ingest.error);
      return await this.analyze();
    } catch (err) {
      return this.fail(this.asBody(err));
    }
  }

  /** Start (or coalesce into) the analysis job for the uploaded document. */
  async analyze(): Promise<JobInfo | null> {
    if (!this.state.docId) {
      return this.fail({ code: "no_document", message: "upload a report first", stage: "ui" });
    }
    this.set({ phase: "analyzing", error: null });
    try {
      const job = await this.client.startAnalysis(this.state.docId);
      this.set({ jobId: job.job_id });
      const finished = await this.pollJob(job.job_id);
      if (finished.state === "failed") return this.fail(finished.error);
      this.set({ phase: "done", finalState: finished.state, progress: finished.progress });
      return finished;
    } catch (err) {
      return this.fail(this.asBody(err));
    }
  }

  /**
   * Retry after a failure. Re-uploading identical bytes lands on the same
   * document id and a second analyze request coalesces into the running
   * job, so replaying from the top is safe.
   */
  async retry(): Promise<JobInfo | null> {
    if (this.state.docId && this.lastContent === null) return this.analyze();
    if (this.lastContent === null) return null;
    return this.run(this.lastContent, this.lastOptions);
  }

  private async pollJob(jobId: string): Promise<JobInfo> {
    let delay = this.pollIntervalMs;
    for (;;) {
      const job = await this.client.getJob(jobId);
      this.set({ progress: job.progress });
      if (TERMINAL_STATES.has(job.state)) return job;
      await sleep(delay);
      delay = Math.min(delay * 1.5, this.maxPollIntervalMs);
    }
  }

  private fail(error: ServiceErrorBody | null): null {
    this.set({
      phase: "failed",
      error: error ?? { code: "error", message: "job failed", stage: "service" },
    });
    return null;
  }

  private asBody(err: unknown): ServiceErrorBody {
    if (err instanceof ServiceError) return err.body;
    return { code: "error", message: err instanceof Error ? err.message : String(err), stage: "ui" };
  }

  private set(patch: Partial<UploadState>): void {
    Object.assign(this.state, patch);
    this.onChange(this.state);
  }
}
