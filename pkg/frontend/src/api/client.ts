import type {
  AskResponse,
  EvidenceResult,
  FeedbackRecord,
  FeedbackStatus,
  GuidelineSet,
  HealthStatus,
  JobInfo,
  NewFeedback,
  ReportAnalysis,
  ReportSummary,
  ServiceErrorBody,
  TransformResult,
  UploadAccepted,
} from "./types.js";

/** A failed service call, carrying the {code, message, stage} error body. */
export class ServiceError extends Error {
  readonly code: string;
  readonly stage: string;
  readonly status: number;

  constructor(body: ServiceErrorBody, status: number) {
    super(body.message);
    this.name = "ServiceError";
    this.code = body.code;
    this.stage = body.stage;
    this.status = status;
  }

  get body(): ServiceErrorBody {
    return { code: this.code, message: this.message, stage: this.stage };
  }
}

function toErrorBody(payload: unknown, status: number): ServiceErrorBody {
  if (payload && typeof payload === "object") {
    const obj = payload as Record<string, unknown>;
    if (typeof obj.code === "string" && typeof obj.message === "string") {
      return {
        code: obj.code,
        message: obj.message,
        stage: typeof obj.stage === "string" ? obj.stage : "service",
      };
    }
    // FastAPI validation errors arrive as {detail: ...}
    if (obj.detail !== undefined) {
      return {
        code: `http_${status}`,
        message: typeof obj.detail === "string" ? obj.detail : JSON.stringify(obj.detail),
        stage: "service",
      };
    }
  }
  return { code: `http_${status}`, message: `request failed with status ${status}`, stage: "service" };
}

export interface ClientOptions {
  apiKey?: string;
  fetchImpl?: typeof fetch;
}

interface RequestOptions {
  method?: string;
  query?: Record<string, string | undefined>;
  json?: unknown;
  body?: BodyInit;
}

/** Thin typed wrapper over the service's HTTP interface. */
export class ApiClient {
  readonly baseUrl: string;
  private readonly apiKey?: string;
  private readonly fetchImpl: typeof fetch;

  constructor(baseUrl: string, options: ClientOptions = {}) {
    this.baseUrl = baseUrl.replace(/\/+$/, "");
    this.apiKey = options.apiKey;
    this.fetchImpl = options.fetchImpl ?? fetch;
  }

  private async request<T>(path: string, options: RequestOptions = {}): Promise<T> {
    const url = new URL(this.baseUrl + path, globalThis.location?.href ?? "http://localhost/");
    for (const [key, value] of Object.entries(options.query ?? {})) {
      if (value !== undefined && value !== "") url.searchParams.set(key, value);
    }

    const headers: Record<string, string> = {};
    if (this.apiKey) headers["x-api-key"] = this.apiKey;
    let body = options.body;
    if (options.json !== undefined) {
      headers["content-type"] = "application/json";
      body = JSON.stringify(options.json);
    }

    let response: Response;
    try {
      response = await this.fetchImpl(url.toString(), {
        method: options.method ?? "GET",
        headers,
        body,
      });
    } catch (err) {
      throw new ServiceError(
        { code: "network_error", message: err instanceof Error ? err.message : String(err), stage: "transport" },
        0,
      );
    }

    let payload: unknown = null;
    const text = await response.text();
    if (text) {
      try {
        payload = JSON.parse(text);
      } catch {
        payload = text;
      }
    }
    if (!response.ok) {
      throw new ServiceError(toErrorBody(payload, response.status), response.status);
    }
    return payload as T;
  }

  health(): Promise<HealthStatus> {
    return this.request("/healthz");
  }

  uploadReport(
    content: string | Uint8Array,
    options: { format?: string; title?: string } = {},
  ): Promise<UploadAccepted> {
    return this.request("/reports", {
      method: "POST",
      query: { format: options.format, title: options.title },
      body: content as BodyInit,
    });
  }

  async listReports(): Promise<ReportSummary[]> {
    const data = await this.request<{ reports: ReportSummary[] }>("/reports");
    return data.reports;
  }

  getAnalysis(docId: string): Promise<ReportAnalysis> {
    return this.request(`/reports/${encodeURIComponent(docId)}/analysis`);
  }

  startAnalysis(docId: string): Promise<JobInfo> {
    return this.request(`/reports/${encodeURIComponent(docId)}/analyze`, { method: "POST" });
  }

  getJob(jobId: string): Promise<JobInfo> {
    return this.request(`/jobs/${encodeURIComponent(jobId)}`);
  }

  askQuestion(docId: string, question: string): Promise<AskResponse> {
    return this.request(`/reports/${encodeURIComponent(docId)}/questions`, {
      method: "POST",
      json: { question },
    });
  }

  getEvidence(docId: string, fragment: string): Promise<EvidenceResult> {
    return this.request(`/reports/${encodeURIComponent(docId)}/evidence`, {
      query: { fragment },
    });
  }

  submitFeedback(feedback: NewFeedback): Promise<FeedbackRecord> {
    return this.request("/feedback", { method: "POST", json: feedback });
  }

  async listFeedback(status?: FeedbackStatus): Promise<FeedbackRecord[]> {
    const data = await this.request<{ feedback: FeedbackRecord[] }>("/feedback", {
      query: { status },
    });
    return data.feedback;
  }

  transformFeedback(feedbackId: string, scope: "general" | "specific" = "general"): Promise<TransformResult> {
    return this.request(`/guidelines/transform/${encodeURIComponent(feedbackId)}`, {
      method: "POST",
      json: { scope },
    });
  }

  promoteGuidelines(version: number): Promise<GuidelineSet> {
    return this.request(`/guidelines/promote/${version}`, { method: "POST" });
  }

  getGuidelines(): Promise<GuidelineSet> {
    return this.request("/guidelines");
  }
}
