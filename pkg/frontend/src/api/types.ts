// Mirrors of the analysis service's JSON payloads. Every field here comes
// straight off the wire; the UI never derives scores or rates on its own.

export interface ServiceErrorBody {
  code: string;
  message: string;
  stage: string;
}

export interface HealthStatus {
  status: string;
  mock_backend: boolean;
}

export interface UploadAccepted {
  doc_id: string;
  job_id: string;
}

export type JobState = "queued" | "running" | "partial" | "complete" | "failed";

export interface JobInfo {
  job_id: string;
  kind: "ingest" | "analyze";
  doc_id: string;
  state: JobState;
  progress: { done: number; total: number };
  error: ServiceErrorBody | null;
  result_key: string | null;
}

export interface ReportSummary {
  doc_id: string;
  metadata: Record<string, string>;
  pages: number;
  has_index: boolean;
  analyses: string[];
  latest_average: number | null;
}

export interface BasicInfo {
  company_name: string;
  location: string;
  sector: string;
}

// One generated answer. `sources` is the deduplicated ascending list of cited
// chunk numbers; `pages` lines up with it entry by entry when present.
export interface AnswerPayload {
  answer: string;
  sources: number[];
  kind: string;
  citation_order: number[];
  raw: string;
  pages?: number[];
  citation_warnings?: string[];
}

export interface ConformityPayload {
  question_index: number;
  analysis: string;
  score: number;
  word_limit_exceeded: boolean;
  raw: string;
}

export interface QuestionFailure {
  question_index: number;
  code?: string;
  message?: string;
  stage?: string;
}

export interface ReportAnalysis {
  doc_id: string;
  created_at: string;
  status: "complete" | "partial" | "failed";
  basic_info: BasicInfo;
  answers: Record<string, AnswerPayload>;
  conformity: Record<string, ConformityPayload>;
  average_score: number;
  guideline_version: number;
  errors: QuestionFailure[];
}

export interface AskResponse extends AnswerPayload {
  answer_id: string;
  question: string;
}

// Offsets are relative to `chunk_text`, so chunk_text.slice(start, end)
// is exactly the matched span.
export interface EvidenceMatch {
  source: number;
  page: number;
  start: number;
  end: number;
  text: string;
  chunk_text: string;
}

export interface EvidenceResult {
  fragment: string;
  matches: EvidenceMatch[];
}

export type FeedbackStatus = "pending" | "transformed" | "archived";

export interface FeedbackRecord {
  feedback_id: string;
  answer_id: string;
  expert_id: string;
  feedback_text: string;
  created_at: string;
  question_index: number | null;
  status: FeedbackStatus;
}

export interface NewFeedback {
  answer_id: string;
  feedback_text: string;
  expert_id?: string;
  question_index?: number;
}

export interface TransformResult {
  guideline: string;
  version: number;
  scope: "general" | "specific";
  status: string;
}

export interface GuidelineEntry {
  text: string;
  origin: string;
  status: "active" | "draft";
  added_version: number;
}

export interface GuidelineSet {
  version: number;
  general: GuidelineEntry[];
  specific: Record<string, GuidelineEntry>;
}
