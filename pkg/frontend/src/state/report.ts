import type {
  AnswerPayload,
  BasicInfo,
  ConformityPayload,
  QuestionFailure,
  ReportAnalysis,
} from "../api/types.js";
import { CATEGORY_NAMES, QUESTIONS } from "../domain/questions.js";

export interface ReportCard {
  index: number;
  category: string;
  question: string;
  answer: AnswerPayload | null;
  conformity: ConformityPayload | null;
  failure: QuestionFailure | null;
}

export interface ReportView {
  docId: string;
  createdAt: string;
  status: ReportAnalysis["status"];
  company: BasicInfo;
  averageScore: number;
  averageDisplay: string;
  guidelineVersion: number;
  cards: ReportCard[];
}

export type ScoreBand = "high" | "medium" | "low";

/** Display bucket for a service-provided score; purely cosmetic. */
export function scoreBand(score: number): ScoreBand {
  if (score >= 70) return "high";
  if (score >= 40) return "medium";
  return "low";
}

export function formatAverage(score: number): string {
  return score.toFixed(2);
}

/**
 * Arrange a stored analysis into the eleven cards the report view renders.
 * Every number shown comes from the analysis payload itself.
 */
export function buildReportView(analysis: ReportAnalysis): ReportView {
  const failures = new Map<number, QuestionFailure>();
  for (const failure of analysis.errors ?? []) {
    failures.set(failure.question_index, failure);
  }

  const cards: ReportCard[] = QUESTIONS.map((label) => ({
    index: label.index,
    category: CATEGORY_NAMES[label.category],
    question: label.text,
    answer: analysis.answers[String(label.index)] ?? null,
    conformity: analysis.conformity[String(label.index)] ?? null,
    failure: failures.get(label.index) ?? null,
  }));

  return {
    docId: analysis.doc_id,
    createdAt: analysis.created_at,
    status: analysis.status,
    company: analysis.basic_info,
    averageScore: analysis.average_score,
    averageDisplay: formatAverage(analysis.average_score),
    guidelineVersion: analysis.guideline_version,
    cards,
  };
}

/** Pair each cited source with its page number (the two lists line up). */
export function sourceChips(answer: AnswerPayload): { source: number; page: number | null }[] {
  return answer.sources.map((source, i) => ({
    source,
    page: answer.pages?.[i] ?? null,
  }));
}
