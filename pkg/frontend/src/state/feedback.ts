import type { ApiClient } from "../api/client.js";
import type {
  FeedbackRecord,
  GuidelineSet,
  NewFeedback,
  TransformResult,
} from "../api/types.js";

/**
 * Expert feedback desk: submit feedback on answers, review the pending
 * queue, turn entries into draft guidelines, and promote drafts.
 */
export class FeedbackDesk {
  pending: FeedbackRecord[] = [];
  transformed: FeedbackRecord[] = [];
  guidelines: GuidelineSet | null = null;

  constructor(private readonly client: ApiClient) {}

  async refresh(): Promise<void> {
    const [pending, transformed, guidelines] = await Promise.all([
      this.client.listFeedback("pending"),
      this.client.listFeedback("transformed"),
      this.client.getGuidelines(),
    ]);
    this.pending = pending;
    this.transformed = transformed;
    this.guidelines = guidelines;
  }

  async submit(feedback: NewFeedback): Promise<FeedbackRecord> {
    const record = await this.client.submitFeedback(feedback);
    await this.refresh();
    return record;
  }

  async transform(feedbackId: string, scope: "general" | "specific" = "general"): Promise<TransformResult> {
    const result = await this.client.transformFeedback(feedbackId, scope);
    await this.refresh();
    return result;
  }

  async promote(version: number): Promise<GuidelineSet> {
    const updated = await this.client.promoteGuidelines(version);
    this.guidelines = updated;
    await this.refresh();
    return updated;
  }

  /** Draft guideline entries grouped for the admin pane. */
  drafts(): { scope: string; text: string; addedVersion: number }[] {
    if (!this.guidelines) return [];
    const out: { scope: string; text: string; addedVersion: number }[] = [];
    for (const entry of this.guidelines.general) {
      if (entry.status === "draft") {
        out.push({ scope: "general", text: entry.text, addedVersion: entry.added_version });
      }
    }
    for (const [index, entry] of Object.entries(this.guidelines.specific)) {
      if (entry.status === "draft") {
        out.push({ scope: `question ${index}`, text: entry.text, addedVersion: entry.added_version });
      }
    }
    return out;
  }
}
