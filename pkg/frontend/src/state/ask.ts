import type { ApiClient } from "../api/client.js";
import type { AskResponse } from "../api/types.js";

export interface AskEntry {
  question: string;
  response: AskResponse;
}

/**
 * One follow-up question session against a report. The conversation history
 * lives only on the client; every answer itself comes from the service.
 */
export class AskSession {
  readonly history: AskEntry[] = [];

  constructor(
    private readonly client: ApiClient,
    readonly docId: string,
  ) {}

  async ask(question: string): Promise<AskEntry> {
    const response = await this.client.askQuestion(this.docId, question);
    const entry: AskEntry = { question, response };
    this.history.push(entry);
    return entry;
  }
}
