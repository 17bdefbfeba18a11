import { ApiClient, ServiceError } from "../api/client.js";
import type { EvidenceMatch, ServiceErrorBody } from "../api/types.js";

// The service rejects fragments shorter than this after whitespace collapsing.
export const MIN_FRAGMENT_LENGTH = 3;

/**
 * Pull the first double-quoted passage out of an answer. Quoted passages are
 * the spans worth locating in the report, so clicking a source uses one as
 * the default lookup fragment.
 */
export function quotedFragment(answerText: string): string | null {
  const match = /["“]([^"“”]+)["”]/.exec(answerText);
  if (!match) return null;
  const fragment = match[1]!.trim();
  return fragment.length >= MIN_FRAGMENT_LENGTH ? fragment : null;
}

export interface HighlightedMatch {
  source: number;
  page: number;
  before: string;
  mark: string;
  after: string;
}

/** Split a match's chunk text around the located span for rendering. */
export function highlightMatch(match: EvidenceMatch): HighlightedMatch {
  return {
    source: match.source,
    page: match.page,
    before: match.chunk_text.slice(0, match.start),
    mark: match.chunk_text.slice(match.start, match.end),
    after: match.chunk_text.slice(match.end),
  };
}

export interface EvidenceState {
  open: boolean;
  docId: string | null;
  source: number | null;
  fragment: string;
  loading: boolean;
  matches: HighlightedMatch[];
  otherSources: number[];
  error: ServiceErrorBody | null;
}

/**
 * Evidence panel state: which source was clicked, what fragment is being
 * located, and the highlighted matches that came back.
 */
export class EvidenceLookup {
  readonly state: EvidenceState = {
    open: false,
    docId: null,
    source: null,
    fragment: "",
    loading: false,
    matches: [],
    otherSources: [],
    error: null,
  };

  constructor(
    private readonly client: ApiClient,
    private readonly onChange: (state: EvidenceState) => void = () => {},
  ) {}

  /** Open the panel for a clicked source and look the fragment up. */
  async open(docId: string, source: number, fragment: string | null): Promise<void> {
    this.set({ open: true, docId, source, fragment: fragment ?? "", matches: [], otherSources: [], error: null });
    if (fragment) await this.locate(fragment);
  }

  /** Re-run the lookup with an edited fragment. */
  async locate(fragment: string): Promise<void> {
    const { docId, source } = this.state;
    if (!docId) return;
    this.set({ fragment, loading: true, error: null });
    try {
      const result = await this.client.getEvidence(docId, fragment);
      const forSource =
        source === null ? result.matches : result.matches.filter((m) => m.source === source);
      const shown = forSource.length > 0 ? forSource : result.matches;
      this.set({
        loading: false,
        matches: shown.map(highlightMatch),
        otherSources:
          forSource.length > 0
            ? []
            : [...new Set(result.matches.map((m) => m.source))],
      });
    } catch (err) {
      this.set({
        loading: false,
        matches: [],
        otherSources: [],
        error: err instanceof ServiceError ? err.body : { code: "error", message: String(err), stage: "ui" },
      });
    }
  }

  close(): void {
    this.set({ open: false, matches: [], otherSources: [], error: null });
  }

  private set(patch: Partial<EvidenceState>): void {
    Object.assign(this.state, patch);
    this.onChange(this.state);
  }
}
