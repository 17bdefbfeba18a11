import type { FeedbackRecord, ServiceErrorBody } from "../api/types.js";
import type { AskEntry } from "../state/ask.js";
import type { EvidenceState } from "../state/evidence.js";
import type { FeedbackDesk } from "../state/feedback.js";
import { scoreBand, sourceChips, type ReportCard, type ReportView } from "../state/report.js";
import type { UploadState } from "../state/upload.js";

export const DISCLAIMER_TEXT =
  "Generated answers are references into the underlying report, not factual claims. Verify them against the cited pages.";

export function escapeHtml(text: string): string {
  return text
    .replace(/&/g, "&amp;")
    .replace(/</g, "&lt;")
    .replace(/>/g, "&gt;")
    .replace(/"/g, "&quot;")
    .replace(/'/g, "&#39;");
}

export function renderDisclaimer(): string {
  return `<p class="disclaimer">${escapeHtml(DISCLAIMER_TEXT)}</p>`;
}

/** The {code, message, stage} body rendered verbatim, with a retry hook. */
export function renderErrorBanner(error: ServiceErrorBody, retryAction: string): string {
  return (
    `<div class="error-banner" role="alert">` +
    `<span class="error-code">${escapeHtml(error.code)}</span> ` +
    `<span class="error-message">${escapeHtml(error.message)}</span> ` +
    `<span class="error-stage">stage: ${escapeHtml(error.stage)}</span> ` +
    `<button type="button" class="retry" data-action="${escapeHtml(retryAction)}">Retry</button>` +
    `</div>`
  );
}

export function renderScoreBadge(score: number): string {
  return `<span class="score-badge score-${scoreBand(score)}" data-score="${score}">${score}</span>`;
}

export function renderUploadView(state: UploadState): string {
  const lines: string[] = [`<section class="upload-view" data-phase="${state.phase}">`];
  lines.push(`<h2>Upload a report</h2>`);
  lines.push(
    `<form id="upload-form">` +
      `<textarea id="upload-text" rows="8" placeholder="Paste report text here"></textarea>` +
      `<label>Format <select id="upload-format">` +
      `<option value="plain_text">plain text</option>` +
      `<option value="page_delimited_text">page-delimited text</option>` +
      `</select></label>` +
      `<input id="upload-title" placeholder="Title (optional)">` +
      `<button type="submit">Upload and analyze</button>` +
      `</form>`,
  );
  if (state.docId) {
    lines.push(`<p class="doc-id">Document <code>${escapeHtml(state.docId)}</code></p>`);
  }
  if (state.phase === "indexing") {
    lines.push(`<p class="job-progress">Indexing document…</p>`);
  } else if (state.phase === "analyzing") {
    const { done, total } = state.progress;
    lines.push(`<p class="job-progress">Analyzing: ${done}/${total} questions</p>`);
  } else if (state.phase === "done") {
    lines.push(
      `<p class="job-progress">Analysis ${escapeHtml(state.finalState ?? "complete")}. ` +
        `<button type="button" data-action="show-report">Open report</button></p>`,
    );
  }
  if (state.error) lines.push(renderErrorBanner(state.error, "retry-upload"));
  lines.push(`</section>`);
  return lines.join("\n");
}

function renderCard(docId: string, card: ReportCard): string {
  const lines: string[] = [
    `<article class="report-card" data-question="${card.index}">`,
    `<header><span class="card-category">${escapeHtml(card.category)}</span>` +
      (card.conformity ? renderScoreBadge(card.conformity.score) : `<span class="score-badge score-missing">—</span>`) +
      `</header>`,
    `<h3>${card.index}. ${escapeHtml(card.question)}</h3>`,
  ];
  if (card.answer) {
    lines.push(`<p class="answer-text">${escapeHtml(card.answer.answer)}</p>`);
    const chips = sourceChips(card.answer)
      .map(
        (chip) =>
          `<button type="button" class="source-chip" data-doc="${escapeHtml(docId)}" ` +
          `data-question="${card.index}" data-source="${chip.source}">` +
          `s${chip.source}${chip.page !== null ? ` · p.${chip.page}` : ""}</button>`,
      )
      .join(" ");
    lines.push(`<p class="sources">Sources: ${chips || "none cited"}</p>`);
    for (const warning of card.answer.citation_warnings ?? []) {
      lines.push(`<p class="citation-warning">⚠ ${escapeHtml(warning)}</p>`);
    }
  }
  if (card.conformity) {
    lines.push(`<p class="conformity-analysis">${escapeHtml(card.conformity.analysis)}</p>`);
  }
  if (card.failure) {
    lines.push(
      `<p class="card-failure">Failed at stage ${escapeHtml(card.failure.stage ?? "?")}: ` +
        `${escapeHtml(card.failure.message ?? card.failure.code ?? "error")}</p>`,
    );
  }
  lines.push(
    `<form class="feedback-form" data-answer-id="${escapeHtml(docId)}:q${card.index}" data-question="${card.index}">` +
      `<input name="feedback" placeholder="Expert feedback on this answer">` +
      `<button type="submit">Send feedback</button>` +
      `</form>`,
  );
  lines.push(`</article>`);
  return lines.join("\n");
}

export function renderReportView(view: ReportView): string {
  const company = view.company;
  const header =
    `<header class="report-header">` +
    `<h2>${escapeHtml(company.company_name)}</h2>` +
    `<p class="company-meta">${escapeHtml(company.location)} · ${escapeHtml(company.sector)}</p>` +
    `<p class="average">Average conformity <strong class="average-score">${escapeHtml(view.averageDisplay)}</strong>` +
    ` <span class="report-status">(${escapeHtml(view.status)}, guidelines v${view.guidelineVersion})</span></p>` +
    `</header>`;
  const cards = view.cards.map((card) => renderCard(view.docId, card)).join("\n");
  return (
    `<section class="report-view" data-doc="${escapeHtml(view.docId)}">` +
    `${renderDisclaimer()}${header}<div class="cards">${cards}</div></section>`
  );
}

export function renderEvidencePanel(state: EvidenceState): string {
  if (!state.open) return "";
  const lines: string[] = [`<aside class="evidence-panel" data-source="${state.source ?? ""}">`];
  lines.push(`<button type="button" class="close-evidence" data-action="close-evidence">×</button>`);
  lines.push(`<h3>Evidence${state.source !== null ? ` for source ${state.source}` : ""}</h3>`);
  lines.push(
    `<form id="evidence-form">` +
      `<input id="evidence-fragment" value="${escapeHtml(state.fragment)}" ` +
      `placeholder="Passage to locate in the report">` +
      `<button type="submit">Locate</button></form>`,
  );
  if (state.loading) {
    lines.push(`<p class="evidence-loading">Searching…</p>`);
  } else if (state.error) {
    lines.push(renderErrorBanner(state.error, "retry-evidence"));
  } else if (state.matches.length === 0 && state.fragment) {
    lines.push(`<p class="no-matches">No matches for this passage.</p>`);
  }
  if (state.otherSources.length > 0) {
    lines.push(
      `<p class="other-sources">Found in other sources: ${state.otherSources.join(", ")}</p>`,
    );
  }
  for (const match of state.matches) {
    lines.push(
      `<blockquote class="evidence-match" data-source="${match.source}" data-page="${match.page}">` +
        `<span class="evidence-where">source ${match.source}, page ${match.page}</span>` +
        `<p>${escapeHtml(match.before)}<mark>${escapeHtml(match.mark)}</mark>${escapeHtml(match.after)}</p>` +
        `</blockquote>`,
    );
  }
  lines.push(`</aside>`);
  return lines.join("\n");
}

export function renderAskView(history: AskEntry[], busy: boolean): string {
  const lines: string[] = [`<section class="ask-view">`];
  lines.push(renderDisclaimer());
  lines.push(`<h2>Ask about this report</h2>`);
  for (const entry of history) {
    const sources = entry.response.sources.join(", ");
    const pages = (entry.response.pages ?? []).join(", ");
    lines.push(
      `<div class="ask-entry" data-answer-id="${escapeHtml(entry.response.answer_id)}">` +
        `<p class="ask-question">${escapeHtml(entry.question)}</p>` +
        `<p class="ask-answer">${escapeHtml(entry.response.answer)}</p>` +
        `<p class="ask-meta">sources: ${escapeHtml(sources || "none")}` +
        (pages ? ` · pages: ${escapeHtml(pages)}` : "") +
        ` <button type="button" class="ask-feedback" data-answer-id="${escapeHtml(entry.response.answer_id)}">` +
        `Give feedback</button></p>` +
        `</div>`,
    );
  }
  lines.push(
    `<form id="ask-form"${busy ? ' data-busy="true"' : ""}>` +
      `<input id="ask-question" placeholder="e.g. What are the company's Scope 2 emissions?"` +
      `${busy ? " disabled" : ""}>` +
      `<button type="submit"${busy ? " disabled" : ""}>Ask</button></form>`,
  );
  lines.push(`</section>`);
  return lines.join("\n");
}

function renderFeedbackRow(record: FeedbackRecord, withActions: boolean): string {
  const actions = withActions
    ? `<button type="button" class="transform" data-feedback-id="${escapeHtml(record.feedback_id)}" data-scope="general">To guideline</button>` +
      (record.question_index !== null
        ? ` <button type="button" class="transform" data-feedback-id="${escapeHtml(record.feedback_id)}" data-scope="specific">To Q${record.question_index} guideline</button>`
        : "")
    : "";
  return (
    `<tr class="feedback-row" data-feedback-id="${escapeHtml(record.feedback_id)}" data-status="${record.status}">` +
    `<td>${escapeHtml(record.created_at)}</td>` +
    `<td>${escapeHtml(record.expert_id)}</td>` +
    `<td class="feedback-text">${escapeHtml(record.feedback_text)}</td>` +
    `<td><code>${escapeHtml(record.answer_id)}</code></td>` +
    `<td>${actions}</td></tr>`
  );
}

export function renderAdminPane(desk: FeedbackDesk): string {
  const lines: string[] = [`<section class="admin-pane">`];
  lines.push(`<h2>Expert feedback</h2>`);
  const version = desk.guidelines?.version;
  lines.push(
    `<p class="guideline-version">Guidelines version <strong>${version ?? "?"}</strong>` +
      (desk.guidelines
        ? ` · ${desk.guidelines.general.length} general, ${Object.keys(desk.guidelines.specific).length} question-specific`
        : "") +
      `</p>`,
  );
  const drafts = desk.drafts();
  if (drafts.length > 0 && version !== undefined) {
    lines.push(`<div class="drafts"><h3>Draft guidelines</h3><ul>`);
    for (const draft of drafts) {
      lines.push(
        `<li class="draft" data-scope="${escapeHtml(draft.scope)}">` +
          `[${escapeHtml(draft.scope)}, v${draft.addedVersion}] ${escapeHtml(draft.text)}</li>`,
      );
    }
    lines.push(
      `</ul><button type="button" class="promote" data-version="${version}">` +
        `Promote drafts from v${version}</button></div>`,
    );
  }
  lines.push(`<h3>Pending</h3>`);
  if (desk.pending.length === 0) {
    lines.push(`<p class="empty-queue">No pending feedback.</p>`);
  } else {
    lines.push(
      `<table class="feedback-table pending"><thead><tr>` +
        `<th>When</th><th>Expert</th><th>Feedback</th><th>Answer</th><th></th>` +
        `</tr></thead><tbody>`,
    );
    for (const record of desk.pending) lines.push(renderFeedbackRow(record, true));
    lines.push(`</tbody></table>`);
  }
  if (desk.transformed.length > 0) {
    lines.push(`<h3>Transformed</h3><table class="feedback-table transformed"><tbody>`);
    for (const record of desk.transformed) lines.push(renderFeedbackRow(record, false));
    lines.push(`</tbody></table>`);
  }
  lines.push(`</section>`);
  return lines.join("\n");
}
