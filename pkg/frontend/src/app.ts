// Browser entry point: owns the page-level state objects and wires DOM
// events to them. All rendering goes through the pure functions in views/.

import { ApiClient, ServiceError } from "./api/client.js";
import type { ReportAnalysis } from "./api/types.js";
import { AskSession } from "./state/ask.js";
import { EvidenceLookup, quotedFragment } from "./state/evidence.js";
import { FeedbackDesk } from "./state/feedback.js";
import { buildReportView, type ReportView } from "./state/report.js";
import { UploadFlow } from "./state/upload.js";
import {
  renderAdminPane,
  renderAskView,
  renderErrorBanner,
  renderEvidencePanel,
  renderReportView,
  renderUploadView,
} from "./views/render.js";

type Tab = "upload" | "report" | "ask" | "admin";

const client = new ApiClient("/api");
const view = document.getElementById("view")!;
const evidenceHost = document.getElementById("evidence")!;

let activeTab: Tab = "upload";
let analysis: ReportAnalysis | null = null;
let reportView: ReportView | null = null;
let askSession: AskSession | null = null;
let askBusy = false;

const flow = new UploadFlow(client, {
  onChange: () => {
    if (activeTab === "upload") render();
  },
});
const evidence = new EvidenceLookup(client, () => {
  evidenceHost.innerHTML = renderEvidencePanel(evidence.state);
});
const desk = new FeedbackDesk(client);

function render(): void {
  document.querySelectorAll<HTMLButtonElement>("nav button[data-tab]").forEach((btn) => {
    btn.classList.toggle("active", btn.dataset.tab === activeTab);
  });
  if (activeTab === "upload") {
    view.innerHTML = renderUploadView(flow.state);
    const text = document.getElementById("upload-text") as HTMLTextAreaElement | null;
    if (text && pendingUploadText !== null) text.value = pendingUploadText;
  } else if (activeTab === "report") {
    view.innerHTML = reportView
      ? renderReportView(reportView)
      : `<p class="empty">No analysis loaded yet. Upload a report first.</p>`;
  } else if (activeTab === "ask") {
    view.innerHTML = askSession
      ? renderAskView(askSession.history, askBusy)
      : `<p class="empty">Upload a report before asking questions.</p>`;
  } else {
    view.innerHTML = renderAdminPane(desk);
  }
}

let pendingUploadText: string | null = null;

async function showError(err: unknown, retryAction: string): Promise<void> {
  const body =
    err instanceof ServiceError
      ? err.body
      : { code: "error", message: err instanceof Error ? err.message : String(err), stage: "ui" };
  const banner = document.createElement("div");
  banner.innerHTML = renderErrorBanner(body, retryAction);
  view.prepend(banner);
}

async function loadAnalysis(docId: string): Promise<void> {
  analysis = await client.getAnalysis(docId);
  reportView = buildReportView(analysis);
  askSession = askSession?.docId === docId ? askSession : new AskSession(client, docId);
}

async function switchTab(tab: Tab): Promise<void> {
  activeTab = tab;
  if (tab === "admin") {
    try {
      await desk.refresh();
    } catch (err) {
      render();
      return showError(err, "refresh-admin");
    }
  }
  render();
}

document.querySelector("nav")!.addEventListener("click", (event) => {
  const target = (event.target as HTMLElement).closest<HTMLButtonElement>("button[data-tab]");
  if (target) void switchTab(target.dataset.tab as Tab);
});

view.addEventListener("submit", (event) => {
  const form = event.target as HTMLFormElement;
  event.preventDefault();

  if (form.id === "upload-form") {
    const text = (document.getElementById("upload-text") as HTMLTextAreaElement).value;
    const format = (document.getElementById("upload-format") as HTMLSelectElement).value;
    const title = (document.getElementById("upload-title") as HTMLInputElement).value;
    pendingUploadText = text;
    void flow
      .run(text, { format, title: title || undefined })
      .then(async (job) => {
        if (job && flow.state.docId) {
          await loadAnalysis(flow.state.docId);
          render();
        }
      })
      .catch((err) => showError(err, "retry-upload"));
  } else if (form.id === "ask-form" && askSession) {
    const input = document.getElementById("ask-question") as HTMLInputElement;
    const question = input.value.trim();
    if (!question) return;
    askBusy = true;
    render();
    void askSession
      .ask(question)
      .catch((err) => showError(err, "none"))
      .finally(() => {
        askBusy = false;
        render();
      });
  } else if (form.classList.contains("feedback-form")) {
    const input = form.querySelector("input[name=feedback]") as HTMLInputElement;
    const text = input.value.trim();
    if (!text) return;
    void desk
      .submit({
        answer_id: form.dataset.answerId!,
        feedback_text: text,
        question_index: form.dataset.question ? Number(form.dataset.question) : undefined,
      })
      .then(() => {
        input.value = "";
        input.placeholder = "Thanks, recorded.";
      })
      .catch((err) => showError(err, "none"));
  }
});

view.addEventListener("click", (event) => {
  const target = event.target as HTMLElement;

  const chip = target.closest<HTMLButtonElement>(".source-chip");
  if (chip && reportView) {
    const question = Number(chip.dataset.question);
    const card = reportView.cards.find((c) => c.index === question);
    const fragment = card?.answer ? quotedFragment(card.answer.answer) : null;
    void evidence.open(chip.dataset.doc!, Number(chip.dataset.source), fragment);
    return;
  }

  const feedbackBtn = target.closest<HTMLButtonElement>(".ask-feedback");
  if (feedbackBtn) {
    const text = window.prompt("Feedback on this answer:");
    if (text && text.trim()) {
      void desk
        .submit({ answer_id: feedbackBtn.dataset.answerId!, feedback_text: text.trim() })
        .catch((err) => showError(err, "none"));
    }
    return;
  }

  const action = target.closest<HTMLButtonElement>("button[data-action]")?.dataset.action;
  if (action === "retry-upload") {
    void flow.retry().then(async (job) => {
      if (job && flow.state.docId) {
        await loadAnalysis(flow.state.docId);
        render();
      }
    });
  } else if (action === "show-report") {
    void switchTab("report");
  }
});

evidenceHost.addEventListener("submit", (event) => {
  const form = event.target as HTMLFormElement;
  if (form.id !== "evidence-form") return;
  event.preventDefault();
  const input = document.getElementById("evidence-fragment") as HTMLInputElement;
  void evidence.locate(input.value);
});

evidenceHost.addEventListener("click", (event) => {
  const target = event.target as HTMLElement;
  if (target.closest("[data-action=close-evidence]")) evidence.close();
  if (target.closest("[data-action=retry-evidence]")) void evidence.locate(evidence.state.fragment);
});

view.addEventListener("click", (event) => {
  const target = event.target as HTMLElement;
  const transform = target.closest<HTMLButtonElement>("button.transform");
  if (transform) {
    void desk
      .transform(transform.dataset.feedbackId!, transform.dataset.scope as "general" | "specific")
      .then(render)
      .catch((err) => showError(err, "none"));
    return;
  }
  const promote = target.closest<HTMLButtonElement>("button.promote");
  if (promote) {
    void desk
      .promote(Number(promote.dataset.version))
      .then(render)
      .catch((err) => showError(err, "none"));
  }
});

render();
