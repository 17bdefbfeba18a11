// Display copy for the eleven disclosure review points. The service keys its
// answers and scores by question index only, so the UI carries the matching
// labels. Nothing here feeds any computation.

export interface QuestionLabel {
  index: number;
  category: "Governance" | "Strategy" | "RiskManagement" | "MetricsTargets";
  text: string;
}

export const CATEGORY_NAMES: Record<QuestionLabel["category"], string> = {
  Governance: "Governance",
  Strategy: "Strategy",
  RiskManagement: "Risk Management",
  MetricsTargets: "Metrics and Targets",
};

export const QUESTIONS: QuestionLabel[] = [
  {
    index: 1,
    category: "Governance",
    text: "How does the company's board oversee climate-related risks and opportunities?",
  },
  {
    index: 2,
    category: "Governance",
    text: "What is the role of management in assessing and managing climate-related risks and opportunities?",
  },
  {
    index: 3,
    category: "Strategy",
    text: "What are the most relevant climate-related risks and opportunities that the organization has identified over the short, medium, and long term? Are risks clearly associated with a horizon?",
  },
  {
    index: 4,
    category: "Strategy",
    text: "How do climate-related risks and opportunities impact the organization's business strategy, economic and financial performance, and financial planning?",
  },
  {
    index: 5,
    category: "Strategy",
    text: "How resilient is the organization's strategy when considering different climate-related scenarios, including a 2°C target or lower scenario? How resilient is the organization's strategy when considering climate physical risks?",
  },
  {
    index: 6,
    category: "RiskManagement",
    text: "What processes does the organization use to identify and assess climate-related risks?",
  },
  {
    index: 7,
    category: "RiskManagement",
    text: "How does the organization manage climate-related risks?",
  },
  {
    index: 8,
    category: "RiskManagement",
    text: "How are the processes for identifying, assessing, and managing climate-related risks integrated into the organization's overall risk management?",
  },
  {
    index: 9,
    category: "MetricsTargets",
    text: "What metrics does the organization use to assess climate-related risks and opportunities? How do these metrics help ensure that performance aligns with its strategy and risk management process?",
  },
  {
    index: 10,
    category: "MetricsTargets",
    text: "Does the organization disclose its Scope 1, Scope 2, and, if appropriate, Scope 3 greenhouse gas (GHG) emissions? What are the related risks, and do they differ depending on the scope?",
  },
  {
    index: 11,
    category: "MetricsTargets",
    text: "What targets does the organization use to understand, quantify, and benchmark climate-related risks and opportunities? How is the organization performing against these targets?",
  },
];

export function questionLabel(index: number): QuestionLabel | undefined {
  return QUESTIONS.find((q) => q.index === index);
}
