import * as fs from "node:fs";

/** Markers every usable template must carry: the three polarity
 * definitions and the stepwise output requirements. */
const REQUIRED_MARKERS = [
  "Pessimistic (-1)",
  "Neutral (0)",
  "Optimistic (1)",
  "a)",
  "b)",
  "c)",
  "d)",
];

export function loadPromptTemplate(path: string): string {
  const text = fs.readFileSync(path, "utf-8");
  const missing = REQUIRED_MARKERS.filter((m) => !text.includes(m));
  if (missing.length > 0) {
    throw new Error(`prompt template ${path} is missing: ${missing.join(", ")}`);
  }
  return text;
}

export function renderPrompt(template: string, body: string): string {
  return `${template.trimEnd()}\n\nInput: ${body}\n\nOutput:`;
}

export interface ParsedPolarity {
  polarity: -1 | 0 | 1;
  unparsed: boolean;
}

/** Strict parse first (the reply is nothing but the score), then the
 * answer shape the examples use ("Output: -1", last occurrence wins),
 * otherwise neutral with the unparsed flag set. */
export function parsePolarity(reply: string): ParsedPolarity {
  const trimmed = reply.trim();
  if (trimmed === "-1" || trimmed === "0" || trimmed === "1") {
    return { polarity: Number(trimmed) as -1 | 0 | 1, unparsed: false };
  }
  const matches = [...trimmed.matchAll(/Output:\s*(-1|0|1)(?![\d.])/g)];
  const last = matches[matches.length - 1];
  if (last) {
    return { polarity: Number(last[1]) as -1 | 0 | 1, unparsed: false };
  }
  return { polarity: 0, unparsed: true };
}
