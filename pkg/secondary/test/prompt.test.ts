import * as fs from "node:fs";
import * as os from "node:os";
import * as path from "node:path";
import { describe, expect, it } from "vitest";

import { loadPromptTemplate, renderPrompt } from "../src/prompt.js";
import { PKG_ROOT } from "./support/config.js";

const TEMPLATE_PATH = path.join(PKG_ROOT, "assets", "topic_prompt.txt");

describe("prompt template", () => {
  it("ships with the three polarity definitions and the stepwise rules", () => {
    const template = loadPromptTemplate(TEMPLATE_PATH);
    expect(template).toContain("Pessimistic (-1)");
    expect(template).toContain("Neutral (0)");
    expect(template).toContain("Optimistic (1)");
    for (const step of ["a)", "b)", "c)", "d)"]) {
      expect(template).toContain(step);
    }
  });

  it("rejects a template missing a required marker", () => {
    const broken = path.join(os.tmpdir(), `broken-${process.pid}.txt`);
    const template = fs.readFileSync(TEMPLATE_PATH, "utf-8");
    fs.writeFileSync(broken, template.replace("Optimistic (1)", "Good (1)"));
    expect(() => loadPromptTemplate(broken)).toThrow(/Optimistic/);
    fs.unlinkSync(broken);
  });

  it("renders the text after the examples and cues the answer", () => {
    const template = loadPromptTemplate(TEMPLATE_PATH);
    const prompt = renderPrompt(template, "Liquidity tightened into quarter end.");
    expect(prompt.endsWith("Input: Liquidity tightened into quarter end.\n\nOutput:")).toBe(true);
    expect(prompt.indexOf("Example 3")).toBeLessThan(prompt.indexOf("Liquidity tightened"));
  });
});
