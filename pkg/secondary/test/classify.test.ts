import * as fs from "node:fs";
import * as os from "node:os";
import * as path from "node:path";
import { describe, expect, it } from "vitest";

import { classifyTopics } from "../src/classify.js";
import { parsePolarity } from "../src/prompt.js";
import { cannedAnalyst } from "./support/mock.js";
import { ANALYST_SCRIPT, FIXTURES, GOLDEN, testConfig } from "./support/config.js";

const MESO = path.join(FIXTURES, "texts_meso.jsonl");

function freshDir(): string {
  return fs.mkdtempSync(path.join(os.tmpdir(), "adapter-classify-"));
}

describe("parsePolarity", () => {
  it("takes a bare score as-is", () => {
    expect(parsePolarity("1")).toEqual({ polarity: 1, unparsed: false });
    expect(parsePolarity(" -1 ")).toEqual({ polarity: -1, unparsed: false });
    expect(parsePolarity("0")).toEqual({ polarity: 0, unparsed: false });
  });

  it("reads the worked answer shape, last answer wins", () => {
    expect(parsePolarity("Thought Process: stress building.\n\nOutput: -1").polarity).toBe(-1);
    expect(parsePolarity("Output: 1\nOn reflection...\nOutput: 0").polarity).toBe(0);
  });

  it("does not misread longer numbers as scores", () => {
    expect(parsePolarity("Output: 10").unparsed).toBe(true);
    expect(parsePolarity("Output: -1.5").unparsed).toBe(true);
  });

  it("falls back to neutral with the flag", () => {
    expect(parsePolarity("maybe bullish")).toEqual({ polarity: 0, unparsed: true });
    expect(parsePolarity("")).toEqual({ polarity: 0, unparsed: true });
  });
});

describe("classifyTopics", () => {
  it("canned replies reproduce the golden byte for byte", async () => {
    const cfg = testConfig(freshDir());
    const report = await classifyTopics(MESO, cfg, cannedAnalyst(ANALYST_SCRIPT));
    expect(report.failed).toEqual([]);
    expect(report.written).toBe(5);
    const goldenPath = path.join(GOLDEN, "topic_polarities.jsonl");
    const actual = fs.readFileSync(cfg.out.polarities, "utf-8");
    if (process.env.UPDATE_GOLDENS === "1") {
      fs.mkdirSync(GOLDEN, { recursive: true });
      fs.writeFileSync(goldenPath, actual);
    }
    expect(actual).toBe(fs.readFileSync(goldenPath, "utf-8"));
  });

  it("keeps the raw reply on unparseable records only", async () => {
    const cfg = testConfig(freshDir());
    await classifyTopics(MESO, cfg, cannedAnalyst(ANALYST_SCRIPT));
    const records = fs
      .readFileSync(cfg.out.polarities, "utf-8")
      .trim()
      .split("\n")
      .map((l) => JSON.parse(l));
    const flagged = records.filter((r) => r.unparsed);
    expect(flagged).toHaveLength(1);
    expect(flagged[0].text_id).toBe("wire-2403-0103");
    expect(flagged[0].polarity).toBe(0);
    expect(flagged[0].reply).toBe("maybe bullish");
    for (const r of records.filter((x) => !x.unparsed)) {
      expect(r.reply).toBeUndefined();
    }
  });

  it("second run over the same output writes nothing new", async () => {
    const cfg = testConfig(freshDir());
    await classifyTopics(MESO, cfg, cannedAnalyst(ANALYST_SCRIPT));
    const before = fs.readFileSync(cfg.out.polarities, "utf-8");
    const again = await classifyTopics(MESO, cfg, cannedAnalyst(ANALYST_SCRIPT));
    expect(again.written).toBe(0);
    expect(again.skippedExisting).toBe(5);
    expect(fs.readFileSync(cfg.out.polarities, "utf-8")).toBe(before);
  });
});
