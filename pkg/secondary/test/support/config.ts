import * as path from "node:path";
import { fileURLToPath } from "node:url";
import type { AdapterConfig } from "../../src/schemas.js";

export const PKG_ROOT = fileURLToPath(new URL("../..", import.meta.url));
export const FIXTURES = path.join(PKG_ROOT, "test", "fixtures");
export const GOLDEN = path.join(PKG_ROOT, "test", "golden");

export function testConfig(outDir: string): AdapterConfig {
  return {
    endpoint: "http://service.invalid",
    encoderModel: "test-encoder",
    analystModel: "test-analyst",
    embeddingDim: 6,
    batchSize: 3,
    maxInFlight: 2,
    maxRetries: 1,
    retryBaseMs: 0,
    promptTemplatePath: path.join(PKG_ROOT, "assets", "topic_prompt.txt"),
    out: {
      embeddings: path.join(outDir, "embeddings_texts.jsonl"),
      tokenFeatures: path.join(outDir, "token_features.jsonl"),
      polarities: path.join(outDir, "topic_polarities.jsonl"),
    },
  };
}

export const ANALYST_SCRIPT: Record<string, string> = {
  "reverse repos": "1",
  "missed a coupon payment":
    "Thought Process: Falling profits and a missed coupon point to credit stress.\n\nOutput: -1",
  "bronze-age artifacts": "maybe bullish",
  "issuance calendar unchanged":
    "Thought Process: Supply in line with expectations; neutral for rates.\n\nOutput: 0",
  "quarter-end": "Output: 1",
};
