import { z } from "zod";

/** A text as handed to the adapters: engine fields plus the raw body the
 * remote services need. The engine itself never sees the body. */
export const inputTextSchema = z.object({
  text_id: z.string().min(1),
  date: z.string().regex(/^\d{4}-\d{2}-\d{2}$/, "date must be YYYY-MM-DD"),
  stream: z.enum(["micro", "meso"]),
  mentioned_bonds: z.array(z.string()).default([]),
  body: z.string().min(1),
  soft_label: z.array(z.number()).length(3).optional(),
});
export type InputText = z.infer<typeof inputTextSchema>;

export const topicSchema = z.object({
  topic_id: z.string().min(1),
  body: z.string().min(1),
});
export type Topic = z.infer<typeof topicSchema>;

/** Engine-side record shapes, kept in sync with the Python loaders. */
export const embeddingHeaderSchema = z.object({ dim: z.number().int().positive() });

export const embeddingRecordSchema = z.object({
  key: z.string().min(1),
  vector: z.array(z.number()),
});
export type EmbeddingRecord = z.infer<typeof embeddingRecordSchema>;

export const tokenFeatureRecordSchema = z.object({
  text_id: z.string().min(1),
  cls: z.array(z.number()).nonempty(),
  bonds: z.record(z.string(), z.array(z.array(z.number()))),
});
export type TokenFeatureRecord = z.infer<typeof tokenFeatureRecordSchema>;

export const polarityRecordSchema = z.object({
  text_id: z.string().min(1),
  date: z.string(),
  polarity: z.union([z.literal(-1), z.literal(0), z.literal(1)]),
  unparsed: z.literal(true).optional(),
  reply: z.string().optional(),
});
export type PolarityRecord = z.infer<typeof polarityRecordSchema>;

export const adapterConfigSchema = z.object({
  endpoint: z.string().min(1),
  encoderModel: z.string().min(1),
  analystModel: z.string().min(1),
  embeddingDim: z.number().int().positive(),
  batchSize: z.number().int().positive().default(16),
  maxInFlight: z.number().int().positive().default(4),
  maxRetries: z.number().int().nonnegative().default(3),
  retryBaseMs: z.number().nonnegative().default(500),
  promptTemplatePath: z.string().min(1),
  out: z.object({
    embeddings: z.string().min(1),
    tokenFeatures: z.string().min(1),
    polarities: z.string().min(1),
  }),
});
export type AdapterConfig = z.infer<typeof adapterConfigSchema>;

export function parseConfig(raw: unknown): AdapterConfig {
  return adapterConfigSchema.parse(raw);
}
