import { inputTextSchema, topicSchema, type AdapterConfig, type InputText, type Topic } from "./schemas.js";
import { JsonlSink, readJsonlObjects } from "./jsonl.js";
import { RateLimiter, withRetries, type EncoderReply, type EncoderService } from "./service.js";

export interface RunReport {
  written: number;
  skippedExisting: number;
  failed: string[];
}

export function loadInputTexts(path: string): InputText[] {
  const seen = new Set<string>();
  return readJsonlObjects(path).map((obj, i) => {
    const parsed = inputTextSchema.safeParse(obj);
    if (!parsed.success) {
      throw new Error(`${path} record ${i + 1}: ${parsed.error.issues[0]?.message}`);
    }
    if (seen.has(parsed.data.text_id)) {
      throw new Error(`${path} record ${i + 1}: duplicate text_id ${parsed.data.text_id}`);
    }
    seen.add(parsed.data.text_id);
    return parsed.data;
  });
}

export function loadTopics(path: string): Topic[] {
  const seen = new Set<string>();
  return readJsonlObjects(path).map((obj, i) => {
    const parsed = topicSchema.safeParse(obj);
    if (!parsed.success) {
      throw new Error(`${path} record ${i + 1}: ${parsed.error.issues[0]?.message}`);
    }
    if (seen.has(parsed.data.topic_id)) {
      throw new Error(`${path} record ${i + 1}: duplicate topic_id ${parsed.data.topic_id}`);
    }
    seen.add(parsed.data.topic_id);
    return parsed.data;
  });
}

function checkReply(reply: EncoderReply, dim: number, bonds: string[]): void {
  if (!Array.isArray(reply.cls) || reply.cls.length !== dim) {
    throw new Error(`cls length ${reply.cls?.length}, want ${dim}`);
  }
  const groups = reply.tokens ?? {};
  for (const bond of bonds) {
    const stack = groups[bond];
    if (!stack || stack.length === 0) {
      throw new Error(`no token group for mentioned bond ${bond}`);
    }
    for (const row of stack) {
      if (row.length !== dim) throw new Error(`token row length ${row.length}, want ${dim}`);
    }
  }
}

/** Embed every text into what the engine ingests for its stream: micro
 * texts become token-feature records (CLS plus per-bond token stacks),
 * meso texts become embedding-store records. Reruns skip ids already
 * present in each output, so a run interrupted mid-file completes to the
 * same bytes as one clean pass. */
export async function embedTexts(
  textsPath: string,
  cfg: AdapterConfig,
  service: EncoderService,
): Promise<RunReport> {
  const texts = loadInputTexts(textsPath);
  const embSink = new JsonlSink(cfg.out.embeddings, (o) =>
    typeof o === "object" && o !== null && "key" in o ? String((o as { key: unknown }).key) : null,
  );
  const tokSink = new JsonlSink(cfg.out.tokenFeatures, (o) =>
    typeof o === "object" && o !== null && "text_id" in o
      ? String((o as { text_id: unknown }).text_id)
      : null,
  );
  embSink.writeHeader({ dim: cfg.embeddingDim });

  const limiter = new RateLimiter(cfg.maxInFlight);
  const report: RunReport = { written: 0, skippedExisting: 0, failed: [] };

  for (let start = 0; start < texts.length; start += cfg.batchSize) {
    const batch = texts.slice(start, start + cfg.batchSize);
    const wanted = batch.filter((t) => {
      const sink = t.stream === "micro" ? tokSink : embSink;
      if (sink.emitted.has(t.text_id)) {
        report.skippedExisting += 1;
        return false;
      }
      return true;
    });
    const replies = await Promise.all(
      wanted.map((t) =>
        limiter.run(() =>
          withRetries(
            async () => {
              const reply = await service.encode({
                id: t.text_id,
                body: t.body,
                bonds: [...t.mentioned_bonds],
              });
              checkReply(reply, cfg.embeddingDim, t.mentioned_bonds);
              return reply;
            },
            cfg.maxRetries,
            cfg.retryBaseMs,
            (err) => console.error(`embed ${t.text_id}: giving up (${String(err)})`),
          ),
        ),
      ),
    );
    // results land in input order regardless of completion order
    wanted.forEach((t, i) => {
      const reply = replies[i];
      if (reply === null || reply === undefined) {
        report.failed.push(t.text_id);
        return;
      }
      if (t.stream === "micro") {
        const bonds: Record<string, number[][]> = {};
        for (const bond of t.mentioned_bonds) {
          bonds[bond] = (reply.tokens ?? {})[bond]!;
        }
        if (tokSink.write(t.text_id, { text_id: t.text_id, cls: reply.cls, bonds })) {
          report.written += 1;
        }
      } else if (embSink.write(t.text_id, { key: t.text_id, vector: reply.cls })) {
        report.written += 1;
      }
    });
  }
  return report;
}

/** Embed the topic catalogue into its own store file. */
export async function embedTopics(
  topicsPath: string,
  outPath: string,
  cfg: AdapterConfig,
  service: EncoderService,
): Promise<RunReport> {
  const topics = loadTopics(topicsPath);
  const sink = new JsonlSink(outPath, (o) =>
    typeof o === "object" && o !== null && "key" in o ? String((o as { key: unknown }).key) : null,
  );
  sink.writeHeader({ dim: cfg.embeddingDim });
  const limiter = new RateLimiter(cfg.maxInFlight);
  const report: RunReport = { written: 0, skippedExisting: 0, failed: [] };

  for (let start = 0; start < topics.length; start += cfg.batchSize) {
    const batch = topics.slice(start, start + cfg.batchSize);
    const wanted = batch.filter((t) => {
      if (sink.emitted.has(t.topic_id)) {
        report.skippedExisting += 1;
        return false;
      }
      return true;
    });
    const replies = await Promise.all(
      wanted.map((t) =>
        limiter.run(() =>
          withRetries(
            async () => {
              const reply = await service.encode({ id: t.topic_id, body: t.body, bonds: [] });
              checkReply(reply, cfg.embeddingDim, []);
              return reply;
            },
            cfg.maxRetries,
            cfg.retryBaseMs,
            (err) => console.error(`embed topic ${t.topic_id}: giving up (${String(err)})`),
          ),
        ),
      ),
    );
    wanted.forEach((t, i) => {
      const reply = replies[i];
      if (reply === null || reply === undefined) {
        report.failed.push(t.topic_id);
        return;
      }
      if (sink.write(t.topic_id, { key: t.topic_id, vector: reply.cls })) {
        report.written += 1;
      }
    });
  }
  return report;
}
