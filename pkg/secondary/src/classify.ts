import { type AdapterConfig, type PolarityRecord } from "./schemas.js";
import { JsonlSink } from "./jsonl.js";
import { loadInputTexts, type RunReport } from "./embed.js";
import { loadPromptTemplate, parsePolarity, renderPrompt } from "./prompt.js";
import { RateLimiter, withRetries, type AnalystService } from "./service.js";

/** Ask the analyst service for a polarity per text and write the
 * topic-polarities file. Replies that fit neither the bare-score nor the
 * worked-answer shape are emitted as neutral with the unparsed flag and
 * the raw reply kept for audit. Reruns skip already-emitted ids. */
export async function classifyTopics(
  textsPath: string,
  cfg: AdapterConfig,
  service: AnalystService,
): Promise<RunReport> {
  const texts = loadInputTexts(textsPath);
  const template = loadPromptTemplate(cfg.promptTemplatePath);
  const sink = new JsonlSink(cfg.out.polarities, (o) =>
    typeof o === "object" && o !== null && "text_id" in o
      ? String((o as { text_id: unknown }).text_id)
      : null,
  );
  const limiter = new RateLimiter(cfg.maxInFlight);
  const report: RunReport = { written: 0, skippedExisting: 0, failed: [] };

  for (let start = 0; start < texts.length; start += cfg.batchSize) {
    const batch = texts.slice(start, start + cfg.batchSize);
    const wanted = batch.filter((t) => {
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
            () => service.complete(renderPrompt(template, t.body)),
            cfg.maxRetries,
            cfg.retryBaseMs,
            (err) => console.error(`classify ${t.text_id}: giving up (${String(err)})`),
          ),
        ),
      ),
    );
    wanted.forEach((t, i) => {
      const reply = replies[i];
      if (reply === null || reply === undefined) {
        report.failed.push(t.text_id);
        return;
      }
      const parsed = parsePolarity(reply);
      const record: PolarityRecord = {
        text_id: t.text_id,
        date: t.date,
        polarity: parsed.polarity,
      };
      if (parsed.unparsed) {
        record.unparsed = true;
        record.reply = reply;
      }
      if (sink.write(t.text_id, record)) report.written += 1;
    });
  }
  return report;
}
