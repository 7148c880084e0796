import type { AdapterConfig } from "./schemas.js";

/** What the remote encoder returns for one text: a CLS vector plus the
 * token vectors grouped by the bond they were attributed to. Topic and
 * meso-text requests simply come back with no token groups. */
export interface EncoderReply {
  cls: number[];
  tokens?: Record<string, number[][]>;
}

export interface EncoderService {
  encode(item: { id: string; body: string; bonds: string[] }): Promise<EncoderReply>;
}

export interface AnalystService {
  complete(prompt: string): Promise<string>;
}

const sleep = (ms: number) => new Promise<void>((r) => setTimeout(r, ms));

/** Bounded-concurrency gate; acquire resolves in FIFO order. */
export class RateLimiter {
  private inFlight = 0;
  private waiters: Array<() => void> = [];

  constructor(private readonly cap: number) {
    if (cap < 1) throw new Error("rate limiter cap must be >= 1");
  }

  async run<T>(fn: () => Promise<T>): Promise<T> {
    if (this.inFlight >= this.cap) {
      await new Promise<void>((resolve) => this.waiters.push(resolve));
    }
    this.inFlight += 1;
    try {
      return await fn();
    } finally {
      this.inFlight -= 1;
      const next = this.waiters.shift();
      if (next) next();
    }
  }
}

/** Retry with exponential backoff; returns null once retries are spent so
 * the caller can skip-and-log instead of failing the whole batch. */
export async function withRetries<T>(
  fn: () => Promise<T>,
  maxRetries: number,
  baseMs: number,
  onGiveUp: (err: unknown) => void,
): Promise<T | null> {
  for (let attempt = 0; ; attempt++) {
    try {
      return await fn();
    } catch (err) {
      if (attempt >= maxRetries) {
        onGiveUp(err);
        return null;
      }
      await sleep(baseMs * 2 ** attempt);
    }
  }
}

async function postJson(url: string, payload: object): Promise<unknown> {
  const res = await fetch(url, {
    method: "POST",
    headers: { "content-type": "application/json" },
    body: JSON.stringify(payload),
  });
  if (!res.ok) throw new Error(`${url} -> HTTP ${res.status}`);
  return res.json();
}

export function httpEncoder(cfg: AdapterConfig): EncoderService {
  return {
    async encode(item) {
      const reply = (await postJson(`${cfg.endpoint}/encode`, {
        model: cfg.encoderModel,
        id: item.id,
        body: item.body,
        bonds: item.bonds,
      })) as EncoderReply;
      return reply;
    },
  };
}

export function httpAnalyst(cfg: AdapterConfig): AnalystService {
  return {
    async complete(prompt) {
      const reply = (await postJson(`${cfg.endpoint}/complete`, {
        model: cfg.analystModel,
        prompt,
      })) as { text: string };
      return reply.text;
    },
  };
}
