import type { AnalystService, EncoderReply, EncoderService } from "../../src/service.js";

function fnv1a(s: string): number {
  let h = 0x811c9dc5;
  for (let i = 0; i < s.length; i++) {
    h ^= s.charCodeAt(i);
    h = Math.imul(h, 0x01000193) >>> 0;
  }
  return h >>> 0;
}

function mulberry32(seed: number): () => number {
  let a = seed >>> 0;
  return () => {
    a = (a + 0x6d2b79f5) >>> 0;
    let t = a;
    t = Math.imul(t ^ (t >>> 15), t | 1);
    t ^= t + Math.imul(t ^ (t >>> 7), t | 61);
    return ((t ^ (t >>> 14)) >>> 0) / 4294967296;
  };
}

function vectorFor(tag: string, dim: number): number[] {
  const next = mulberry32(fnv1a(tag));
  return Array.from({ length: dim }, () => Math.round((2 * next() - 1) * 1e9) / 1e9);
}

/** Deterministic stand-in for the remote encoder: vectors are a pure
 * function of the id, so goldens are stable across runs and machines. */
export function cannedEncoder(dim: number): EncoderService {
  return {
    async encode(item) {
      const reply: EncoderReply = { cls: vectorFor(`${item.id}/cls`, dim) };
      if (item.bonds.length > 0) {
        reply.tokens = {};
        for (const bond of item.bonds) {
          const n = 2 + (fnv1a(`${item.id}/${bond}`) % 3);
          reply.tokens[bond] = Array.from({ length: n }, (_, row) =>
            vectorFor(`${item.id}/${bond}/${row}`, dim),
          );
        }
      }
      return reply;
    },
  };
}

/** Encoder that fails permanently for the given ids. */
export function flakyEncoder(dim: number, deadIds: Set<string>): EncoderService {
  const inner = cannedEncoder(dim);
  return {
    async encode(item) {
      if (deadIds.has(item.id)) throw new Error("service unavailable");
      return inner.encode(item);
    },
  };
}

/** Analyst that answers from a fixed script keyed by the Input line. */
export function cannedAnalyst(replies: Record<string, string>): AnalystService {
  return {
    async complete(prompt) {
      for (const [needle, reply] of Object.entries(replies)) {
        if (prompt.includes(needle)) return reply;
      }
      throw new Error("no canned reply matches the prompt");
    },
  };
}
