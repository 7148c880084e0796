export { embedTexts, embedTopics, loadInputTexts, loadTopics } from "./embed.js";
export { classifyTopics } from "./classify.js";
export { loadPromptTemplate, parsePolarity, renderPrompt } from "./prompt.js";
export { httpAnalyst, httpEncoder, RateLimiter, withRetries } from "./service.js";
export type { AnalystService, EncoderReply, EncoderService } from "./service.js";
export * from "./schemas.js";
