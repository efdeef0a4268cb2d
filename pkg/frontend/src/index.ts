export { StockflowClient } from "./client";
export { BoundEnv, resolveConfig } from "./boundEnv";
export type { FlatActionSpace } from "./boundEnv";
export { checkEnv } from "./conformance";
export type { ConformanceReport } from "./conformance";
export * from "./types";
