/**
 * Bridge configuration: which model to load and how its outputs map onto
 * the pipeline's class ids.
 */
import { existsSync } from 'node:fs';

/** Pipeline crater class ids the class map must cover. */
export const PIPELINE_CLASS_IDS = [0, 1, 2];

export interface BridgeConfig {
  /** Model backend kind; "stub" needs no weights. */
  model: string;
  /** Weights file for real models; ignored by the stub. */
  weights?: string;
  /** Detector input resolution, i.e. the longest window side accepted. */
  inputResolution: number;
  /** Model output class id -> pipeline class id. */
  classMap: Record<number, number>;
  /** Whether the wrapped model tolerates interleaved requests. */
  threadsafe: boolean;
}

export const DEFAULT_CLASS_MAP: Record<number, number> = { 0: 0, 1: 1, 2: 2 };

export class ConfigError extends Error {}

export function validateConfig(config: BridgeConfig): BridgeConfig {
  if (config.inputResolution <= 0 || !Number.isInteger(config.inputResolution)) {
    throw new ConfigError(`inputResolution must be a positive integer, got ${config.inputResolution}`);
  }
  const mapped = new Set(Object.values(config.classMap));
  for (const id of PIPELINE_CLASS_IDS) {
    if (!mapped.has(id)) {
      throw new ConfigError(`class map must cover pipeline class ${id}`);
    }
  }
  if (config.model !== 'stub') {
    if (!config.weights) {
      throw new ConfigError(`model '${config.model}' requires --weights`);
    }
    if (!existsSync(config.weights)) {
      throw new ConfigError(`weights file not found: ${config.weights}`);
    }
  }
  return config;
}
