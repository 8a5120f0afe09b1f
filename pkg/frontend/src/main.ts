/**
 * Bridge entry point.
 *
 * Usage:
 *   node dist/main.js --model stub [--input-resolution 640]
 *       [--class-map '{"0":0,"1":1,"2":2}'] [--weights path] [--threadsafe]
 *
 * Exits nonzero before the handshake when the model cannot be loaded.
 */
import { pathToFileURL } from 'node:url';
import { parseArgs } from 'node:util';
import { serve } from './bridge.js';
import { ConfigError, DEFAULT_CLASS_MAP, validateConfig, type BridgeConfig } from './config.js';
import { createModel } from './models.js';

function parseClassMap(raw: string | undefined): Record<number, number> {
  if (!raw) {
    return { ...DEFAULT_CLASS_MAP };
  }
  let parsed: unknown;
  try {
    parsed = JSON.parse(raw);
  } catch {
    throw new ConfigError(`--class-map is not valid JSON: ${raw}`);
  }
  if (typeof parsed !== 'object' || parsed === null || Array.isArray(parsed)) {
    throw new ConfigError('--class-map must be a JSON object of model id -> pipeline id');
  }
  const map: Record<number, number> = {};
  for (const [key, value] of Object.entries(parsed)) {
    const from = Number(key);
    if (!Number.isInteger(from) || !Number.isInteger(value)) {
      throw new ConfigError(`--class-map entries must be integers, got ${key}: ${value}`);
    }
    map[from] = value as number;
  }
  return map;
}

export function configFromArgv(argv: string[]): BridgeConfig {
  const { values } = parseArgs({
    args: argv,
    options: {
      model: { type: 'string', default: 'stub' },
      weights: { type: 'string' },
      'input-resolution': { type: 'string', default: '640' },
      'class-map': { type: 'string' },
      threadsafe: { type: 'boolean', default: true },
    },
  });
  return validateConfig({
    model: values.model!,
    weights: values.weights,
    inputResolution: Number(values['input-resolution']),
    classMap: parseClassMap(values['class-map']),
    threadsafe: values.threadsafe!,
  });
}

async function main(): Promise<void> {
  let config: BridgeConfig;
  try {
    config = configFromArgv(process.argv.slice(2));
  } catch (err) {
    process.stderr.write(`bridge: ${err instanceof Error ? err.message : err}\n`);
    process.exit(1);
  }
  const model = await createModel(config);
  await serve(config, model);
}

if (process.argv[1] && import.meta.url === pathToFileURL(process.argv[1]).href) {
  main().catch((err) => {
    process.stderr.write(`bridge: ${err instanceof Error ? err.message : err}\n`);
    process.exit(1);
  });
}
