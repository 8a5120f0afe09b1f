/**
 * Bridge server loop: handshake once, then one response per request line.
 *
 * Malformed requests get an error object (id echoed when recoverable) and
 * the process keeps serving. Requests are handled sequentially in arrival
 * order; responses are allowed to be out of order by protocol, so clients
 * must route by id either way.
 */
import { createInterface } from 'node:readline';
import type { BridgeConfig } from './config.js';
import type { DetectorModel } from './models.js';
import {
  PROTOCOL_VERSION,
  requestSchema,
  type DetectResponse,
  type ErrorResponse,
  type Handshake,
} from './protocol.js';

export interface ServeOptions {
  input?: NodeJS.ReadableStream;
  output?: NodeJS.WritableStream;
}

function writeLine(output: NodeJS.WritableStream, payload: Handshake | DetectResponse | ErrorResponse): void {
  output.write(JSON.stringify(payload) + '\n');
}

export async function serve(
  config: BridgeConfig,
  model: DetectorModel,
  options: ServeOptions = {},
): Promise<void> {
  const input = options.input ?? process.stdin;
  const output = options.output ?? process.stdout;

  writeLine(output, {
    protocol: PROTOCOL_VERSION,
    classes: [...new Set(Object.values(config.classMap))].sort((a, b) => a - b),
    max_input_px: config.inputResolution,
    single_flight: !config.threadsafe,
  });

  const lines = createInterface({ input, crlfDelay: Infinity });
  for await (const line of lines) {
    if (!line.trim()) {
      continue;
    }
    let raw: unknown;
    try {
      raw = JSON.parse(line);
    } catch {
      writeLine(output, { id: null, error: 'request is not valid JSON' });
      continue;
    }
    const parsed = requestSchema.safeParse(raw);
    if (!parsed.success) {
      const id = typeof (raw as { id?: unknown })?.id === 'number' ? (raw as { id: number }).id : null;
      writeLine(output, { id, error: `malformed request: ${parsed.error.issues[0]?.message}` });
      continue;
    }
    const request = parsed.data;
    const [, , w, h] = request.window;
    if (w <= 0 || h <= 0) {
      writeLine(output, { id: request.id, error: 'window has non-positive extent' });
      continue;
    }
    if (Math.max(w, h) > config.inputResolution) {
      writeLine(output, {
        id: request.id,
        error: `window ${w}x${h} exceeds input resolution ${config.inputResolution}`,
      });
      continue;
    }
    try {
      const detections = await model.detect(request);
      writeLine(output, { id: request.id, detections });
    } catch (err) {
      writeLine(output, { id: request.id, error: err instanceof Error ? err.message : String(err) });
    }
  }
}
