/**
 * Detector model backends behind the bridge.
 *
 * The bridge owns all model specifics; the pipeline only ever sees the wire
 * protocol. The stub model answers deterministically from window geometry
 * alone, which is enough to exercise the full protocol and the pipeline's
 * merge/eval stages without trained weights.
 */
import type { BridgeConfig } from './config.js';
import { ConfigError } from './config.js';
import type { DetectRequest, WireDetection } from './protocol.js';

export interface DetectorModel {
  /** Window-local detections for one request. May reject with an Error. */
  detect(request: DetectRequest): Promise<WireDetection[]>;
}

/**
 * Deterministic model-free detector: emits one or two boxes per window at
 * fixed insets, class chosen from the window origin, so repeated runs are
 * byte-identical and boxes always stay inside the window extent.
 */
export class StubModel implements DetectorModel {
  constructor(private readonly classMap: Record<number, number>) {}

  async detect(request: DetectRequest): Promise<WireDetection[]> {
    const [x0, y0, w, h] = request.window;
    if (w <= 2 || h <= 2) {
      return [];
    }
    const rawClass = (Math.abs(Math.round(x0 / 64) + Math.round(y0 / 64)) % 3) as 0 | 1 | 2;
    const mapped = this.classMap[rawClass] ?? rawClass;
    const side = Math.min(48, w - 2, h - 2);
    const detections: WireDetection[] = [
      { class: mapped, bbox: [1, 1, 1 + side, 1 + side], conf: 0.9 },
    ];
    if (w >= 128 && h >= 128) {
      const cx = w / 2;
      const cy = h / 2;
      detections.push({
        class: this.classMap[(rawClass + 1) % 3] ?? (rawClass + 1) % 3,
        bbox: [cx - 20, cy - 20, cx + 20, cy + 20],
        conf: 0.75,
      });
    }
    return detections;
  }
}

export async function createModel(config: BridgeConfig): Promise<DetectorModel> {
  switch (config.model) {
    case 'stub':
      return new StubModel(config.classMap);
    default:
      // real backends (onnx, torchscript, ...) plug in here; none are
      // bundled, so anything else is unloadable by definition
      throw new ConfigError(`unknown model kind '${config.model}'`);
  }
}
