/**
 * Wire protocol v1: line-delimited JSON over stdio.
 *
 * The bridge prints one handshake line, then answers every request line
 * with exactly one response (detections or error) carrying the request id.
 * Bounding boxes are window-local pixels [xMin, yMin, xMax, yMax].
 */
import { z } from 'zod';

export const PROTOCOL_VERSION = 1;

export const requestSchema = z.object({
  id: z.number().int(),
  image: z.string(),
  window: z.tuple([z.number(), z.number(), z.number(), z.number()]),
});

export type DetectRequest = z.infer<typeof requestSchema>;

export interface WireDetection {
  class: number;
  bbox: [number, number, number, number];
  conf: number;
}

export interface Handshake {
  protocol: number;
  classes: number[];
  max_input_px: number;
  single_flight: boolean;
}

export interface DetectResponse {
  id: number;
  detections: WireDetection[];
}

export interface ErrorResponse {
  id: number | null;
  error: string;
}

export const responseSchema = z.union([
  z.object({
    id: z.number().int(),
    detections: z.array(
      z.object({
        class: z.number().int(),
        bbox: z.tuple([z.number(), z.number(), z.number(), z.number()]),
        conf: z.number().min(0).max(1),
      }),
    ),
  }),
  z.object({ id: z.number().int().nullable(), error: z.string() }),
]);

export const handshakeSchema = z.object({
  protocol: z.literal(PROTOCOL_VERSION),
  classes: z.array(z.number().int()),
  max_input_px: z.number().int().positive(),
  single_flight: z.boolean(),
});
