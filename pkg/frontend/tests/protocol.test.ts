import { describe, expect, it } from 'vitest';
import { handshakeSchema, responseSchema } from '../src/protocol.js';
import { spawnBridge } from './helpers.js';

// mulberry32: tiny seeded PRNG so the randomized sweep is reproducible
function rng(seed: number): () => number {
  let state = seed >>> 0;
  return () => {
    state = (state + 0x6d2b79f5) >>> 0;
    let t = state;
    t = Math.imul(t ^ (t >>> 15), t | 1);
    t ^= t + Math.imul(t ^ (t >>> 7), t | 61);
    return ((t ^ (t >>> 14)) >>> 0) / 4294967296;
  };
}

describe('handshake', () => {
  it('declares protocol 1 and the three crater classes', async () => {
    const bridge = spawnBridge();
    const handshake = handshakeSchema.parse(JSON.parse(await bridge.nextLine()));
    expect(handshake.protocol).toBe(1);
    expect(handshake.classes).toEqual([0, 1, 2]);
    expect(handshake.max_input_px).toBe(640);
    await bridge.close();
  });

  it('applies a custom class map and input resolution', async () => {
    const bridge = spawnBridge([
      '--model', 'stub',
      '--class-map', '{"0":2,"1":1,"2":0}',
      '--input-resolution', '1024',
    ]);
    const handshake = handshakeSchema.parse(JSON.parse(await bridge.nextLine()));
    expect(handshake.classes).toEqual([0, 1, 2]);
    expect(handshake.max_input_px).toBe(1024);
    await bridge.close();
  });

  it('exits nonzero before the handshake for an unloadable model', async () => {
    const bridge = spawnBridge(['--model', 'yolo', '--weights', '/no/such/weights.pt']);
    const code = await new Promise<number | null>((resolve) =>
      bridge.child.on('exit', (c) => resolve(c)),
    );
    expect(code).not.toBe(0);
  });

  it('rejects a class map that misses a pipeline class', async () => {
    const bridge = spawnBridge(['--model', 'stub', '--class-map', '{"0":0,"1":1,"2":1}']);
    const code = await new Promise<number | null>((resolve) =>
      bridge.child.on('exit', (c) => resolve(c)),
    );
    expect(code).not.toBe(0);
  });
});

describe('request handling', () => {
  it('answers 1000 randomized requests with well-formed, id-echoing responses', async () => {
    const bridge = spawnBridge();
    await bridge.nextLine(); // handshake
    const random = rng(20240831);
    const pending = new Map<number, [number, number, number, number]>();
    let answered = 0;
    for (let i = 0; i < 1000; i++) {
      const w = 1 + Math.floor(random() * 640);
      const h = 1 + Math.floor(random() * 640);
      const window: [number, number, number, number] = [
        Math.floor(random() * 4000),
        Math.floor(random() * 4000),
        w,
        h,
      ];
      const id = i * 7 + 3; // non-contiguous ids must still echo exactly
      pending.set(id, window);
      bridge.send({ id, image: `/data/scene_${i % 5}.png`, window });

      const line = await bridge.nextLine();
      const response = responseSchema.parse(JSON.parse(line)); // throws on malformed
      expect(response.id).toBe(id);
      answered += 1;
      if ('detections' in response) {
        const [, , rw, rh] = pending.get(response.id)!;
        for (const det of response.detections) {
          expect(det.bbox[0]).toBeGreaterThanOrEqual(0);
          expect(det.bbox[1]).toBeGreaterThanOrEqual(0);
          expect(det.bbox[2]).toBeLessThanOrEqual(rw);
          expect(det.bbox[3]).toBeLessThanOrEqual(rh);
          expect([0, 1, 2]).toContain(det.class);
        }
      }
      pending.delete(id);
    }
    expect(answered).toBe(1000);
    expect(pending.size).toBe(0);
    await bridge.close();
  }, 60_000);

  it('keeps serving after malformed requests and echoes recoverable ids', async () => {
    const bridge = spawnBridge();
    await bridge.nextLine();

    bridge.sendRaw('this is not json');
    let response = responseSchema.parse(JSON.parse(await bridge.nextLine()));
    expect(response).toHaveProperty('error');
    expect(response.id).toBeNull();

    bridge.send({ id: 41, image: '/x.png' }); // missing window
    response = responseSchema.parse(JSON.parse(await bridge.nextLine()));
    expect(response.id).toBe(41);
    expect(response).toHaveProperty('error');

    bridge.send({ id: 42, image: '/x.png', window: [0, 0, 64, 64] });
    response = responseSchema.parse(JSON.parse(await bridge.nextLine()));
    expect(response.id).toBe(42);
    expect(response).toHaveProperty('detections');
    await bridge.close();
  });

  it('errors on windows beyond the declared input resolution', async () => {
    const bridge = spawnBridge();
    await bridge.nextLine();
    bridge.send({ id: 7, image: '/x.png', window: [0, 0, 2048, 2048] });
    const response = responseSchema.parse(JSON.parse(await bridge.nextLine()));
    expect(response.id).toBe(7);
    expect(response).toHaveProperty('error');
    await bridge.close();
  });

  it('is deterministic for identical requests', async () => {
    const bridge = spawnBridge();
    await bridge.nextLine();
    const answers: string[] = [];
    for (const id of [1, 2]) {
      bridge.send({ id, image: '/same.png', window: [448, 896, 640, 640] });
      const line = await bridge.nextLine();
      answers.push(line.replace(`"id":${id}`, '"id":*'));
    }
    expect(answers[0]).toBe(answers[1]);
    await bridge.close();
  });
});
