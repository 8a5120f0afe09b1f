import { spawn, type ChildProcessWithoutNullStreams } from 'node:child_process';
import { createInterface, type Interface } from 'node:readline';
import { fileURLToPath } from 'node:url';
import { dirname, join } from 'node:path';

export const BRIDGE_ENTRY = join(dirname(fileURLToPath(import.meta.url)), '..', 'dist', 'main.js');
export const REPO_ROOT = join(dirname(fileURLToPath(import.meta.url)), '..', '..');

export interface BridgeProcess {
  child: ChildProcessWithoutNullStreams;
  lines: Interface;
  nextLine(): Promise<string>;
  send(payload: unknown): void;
  sendRaw(line: string): void;
  close(): Promise<number | null>;
}

export function spawnBridge(args: string[] = ['--model', 'stub']): BridgeProcess {
  const child = spawn('node', [BRIDGE_ENTRY, ...args], { stdio: ['pipe', 'pipe', 'pipe'] });
  const lines = createInterface({ input: child.stdout, crlfDelay: Infinity });
  const queue: string[] = [];
  const waiters: Array<(line: string) => void> = [];
  lines.on('line', (line) => {
    const waiter = waiters.shift();
    if (waiter) {
      waiter(line);
    } else {
      queue.push(line);
    }
  });
  return {
    child,
    lines,
    nextLine(): Promise<string> {
      const queued = queue.shift();
      if (queued !== undefined) {
        return Promise.resolve(queued);
      }
      return new Promise((resolve, reject) => {
        const timer = setTimeout(() => reject(new Error('timed out waiting for bridge output')), 15_000);
        waiters.push((line) => {
          clearTimeout(timer);
          resolve(line);
        });
      });
    },
    send(payload: unknown): void {
      child.stdin.write(JSON.stringify(payload) + '\n');
    },
    sendRaw(line: string): void {
      child.stdin.write(line + '\n');
    },
    close(): Promise<number | null> {
      child.stdin.end();
      return new Promise((resolve) => child.on('exit', (code) => resolve(code)));
    },
  };
}
