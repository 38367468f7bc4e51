// Spawns the real study service around a freshly generated two-design,
// two-replicate study; tests receive the base URL and the study directory.

import { execFileSync, spawn, ChildProcess } from 'node:child_process';
import { mkdtempSync, rmSync } from 'node:fs';
import { tmpdir } from 'node:os';
import { join } from 'node:path';

const PORT = 8977;
const STUDY = 'e2e';

declare module 'vitest' {
  export interface ProvidedContext {
    e2eBase: string;
    e2eDataDir: string;
    e2eStudy: string;
  }
}

async function waitForServer(url: string, tries = 100): Promise<void> {
  for (let i = 0; i < tries; i++) {
    try {
      const res = await fetch(url);
      if (res.status < 500) return;
    } catch {
      // not up yet
    }
    await new Promise((r) => setTimeout(r, 200));
  }
  throw new Error(`service at ${url} never became ready`);
}

export default async function setup({ provide }: { provide: (k: string, v: string) => void }) {
  const dataDir = mkdtempSync(join(tmpdir(), 'lineup-e2e-'));
  execFileSync('python3', [
    '-m', 'lmelineup.cli', 'demo-study',
    '--data-dir', dataDir,
    '--study', STUDY,
    '--designs', 'fanned,re_scatter',
    '--replicates', '2',
    '--seed', '1',
  ], { stdio: 'inherit' });

  const server: ChildProcess = spawn('python3', [
    '-m', 'lmelineup.cli', 'serve',
    '--data-dir', dataDir,
    '--port', String(PORT),
    '--host', '127.0.0.1',
  ], { stdio: 'ignore' });

  const base = `http://127.0.0.1:${PORT}`;
  await waitForServer(`${base}/openapi.json`);

  provide('e2eBase', base);
  provide('e2eDataDir', dataDir);
  provide('e2eStudy', STUDY);

  return () => {
    server.kill();
    rmSync(dataDir, { recursive: true, force: true });
  };
}
