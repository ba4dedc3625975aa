/**
 * Thin bindings over the sentvec core CLI.
 *
 * Every operation shells out to the core executable, so preprocessing and
 * arithmetic happen in exactly one place: results are numerically identical
 * to what `sentvec embed` / `sentvec sim` print for the same inputs.
 *
 * The core command defaults to `sentvec` on PATH; override with the
 * SENTVEC_CLI environment variable (whitespace-split, e.g.
 * `SENTVEC_CLI="python3 -m sentvec"`) or the `command` load option.
 */

import { spawn } from 'node:child_process';

export class ModelNotFoundError extends Error {}
export class ModelFormatError extends Error {}
export class HandleClosedError extends Error {}
export class CoreCliError extends Error {
  constructor(
    message: string,
    readonly exitCode: number | null,
    readonly stderr: string,
  ) {
    super(message);
  }
}

export interface LoadOptions {
  /** Core CLI argv, e.g. ["python3", "-m", "sentvec"]. Defaults to ["sentvec"]. */
  command?: string[];
}

export interface ModelInfo {
  format_version: number;
  dim: number;
  vocab_size: number;
  bucket_count: number;
  ngram_order: number;
}

function coreCommand(options?: LoadOptions): string[] {
  if (options?.command?.length) {
    return [...options.command];
  }
  const env = process.env.SENTVEC_CLI;
  if (env && env.trim()) {
    return env.trim().split(/\s+/);
  }
  return ['sentvec'];
}

function mapCliError(code: number | null, stderr: string): Error {
  const msg = stderr.trim();
  if (/no such file|errno 2|enoent/i.test(msg)) {
    return new ModelNotFoundError(msg || 'model file not found');
  }
  if (/not a model file|truncated|checksum|unsupported format|unsupported sidecar|malformed model/i.test(msg)) {
    return new ModelFormatError(msg);
  }
  return new CoreCliError(msg || `core CLI exited with code ${code}`, code, stderr);
}

function runCli(command: string[], args: string[], stdin?: string): Promise<string> {
  return new Promise((resolve, reject) => {
    const [cmd, ...rest] = command;
    const child = spawn(cmd, [...rest, ...args], { stdio: ['pipe', 'pipe', 'pipe'] });
    let out = '';
    let err = '';
    child.stdout.setEncoding('utf8');
    child.stderr.setEncoding('utf8');
    child.stdout.on('data', (d) => (out += d));
    child.stderr.on('data', (d) => (err += d));
    child.on('error', (e) =>
      reject(new CoreCliError(`failed to spawn ${cmd}: ${e.message}`, null, '')),
    );
    child.on('close', (code) => {
      if (code === 0) {
        resolve(out);
      } else {
        reject(mapCliError(code, err));
      }
    });
    child.stdin.end(stdin ?? '');
  });
}

function parseVector(line: string, dim: number): number[] {
  const values = line.trim().split(/\s+/).map(Number);
  if (values.length !== dim || values.some((v) => Number.isNaN(v))) {
    throw new ModelFormatError(`expected ${dim} numeric values, got ${line.trim().slice(0, 80)}`);
  }
  return values;
}

export class ModelHandle {
  readonly path: string;
  readonly dim: number;
  readonly vocabSize: number;
  readonly bucketCount: number;
  readonly ngramOrder: number;
  /** @internal */
  readonly command: string[];
  private closedFlag = false;

  /** @internal, use load() */
  constructor(path: string, command: string[], info: ModelInfo) {
    this.path = path;
    this.command = command;
    this.dim = info.dim;
    this.vocabSize = info.vocab_size;
    this.bucketCount = info.bucket_count;
    this.ngramOrder = info.ngram_order;
  }

  get closed(): boolean {
    return this.closedFlag;
  }

  close(): void {
    this.closedFlag = true;
  }

  /** @internal */
  assertOpen(): void {
    if (this.closedFlag) {
      throw new HandleClosedError(`model handle for ${this.path} is closed`);
    }
  }
}

/** Open a .bsvm model file and read its header. */
export async function load(path: string, options?: LoadOptions): Promise<ModelHandle> {
  const command = coreCommand(options);
  const out = await runCli(command, ['info', path]);
  const info = JSON.parse(out) as ModelInfo;
  return new ModelHandle(path, command, info);
}

/** Sentence vector for one raw sentence (the core preprocesses it). */
export async function embed(handle: ModelHandle, sentence: string): Promise<number[]> {
  handle.assertOpen();
  const out = await runCli(handle.command, [
    'embed',
    '--model',
    handle.path,
    `--sentence=${sentence}`,
  ]);
  return parseVector(out, handle.dim);
}

/** Sentence vectors for many sentences in one core invocation (stdin protocol). */
export async function embedBatch(handle: ModelHandle, sentences: string[]): Promise<number[][]> {
  handle.assertOpen();
  if (sentences.some((s) => s.includes('\n'))) {
    throw new TypeError('sentences must not contain newline characters');
  }
  if (sentences.length === 0) {
    return [];
  }
  const out = await runCli(
    handle.command,
    ['embed', '--model', handle.path],
    sentences.join('\n') + '\n',
  );
  const lines = out.split('\n').filter((l) => l.trim().length > 0);
  if (lines.length !== sentences.length) {
    throw new CoreCliError(
      `expected ${sentences.length} vectors, got ${lines.length}`,
      0,
      '',
    );
  }
  return lines.map((l) => parseVector(l, handle.dim));
}

export { embedBatch as embed_batch };

/** Cosine similarity of two raw sentences, exactly as `sentvec sim` reports it. */
export async function similarity(handle: ModelHandle, s1: string, s2: string): Promise<number> {
  handle.assertOpen();
  const out = await runCli(handle.command, [
    'sim',
    '--model',
    handle.path,
    `--s1=${s1}`,
    `--s2=${s2}`,
  ]);
  const value = Number(out.trim());
  if (Number.isNaN(value)) {
    throw new CoreCliError(`unparsable similarity output: ${out.trim()}`, 0, '');
  }
  return value;
}
