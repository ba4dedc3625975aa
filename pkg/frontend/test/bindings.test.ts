import { mkdtempSync, readFileSync, writeFileSync } from 'node:fs';
import { tmpdir } from 'node:os';
import { join } from 'node:path';
import { spawnSync } from 'node:child_process';
import { fileURLToPath } from 'node:url';
import { beforeAll, describe, expect, it } from 'vitest';

import {
  CoreCliError,
  HandleClosedError,
  ModelFormatError,
  ModelHandle,
  ModelNotFoundError,
  embed,
  embedBatch,
  embed_batch,
  load,
  similarity,
} from '../src/index.js';
import { main as tutorialMain } from '../tutorial.js';

const GOLDEN = fileURLToPath(new URL('../../golden/bigram-d16.bsvm', import.meta.url));

// words present in the golden model's training corpus, plus junk for OOV
const VOCAB = [
  'craf', 'kinase', 'kras', 'lung', 'tumor', 'growth', 'cancer', 'cells',
  'signaling', 'drug', 'treatment', 'blocks', 'drives', 'driven', 'needs',
];
const JUNK = ['zzxq', 'qwpo', 'vbnm'];

function lcg(seed: number): () => number {
  let state = seed >>> 0;
  return () => {
    state = (state * 1664525 + 1013904223) >>> 0;
    return state / 2 ** 32;
  };
}

function randomSentences(n: number, seed: number): string[] {
  const rand = lcg(seed);
  const out: string[] = [];
  for (let i = 0; i < n; i++) {
    const len = 1 + Math.floor(rand() * 6);
    const words: string[] = [];
    for (let j = 0; j < len; j++) {
      const pool = rand() < 0.15 ? JUNK : VOCAB;
      words.push(pool[Math.floor(rand() * pool.length)]);
    }
    out.push(words.join(' '));
  }
  return out;
}

let model: ModelHandle;

beforeAll(async () => {
  model = await load(GOLDEN);
});

describe('load', () => {
  it('reads header fields from the golden model', () => {
    expect(model.dim).toBe(16);
    expect(model.vocabSize).toBe(30);
    expect(model.ngramOrder).toBe(2);
  });

  it('rejects a missing file with a not-found error', async () => {
    await expect(load('/nonexistent/model.bsvm')).rejects.toBeInstanceOf(ModelNotFoundError);
  });

  it('rejects a truncated file with a format error', async () => {
    const bytes = readFileSync(GOLDEN);
    const dir = mkdtempSync(join(tmpdir(), 'sentvec-'));
    const truncated = join(dir, 'truncated.bsvm');
    writeFileSync(truncated, bytes.subarray(0, Math.floor(bytes.length / 2)));
    await expect(load(truncated)).rejects.toBeInstanceOf(ModelFormatError);
  });

  it('rejects garbage with a format error', async () => {
    const dir = mkdtempSync(join(tmpdir(), 'sentvec-'));
    const junk = join(dir, 'junk.bsvm');
    writeFileSync(junk, 'not a model at all');
    await expect(load(junk)).rejects.toBeInstanceOf(ModelFormatError);
  });

  it('surfaces an unspawnable core command as CoreCliError', async () => {
    await expect(
      load(GOLDEN, { command: ['definitely-not-a-real-binary-xyz'] }),
    ).rejects.toBeInstanceOf(CoreCliError);
  });

  it('honors the command load option', async () => {
    const h = await load(GOLDEN, { command: ['python3', '-m', 'sentvec'] });
    expect(h.dim).toBe(16);
    const vec = await embed(h, 'craf kinase');
    expect(vec.length).toBe(16);
  });
});

describe('embed parity with the core CLI', () => {
  it('matches `sentvec embed` elementwise exactly for 50 random sentences', async () => {
    const sentences = randomSentences(50, 42);
    const viaBinding = await embedBatch(model, sentences);

    const proc = spawnSync('sentvec', ['embed', '--model', GOLDEN], {
      input: sentences.join('\n') + '\n',
      encoding: 'utf8',
    });
    expect(proc.status).toBe(0);
    const cliLines = proc.stdout.split('\n').filter((l) => l.trim().length > 0);
    expect(cliLines.length).toBe(50);

    for (let i = 0; i < 50; i++) {
      const cliVec = cliLines[i].trim().split(/\s+/).map(Number);
      expect(viaBinding[i].length).toBe(model.dim);
      for (let d = 0; d < model.dim; d++) {
        expect(viaBinding[i][d]).toBe(cliVec[d]); // exact, not approximate
      }
    }
  }, 120_000);

  it('single embed equals the matching batch row', async () => {
    const sentence = 'craf kinase drives tumor growth';
    const single = await embed(model, sentence);
    const [batched] = await embedBatch(model, [sentence]);
    expect(single).toEqual(batched);
  });

  it('matches the CLI on punctuation-heavy raw text', async () => {
    const sentence = "The Craf-driven (tumor)! It's 3.5 mg.";
    const viaBinding = await embed(model, sentence);
    const proc = spawnSync(
      'sentvec',
      ['embed', '--model', GOLDEN, `--sentence=${sentence}`],
      { encoding: 'utf8' },
    );
    expect(proc.status).toBe(0);
    expect(viaBinding).toEqual(proc.stdout.trim().split(/\s+/).map(Number));
  });

  it('returns the zero vector for an empty sentence', async () => {
    const vec = await embed(model, '');
    expect(vec).toEqual(new Array(model.dim).fill(0));
  });

  it('returns the zero vector for out-of-vocabulary text', async () => {
    const vec = await embed(model, 'zzxq qwpo');
    expect(vec).toEqual(new Array(model.dim).fill(0));
  });

  it('preserves batch order', async () => {
    const sentences = ['craf kinase', 'drug treatment', 'craf kinase'];
    const rows = await embedBatch(model, sentences);
    expect(rows.length).toBe(3);
    expect(rows[0]).toEqual(rows[2]);
    expect(rows[0]).not.toEqual(rows[1]);
  });

  it('rejects newlines inside a batch sentence', async () => {
    await expect(embedBatch(model, ['bad\nsentence'])).rejects.toBeInstanceOf(TypeError);
  });

  it('exports the embed_batch alias', () => {
    expect(embed_batch).toBe(embedBatch);
  });
});

describe('similarity', () => {
  it('is 1.0 for an in-vocabulary sentence with itself', async () => {
    expect(await similarity(model, 'craf kinase', 'craf kinase')).toBe(1.0);
  });

  it('matches `sentvec sim` output exactly', async () => {
    const s1 = 'craf kinase drives growth';
    const s2 = 'drug treatment blocks signaling';
    const viaBinding = await similarity(model, s1, s2);
    const proc = spawnSync(
      'sentvec',
      ['sim', '--model', GOLDEN, `--s1=${s1}`, `--s2=${s2}`],
      { encoding: 'utf8' },
    );
    expect(proc.status).toBe(0);
    expect(viaBinding).toBe(Number(proc.stdout.trim()));
  });

  it('is 0 when one side is out of vocabulary', async () => {
    expect(await similarity(model, 'zzxq', 'craf kinase')).toBe(0.0);
  });
});

describe('handle lifecycle', () => {
  it('operations after close throw', async () => {
    const h = await load(GOLDEN);
    h.close();
    expect(h.closed).toBe(true);
    await expect(embed(h, 'craf')).rejects.toBeInstanceOf(HandleClosedError);
    await expect(embedBatch(h, ['craf'])).rejects.toBeInstanceOf(HandleClosedError);
    await expect(similarity(h, 'a', 'b')).rejects.toBeInstanceOf(HandleClosedError);
  });
});

describe('tutorial', () => {
  it('executes top to bottom against the golden model', async () => {
    await tutorialMain(GOLDEN);
  }, 120_000);
});
