/**
 * Four-step tutorial for the sentvec bindings.
 *
 *   npx tsx tutorial.ts [path/to/model.bsvm]
 *
 * Defaults to the small golden model committed in the repository.
 */

import { fileURLToPath, pathToFileURL } from 'node:url';
import { embed, embedBatch, load, similarity } from './src/index.js';

const DEFAULT_MODEL = fileURLToPath(new URL('../golden/bigram-d16.bsvm', import.meta.url));

export async function main(modelPath: string = DEFAULT_MODEL): Promise<void> {
  // ── Step 1: load the model ────────────────────────────────────────────
  const model = await load(modelPath);
  console.log('model successfully loaded');
  console.log(`  dim=${model.dim} vocab=${model.vocabSize} ngram_order=${model.ngramOrder}`);

  // ── Step 2: preprocessing happens inside the core ─────────────────────
  // Stopwords, punctuation and case are stripped by the pipeline itself,
  // so a noisy surface form embeds identically to its clean form.
  const noisy = 'The CRAF kinase is essential!';
  const clean = 'craf kinase essential';
  const [vNoisy, vClean] = await embedBatch(model, [noisy, clean]);
  const same = vNoisy.every((x, i) => x === vClean[i]);
  console.log(`preprocessing folds "${noisy}" onto "${clean}": ${same}`);

  // ── Step 3: compute sentence similarities ─────────────────────────────
  const s1 = 'craf kinase drives lung tumor growth';
  const s2 = 'kras mutations drive lung cancer onset';
  const s3 = 'drug treatment blocks kinase signaling';
  console.log(`similarity("${s1}", "${s2}") = ${await similarity(model, s1, s2)}`);
  console.log(`similarity("${s1}", "${s3}") = ${await similarity(model, s1, s3)}`);
  console.log(`self similarity = ${await similarity(model, s1, s1)}`);

  // ── Step 4: going further ──────────────────────────────────────────────
  // embed() returns the raw vector for downstream use (search, clustering,
  // classification). Batch over stdin for throughput. See the repository
  // README for training your own model and docs/model-format.md for the
  // on-disk format.
  const vec = await embed(model, s1);
  console.log(`vector head: [${vec.slice(0, 4).join(', ')}, ...] (${vec.length} dims)`);
  model.close();
  console.log('tutorial complete');
}

if (process.argv[1] && import.meta.url === pathToFileURL(process.argv[1]).href) {
  main(process.argv[2]).catch((e) => {
    console.error(e);
    process.exit(1);
  });
}
