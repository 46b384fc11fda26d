import { writeFileSync } from "node:fs";

import { Embedder } from "./embedder.js";
import { captionKey } from "./hash.js";
import { SembStore, serializeSemb } from "./semb.js";

export interface ExportJob {
  captions: string[];
  embedder: Embedder;
  outputPath: string;
  batchSize: number;
}

export interface ExportSummary {
  totalCaptions: number;
  uniqueCaptions: number;
  dim: number;
}

/**
 * Embed every unique caption (duplicates deduplicated by key) in batches
 * and write the SEMB store. The writer sorts entries by key, so repeated
 * runs against the same model produce byte-identical files.
 */
export async function runExport(job: ExportJob): Promise<ExportSummary> {
  if (job.batchSize < 1) {
    throw new Error(`batch size must be >= 1, got ${job.batchSize}`);
  }
  const byKey = new Map<string, string>();
  for (const caption of job.captions) {
    const key = captionKey(caption);
    if (!byKey.has(key)) byKey.set(key, caption);
  }
  if (byKey.size === 0) {
    throw new Error("no captions to export");
  }
  const entries = [...byKey.entries()];
  const vectors = new Map<string, Float32Array>();
  let dim = -1;
  for (let start = 0; start < entries.length; start += job.batchSize) {
    const batch = entries.slice(start, start + job.batchSize);
    const embedded = await job.embedder.embedBatch(batch.map(([, caption]) => caption));
    if (embedded.length !== batch.length) {
      throw new Error(`embedder returned ${embedded.length} vectors for ${batch.length} captions`);
    }
    for (let i = 0; i < batch.length; i++) {
      const vector = Float32Array.from(embedded[i]);
      if (dim === -1) {
        dim = vector.length;
      } else if (vector.length !== dim) {
        throw new Error(`embedding dim drift: got ${vector.length}, expected ${dim}`);
      }
      vectors.set(batch[i][0], vector);
    }
  }
  const store: SembStore = { dim, vectors };
  writeFileSync(job.outputPath, serializeSemb(store));
  return { totalCaptions: job.captions.length, uniqueCaptions: byKey.size, dim };
}
