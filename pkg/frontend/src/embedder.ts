import { createHash } from "node:crypto";

/** Batched caption -> fixed-size-vector backend. */
export interface Embedder {
  readonly name: string;
  embedBatch(captions: string[]): Promise<number[][]>;
}

export const DEFAULT_MODEL = "Xenova/paraphrase-TinyBERT-L6-v2";
export const HASH_PROJECTION = "hash-projection";

/**
 * Deterministic offline fallback: expand the caption's SHA-256 digest in
 * counter mode into `dim` floats in [-1, 1) and L2-normalize. No semantic
 * content, but stable across runs and platforms, which is all the format
 * round-trip and keying guarantees need.
 */
export class HashProjectionEmbedder implements Embedder {
  readonly name = HASH_PROJECTION;

  constructor(readonly dim: number = 384) {
    if (!Number.isInteger(dim) || dim < 1) {
      throw new Error(`embedding dim must be a positive integer, got ${dim}`);
    }
  }

  embedOne(caption: string): number[] {
    const digest = createHash("sha256").update(Buffer.from(caption, "utf-8")).digest();
    const values: number[] = [];
    for (let block = 0; values.length < this.dim; block++) {
      const counter = Buffer.alloc(4);
      counter.writeUInt32LE(block, 0);
      const expanded = createHash("sha256").update(digest).update(counter).digest();
      for (let i = 0; i + 4 <= expanded.length && values.length < this.dim; i += 4) {
        values.push(expanded.readUInt32LE(i) / 2 ** 31 - 1.0);
      }
    }
    let norm = Math.sqrt(values.reduce((acc, v) => acc + v * v, 0));
    if (norm === 0) norm = 1;
    return values.map((v) => v / norm);
  }

  async embedBatch(captions: string[]): Promise<number[][]> {
    return captions.map((c) => this.embedOne(c));
  }
}

/**
 * Pretrained sentence-embedding backend via transformers.js (mean pooling,
 * normalized). The dependency is optional: install `@xenova/transformers`
 * and pass a model name (default above, taken from the FENSE setup) to use
 * it; the exporter itself never depends on which model filled the store.
 */
export class TransformersEmbedder implements Embedder {
  private pipelinePromise: Promise<(texts: string[], opts: object) => Promise<{ tolist(): number[][] }>> | null =
    null;

  constructor(readonly name: string = DEFAULT_MODEL) {}

  private async pipeline() {
    if (this.pipelinePromise === null) {
      this.pipelinePromise = (async () => {
        let mod: { pipeline: Function };
        try {
          mod = (await import("@xenova/transformers" as string)) as { pipeline: Function };
        } catch (err) {
          throw new Error(
            `model backend unavailable: install @xenova/transformers to use ` +
              `"${this.name}", or pass --model ${HASH_PROJECTION} ` +
              `(${(err as Error).message})`,
          );
        }
        return (await mod.pipeline("feature-extraction", this.name)) as (
          texts: string[],
          opts: object,
        ) => Promise<{ tolist(): number[][] }>;
      })();
    }
    return this.pipelinePromise;
  }

  async embedBatch(captions: string[]): Promise<number[][]> {
    const extractor = await this.pipeline();
    const output = await extractor(captions, { pooling: "mean", normalize: true });
    return output.tolist();
  }
}

export function createEmbedder(model: string, dim: number): Embedder {
  if (model === HASH_PROJECTION) {
    return new HashProjectionEmbedder(dim);
  }
  return new TransformersEmbedder(model);
}
