#!/usr/bin/env node
import { parseArgs } from "node:util";

import { DEFAULT_MODEL, createEmbedder } from "./embedder.js";
import { runExport } from "./export.js";
import { readCaptions } from "./jsonl.js";

const USAGE = `usage: export-embeddings --input captions.jsonl --output store.semb
                         [--model <name>] [--batch-size 64] [--dim 384]

Computes fixed-size sentence embeddings for every unique caption in the
input (candidate JSONL with "caption" fields or a corpus manifest with
"captions" lists) and writes the binary SEMB store keyed by the SHA-256 of
each caption.

  --model       embedding backend: a transformers.js model name
                (default ${DEFAULT_MODEL}; requires @xenova/transformers)
                or "hash-projection" for the deterministic offline fallback
  --batch-size  captions per inference batch (default 64)
  --dim         vector size for the hash-projection backend (default 384)
`;

async function main(argv: string[]): Promise<number> {
  if (argv[0] !== "export-embeddings") {
    process.stderr.write(USAGE);
    return 2;
  }
  let parsed;
  try {
    parsed = parseArgs({
      args: argv.slice(1),
      options: {
        input: { type: "string" },
        output: { type: "string" },
        model: { type: "string", default: DEFAULT_MODEL },
        "batch-size": { type: "string", default: "64" },
        dim: { type: "string", default: "384" },
        help: { type: "boolean", default: false },
      },
    });
  } catch (err) {
    process.stderr.write(`error: ${(err as Error).message}\n${USAGE}`);
    return 2;
  }
  if (parsed.values.help) {
    process.stdout.write(USAGE);
    return 0;
  }
  const { input, output } = parsed.values;
  if (!input || !output) {
    process.stderr.write(`error: --input and --output are required\n${USAGE}`);
    return 2;
  }
  const batchSize = Number(parsed.values["batch-size"]);
  const dim = Number(parsed.values.dim);
  if (!Number.isInteger(batchSize) || batchSize < 1) {
    process.stderr.write("error: --batch-size must be a positive integer\n");
    return 2;
  }
  try {
    const summary = await runExport({
      captions: readCaptions(input),
      embedder: createEmbedder(parsed.values.model!, dim),
      outputPath: output,
      batchSize,
    });
    process.stdout.write(
      `wrote ${summary.uniqueCaptions} embeddings (dim ${summary.dim}, ` +
        `${summary.totalCaptions} captions read) to ${output}\n`,
    );
    return 0;
  } catch (err) {
    process.stderr.write(`error: ${(err as Error).message}\n`);
    return 1;
  }
}

main(process.argv.slice(2)).then((code) => {
  process.exitCode = code;
});
