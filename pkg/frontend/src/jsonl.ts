import { readFileSync } from "node:fs";

/**
 * Pull caption strings out of a JSONL file. Two shapes are accepted per
 * line: candidate rows `{"id", "caption"}` and manifest records
 * `{"id", "captions": [...]}` (caption lists are flattened).
 */
export function readCaptions(path: string): string[] {
  const captions: string[] = [];
  const text = readFileSync(path, "utf-8");
  const lines = text.split("\n");
  for (let i = 0; i < lines.length; i++) {
    const line = lines[i].trim();
    if (!line) continue;
    let row: unknown;
    try {
      row = JSON.parse(line);
    } catch (err) {
      throw new Error(`${path}:${i + 1}: invalid JSON: ${(err as Error).message}`);
    }
    const obj = row as Record<string, unknown>;
    if (typeof obj.caption === "string") {
      captions.push(obj.caption);
    } else if (Array.isArray(obj.captions)) {
      for (const caption of obj.captions) {
        if (typeof caption !== "string") {
          throw new Error(`${path}:${i + 1}: captions entries must be strings`);
        }
        captions.push(caption);
      }
    } else {
      throw new Error(`${path}:${i + 1}: need a "caption" string or "captions" list`);
    }
  }
  return captions;
}
