import { createHash } from "node:crypto";

/**
 * Store key for a caption: SHA-256 hex of its UTF-8 bytes. Must match the
 * Python scorer's keying byte for byte (pinned by the shared golden fixture
 * in ../tests/golden/caption_hashes.json).
 */
export function captionKey(caption: string): string {
  return createHash("sha256").update(Buffer.from(caption, "utf-8")).digest("hex");
}
