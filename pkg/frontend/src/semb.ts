/**
 * SEMB binary store (all integers little-endian):
 *
 *   magic "SEMB" | u32 version=1 | u32 count | u32 dim
 *   per entry: u16 key length | UTF-8 key | dim little-endian f32
 *
 * Entries are written sorted by key so re-exports are byte-identical.
 */

const MAGIC = Buffer.from("SEMB", "ascii");
export const SEMB_VERSION = 1;

export interface SembStore {
  dim: number;
  vectors: Map<string, Float32Array>;
}

export function serializeSemb(store: SembStore): Buffer {
  const keys = [...store.vectors.keys()].sort();
  const chunks: Buffer[] = [];
  const header = Buffer.alloc(16);
  MAGIC.copy(header, 0);
  header.writeUInt32LE(SEMB_VERSION, 4);
  header.writeUInt32LE(keys.length, 8);
  header.writeUInt32LE(store.dim, 12);
  chunks.push(header);
  for (const key of keys) {
    const vector = store.vectors.get(key)!;
    if (vector.length !== store.dim) {
      throw new Error(`vector for ${key} has dim ${vector.length}, store dim ${store.dim}`);
    }
    const keyBytes = Buffer.from(key, "utf-8");
    if (keyBytes.length > 0xffff) {
      throw new Error(`key too long: ${keyBytes.length} bytes`);
    }
    const entry = Buffer.alloc(2 + keyBytes.length + 4 * store.dim);
    entry.writeUInt16LE(keyBytes.length, 0);
    keyBytes.copy(entry, 2);
    for (let i = 0; i < store.dim; i++) {
      entry.writeFloatLE(vector[i], 2 + keyBytes.length + 4 * i);
    }
    chunks.push(entry);
  }
  return Buffer.concat(chunks);
}

export function deserializeSemb(data: Buffer): SembStore {
  if (data.length < 16 || !data.subarray(0, 4).equals(MAGIC)) {
    throw new Error("not an SEMB buffer (bad magic)");
  }
  const version = data.readUInt32LE(4);
  if (version !== SEMB_VERSION) {
    throw new Error(`unsupported SEMB version ${version}`);
  }
  const count = data.readUInt32LE(8);
  const dim = data.readUInt32LE(12);
  if (dim === 0) {
    throw new Error("SEMB dim must be positive");
  }
  const vectors = new Map<string, Float32Array>();
  let offset = 16;
  for (let i = 0; i < count; i++) {
    if (offset + 2 > data.length) {
      throw new Error("truncated SEMB entry header");
    }
    const keyLength = data.readUInt16LE(offset);
    offset += 2;
    if (offset + keyLength + 4 * dim > data.length) {
      throw new Error("truncated SEMB entry payload");
    }
    const key = data.subarray(offset, offset + keyLength).toString("utf-8");
    offset += keyLength;
    const vector = new Float32Array(dim);
    for (let j = 0; j < dim; j++) {
      vector[j] = data.readFloatLE(offset + 4 * j);
    }
    offset += 4 * dim;
    vectors.set(key, vector);
  }
  if (offset !== data.length) {
    throw new Error(`${data.length - offset} trailing bytes after SEMB entries`);
  }
  return { dim, vectors };
}

export function cosine(a: Float32Array, b: Float32Array): number {
  if (a.length !== b.length) {
    throw new Error(`dimension mismatch ${a.length} vs ${b.length}`);
  }
  let dot = 0;
  let na = 0;
  let nb = 0;
  for (let i = 0; i < a.length; i++) {
    dot += a[i] * b[i];
    na += a[i] * a[i];
    nb += b[i] * b[i];
  }
  if (na === 0 || nb === 0) {
    throw new Error("zero-norm vector");
  }
  return dot / (Math.sqrt(na) * Math.sqrt(nb));
}
