import { readFileSync } from "node:fs";
import { join } from "node:path";

export const GOLDEN = join(__dirname, "golden");

export function readBuf(path: string): ArrayBuffer {
  const b = readFileSync(path);
  return b.buffer.slice(b.byteOffset, b.byteOffset + b.byteLength);
}

export function goldenReader(dir = GOLDEN) {
  return (name: string) => Promise.resolve(readBuf(join(dir, name)));
}
