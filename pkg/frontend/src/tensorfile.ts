/** Reader/writer for the core's `.fft` tensor file.
 *
 * Little-endian layout:
 *   magic "FFTN" | version u32=1 | dtype u32 (1=float32, 2=float64)
 *   | rank u32=4 | dims 4 x u64 | meta_len u32 | UTF-8 JSON metadata
 *   | payload, row-major N-C-H-W
 */

export const MAGIC = "FFTN";
export const FORMAT_VERSION = 1;

export interface TensorMeta {
  [key: string]: unknown;
}

export interface Tensor4 {
  dims: [number, number, number, number]; // n, c, h, w
  data: Float32Array;
}

export class TensorFormatError extends Error {
  constructor(message: string, public readonly offset?: number) {
    super(offset === undefined ? message : `${message} (at byte offset ${offset})`);
    this.name = "TensorFormatError";
  }
}

export function encodeTensor(t: Tensor4, meta: TensorMeta = {}): Buffer {
  const [n, c, h, w] = t.dims;
  const count = n * c * h * w;
  if (t.data.length !== count) {
    throw new TensorFormatError(
      `payload has ${t.data.length} elements, dims promise ${count}`,
    );
  }
  const metaBlob = Buffer.from(JSON.stringify(meta), "utf-8");
  const header = Buffer.alloc(52);
  header.write(MAGIC, 0, "ascii");
  header.writeUInt32LE(FORMAT_VERSION, 4);
  header.writeUInt32LE(1, 8); // dtype code 1 = float32
  header.writeUInt32LE(4, 12);
  header.writeBigUInt64LE(BigInt(n), 16);
  header.writeBigUInt64LE(BigInt(c), 24);
  header.writeBigUInt64LE(BigInt(h), 32);
  header.writeBigUInt64LE(BigInt(w), 40);
  header.writeUInt32LE(metaBlob.length, 48);
  const payload = Buffer.alloc(count * 4);
  for (let i = 0; i < count; i++) payload.writeFloatLE(t.data[i], i * 4);
  return Buffer.concat([header, metaBlob, payload]);
}

export function decodeTensor(blob: Buffer): { tensor: Tensor4; meta: TensorMeta } {
  const need = (count: number, offset: number, what: string) => {
    if (offset + count > blob.length) {
      throw new TensorFormatError(`truncated tensor file: expected ${what}`, offset);
    }
  };
  need(4, 0, "magic");
  if (blob.toString("ascii", 0, 4) !== MAGIC) {
    throw new TensorFormatError(`bad magic ${JSON.stringify(blob.toString("ascii", 0, 4))}`, 0);
  }
  need(12, 4, "header");
  const version = blob.readUInt32LE(4);
  if (version !== FORMAT_VERSION) {
    throw new TensorFormatError(`unsupported format version ${version}`, 4);
  }
  const dtype = blob.readUInt32LE(8);
  if (dtype !== 1 && dtype !== 2) {
    throw new TensorFormatError(`unknown dtype code ${dtype}`, 8);
  }
  const rank = blob.readUInt32LE(12);
  if (rank !== 4) throw new TensorFormatError(`rank must be 4, got ${rank}`, 12);
  need(32, 16, "dims");
  const dims: [number, number, number, number] = [0, 0, 0, 0];
  for (let i = 0; i < 4; i++) dims[i] = Number(blob.readBigUInt64LE(16 + 8 * i));
  need(4, 48, "metadata length");
  const metaLen = blob.readUInt32LE(48);
  need(metaLen, 52, "metadata");
  const meta = JSON.parse(blob.toString("utf-8", 52, 52 + metaLen)) as TensorMeta;
  const count = dims[0] * dims[1] * dims[2] * dims[3];
  const itemSize = dtype === 1 ? 4 : 8;
  const payloadOff = 52 + metaLen;
  need(count * itemSize, payloadOff, `${count} elements`);
  if (blob.length !== payloadOff + count * itemSize) {
    throw new TensorFormatError(
      `${blob.length - payloadOff - count * itemSize} trailing bytes`,
      payloadOff + count * itemSize,
    );
  }
  const data = new Float32Array(count);
  for (let i = 0; i < count; i++) {
    data[i] = dtype === 1
      ? blob.readFloatLE(payloadOff + i * 4)
      : blob.readDoubleLE(payloadOff + i * 8);
  }
  return { tensor: { dims, data }, meta };
}
