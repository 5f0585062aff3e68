/** Minimal image I/O: 8-bit grayscale/RGB(A) PNG (non-interlaced) and binary
 * PGM/PPM, plus the half-pixel-center bilinear resize the core uses and a
 * nearest-neighbor resize for ground-truth masks. */

import * as zlib from "node:zlib";

export interface Image {
  width: number;
  height: number;
  channels: number;       // 1 or 3
  data: Float32Array;     // HWC order, values in [0, 1]
}

export class ImageError extends Error {
  constructor(message: string) {
    super(message);
    this.name = "ImageError";
  }
}

// -- PNG ----------------------------------------------------------------------

const PNG_SIGNATURE = Buffer.from([137, 80, 78, 71, 13, 10, 26, 10]);

const CRC_TABLE = (() => {
  const table = new Uint32Array(256);
  for (let n = 0; n < 256; n++) {
    let c = n;
    for (let k = 0; k < 8; k++) c = c & 1 ? 0xedb88320 ^ (c >>> 1) : c >>> 1;
    table[n] = c >>> 0;
  }
  return table;
})();

function crc32(...buffers: Buffer[]): number {
  let crc = 0xffffffff;
  for (const buf of buffers) {
    for (let i = 0; i < buf.length; i++) {
      crc = CRC_TABLE[(crc ^ buf[i]) & 0xff] ^ (crc >>> 8);
    }
  }
  return (crc ^ 0xffffffff) >>> 0;
}

function paeth(a: number, b: number, c: number): number {
  const p = a + b - c;
  const pa = Math.abs(p - a);
  const pb = Math.abs(p - b);
  const pc = Math.abs(p - c);
  if (pa <= pb && pa <= pc) return a;
  if (pb <= pc) return b;
  return c;
}

export function decodePng(blob: Buffer): Image {
  if (!blob.subarray(0, 8).equals(PNG_SIGNATURE)) {
    throw new ImageError("not a PNG file");
  }
  let pos = 8;
  let width = 0;
  let height = 0;
  let colorType = -1;
  const idat: Buffer[] = [];
  while (pos + 8 <= blob.length) {
    const length = blob.readUInt32BE(pos);
    const kind = blob.toString("ascii", pos + 4, pos + 8);
    const body = blob.subarray(pos + 8, pos + 8 + length);
    if (kind === "IHDR") {
      width = body.readUInt32BE(0);
      height = body.readUInt32BE(4);
      const bitDepth = body.readUInt8(8);
      colorType = body.readUInt8(9);
      if (bitDepth !== 8) throw new ImageError(`only 8-bit PNGs supported, got ${bitDepth}`);
      if (body.readUInt8(12) !== 0) throw new ImageError("interlaced PNGs not supported");
      if (![0, 2, 4, 6].includes(colorType)) {
        throw new ImageError(`unsupported PNG color type ${colorType}`);
      }
    } else if (kind === "IDAT") {
      idat.push(body);
    } else if (kind === "IEND") {
      break;
    }
    pos += 12 + length;
  }
  if (!width || !height || colorType < 0 || idat.length === 0) {
    throw new ImageError("malformed PNG (missing IHDR or IDAT)");
  }
  const srcChannels = { 0: 1, 2: 3, 4: 2, 6: 4 }[colorType as 0 | 2 | 4 | 6]!;
  const raw = zlib.inflateSync(Buffer.concat(idat));
  const stride = width * srcChannels;
  if (raw.length !== (stride + 1) * height) {
    throw new ImageError(`PNG raster has ${raw.length} bytes, expected ${(stride + 1) * height}`);
  }
  const pixels = Buffer.alloc(stride * height);
  for (let y = 0; y < height; y++) {
    const filter = raw[y * (stride + 1)];
    const row = raw.subarray(y * (stride + 1) + 1, (y + 1) * (stride + 1));
    const out = pixels.subarray(y * stride, (y + 1) * stride);
    const prev = y > 0 ? pixels.subarray((y - 1) * stride, y * stride) : null;
    for (let x = 0; x < stride; x++) {
      const left = x >= srcChannels ? out[x - srcChannels] : 0;
      const up = prev ? prev[x] : 0;
      const upLeft = prev && x >= srcChannels ? prev[x - srcChannels] : 0;
      let value = row[x];
      if (filter === 1) value += left;
      else if (filter === 2) value += up;
      else if (filter === 3) value += (left + up) >> 1;
      else if (filter === 4) value += paeth(left, up, upLeft);
      else if (filter !== 0) throw new ImageError(`unknown PNG filter ${filter}`);
      out[x] = value & 0xff;
    }
  }
  // drop alpha, expand gray+alpha to gray
  const channels = srcChannels >= 3 ? 3 : 1;
  const data = new Float32Array(width * height * channels);
  for (let i = 0; i < width * height; i++) {
    for (let c = 0; c < channels; c++) {
      data[i * channels + c] = pixels[i * srcChannels + c] / 255;
    }
  }
  return { width, height, channels, data };
}

function chunk(kind: string, body: Buffer): Buffer {
  const head = Buffer.alloc(4);
  head.writeUInt32BE(body.length, 0);
  const kindBuf = Buffer.from(kind, "ascii");
  const crc = Buffer.alloc(4);
  crc.writeUInt32BE(crc32(kindBuf, body), 0);
  return Buffer.concat([head, kindBuf, body, crc]);
}

/** Encode an 8-bit grayscale PNG (filter 0 rows, single IDAT). */
export function encodeGrayPng(width: number, height: number, gray: Uint8Array): Buffer {
  if (gray.length !== width * height) {
    throw new ImageError(`expected ${width * height} pixels, got ${gray.length}`);
  }
  const ihdr = Buffer.alloc(13);
  ihdr.writeUInt32BE(width, 0);
  ihdr.writeUInt32BE(height, 4);
  ihdr.writeUInt8(8, 8);   // bit depth
  ihdr.writeUInt8(0, 9);   // color type: grayscale
  const raster = Buffer.alloc((width + 1) * height);
  for (let y = 0; y < height; y++) {
    raster[y * (width + 1)] = 0;
    for (let x = 0; x < width; x++) {
      raster[y * (width + 1) + 1 + x] = gray[y * width + x];
    }
  }
  return Buffer.concat([
    PNG_SIGNATURE,
    chunk("IHDR", ihdr),
    chunk("IDAT", zlib.deflateSync(raster, { level: 9 })),
    chunk("IEND", Buffer.alloc(0)),
  ]);
}

// -- PNM ----------------------------------------------------------------------

export function decodePnm(blob: Buffer): Image {
  const fields: string[] = [];
  let pos = 0;
  while (fields.length < 4 && pos < blob.length) {
    while (pos < blob.length && /\s/.test(String.fromCharCode(blob[pos]))) pos++;
    if (blob[pos] === 0x23) {
      while (pos < blob.length && blob[pos] !== 0x0a) pos++;
      continue;
    }
    const start = pos;
    while (pos < blob.length && !/\s/.test(String.fromCharCode(blob[pos]))) pos++;
    fields.push(blob.toString("ascii", start, pos));
  }
  if (fields.length < 4) throw new ImageError("truncated PNM header");
  const [magic, w, h, maxval] = fields;
  if (magic !== "P5" && magic !== "P6") {
    throw new ImageError(`unsupported PNM magic ${magic} (want binary P5/P6)`);
  }
  if (maxval !== "255") throw new ImageError(`only 8-bit PNM supported, maxval=${maxval}`);
  const width = parseInt(w, 10);
  const height = parseInt(h, 10);
  const channels = magic === "P5" ? 1 : 3;
  pos += 1; // single whitespace after maxval
  const expected = width * height * channels;
  if (blob.length - pos < expected) {
    throw new ImageError(`PNM raster has ${blob.length - pos} bytes, expected ${expected}`);
  }
  const data = new Float32Array(expected);
  for (let i = 0; i < expected; i++) data[i] = blob[pos + i] / 255;
  return { width, height, channels, data };
}

export function decodeImage(blob: Buffer, filename: string): Image {
  const lower = filename.toLowerCase();
  if (lower.endsWith(".png")) return decodePng(blob);
  if (lower.endsWith(".pgm") || lower.endsWith(".ppm") || lower.endsWith(".pnm")) {
    return decodePnm(blob);
  }
  throw new ImageError(`unsupported image format for ${filename}`);
}

// -- resizing -------------------------------------------------------------------

function axisCoords(dst: number, src: number): { lo: Int32Array; hi: Int32Array; frac: Float64Array } {
  const lo = new Int32Array(dst);
  const hi = new Int32Array(dst);
  const frac = new Float64Array(dst);
  for (let d = 0; d < dst; d++) {
    let coord = (d + 0.5) * (src / dst) - 0.5;
    coord = Math.min(Math.max(coord, 0), src - 1);
    const floor = Math.floor(coord);
    lo[d] = floor;
    hi[d] = Math.min(floor + 1, src - 1);
    frac[d] = coord - floor;
  }
  return { lo, hi, frac };
}

/** Half-pixel-center bilinear resize; matches the core's convention. */
export function resizeBilinear(img: Image, outH: number, outW: number): Image {
  const { width, height, channels, data } = img;
  const ys = axisCoords(outH, height);
  const xs = axisCoords(outW, width);
  const out = new Float32Array(outH * outW * channels);
  for (let y = 0; y < outH; y++) {
    const y0 = ys.lo[y];
    const y1 = ys.hi[y];
    const fy = ys.frac[y];
    for (let x = 0; x < outW; x++) {
      const x0 = xs.lo[x];
      const x1 = xs.hi[x];
      const fx = xs.frac[x];
      for (let c = 0; c < channels; c++) {
        const tl = data[(y0 * width + x0) * channels + c];
        const tr = data[(y0 * width + x1) * channels + c];
        const bl = data[(y1 * width + x0) * channels + c];
        const br = data[(y1 * width + x1) * channels + c];
        const top = tl + fx * (tr - tl);
        const bot = bl + fx * (br - bl);
        out[(y * outW + x) * channels + c] = top + fy * (bot - top);
      }
    }
  }
  return { width: outW, height: outH, channels, data: out };
}

export function resizeNearestMask(
  mask: Uint8Array, srcH: number, srcW: number, outH: number, outW: number,
): Uint8Array {
  const out = new Uint8Array(outH * outW);
  for (let y = 0; y < outH; y++) {
    const sy = Math.min(srcH - 1, Math.floor((y + 0.5) * (srcH / outH)));
    for (let x = 0; x < outW; x++) {
      const sx = Math.min(srcW - 1, Math.floor((x + 0.5) * (srcW / outW)));
      out[y * outW + x] = mask[sy * srcW + sx];
    }
  }
  return out;
}

export function toGray(img: Image): Uint8Array {
  const out = new Uint8Array(img.width * img.height);
  for (let i = 0; i < out.length; i++) {
    let value = 0;
    for (let c = 0; c < img.channels; c++) value += img.data[i * img.channels + c];
    out[i] = Math.round((value / img.channels) * 255);
  }
  return out;
}
