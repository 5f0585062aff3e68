/** Backbone registry and feature extraction.
 *
 * Each spec pins one row of the feature-geometry contract: input resolution,
 * the block/layer indices features are taken from, and the per-scale spatial
 * sizes and channel widths. CNN-style pyramids export the last layer of the
 * first three blocks; ViT-style models export one layer's token grid with
 * the class (and distillation) tokens dropped.
 *
 * Pretrained zoo weights are not bundled: the built-in implementations are
 * *seeded* random projections that reproduce each architecture's feature
 * geometry exactly (strides, token grids, channel widths, prefix-token
 * bookkeeping). The manifest records `weights: "seeded-random"` so consumers
 * can tell these features apart from real zoo exports; wiring in real
 * weights means implementing the Backbone interface against a model runtime.
 */

import { Image } from "./image.js";
import { seededRng, uniformArray } from "./rng.js";
import { Tensor4 } from "./tensorfile.js";

export interface ScaleSpec {
  h: number;
  w: number;
  c: number;
}

export interface BackboneSpec {
  id: string;
  family: "cnn" | "vit";
  inputSize: number;
  blockIndices: number[];
  scales: ScaleSpec[];
  patchSize?: number;       // vit only
  prefixTokens?: number;    // vit only: class (+ distillation) tokens
}

export const BACKBONES: Record<string, BackboneSpec> = {
  resnet18: {
    id: "resnet18",
    family: "cnn",
    inputSize: 256,
    blockIndices: [1, 2, 3],
    scales: [
      { h: 64, w: 64, c: 64 },
      { h: 32, w: 32, c: 128 },
      { h: 16, w: 16, c: 256 },
    ],
  },
  wide_resnet50_2: {
    id: "wide_resnet50_2",
    family: "cnn",
    inputSize: 256,
    blockIndices: [1, 2, 3],
    scales: [
      { h: 64, w: 64, c: 256 },
      { h: 32, w: 32, c: 512 },
      { h: 16, w: 16, c: 1024 },
    ],
  },
  deit_base_distilled: {
    id: "deit_base_distilled",
    family: "vit",
    inputSize: 384,
    blockIndices: [7],
    scales: [{ h: 24, w: 24, c: 768 }],
    patchSize: 16,
    prefixTokens: 2, // class + distillation
  },
  cait_m48_distilled: {
    id: "cait_m48_distilled",
    family: "vit",
    inputSize: 448,
    blockIndices: [40],
    scales: [{ h: 28, w: 28, c: 768 }],
    patchSize: 16,
    prefixTokens: 1, // class token joins after the self-attention stage
  },
};

/** Standard zoo preprocessing statistics, recorded in the manifest. */
export const IMAGENET_MEAN = [0.485, 0.456, 0.406];
export const IMAGENET_STD = [0.229, 0.224, 0.225];

export interface Backbone {
  spec: BackboneSpec;
  /** image at spec.inputSize, normalized CHW -> one tensor per scale */
  extract(chw: Float32Array): Tensor4[];
}

/** Resize happens before this: channels-last [0,1] image to normalized CHW. */
export function preprocess(img: Image, spec: BackboneSpec): Float32Array {
  const size = spec.inputSize;
  if (img.width !== size || img.height !== size) {
    throw new Error(`expected ${size}x${size} input, got ${img.width}x${img.height}`);
  }
  const out = new Float32Array(3 * size * size);
  for (let c = 0; c < 3; c++) {
    const srcC = img.channels === 3 ? c : 0;
    const mean = IMAGENET_MEAN[c];
    const std = IMAGENET_STD[c];
    for (let i = 0; i < size * size; i++) {
      out[c * size * size + i] = (img.data[i * img.channels + srcC] - mean) / std;
    }
  }
  return out;
}

/** Strided patch projection: kernel = stride, input CHW -> (1, cOut, oh, ow). */
function patchProject(
  chw: Float32Array, size: number, stride: number, cOut: number,
  weights: Float32Array, bias: Float32Array,
): Tensor4 {
  const oh = Math.floor(size / stride);
  const ow = oh;
  const patch = stride * stride;
  const out = new Float32Array(cOut * oh * ow);
  const plane = size * size;
  for (let oy = 0; oy < oh; oy++) {
    for (let ox = 0; ox < ow; ox++) {
      const baseY = oy * stride;
      const baseX = ox * stride;
      for (let oc = 0; oc < cOut; oc++) {
        let acc = bias[oc];
        const wBase = oc * 3 * patch;
        for (let ic = 0; ic < 3; ic++) {
          const srcBase = ic * plane + baseY * size + baseX;
          const wc = wBase + ic * patch;
          for (let ky = 0; ky < stride; ky++) {
            const rowSrc = srcBase + ky * size;
            const rowW = wc + ky * stride;
            for (let kx = 0; kx < stride; kx++) {
              acc += chw[rowSrc + kx] * weights[rowW + kx];
            }
          }
        }
        out[(oc * oh + oy) * ow + ox] = Math.max(acc, 0); // rectified
      }
    }
  }
  return { dims: [1, cOut, oh, ow], data: out };
}

class SeededCnnBackbone implements Backbone {
  private readonly kernels: { stride: number; weights: Float32Array; bias: Float32Array }[];

  constructor(public readonly spec: BackboneSpec, seed: number) {
    this.kernels = spec.scales.map((scale, k) => {
      const stride = spec.inputSize / scale.h;
      const rng = seededRng(seed, `${spec.id}/scale${k}`);
      const fanIn = 3 * stride * stride;
      return {
        stride,
        weights: uniformArray(rng, scale.c * fanIn, 1 / Math.sqrt(fanIn)),
        bias: uniformArray(rng, scale.c, 0.1),
      };
    });
  }

  extract(chw: Float32Array): Tensor4[] {
    return this.spec.scales.map((scale, k) => {
      const { stride, weights, bias } = this.kernels[k];
      const t = patchProject(chw, this.spec.inputSize, stride, scale.c, weights, bias);
      if (t.dims[2] !== scale.h || t.dims[3] !== scale.w) {
        throw new Error(`scale ${k}: got ${t.dims[2]}x${t.dims[3]}, want ${scale.h}x${scale.w}`);
      }
      return t;
    });
  }
}

class SeededVitBackbone implements Backbone {
  private readonly weights: Float32Array;
  private readonly bias: Float32Array;
  private readonly prefix: Float32Array;    // prefix token embeddings
  private readonly tokenScale: Float32Array;
  private readonly tokenShift: Float32Array;

  constructor(public readonly spec: BackboneSpec, seed: number) {
    const { patchSize = 16, prefixTokens = 1 } = spec;
    const c = spec.scales[0].c;
    const fanIn = 3 * patchSize * patchSize;
    const rng = seededRng(seed, `${spec.id}/patchify`);
    this.weights = uniformArray(rng, c * fanIn, 1 / Math.sqrt(fanIn));
    this.bias = uniformArray(rng, c, 0.1);
    const rngTok = seededRng(seed, `${spec.id}/tokens`);
    this.prefix = uniformArray(rngTok, prefixTokens * c, 1);
    this.tokenScale = uniformArray(rngTok, c, 0.2);
    this.tokenShift = uniformArray(rngTok, c, 0.2);
  }

  extract(chw: Float32Array): Tensor4[] {
    const spec = this.spec;
    const { patchSize = 16, prefixTokens = 1 } = spec;
    const c = spec.scales[0].c;
    const grid = spec.inputSize / patchSize;
    const patches = patchProject(chw, spec.inputSize, patchSize, c, this.weights, this.bias);
    // token sequence: [prefix tokens, grid tokens]; blocks mix per-token here
    const nTokens = prefixTokens + grid * grid;
    const tokens = new Float32Array(nTokens * c);
    tokens.set(this.prefix, 0);
    for (let t = 0; t < grid * grid; t++) {
      const oy = Math.floor(t / grid);
      const ox = t % grid;
      for (let ch = 0; ch < c; ch++) {
        tokens[(prefixTokens + t) * c + ch] = patches.data[(ch * grid + oy) * grid + ox];
      }
    }
    for (let t = 0; t < nTokens; t++) {
      for (let ch = 0; ch < c; ch++) {
        const v = tokens[t * c + ch];
        tokens[t * c + ch] = v * (1 + this.tokenScale[ch]) + this.tokenShift[ch];
      }
    }
    // drop prefix tokens, reshape token grid back to a spatial map
    const out = new Float32Array(c * grid * grid);
    for (let t = 0; t < grid * grid; t++) {
      const oy = Math.floor(t / grid);
      const ox = t % grid;
      for (let ch = 0; ch < c; ch++) {
        out[(ch * grid + oy) * grid + ox] = tokens[(prefixTokens + t) * c + ch];
      }
    }
    return [{ dims: [1, c, grid, grid], data: out }];
  }
}

export function createBackbone(id: string, seed = 0): Backbone {
  const spec = BACKBONES[id];
  if (!spec) {
    throw new Error(`unknown backbone ${JSON.stringify(id)}; known: ${Object.keys(BACKBONES).join(", ")}`);
  }
  return spec.family === "cnn"
    ? new SeededCnnBackbone(spec, seed)
    : new SeededVitBackbone(spec, seed);
}
