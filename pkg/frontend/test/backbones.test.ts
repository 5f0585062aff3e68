import { describe, expect, it } from "vitest";

import { BACKBONES, createBackbone, preprocess } from "../src/backbones.js";
import type { Image } from "../src/image.js";

function syntheticImage(size: number): Image {
  const data = new Float32Array(size * size * 3);
  for (let i = 0; i < data.length; i++) data[i] = (Math.sin(i * 0.13) + 1) / 2;
  return { width: size, height: size, channels: 3, data };
}

// expected geometry per the implementation-table contract
const EXPECTED: Record<string, [number, number, number][]> = {
  resnet18: [[64, 64, 64], [128, 32, 32], [256, 16, 16]],
  wide_resnet50_2: [[256, 64, 64], [512, 32, 32], [1024, 16, 16]],
  deit_base_distilled: [[768, 24, 24]],
  cait_m48_distilled: [[768, 28, 28]],
};

describe("backbone geometry contract", () => {
  for (const [id, scales] of Object.entries(EXPECTED)) {
    it(`${id} produces the contract shapes`, () => {
      const backbone = createBackbone(id, 0);
      const chw = preprocess(syntheticImage(backbone.spec.inputSize), backbone.spec);
      const tensors = backbone.extract(chw);
      expect(tensors.length).toBe(scales.length);
      tensors.forEach((t, k) => {
        const [c, h, w] = scales[k];
        expect(t.dims).toEqual([1, c, h, w]);
        for (const v of t.data.subarray(0, 64)) expect(Number.isFinite(v)).toBe(true);
      });
    });
  }

  it("vit stacks have exactly one scale, cnn stacks three", () => {
    for (const spec of Object.values(BACKBONES)) {
      expect(spec.scales.length).toBe(spec.family === "vit" ? 1 : 3);
    }
  });

  it("extraction is deterministic under a fixed seed", () => {
    const image = syntheticImage(256);
    const a = createBackbone("resnet18", 5);
    const b = createBackbone("resnet18", 5);
    const ta = a.extract(preprocess(image, a.spec));
    const tb = b.extract(preprocess(image, b.spec));
    expect(Array.from(ta[0].data.subarray(0, 100)))
      .toEqual(Array.from(tb[0].data.subarray(0, 100)));
  });

  it("different seeds give different features", () => {
    const image = syntheticImage(256);
    const a = createBackbone("resnet18", 0);
    const b = createBackbone("resnet18", 1);
    const ta = a.extract(preprocess(image, a.spec));
    const tb = b.extract(preprocess(image, b.spec));
    let same = true;
    for (let i = 0; i < 100; i++) {
      if (ta[0].data[i] !== tb[0].data[i]) same = false;
    }
    expect(same).toBe(false);
  });

  it("rejects unknown backbone ids", () => {
    expect(() => createBackbone("vgg16")).toThrow(/unknown backbone/);
  });

  it("normalizes with the recorded statistics", () => {
    const size = 256;
    const img: Image = {
      width: size, height: size, channels: 3,
      data: new Float32Array(size * size * 3).fill(0.485),
    };
    const chw = preprocess(img, BACKBONES.resnet18);
    expect(chw[0]).toBeCloseTo(0, 5); // (0.485 - mean_R) / std_R
  });
});
