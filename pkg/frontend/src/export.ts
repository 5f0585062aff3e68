/** Dataset export and verification.
 *
 * Walks an inspection-layout dataset (train/good, test/<class>,
 * ground_truth/<class>), pushes every image through a backbone, and writes
 * per-scale `.fft` tensor files plus `manifest.json` in the core's format.
 * Ground-truth masks are rescaled (nearest-neighbor) to the backbone's input
 * resolution and copied alongside, so the consumer needs no image tooling
 * beyond PNG.
 */

import * as fs from "node:fs";
import * as path from "node:path";

import { Backbone, BackboneSpec, IMAGENET_MEAN, IMAGENET_STD, createBackbone, preprocess } from "./backbones.js";
import { decodeImage, decodePng, encodeGrayPng, resizeBilinear, resizeNearestMask, toGray } from "./image.js";
import { TensorFormatError, decodeTensor, encodeTensor } from "./tensorfile.js";

const IMAGE_SUFFIXES = [".png", ".pgm", ".ppm"];

export interface Manifest {
  backbone_id: string;
  input_h: number;
  input_w: number;
  scales: { h: number; w: number; c: number }[];
  layer_ids: number[];
  images: { [split: string]: string[] };
  preprocessing: {
    resize: string;
    normalization: { mean: number[]; std: number[] };
    weights: string;
  };
}

function isImage(name: string): boolean {
  return IMAGE_SUFFIXES.includes(path.extname(name).toLowerCase());
}

function listSplit(root: string, split: string): string[] {
  const dir = path.join(root, split);
  if (!fs.existsSync(dir)) return [];
  const ids: string[] = [];
  for (const cls of fs.readdirSync(dir).sort()) {
    const clsDir = path.join(dir, cls);
    if (!fs.statSync(clsDir).isDirectory()) continue;
    for (const file of fs.readdirSync(clsDir).sort()) {
      if (isImage(file)) {
        ids.push(`${split}/${cls}/${path.parse(file).name}`);
      }
    }
  }
  return ids;
}

function imagePath(root: string, id: string): string {
  for (const suffix of IMAGE_SUFFIXES) {
    const candidate = path.join(root, id + suffix);
    if (fs.existsSync(candidate)) return candidate;
  }
  throw new Error(`no image file for id ${id} under ${root}`);
}

export interface ExportOptions {
  datasetRoot: string;
  backboneId: string;
  outRoot: string;
  seed?: number;
  log?: (line: string) => void;
}

export function exportDataset(options: ExportOptions): Manifest {
  const { datasetRoot, backboneId, outRoot, seed = 0 } = options;
  const log = options.log ?? (() => undefined);
  const backbone: Backbone = createBackbone(backboneId, seed);
  const spec = backbone.spec;

  const images: { [split: string]: string[] } = {};
  for (const split of ["train", "test"]) {
    const ids = listSplit(datasetRoot, split);
    if (ids.length > 0) images[split] = ids;
  }
  if (!images["train"] && !images["test"]) {
    throw new Error(`no images found under ${datasetRoot}`);
  }

  fs.mkdirSync(outRoot, { recursive: true });
  for (const [split, ids] of Object.entries(images)) {
    for (const id of ids) {
      const raw = fs.readFileSync(imagePath(datasetRoot, id));
      let img = decodeImage(raw, imagePath(datasetRoot, id));
      if (img.width !== spec.inputSize || img.height !== spec.inputSize) {
        img = resizeBilinear(img, spec.inputSize, spec.inputSize);
      }
      const tensors = backbone.extract(preprocess(img, spec));
      tensors.forEach((tensor, k) => {
        const target = path.join(outRoot, `${id}.scale${k}.fft`);
        fs.mkdirSync(path.dirname(target), { recursive: true });
        fs.writeFileSync(target, encodeTensor(tensor, {
          backbone_id: spec.id,
          layer_id: spec.blockIndices[Math.min(k, spec.blockIndices.length - 1)],
          input_size: spec.inputSize,
          image_id: id,
          scale: k,
        }));
      });
      log(`exported ${id} (${tensors.length} scale${tensors.length > 1 ? "s" : ""})`);
    }
    void split;
  }

  copyMasks(datasetRoot, outRoot, spec, log);

  const manifest: Manifest = {
    backbone_id: spec.id,
    input_h: spec.inputSize,
    input_w: spec.inputSize,
    scales: spec.scales.map((s) => ({ h: s.h, w: s.w, c: s.c })),
    layer_ids: spec.blockIndices,
    images,
    preprocessing: {
      resize: "bilinear-half-pixel",
      normalization: { mean: IMAGENET_MEAN, std: IMAGENET_STD },
      weights: "seeded-random",
    },
  };
  fs.writeFileSync(
    path.join(outRoot, "manifest.json"),
    JSON.stringify(manifest, null, 2) + "\n",
  );
  return manifest;
}

function copyMasks(datasetRoot: string, outRoot: string, spec: BackboneSpec,
                   log: (line: string) => void): void {
  const gtDir = path.join(datasetRoot, "ground_truth");
  if (!fs.existsSync(gtDir)) return;
  for (const cls of fs.readdirSync(gtDir).sort()) {
    const clsDir = path.join(gtDir, cls);
    if (!fs.statSync(clsDir).isDirectory()) continue;
    for (const file of fs.readdirSync(clsDir).sort()) {
      if (!isImage(file)) continue;
      const img = decodeImage(fs.readFileSync(path.join(clsDir, file)), file);
      const gray = toGray(img);
      const binary = Uint8Array.from(gray, (v) => (v > 127 ? 1 : 0));
      const resized = resizeNearestMask(binary, img.height, img.width,
                                        spec.inputSize, spec.inputSize);
      const target = path.join(outRoot, "ground_truth", cls,
                               `${path.parse(file).name}.png`);
      fs.mkdirSync(path.dirname(target), { recursive: true });
      fs.writeFileSync(target, encodeGrayPng(
        spec.inputSize, spec.inputSize,
        Uint8Array.from(resized, (v) => (v ? 255 : 0)),
      ));
      log(`copied mask ${cls}/${file}`);
    }
  }
}

export interface VerifyIssue {
  file: string;
  problem: string;
}

export interface VerifyReport {
  checkedFiles: number;
  issues: VerifyIssue[];
}

export function verifyExport(outRoot: string): VerifyReport {
  const issues: VerifyIssue[] = [];
  const manifestPath = path.join(outRoot, "manifest.json");
  if (!fs.existsSync(manifestPath)) {
    return { checkedFiles: 0, issues: [{ file: manifestPath, problem: "missing manifest" }] };
  }
  const manifest = JSON.parse(fs.readFileSync(manifestPath, "utf-8")) as Manifest;
  let checked = 0;
  const allIds = Object.values(manifest.images).flat();
  if (allIds.length === 0) {
    issues.push({ file: manifestPath, problem: "manifest lists no images" });
  }
  for (const id of allIds) {
    manifest.scales.forEach((scale, k) => {
      const file = path.join(outRoot, `${id}.scale${k}.fft`);
      if (!fs.existsSync(file)) {
        issues.push({ file, problem: "missing tensor file" });
        return;
      }
      checked += 1;
      try {
        const { tensor } = decodeTensor(fs.readFileSync(file));
        const [n, c, h, w] = tensor.dims;
        if (n !== 1 || c !== scale.c || h !== scale.h || w !== scale.w) {
          issues.push({
            file,
            problem: `shape (${n}, ${c}, ${h}, ${w}) does not match manifest scale ${k} `
              + `(1, ${scale.c}, ${scale.h}, ${scale.w})`,
          });
        }
        for (let i = 0; i < tensor.data.length; i++) {
          if (!Number.isFinite(tensor.data[i])) {
            issues.push({ file, problem: `non-finite value at element ${i}` });
            break;
          }
        }
      } catch (err) {
        const problem = err instanceof TensorFormatError ? err.message : String(err);
        issues.push({ file, problem });
      }
    });
  }
  // every defect test image needs a mask alongside
  for (const id of manifest.images["test"] ?? []) {
    const parts = id.split("/");
    if (parts[1] === "good") continue;
    const mask = path.join(outRoot, "ground_truth", parts[1], `${parts[2]}_mask.png`);
    const alt = path.join(outRoot, "ground_truth", parts[1], `${parts[2]}.png`);
    if (!fs.existsSync(mask) && !fs.existsSync(alt)) {
      issues.push({ file: mask, problem: "missing ground-truth mask" });
    } else {
      const maskPath = fs.existsSync(mask) ? mask : alt;
      try {
        decodePng(fs.readFileSync(maskPath));
        checked += 1;
      } catch (err) {
        issues.push({ file: maskPath, problem: String(err) });
      }
    }
  }
  return { checkedFiles: checked, issues };
}
