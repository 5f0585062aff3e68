export { BACKBONES, createBackbone, preprocess, IMAGENET_MEAN, IMAGENET_STD } from "./backbones.js";
export type { Backbone, BackboneSpec, ScaleSpec } from "./backbones.js";
export { decodeImage, decodePng, decodePnm, encodeGrayPng, resizeBilinear, resizeNearestMask } from "./image.js";
export type { Image } from "./image.js";
export { exportDataset, verifyExport } from "./export.js";
export type { ExportOptions, Manifest, VerifyReport } from "./export.js";
export { decodeTensor, encodeTensor, TensorFormatError } from "./tensorfile.js";
export type { Tensor4, TensorMeta } from "./tensorfile.js";
