"""Feature acquisition and persistence.

The `.fft` tensor file is the contract between this library and any external
feature exporter. Layout (little-endian):

    magic "FFTN" | version u32=1 | dtype u32 (1=float32, 2=float64)
    | rank u32=4 | dims 4 x u64 (n, c, h, w) | meta_len u32
    | UTF-8 JSON metadata | payload (n*c*h*w elements, row-major N-C-H-W)

A dataset root carries a `manifest.json` describing the backbone contract
(input resolution, per-scale shapes) plus per-split image id lists; the
directory layout mirrors the industrial-inspection convention
(`train/good/*`, `test/<defect>/*`, `ground_truth/<defect>/*_mask.png`).

The toy extractor is a frozen random projection (backbones in the real
pipeline are frozen too); it exists so the full pipeline runs with no
external components.
"""

from __future__ import annotations

import json
import struct
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
from PIL import Image

from .errors import DataError, FormatError, ShapeError
from .tensors import Tensor4, _bilinear_raw

MAGIC = b"FFTN"
FORMAT_VERSION = 1
_DTYPE_CODES = {1: np.dtype("<f4"), 2: np.dtype("<f8")}
_CODE_FOR_DTYPE = {np.dtype(np.float32): 1, np.dtype(np.float64): 2}


# -- tensor file --------------------------------------------------------------

def save_tensor(path, t: Tensor4, meta: dict | None = None) -> None:
    meta_blob = json.dumps(meta or {}, sort_keys=True).encode("utf-8")
    header = MAGIC + struct.pack(
        "<IIIQQQQI",
        FORMAT_VERSION,
        _CODE_FOR_DTYPE[t.dtype],
        4,
        *t.shape,
        len(meta_blob),
    )
    payload = np.ascontiguousarray(t.data, dtype=t.dtype.newbyteorder("<")).tobytes()
    with open(path, "wb") as fh:
        fh.write(header)
        fh.write(meta_blob)
        fh.write(payload)


def load_tensor(path) -> tuple[Tensor4, dict]:
    blob = Path(path).read_bytes()

    def need(count: int, offset: int, what: str) -> bytes:
        if offset + count > len(blob):
            raise FormatError(f"truncated tensor file {path}: expected {what}", offset=offset)
        return blob[offset : offset + count]

    if need(4, 0, "magic") != MAGIC:
        raise FormatError(f"{path} is not a tensor file (bad magic {blob[:4]!r})", offset=0)
    version, dtype_code, rank = struct.unpack("<III", need(12, 4, "header"))
    if version != FORMAT_VERSION:
        raise FormatError(f"{path}: unsupported format version {version}", offset=4)
    if dtype_code not in _DTYPE_CODES:
        raise FormatError(f"{path}: unknown dtype code {dtype_code}", offset=8)
    if rank != 4:
        raise FormatError(f"{path}: rank must be 4, got {rank}", offset=12)
    dims = struct.unpack("<QQQQ", need(32, 16, "dims"))
    (meta_len,) = struct.unpack("<I", need(4, 48, "metadata length"))
    meta_blob = need(meta_len, 52, "metadata")
    try:
        meta = json.loads(meta_blob.decode("utf-8"))
    except (UnicodeDecodeError, json.JSONDecodeError) as e:
        raise FormatError(f"{path}: corrupt metadata ({e})", offset=52) from e
    dtype = _DTYPE_CODES[dtype_code]
    count = int(np.prod(dims))
    payload_off = 52 + meta_len
    payload = need(count * dtype.itemsize, payload_off, f"{count} elements")
    if len(blob) != payload_off + count * dtype.itemsize:
        raise FormatError(
            f"{path}: {len(blob) - payload_off - count * dtype.itemsize} trailing bytes",
            offset=payload_off + count * dtype.itemsize,
        )
    data = np.frombuffer(payload, dtype=dtype).reshape(dims)
    return Tensor4(data.astype(dtype.newbyteorder("="))), meta


# -- manifest ------------------------------------------------------------------

@dataclass(frozen=True)
class ScaleSpec:
    h: int
    w: int
    c: int


@dataclass
class DatasetManifest:
    backbone_id: str
    input_h: int
    input_w: int
    scales: list[ScaleSpec]
    layer_ids: list[int]
    images: dict  # split -> list of ids, or split -> {class -> list}
    preprocessing: dict = field(default_factory=dict)

    def __post_init__(self):
        if not 1 <= len(self.scales) <= 3:
            raise DataError(f"manifest declares {len(self.scales)} scales, expected 1..3")


def load_manifest(root) -> DatasetManifest:
    path = Path(root) / "manifest.json"
    if not path.exists():
        raise DataError(f"missing manifest: {path}")
    raw = json.loads(path.read_text())
    try:
        return DatasetManifest(
            backbone_id=raw["backbone_id"],
            input_h=int(raw["input_h"]),
            input_w=int(raw["input_w"]),
            scales=[ScaleSpec(int(s["h"]), int(s["w"]), int(s["c"])) for s in raw["scales"]],
            layer_ids=[int(i) for i in raw.get("layer_ids", [])],
            images=raw.get("images", {}),
            preprocessing=raw.get("preprocessing", {}),
        )
    except (KeyError, TypeError, ValueError) as e:
        raise DataError(f"malformed manifest {path}: {e}") from e


def save_manifest(root, manifest: DatasetManifest) -> None:
    payload = {
        "backbone_id": manifest.backbone_id,
        "input_h": manifest.input_h,
        "input_w": manifest.input_w,
        "scales": [{"h": s.h, "w": s.w, "c": s.c} for s in manifest.scales],
        "layer_ids": manifest.layer_ids,
        "images": manifest.images,
        "preprocessing": manifest.preprocessing,
    }
    with open(Path(root) / "manifest.json", "w") as fh:
        json.dump(payload, fh, indent=2, sort_keys=True)
        fh.write("\n")


# -- feature stacks -------------------------------------------------------------

@dataclass
class FeatureStack:
    """One or more feature tensors for a single image, coarsest last."""

    scales: list[Tensor4]
    input_h: int
    input_w: int
    backbone_id: str = "unknown"
    layer_ids: list[int] = field(default_factory=list)

    def __post_init__(self):
        if not self.scales:
            raise DataError("feature stack must contain at least one scale")
        n = self.scales[0].n
        if any(t.n != n for t in self.scales):
            raise ShapeError("all scales in a stack must share the batch dimension")


def load_feature_stack(root, image_id: str, manifest: DatasetManifest) -> FeatureStack:
    """Load `<image_id>.scale<k>.fft` for every declared scale and validate."""
    root = Path(root)
    tensors = []
    for k, spec in enumerate(manifest.scales):
        path = root / f"{image_id}.scale{k}.fft"
        if not path.exists():
            raise DataError(f"missing feature file: {path}")
        t, _meta = load_tensor(path)
        if (t.c, t.h, t.w) != (spec.c, spec.h, spec.w):
            raise DataError(
                f"{path}: shape (c={t.c}, h={t.h}, w={t.w}) does not match manifest "
                f"scale {k} (c={spec.c}, h={spec.h}, w={spec.w})"
            )
        tensors.append(t)
    return FeatureStack(tensors, manifest.input_h, manifest.input_w,
                        manifest.backbone_id, list(manifest.layer_ids))


def save_feature_stack(root, image_id: str, stack: FeatureStack, meta: dict | None = None):
    root = Path(root)
    (root / image_id).parent.mkdir(parents=True, exist_ok=True)
    for k, t in enumerate(stack.scales):
        save_tensor(root / f"{image_id}.scale{k}.fft",
                    t, dict(meta or {}, scale=k, backbone_id=stack.backbone_id))


# -- toy extractor ---------------------------------------------------------------

@dataclass(frozen=True)
class ToyExtractorConfig:
    channels: int = 8
    strides: tuple[int, ...] = (4, 8, 16)
    seed: int = 0


def _toy_projection(cfg: ToyExtractorConfig, c_in: int, dtype) -> tuple[np.ndarray, np.ndarray]:
    rng = np.random.Generator(np.random.PCG64(np.random.SeedSequence((cfg.seed, c_in))))
    bound = 1.0 / np.sqrt(c_in * 9)
    w = rng.uniform(-bound, bound, size=(cfg.channels, c_in, 3, 3)).astype(dtype)
    b = rng.uniform(0.0, 0.5, size=(cfg.channels,)).astype(dtype)
    return w, b


def toy_extract(image: Tensor4, cfg: ToyExtractorConfig = ToyExtractorConfig()) -> FeatureStack:
    """Frozen seeded pipeline: random-projection 3x3 conv, rectifier, then
    non-overlapping average pooling at each configured stride."""
    if image.n != 1 or image.c not in (1, 3):
        raise ShapeError(f"toy_extract expects a (1, 1|3, h, w) image, got {image.shape}")
    from .tensors import _conv2d_raw

    w, b = _toy_projection(cfg, image.c, image.dtype)
    # replicate-pad by 1 so the zero-padding ring of the conv can be cropped
    # away: constant images then yield spatially constant features
    padded = np.pad(image.data, ((0, 0), (0, 0), (1, 1), (1, 1)), mode="edge")
    conv = _conv2d_raw(padded, w, b)[:, :, 1:-1, 1:-1]
    feat = np.maximum(conv, 0)
    scales = []
    for s in cfg.strides:
        oh, ow = feat.shape[2] // s, feat.shape[3] // s
        if oh < 1 or ow < 1:
            raise ShapeError(f"stride {s} too large for image {image.shape}")
        pooled = feat[:, :, : oh * s, : ow * s].reshape(1, cfg.channels, oh, s, ow, s)
        scales.append(Tensor4(pooled.mean(axis=(3, 5))))
    return FeatureStack(scales, image.h, image.w, backbone_id=f"toy-seed{cfg.seed}",
                        layer_ids=list(range(len(cfg.strides))))


# -- images ----------------------------------------------------------------------

def _read_pnm(path) -> np.ndarray:
    blob = Path(path).read_bytes()
    fields, pos = [], 0
    while len(fields) < 4 and pos < len(blob):
        # skip whitespace and comments
        while pos < len(blob) and blob[pos : pos + 1].isspace():
            pos += 1
        if pos < len(blob) and blob[pos : pos + 1] == b"#":
            while pos < len(blob) and blob[pos] != 0x0A:
                pos += 1
            continue
        start = pos
        while pos < len(blob) and not blob[pos : pos + 1].isspace():
            pos += 1
        fields.append(blob[start:pos])
    if len(fields) < 4:
        raise DataError(f"{path}: truncated PNM header")
    magic, w, h, maxval = fields[0], int(fields[1]), int(fields[2]), int(fields[3])
    if magic not in (b"P5", b"P6"):
        raise DataError(f"{path}: unsupported PNM magic {magic!r} (want binary P5/P6)")
    if maxval != 255:
        raise DataError(f"{path}: only 8-bit PNM supported, maxval={maxval}")
    channels = 1 if magic == b"P5" else 3
    pos += 1  # single whitespace after maxval
    expected = w * h * channels
    raster = blob[pos : pos + expected]
    if len(raster) != expected:
        raise DataError(f"{path}: PNM raster has {len(raster)} bytes, expected {expected}")
    arr = np.frombuffer(raster, dtype=np.uint8).reshape(h, w, channels)
    return arr


def load_image(path, size: tuple[int, int] | None = None) -> Tensor4:
    """8-bit grayscale/RGB PNG or binary PGM/PPM -> (1, c, h, w) in [0, 1]."""
    path = Path(path)
    suffix = path.suffix.lower()
    if suffix in (".pgm", ".ppm", ".pnm"):
        arr = _read_pnm(path)
    elif suffix == ".png":
        try:
            with Image.open(path) as img:
                if img.mode not in ("L", "RGB"):
                    img = img.convert("RGB" if img.mode in ("RGBA", "P") else "L")
                arr = np.asarray(img)
        except (OSError, SyntaxError) as e:
            raise DataError(f"cannot read image {path}: {e}") from e
        if arr.ndim == 2:
            arr = arr[:, :, None]
    else:
        raise DataError(f"unsupported image format {suffix!r} for {path}")
    t = Tensor4(arr.transpose(2, 0, 1)[None].astype(np.float32) / np.float32(255.0))
    if size is not None and (t.h, t.w) != tuple(size):
        t = Tensor4(_bilinear_raw(t.data, size[0], size[1]))
    return t


def load_mask(path, size: tuple[int, int] | None = None) -> np.ndarray:
    """Binary ground-truth mask as a 2-d {0,1} array (nearest-neighbor resize)."""
    with Image.open(path) as img:
        if size is not None and img.size != (size[1], size[0]):
            img = img.resize((size[1], size[0]), Image.NEAREST)
        arr = np.asarray(img.convert("L"))
    return (arr > 127).astype(np.uint8)


def write_gray_png(path, values: np.ndarray) -> None:
    """Min-max normalize a 2-d field into an 8-bit grayscale PNG."""
    lo, hi = float(values.min()), float(values.max())
    span = hi - lo if hi > lo else 1.0
    img = np.clip(np.round((values - lo) / span * 255.0), 0, 255).astype(np.uint8)
    Path(path).parent.mkdir(parents=True, exist_ok=True)
    Image.fromarray(img, mode="L").save(path)
