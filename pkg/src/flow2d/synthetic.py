"""Seeded synthetic texture dataset with injected defects.

Normal images are smooth random fields (coarse seeded noise, bilinearly
upsampled, plus a little fine grain). Defective images carry a square or
elliptical blob whose intensity is shifted away from the local texture mean,
always toward the farther clip bound so the effective contrast never
collapses against [0, 1].

This is the library's self-contained stand-in for an industrial-inspection
dataset: normal-only training split, mixed test split, binary defect masks.
"""

from __future__ import annotations

import time
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .features import ToyExtractorConfig, toy_extract, write_gray_png
from .flow import flow_forward, init_flow
from .metrics import ScoredSet, auroc, pixel_auroc
from .scoring import ScoreAgg, anomaly_map, fuse_scales, loglik_map
from .tensors import Tensor4, _bilinear_raw
from .train import AugmentConfig, TrainConfig, fit_scales


@dataclass(frozen=True)
class SyntheticConfig:
    image_size: int = 64
    train_count: int = 200
    test_normal: int = 50
    test_defect: int = 50
    seed: int = 0


def texture_image(rng: np.random.Generator, size: int) -> np.ndarray:
    """Smooth random field in [0, 1]: upsampled 8x8 noise plus fine grain."""
    coarse = rng.standard_normal((1, 1, 8, 8))
    field = _bilinear_raw(coarse, size, size)[0, 0]
    img = 0.5 + 0.18 * field + 0.02 * rng.standard_normal((size, size))
    return np.clip(img, 0.0, 1.0)


def inject_defect(rng: np.random.Generator, img: np.ndarray):
    """Paste a square or blob defect; returns (image, binary mask)."""
    size = img.shape[0]
    mask = np.zeros_like(img, dtype=np.uint8)
    kind = rng.choice(["square", "blob"])
    if kind == "square":
        side = int(rng.integers(size // 6, size // 3 + 1))
        y = int(rng.integers(2, size - side - 2))
        x = int(rng.integers(2, size - side - 2))
        mask[y : y + side, x : x + side] = 1
    else:
        ry = int(rng.integers(size // 12, size // 6 + 1))
        rx = int(rng.integers(size // 12, size // 6 + 1))
        cy = int(rng.integers(ry + 2, size - ry - 2))
        cx = int(rng.integers(rx + 2, size - rx - 2))
        yy, xx = np.mgrid[0:size, 0:size]
        mask[((yy - cy) / ry) ** 2 + ((xx - cx) / rx) ** 2 <= 1.0] = 1
    magnitude = rng.uniform(0.3, 0.5)
    # shift away from the local mean so clipping cannot wash the defect out
    shift = magnitude if img[mask == 1].mean() <= 0.5 else -magnitude
    out = img.copy()
    out[mask == 1] = np.clip(out[mask == 1] + shift, 0.0, 1.0)
    return out, mask


@dataclass
class SyntheticDataset:
    train: list[np.ndarray]
    test_images: list[np.ndarray]
    test_labels: list[int]          # 0 normal, 1 defective
    test_masks: list[np.ndarray]    # all-zero for normal images


def build_dataset(cfg: SyntheticConfig = SyntheticConfig()) -> SyntheticDataset:
    rng = np.random.default_rng(cfg.seed)
    train = [texture_image(rng, cfg.image_size) for _ in range(cfg.train_count)]
    test_images, test_labels, test_masks = [], [], []
    for _ in range(cfg.test_normal):
        test_images.append(texture_image(rng, cfg.image_size))
        test_labels.append(0)
        test_masks.append(np.zeros((cfg.image_size, cfg.image_size), dtype=np.uint8))
    for _ in range(cfg.test_defect):
        img, mask = inject_defect(rng, texture_image(rng, cfg.image_size))
        test_images.append(img)
        test_labels.append(1)
        test_masks.append(mask)
    return SyntheticDataset(train, test_images, test_labels, test_masks)


def write_dataset(root, cfg: SyntheticConfig = SyntheticConfig()) -> None:
    """Materialize the dataset on disk in the inspection-dataset layout."""
    root = Path(root)
    data = build_dataset(cfg)
    from PIL import Image

    def put(path, img):
        path.parent.mkdir(parents=True, exist_ok=True)
        Image.fromarray(np.round(img * 255).astype(np.uint8), mode="L").save(path)

    for i, img in enumerate(data.train):
        put(root / "train" / "good" / f"{i:03d}.png", img)
    ni = di = 0
    for img, label, mask in zip(data.test_images, data.test_labels, data.test_masks):
        if label == 0:
            put(root / "test" / "good" / f"{ni:03d}.png", img)
            ni += 1
        else:
            put(root / "test" / "defect" / f"{di:03d}.png", img)
            mpath = root / "ground_truth" / "defect" / f"{di:03d}_mask.png"
            mpath.parent.mkdir(parents=True, exist_ok=True)
            Image.fromarray(mask * 255, mode="L").save(mpath)
            di += 1


@dataclass
class BenchmarkResult:
    image_auroc: float
    pixel_auroc: float
    histories: list[list[float]]
    runtime_s: float


def run_benchmark(cfg: SyntheticConfig = SyntheticConfig(),
                  extractor: ToyExtractorConfig = ToyExtractorConfig(),
                  depth: int = 8, schedule: str = "3-3",
                  epochs: int = 40, agg: ScoreAgg = ScoreAgg()) -> BenchmarkResult:
    """Toy extractor + one flow per scale, trained on the normal split and
    evaluated on the mixed test split at image and pixel level."""
    t0 = time.time()
    data = build_dataset(cfg)
    size = cfg.image_size

    def features(img):
        return toy_extract(Tensor4(img[None, None].astype(np.float32)), extractor)

    train_stacks = [features(img) for img in data.train]
    n_scales = len(train_stacks[0].scales)
    datasets = [
        Tensor4(np.concatenate([s.scales[k].data for s in train_stacks]))
        for k in range(n_scales)
    ]
    models = [
        init_flow(extractor.channels, depth, schedule=schedule, seed=cfg.seed * 100 + k)
        for k in range(n_scales)
    ]
    train_cfg = TrainConfig(epochs=epochs, seed=cfg.seed + 1,
                            augment=AugmentConfig(enabled=True))
    _, histories = fit_scales(models, datasets, train_cfg)

    def score(img):
        stack = features(img)
        maps = [
            anomaly_map(loglik_map(flow_forward(models[k], stack.scales[k])), size, size, agg)
            for k in range(n_scales)
        ]
        return fuse_scales(maps, agg)

    amaps = [score(img) for img in data.test_images]
    image_auc = auroc(ScoredSet([m.image_score for m in amaps], data.test_labels))
    pixel_auc = pixel_auroc(amaps, data.test_masks)
    return BenchmarkResult(image_auc, pixel_auc, histories, time.time() - t0)


__all__ = [
    "BenchmarkResult",
    "SyntheticConfig",
    "SyntheticDataset",
    "build_dataset",
    "inject_defect",
    "run_benchmark",
    "texture_image",
    "write_dataset",
    "write_gray_png",
]
