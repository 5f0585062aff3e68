"""Operator entry point: train, score, eval, generate, bench.

Configuration comes from a flat key-value file with one level of section
headers plus command-line flags (flags win):

    # comment
    [train]
    lr = 1e-3

Unknown sections or keys are errors. Every command writes its outputs into
a fresh run directory out/<timestamp>-<confighash>; re-running with an
identical config and seed reproduces identical artifact bytes (training
logs carry wall-clock times and are the one exception).

Exit codes: 0 success, 2 usage/config error, 3 data error, 4 numerical
failure.
"""

from __future__ import annotations

import argparse
import hashlib
import json
import sys
import time
from dataclasses import asdict, dataclass, field, replace
from pathlib import Path

import numpy as np

from .errors import ConfigError, DataError, FormatError, NumericalError
from .features import (
    DatasetManifest,
    ToyExtractorConfig,
    load_feature_stack,
    load_image,
    load_manifest,
    load_mask,
    load_tensor,
    save_tensor,
    toy_extract,
    write_gray_png,
)
from .flow import count_params, flow_forward, flow_inverse, init_flow
from .metrics import ScoredSet, auroc, eval_report, pixel_auroc
from .scoring import ScoreAgg, anomaly_map, fuse_scales, loglik_map
from .tensors import Tensor4
from .train import AugmentConfig, TrainConfig, fit_scales, load_checkpoint, save_checkpoint

IMAGE_SUFFIXES = (".png", ".pgm", ".ppm")


@dataclass(frozen=True)
class RunConfig:
    # data
    root: str = ""
    mode: str = "auto"              # auto | features | toy
    input_size: int = 64
    toy_channels: int = 8
    toy_strides: tuple[int, ...] = (4, 8, 16)
    toy_seed: int = 0
    # flow
    steps: int = 8
    schedule: str = "3-3"
    hidden_ratio: float = 1.0
    clamp: float = 2.0
    # train
    lr: float = 1e-3
    weight_decay: float = 1e-5
    epochs: int = 500
    batch_size: int = 32
    seed: int = 0
    max_steps: int | None = None
    augment: bool = True
    p_hflip: float = 0.5
    p_vflip: float = 0.3
    p_rot: float = 0.7
    # score
    agg: str = "max"
    topk_percent: float = 1.0
    include_logdet: bool = True
    # run
    out: str = "runs"
    threads: int = 1

    def train_config(self) -> TrainConfig:
        return TrainConfig(
            lr=self.lr, weight_decay=self.weight_decay, epochs=self.epochs,
            batch_size=self.batch_size, seed=self.seed, max_steps=self.max_steps,
            augment=AugmentConfig(enabled=self.augment, p_hflip=self.p_hflip,
                                  p_vflip=self.p_vflip, p_rot=self.p_rot),
            flow_steps=self.steps, schedule=self.schedule,
            hidden_ratio=self.hidden_ratio, clamp=self.clamp,
        )

    def score_agg(self) -> ScoreAgg:
        return ScoreAgg(mode=self.agg, topk_percent=self.topk_percent)

    def toy_config(self) -> ToyExtractorConfig:
        return ToyExtractorConfig(channels=self.toy_channels,
                                  strides=self.toy_strides, seed=self.toy_seed)


def _parse_bool(raw: str) -> bool:
    low = raw.strip().lower()
    if low in ("1", "true", "yes", "on"):
        return True
    if low in ("0", "false", "no", "off"):
        return False
    raise ValueError(f"expected a boolean, got {raw!r}")


def _parse_strides(raw: str) -> tuple[int, ...]:
    return tuple(int(part) for part in str(raw).replace(" ", "").split(",") if part)


def _parse_opt_int(raw: str):
    low = raw.strip().lower()
    return None if low in ("", "none") else int(raw)


# (section, key) -> (RunConfig field, parser)
_CONFIG_KEYS = {
    ("data", "root"): ("root", str),
    ("data", "mode"): ("mode", str),
    ("data", "input_size"): ("input_size", int),
    ("data", "toy_channels"): ("toy_channels", int),
    ("data", "toy_strides"): ("toy_strides", _parse_strides),
    ("data", "toy_seed"): ("toy_seed", int),
    ("flow", "steps"): ("steps", int),
    ("flow", "schedule"): ("schedule", str),
    ("flow", "hidden_ratio"): ("hidden_ratio", float),
    ("flow", "clamp"): ("clamp", float),
    ("train", "lr"): ("lr", float),
    ("train", "weight_decay"): ("weight_decay", float),
    ("train", "epochs"): ("epochs", int),
    ("train", "batch_size"): ("batch_size", int),
    ("train", "seed"): ("seed", int),
    ("train", "max_steps"): ("max_steps", _parse_opt_int),
    ("train", "augment"): ("augment", _parse_bool),
    ("train", "p_hflip"): ("p_hflip", float),
    ("train", "p_vflip"): ("p_vflip", float),
    ("train", "p_rot"): ("p_rot", float),
    ("score", "agg"): ("agg", str),
    ("score", "topk_percent"): ("topk_percent", float),
    ("score", "include_logdet"): ("include_logdet", _parse_bool),
    ("run", "out"): ("out", str),
    ("run", "threads"): ("threads", int),
}


def parse_config_file(path) -> dict[str, str]:
    """Flat key-value file with [section] headers; returns field -> raw value."""
    path = Path(path)
    if not path.exists():
        raise ConfigError(f"config file not found: {path}")
    overrides = {}
    section = None
    for lineno, raw_line in enumerate(path.read_text().splitlines(), start=1):
        line = raw_line.split("#", 1)[0].strip()
        if not line:
            continue
        if line.startswith("[") and line.endswith("]"):
            section = line[1:-1].strip()
            if not any(sec == section for sec, _ in _CONFIG_KEYS):
                raise ConfigError(f"{path}:{lineno}: unknown section [{section}]")
            continue
        if "=" not in line:
            raise ConfigError(f"{path}:{lineno}: expected 'key = value', got {raw_line!r}")
        key, value = (part.strip() for part in line.split("=", 1))
        if section is None:
            raise ConfigError(f"{path}:{lineno}: key {key!r} outside any [section]")
        if (section, key) not in _CONFIG_KEYS:
            raise ConfigError(f"{path}:{lineno}: unknown key {key!r} in section [{section}]")
        field_name, parser = _CONFIG_KEYS[(section, key)]
        try:
            overrides[field_name] = parser(value)
        except ValueError as e:
            raise ConfigError(f"{path}:{lineno}: bad value for {section}.{key}: {e}") from e
    return overrides


_FLAG_FIELDS = {
    "dataset": "root", "out": "out", "seed": "seed", "steps": "steps",
    "schedule": "schedule", "hidden_ratio": "hidden_ratio", "clamp": "clamp",
    "epochs": "epochs", "batch_size": "batch_size", "lr": "lr",
    "weight_decay": "weight_decay", "score_agg": "agg", "threads": "threads",
    "mode": "mode", "input_size": "input_size", "max_steps": "max_steps",
}


def resolve_config(args) -> RunConfig:
    overrides = {}
    if getattr(args, "config", None):
        overrides.update(parse_config_file(args.config))
    for flag, field_name in _FLAG_FIELDS.items():
        value = getattr(args, flag, None)
        if value is not None:
            overrides[field_name] = value
    if getattr(args, "augment", None) is not None:
        overrides["augment"] = args.augment == "on"
    try:
        cfg = replace(RunConfig(), **overrides)
    except TypeError as e:
        raise ConfigError(str(e)) from e
    _validate(cfg)
    return cfg


def _validate(cfg: RunConfig) -> None:
    if cfg.mode not in ("auto", "features", "toy"):
        raise ConfigError(f"data.mode must be auto|features|toy, got {cfg.mode!r}")
    if cfg.schedule not in ("3-1", "3-3"):
        raise ConfigError(f"flow.schedule must be 3-1 or 3-3, got {cfg.schedule!r}")
    if cfg.agg not in ("max", "topk"):
        raise ConfigError(f"score.agg must be max or topk, got {cfg.agg!r}")
    if cfg.steps < 1:
        raise ConfigError(f"flow.steps must be >= 1, got {cfg.steps}")
    if cfg.lr <= 0:
        raise ConfigError(f"train.lr must be positive, got {cfg.lr}")
    if cfg.batch_size < 1:
        raise ConfigError(f"train.batch_size must be >= 1, got {cfg.batch_size}")
    if cfg.input_size < 1:
        raise ConfigError(f"data.input_size must be >= 1, got {cfg.input_size}")
    if cfg.threads < 1:
        raise ConfigError(f"run.threads must be >= 1, got {cfg.threads}")
    if not 0 < cfg.topk_percent <= 100:
        raise ConfigError(f"score.topk_percent must be in (0, 100], got {cfg.topk_percent}")
    for name in ("p_hflip", "p_vflip", "p_rot"):
        p = getattr(cfg, name)
        if not 0 <= p <= 1:
            raise ConfigError(f"train.{name} must be in [0, 1], got {p}")


def config_hash(cfg: RunConfig) -> str:
    blob = json.dumps(asdict(cfg), sort_keys=True, default=list).encode()
    return hashlib.sha256(blob).hexdigest()[:8]


def make_run_dir(cfg: RunConfig) -> Path:
    stamp = time.strftime("%Y%m%dT%H%M%SZ", time.gmtime())
    run_dir = Path(cfg.out) / f"{stamp}-{config_hash(cfg)}"
    suffix = 0
    while run_dir.exists():
        suffix += 1
        run_dir = Path(cfg.out) / f"{stamp}-{config_hash(cfg)}-{suffix}"
    run_dir.mkdir(parents=True)
    with open(run_dir / "run_config.json", "w") as fh:
        json.dump(asdict(cfg), fh, indent=2, sort_keys=True, default=list)
        fh.write("\n")
    return run_dir


# -- dataset plumbing ---------------------------------------------------------

def detect_mode(cfg: RunConfig) -> str:
    root = Path(cfg.root)
    if not cfg.root:
        raise ConfigError("no dataset root configured (use --dataset or [data] root)")
    manifest = root / "manifest.json"
    if cfg.mode == "features" or (cfg.mode == "auto" and manifest.exists()):
        if not manifest.exists():
            raise ConfigError(f"missing manifest: {manifest}")
        return "features"
    train_dir = root / "train" / "good"
    if train_dir.is_dir() and any(
        p.suffix.lower() in IMAGE_SUFFIXES for p in train_dir.iterdir()
    ):
        return "toy"
    if cfg.mode == "toy":
        raise ConfigError(f"no raw images under {train_dir}")
    raise ConfigError(f"missing manifest: {manifest} (and no raw images under {train_dir})")


def _list_images(root: Path, split: str) -> list[str]:
    ids = []
    split_dir = root / split
    if not split_dir.is_dir():
        raise DataError(f"missing split directory: {split_dir}")
    for cls_dir in sorted(p for p in split_dir.iterdir() if p.is_dir()):
        for img in sorted(cls_dir.iterdir()):
            if img.suffix.lower() in IMAGE_SUFFIXES:
                ids.append(f"{split}/{cls_dir.name}/{img.stem}")
    if not ids:
        raise DataError(f"no images found under {split_dir}")
    return ids


def _image_path(root: Path, image_id: str) -> Path:
    for suffix in IMAGE_SUFFIXES:
        path = root / f"{image_id}{suffix}"
        if path.exists():
            return path
    raise DataError(f"no image file for id {image_id!r} under {root}")


class FeatureSource:
    """Uniform access to per-image feature stacks for both dataset modes."""

    def __init__(self, cfg: RunConfig):
        self.cfg = cfg
        self.root = Path(cfg.root)
        self.mode = detect_mode(cfg)
        if self.mode == "features":
            self.manifest: DatasetManifest | None = load_manifest(self.root)
            self.input_hw = (self.manifest.input_h, self.manifest.input_w)
            self.channels = [s.c for s in self.manifest.scales]
        else:
            self.manifest = None
            self.input_hw = (cfg.input_size, cfg.input_size)
            self.channels = [cfg.toy_channels] * len(cfg.toy_strides)

    def ids(self, split: str) -> list[str]:
        if self.mode == "features":
            ids = self.manifest.images.get(split)
            if not ids:
                raise DataError(f"manifest lists no images for split {split!r}")
            return list(ids)
        return _list_images(self.root, split)

    def stack(self, image_id: str):
        if self.mode == "features":
            return load_feature_stack(self.root, image_id, self.manifest)
        img = load_image(_image_path(self.root, image_id), size=self.input_hw)
        return toy_extract(img, self.cfg.toy_config())


# -- commands ------------------------------------------------------------------

def cmd_train(cfg: RunConfig, args) -> int:
    source = FeatureSource(cfg)
    ids = source.ids("train")
    stacks = [source.stack(image_id) for image_id in ids]
    n_scales = len(stacks[0].scales)
    datasets = [
        Tensor4(np.concatenate([s.scales[k].data for s in stacks]))
        for k in range(n_scales)
    ]
    models = [
        init_flow(source.channels[k], cfg.steps, schedule=cfg.schedule,
                  hidden_ratio=cfg.hidden_ratio, clamp=cfg.clamp,
                  seed=cfg.seed * 100 + k)
        for k in range(n_scales)
    ]
    run_dir = make_run_dir(cfg)
    logs_dir = run_dir / "logs"
    logs_dir.mkdir()
    log_paths = [logs_dir / f"train.scale{k}.jsonl" for k in range(n_scales)]
    _, histories = fit_scales(models, datasets, cfg.train_config(), log_paths=log_paths)
    for k, model in enumerate(models):
        save_checkpoint(run_dir / f"flow.scale{k}.ckpt", model)
    print(f"run dir: {run_dir}")
    for k, history in enumerate(histories):
        print(f"scale {k}: loss {history[0]:.4f} -> {history[-1]:.4f} "
              f"({len(history)} epochs, {source.channels[k]} channels)")
    return 0


def _load_models(checkpoint: str) -> list:
    path = Path(checkpoint)
    if path.is_dir():
        files = sorted(path.glob("flow.scale*.ckpt"))
        if not files:
            raise DataError(f"no flow.scale*.ckpt files under {path}")
    else:
        if not path.exists():
            raise DataError(f"checkpoint not found: {path}")
        files = [path]
    return [load_checkpoint(f)[0] for f in files]


def _score_stack(models, stack, cfg: RunConfig, out_hw):
    agg = cfg.score_agg()
    per_scale = []
    for k, model in enumerate(models):
        feats = stack.scales[k]
        if feats.c != model.channels:
            raise DataError(
                f"scale {k}: checkpoint expects {model.channels} channels, "
                f"features have {feats.c}"
            )
        result = flow_forward(model, feats)
        ll = loglik_map(result, include_logdet=cfg.include_logdet)
        per_scale.append(anomaly_map(ll, out_hw[0], out_hw[1], agg))
    return fuse_scales(per_scale, agg)


def cmd_score(cfg: RunConfig, args) -> int:
    models = _load_models(args.checkpoint)
    source = FeatureSource(cfg)
    if len(models) != len(source.channels):
        raise DataError(
            f"checkpoint has {len(models)} scales, dataset declares {len(source.channels)}"
        )
    ids = source.ids(args.split)
    run_dir = make_run_dir(cfg)

    def score_one(image_id: str):
        amap = _score_stack(models, source.stack(image_id), cfg, source.input_hw)
        return image_id, amap

    if cfg.threads > 1:
        from concurrent.futures import ThreadPoolExecutor

        with ThreadPoolExecutor(max_workers=cfg.threads) as pool:
            results = list(pool.map(score_one, ids))
    else:
        results = [score_one(image_id) for image_id in ids]

    with open(run_dir / "scores.jsonl", "w") as fh:
        for image_id, amap in results:
            map_path = run_dir / "maps" / f"{image_id}.map.fft"
            map_path.parent.mkdir(parents=True, exist_ok=True)
            save_tensor(
                map_path,
                Tensor4(amap.scores[None, None].astype(np.float32)),
                {"image_id": image_id, "raw_min": amap.raw_range[0],
                 "raw_max": amap.raw_range[1]},
            )
            write_gray_png(run_dir / "heatmaps" / f"{image_id}.png", amap.scores)
            fh.write(json.dumps({
                "image_id": image_id,
                "score": amap.image_score,
                "raw_min": amap.raw_range[0],
                "raw_max": amap.raw_range[1],
            }) + "\n")
    print(f"run dir: {run_dir}")
    print(f"scored {len(results)} images from split {args.split!r}")
    return 0


def _label_for(image_id: str) -> int:
    return 0 if "/good/" in f"/{image_id}/" else 1


def cmd_eval(cfg: RunConfig, args) -> int:
    scores_dir = Path(args.scores)
    scores_file = scores_dir / "scores.jsonl" if scores_dir.is_dir() else scores_dir
    if not scores_file.exists():
        raise DataError(f"scores file not found: {scores_file}")
    rows = [json.loads(line) for line in scores_file.read_text().splitlines() if line]
    if not rows:
        raise DataError(f"no scores in {scores_file}")
    labels = [_label_for(r["image_id"]) for r in rows]
    image_auc = auroc(ScoredSet([r["score"] for r in rows], labels))

    maps_dir = scores_file.parent / "maps"
    root = Path(cfg.root)
    source = FeatureSource(cfg)
    maps, masks = [], []
    for row in rows:
        image_id = row["image_id"]
        map_t, _ = load_tensor(maps_dir / f"{image_id}.map.fft")
        arr = map_t.data[0, 0]
        parts = image_id.split("/")
        if _label_for(image_id) == 0:
            mask = np.zeros(arr.shape, dtype=np.uint8)
        else:
            mask_path = root / "ground_truth" / parts[-2] / f"{parts[-1]}_mask.png"
            if not mask_path.exists():
                raise DataError(f"missing ground-truth mask: {mask_path}")
            mask = load_mask(mask_path, size=source.input_hw)
        maps.append(arr)
        masks.append(mask)
    pixel_auc = pixel_auroc(maps, masks)

    category = root.name or "dataset"
    run_dir = make_run_dir(cfg)
    report = eval_report({category: (image_auc, pixel_auc)},
                         csv_path=run_dir / "report.csv",
                         json_path=run_dir / "report.json")
    print(f"run dir: {run_dir}")
    for cat, img, px in report.rows():
        print(f"{cat}: image AUROC {img:.4f}, pixel AUROC {px:.4f}")
    return 0


def _parse_coords(raw: str) -> tuple[int, int]:
    try:
        parts = [int(p) for p in raw.split(",")]
        if len(parts) != 2:
            raise ValueError
        return parts[0], parts[1]
    except ValueError:
        raise ConfigError(f"--at expects 'row,col', got {raw!r}") from None


def cmd_generate(cfg: RunConfig, args) -> int:
    models = _load_models(args.checkpoint)
    model = models[args.scale] if args.scale < len(models) else None
    if model is None:
        raise ConfigError(f"--scale {args.scale} out of range ({len(models)} scales)")
    feats, _ = load_tensor(args.input)
    if feats.c != model.channels:
        raise DataError(f"feature file has {feats.c} channels, model expects {model.channels}")
    result = flow_forward(model, feats)
    z = result.z
    h0, w0 = _parse_coords(args.at)
    if not (0 <= h0 < z.h and 0 <= w0 < z.w):
        raise ConfigError(f"--at ({h0}, {w0}) outside latent grid {z.h}x{z.w}")
    radius = args.radius
    rng = np.random.default_rng(cfg.seed)
    perturbed = z.copy()
    ys = slice(max(0, h0 - radius), min(z.h, h0 + radius + 1))
    xs = slice(max(0, w0 - radius), min(z.w, w0 + radius + 1))
    noise = rng.standard_normal(perturbed.data[:, :, ys, xs].shape).astype(z.dtype)
    perturbed.data[:, :, ys, xs] += args.magnitude * noise

    reconstructed = flow_inverse(model, perturbed)
    run_dir = make_run_dir(cfg)
    save_tensor(run_dir / "features_before.fft", feats, {"role": "original"})
    save_tensor(run_dir / "features_after.fft", reconstructed,
                {"role": "reconstructed", "at": [h0, w0],
                 "magnitude": args.magnitude, "radius": radius})
    diff = np.sqrt(((reconstructed.data - feats.data) ** 2).sum(axis=1))[0]
    save_tensor(run_dir / "difference.fft", Tensor4(diff[None, None]), {"role": "difference"})
    write_gray_png(run_dir / "difference.png", diff)
    peak = np.unravel_index(np.argmax(diff), diff.shape)
    print(f"run dir: {run_dir}")
    print(f"perturbed ({h0}, {w0}) radius {radius} magnitude {args.magnitude}; "
          f"difference peak at {tuple(int(p) for p in peak)}, "
          f"max |delta| {float(diff.max()):.4f}")
    return 0


def cmd_bench(cfg: RunConfig, args) -> int:
    models = _load_models(args.checkpoint)
    model = models[0]
    rng = np.random.default_rng(cfg.seed)
    fh, fw = args.feature_size, args.feature_size
    x = Tensor4(rng.standard_normal((1, model.channels, fh, fw)).astype(np.float32))
    out_h = out_w = cfg.input_size
    agg = cfg.score_agg()

    def run_once():
        result = flow_forward(model, x)
        return anomaly_map(loglik_map(result), out_h, out_w, agg)

    run_once()  # warm-up
    times = []
    for _ in range(args.reps):
        t0 = time.perf_counter()
        run_once()
        times.append((time.perf_counter() - t0) * 1000.0)
    mean = float(np.mean(times))
    std = float(np.std(times))
    params = model.num_params()
    expected = count_params(model.channels, model.depth, model.schedule, model.hidden_ratio)
    run_dir = make_run_dir(cfg)
    with open(run_dir / "bench.json", "w") as fh_out:
        json.dump({
            "reps": args.reps, "mean_ms": mean, "std_ms": std,
            "params": params, "params_closed_form": expected,
            "feature_size": [fh, fw], "output_size": [out_h, out_w],
            "channels": model.channels, "depth": model.depth,
            "schedule": model.schedule,
        }, fh_out, indent=2, sort_keys=True)
        fh_out.write("\n")
    print(f"run dir: {run_dir}")
    print(f"forward+scoring over {args.reps} reps: {mean:.2f} ms mean, {std:.2f} ms std")
    print(f"flow parameters: {params} (closed form {expected})")
    return 0


# -- argument parsing -----------------------------------------------------------

def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="flow2d",
        description="2D normalizing flows for unsupervised anomaly localization",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    def add_common(p):
        p.add_argument("--config", help="key-value config file")
        p.add_argument("--dataset", help="dataset root directory")
        p.add_argument("--out", help="output directory for run artifacts")
        p.add_argument("--seed", type=int, help="global seed")
        p.add_argument("--steps", "-K", type=int, help="number of coupling steps")
        p.add_argument("--schedule", choices=["3-1", "3-3"], help="kernel schedule")
        p.add_argument("--hidden-ratio", dest="hidden_ratio", type=float,
                       help="subnet hidden channel ratio")
        p.add_argument("--clamp", type=float, help="soft log-scale clamp")
        p.add_argument("--epochs", type=int)
        p.add_argument("--batch-size", dest="batch_size", type=int)
        p.add_argument("--lr", type=float)
        p.add_argument("--weight-decay", dest="weight_decay", type=float)
        p.add_argument("--augment", choices=["on", "off"])
        p.add_argument("--score-agg", dest="score_agg", choices=["max", "topk"])
        p.add_argument("--threads", type=int)
        p.add_argument("--mode", choices=["auto", "features", "toy"])
        p.add_argument("--input-size", dest="input_size", type=int)
        p.add_argument("--max-steps", dest="max_steps", type=int)

    p_train = sub.add_parser("train", help="train one flow per feature scale")
    add_common(p_train)

    p_score = sub.add_parser("score", help="score images with a trained checkpoint")
    add_common(p_score)
    p_score.add_argument("--checkpoint", required=True,
                         help="checkpoint file or run directory")
    p_score.add_argument("--split", default="test", help="dataset split to score")

    p_eval = sub.add_parser("eval", help="AUROC report from a score run")
    add_common(p_eval)
    p_eval.add_argument("--scores", required=True,
                        help="score run directory or scores.jsonl path")

    p_gen = sub.add_parser("generate", help="invert a perturbed latent tensor")
    add_common(p_gen)
    p_gen.add_argument("--checkpoint", required=True)
    p_gen.add_argument("--input", required=True, help="feature tensor (.fft)")
    p_gen.add_argument("--at", required=True, help="latent coordinate 'row,col'")
    p_gen.add_argument("--magnitude", type=float, default=1.0)
    p_gen.add_argument("--radius", type=int, default=0)
    p_gen.add_argument("--scale", type=int, default=0,
                       help="which scale's checkpoint to use (run dirs)")

    p_bench = sub.add_parser("bench", help="time forward + scoring")
    add_common(p_bench)
    p_bench.add_argument("--checkpoint", required=True)
    p_bench.add_argument("--reps", type=int, default=20)
    p_bench.add_argument("--feature-size", dest="feature_size", type=int, default=32)

    return parser


COMMANDS = {
    "train": cmd_train,
    "score": cmd_score,
    "eval": cmd_eval,
    "generate": cmd_generate,
    "bench": cmd_bench,
}


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        cfg = resolve_config(args)
        return COMMANDS[args.command](cfg, args)
    except ConfigError as e:
        print(f"config error: {e}", file=sys.stderr)
        return 2
    except (DataError, FormatError) as e:
        print(f"data error: {e}", file=sys.stderr)
        return 3
    except NumericalError as e:
        print(f"numerical failure: {e}", file=sys.stderr)
        return 4


if __name__ == "__main__":
    sys.exit(main())
