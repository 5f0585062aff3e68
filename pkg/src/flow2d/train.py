"""Maximum-likelihood training of coupling flows on normal-only features.

Adam with L2 decay folded into the update: the moments are built from the
raw gradient and the update is p <- p - lr * (m_hat / (sqrt(v_hat) + eps)
+ weight_decay * p), so with zero gradient a parameter shrinks by exactly
(1 - lr * decay) per step. couple_decay=True instead adds decay * p to the
gradient before the moment updates (classic framework behavior).

Geometric augmentation on feature tensors is restricted to flips and 90-degree
rotations, which are exact (no resampling) and commute with the extractor's
pooling grid; image-space augmentation belongs to the extraction side.
"""

from __future__ import annotations

import json
import struct
import time
from dataclasses import dataclass, field, replace
from pathlib import Path

import numpy as np

from .autodiff import Param, Tape
from .errors import FormatError, NumericalError
from .flow import CouplingStep, FlowModel, flow_forward_vars, nll_loss_vars
from .tensors import Tensor4


@dataclass(frozen=True)
class AugmentConfig:
    enabled: bool = True
    p_hflip: float = 0.5
    p_vflip: float = 0.3
    p_rot: float = 0.7

    def __post_init__(self):
        for name in ("p_hflip", "p_vflip", "p_rot"):
            p = getattr(self, name)
            if not 0.0 <= p <= 1.0:
                raise ValueError(f"{name} must be in [0, 1], got {p}")


@dataclass(frozen=True)
class TrainConfig:
    lr: float = 1e-3
    weight_decay: float = 1e-5
    epochs: int = 500
    batch_size: int = 32
    seed: int = 0
    max_steps: int | None = None
    augment: AugmentConfig = field(default_factory=AugmentConfig)
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8
    couple_decay: bool = False
    # flow passthroughs, consumed by the CLI when it builds the model
    flow_steps: int = 8
    schedule: str = "3-3"
    hidden_ratio: float = 1.0
    clamp: float = 2.0

    def __post_init__(self):
        if self.lr <= 0:
            raise ValueError(f"lr must be positive, got {self.lr}")
        if self.batch_size < 1:
            raise ValueError(f"batch_size must be >= 1, got {self.batch_size}")


class AdamState:
    """First/second moment estimates per parameter, keyed by param name."""

    def __init__(self, params: list[Param]):
        self.t = 0
        self.m = {p.name: np.zeros_like(p.array) for p in params}
        self.v = {p.name: np.zeros_like(p.array) for p in params}


def adam_step(params: list[Param], grads: list[np.ndarray], state: AdamState,
              cfg: TrainConfig) -> None:
    state.t += 1
    b1, b2 = cfg.beta1, cfg.beta2
    bc1 = 1.0 - b1 ** state.t
    bc2 = 1.0 - b2 ** state.t
    for p, g in zip(params, grads):
        arr = p.array
        if g.shape != arr.shape:
            raise ValueError(f"gradient shape {g.shape} != param shape {arr.shape} ({p.name})")
        if cfg.couple_decay and cfg.weight_decay:
            g = g + cfg.weight_decay * arr
        m, v = state.m[p.name], state.v[p.name]
        m *= b1
        m += (1 - b1) * g
        v *= b2
        v += (1 - b2) * (g * g)
        update = (m / bc1) / (np.sqrt(v / bc2) + cfg.eps)
        if not cfg.couple_decay and cfg.weight_decay:
            update = update + cfg.weight_decay * arr
        arr -= (cfg.lr * update).astype(arr.dtype)


def augment(x: Tensor4, cfg: AugmentConfig, rng: np.random.Generator) -> Tensor4:
    """Random hflip / vflip / 90-degree rotation, drawn in that fixed order."""
    if not cfg.enabled:
        return x
    data = x.data
    if rng.random() < cfg.p_hflip:
        data = data[:, :, :, ::-1]
    if rng.random() < cfg.p_vflip:
        data = data[:, :, ::-1, :]
    if rng.random() < cfg.p_rot:
        quarters = int(rng.integers(1, 4))
        if data.shape[2] != data.shape[3] and quarters != 2:
            quarters = 2  # only 180-degree turns keep non-square shapes intact
        data = np.rot90(data, k=quarters, axes=(2, 3))
    return Tensor4(np.ascontiguousarray(data))


@dataclass
class TrainState:
    """Everything needed to resume training bit-exactly."""

    epoch: int
    rng_state: dict
    history: list[float]
    opt: AdamState


def _as_array(dataset) -> np.ndarray:
    if isinstance(dataset, Tensor4):
        return dataset.data
    if isinstance(dataset, np.ndarray):
        return dataset
    arrays = [t.data if isinstance(t, Tensor4) else np.asarray(t) for t in dataset]
    if not arrays:
        raise ValueError("training dataset is empty")
    return np.concatenate(arrays, axis=0)


def fit(model: FlowModel, dataset, cfg: TrainConfig,
        state: TrainState | None = None,
        log_path: Path | str | None = None):
    """Train one model on one scale's features; returns (model, history, state).

    Deterministic under a fixed seed and single thread. Resuming from a
    checkpointed state reproduces the uninterrupted run bit-exactly.
    """
    data = _as_array(dataset).astype(model.dtype, copy=False)
    if data.shape[0] == 0:
        raise ValueError("training dataset is empty")
    if data.shape[1] != model.channels:
        raise ValueError(f"dataset has {data.shape[1]} channels, model expects {model.channels}")

    params = model.parameters()
    if state is None:
        rng = np.random.Generator(np.random.PCG64(np.random.SeedSequence((cfg.seed, 0))))
        state = TrainState(epoch=0, rng_state=rng.bit_generator.state,
                           history=[], opt=AdamState(params))
    rng = np.random.Generator(np.random.PCG64())
    rng.bit_generator.state = state.rng_state

    log_fh = open(log_path, "a") if log_path is not None else None
    steps_done = state.opt.t
    try:
        for epoch in range(state.epoch, cfg.epochs):
            order = rng.permutation(data.shape[0])
            losses = []
            for bi, start in enumerate(range(0, data.shape[0], cfg.batch_size)):
                batch = data[order[start : start + cfg.batch_size]]
                if cfg.augment.enabled:
                    batch = np.stack(
                        [augment(Tensor4(s[None]), cfg.augment, rng).data[0] for s in batch]
                    )
                tape = Tape()
                z, logdet = flow_forward_vars(model, tape, tape.input(batch))
                loss = nll_loss_vars(tape, z, logdet)
                loss_val = float(loss.value)
                if not np.isfinite(loss_val):
                    raise NumericalError(
                        f"non-finite loss at epoch {epoch}, batch {bi}: {loss_val}"
                    )
                for p in params:
                    p.zero_grad()
                tape.backward(loss)
                adam_step(params, [p.grad for p in params], state.opt, cfg)
                losses.append(loss_val)
                steps_done += 1
                if cfg.max_steps is not None and steps_done >= cfg.max_steps:
                    break
            state.history.append(float(np.mean(losses)))
            state.epoch = epoch + 1
            state.rng_state = rng.bit_generator.state
            if log_fh is not None:
                log_fh.write(json.dumps({
                    "epoch": epoch,
                    "loss": state.history[-1],
                    "wall_time": time.time(),
                }) + "\n")
                log_fh.flush()
            if cfg.max_steps is not None and steps_done >= cfg.max_steps:
                break
    finally:
        if log_fh is not None:
            log_fh.close()
    return model, list(state.history), state


def fit_scales(models: list[FlowModel], datasets: list, cfg: TrainConfig,
               log_paths: list | None = None, scale_ids: list[int] | None = None):
    """Train one independent model per scale.

    Each scale gets its own seed stream derived from (cfg.seed, scale id),
    so results do not depend on the order scales are trained in.
    """
    if len(models) != len(datasets):
        raise ValueError(f"{len(models)} models but {len(datasets)} datasets")
    if scale_ids is None:
        scale_ids = list(range(len(models)))
    histories = []
    for i, (model, dataset) in enumerate(zip(models, datasets)):
        scale_cfg = replace(cfg, seed=cfg.seed * 1000 + scale_ids[i])
        log = log_paths[i] if log_paths else None
        _, history, _ = fit(model, dataset, scale_cfg, log_path=log)
        histories.append(history)
    return models, histories


# -- checkpoints ----------------------------------------------------------------

CKPT_MAGIC = b"FFCP"
CKPT_VERSION = 1
_CODE_FOR_DTYPE = {np.dtype(np.float32): 1, np.dtype(np.float64): 2}
_DTYPE_FOR_CODE = {1: np.dtype("<f4"), 2: np.dtype("<f8")}


def _write_record(fh, name: str, arr: np.ndarray):
    nb = name.encode("utf-8")
    fh.write(struct.pack("<I", len(nb)))
    fh.write(nb)
    fh.write(struct.pack("<II", _CODE_FOR_DTYPE[arr.dtype], arr.ndim))
    fh.write(struct.pack(f"<{arr.ndim}Q", *arr.shape))
    fh.write(np.ascontiguousarray(arr, dtype=arr.dtype.newbyteorder("<")).tobytes())


def _read_record(blob: bytes, pos: int):
    def need(count, what):
        nonlocal pos
        if pos + count > len(blob):
            raise FormatError(f"truncated checkpoint: expected {what}", offset=pos)
        out = blob[pos : pos + count]
        pos += count
        return out

    (name_len,) = struct.unpack("<I", need(4, "record name length"))
    name = need(name_len, "record name").decode("utf-8")
    code, ndim = struct.unpack("<II", need(8, "record header"))
    if code not in _DTYPE_FOR_CODE:
        raise FormatError(f"unknown dtype code {code} in checkpoint record {name}", offset=pos)
    shape = struct.unpack(f"<{ndim}Q", need(8 * ndim, "record dims"))
    dtype = _DTYPE_FOR_CODE[code]
    count = int(np.prod(shape)) if ndim else 1
    data = np.frombuffer(need(count * dtype.itemsize, "record payload"), dtype=dtype)
    return name, data.reshape(shape).astype(dtype.newbyteorder("=")), pos


def save_checkpoint(path, model: FlowModel, opt_state: AdamState | None = None,
                    train_state: TrainState | None = None) -> None:
    records: list[tuple[str, np.ndarray]] = []
    for p in model.parameters():
        records.append((f"param/{p.name}", p.array))
    if opt_state is not None:
        for name, arr in opt_state.m.items():
            records.append((f"adam.m/{name}", arr))
        for name, arr in opt_state.v.items():
            records.append((f"adam.v/{name}", arr))
    manifest = {
        "version": CKPT_VERSION,
        "model": {
            "channels": model.channels,
            "depth": model.depth,
            "schedule": model.schedule,
            "kernel_sizes": model.kernel_sizes(),
            "hidden_ratio": model.hidden_ratio,
            "clamp": model.clamp,
            "seed": model.seed,
            "dtype": "float64" if model.dtype == np.float64 else "float32",
            "perms": [s.perm.tolist() for s in model.steps],
        },
        "optimizer": {"t": opt_state.t} if opt_state is not None else None,
        "train_state": (
            {"epoch": train_state.epoch, "rng_state": train_state.rng_state,
             "history": train_state.history}
            if train_state is not None else None
        ),
        "records": [name for name, _ in records],
    }
    blob = json.dumps(manifest, sort_keys=True).encode("utf-8")
    with open(path, "wb") as fh:
        fh.write(CKPT_MAGIC)
        fh.write(struct.pack("<II", CKPT_VERSION, len(blob)))
        fh.write(blob)
        fh.write(struct.pack("<I", len(records)))
        for name, arr in records:
            _write_record(fh, name, arr)


def load_checkpoint(path):
    """Returns (model, opt_state | None, train_state | None)."""
    blob = Path(path).read_bytes()
    if blob[:4] != CKPT_MAGIC:
        raise FormatError(f"{path} is not a checkpoint (bad magic {blob[:4]!r})", offset=0)
    version, manifest_len = struct.unpack("<II", blob[4:12])
    if version != CKPT_VERSION:
        raise FormatError(f"{path}: unsupported checkpoint version {version}", offset=4)
    manifest = json.loads(blob[12 : 12 + manifest_len].decode("utf-8"))
    pos = 12 + manifest_len
    (n_records,) = struct.unpack("<I", blob[pos : pos + 4])
    pos += 4
    arrays = {}
    for _ in range(n_records):
        name, arr, pos = _read_record(blob, pos)
        arrays[name] = arr

    m = manifest["model"]
    dtype = np.float64 if m["dtype"] == "float64" else np.float32
    steps = []
    for i, (k, perm) in enumerate(zip(m["kernel_sizes"], m["perms"])):
        def param(suffix):
            name = f"step{i}.{suffix}"
            arr = arrays[f"param/{name}"].astype(dtype)
            value = Tensor4(arr) if arr.ndim == 4 else arr
            return Param(value, name)

        steps.append(CouplingStep(np.asarray(perm), k, m["clamp"],
                                  param("conv1.weight"), param("conv1.bias"),
                                  param("conv2.weight"), param("conv2.bias")))
    model = FlowModel(m["channels"], steps, m["schedule"], m["hidden_ratio"],
                      m["clamp"], m["seed"])

    opt_state = None
    if manifest.get("optimizer") is not None:
        opt_state = AdamState(model.parameters())
        opt_state.t = manifest["optimizer"]["t"]
        for p in model.parameters():
            opt_state.m[p.name] = arrays[f"adam.m/{p.name}"].astype(dtype)
            opt_state.v[p.name] = arrays[f"adam.v/{p.name}"].astype(dtype)

    train_state = None
    if manifest.get("train_state") is not None:
        ts = manifest["train_state"]
        rng_state = ts["rng_state"]
        if "state" in rng_state and isinstance(rng_state["state"], dict):
            rng_state["state"] = {k: int(v) for k, v in rng_state["state"].items()}
        train_state = TrainState(epoch=ts["epoch"], rng_state=rng_state,
                                 history=list(ts["history"]), opt=opt_state)
    return model, opt_state, train_state
