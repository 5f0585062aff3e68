"""Invertible 2D coupling flow over feature maps.

A model is a chain of K coupling steps. Each step permutes channels, leaves
the first half untouched, and applies a per-location affine transform to the
second half whose scale and shift come from a two-layer fully convolutional
subnet of the first half. The Jacobian of such a step is triangular, so the
log-determinant is an exact per-location sum of the (soft-clamped) log
scales - tracked as a spatial map because scoring needs spatially resolved
likelihoods.

Kernel schedules: "3-1" alternates 3x3 and 1x1 subnets starting with 3x3;
"3-3" uses 3x3 everywhere.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from . import tensors
from .autodiff import Param, Tape, Var
from .errors import ShapeError
from .tensors import ConvKernel, Tensor4

LOG_2PI = math.log(2.0 * math.pi)

SCHEDULES = ("3-1", "3-3")


@dataclass(frozen=True)
class SubnetConfig:
    """Two conv layers (c/2 -> hidden -> c) with a rectifier between."""

    kernel_size: int
    hidden_ratio: float

    def __post_init__(self):
        if self.kernel_size not in (1, 3):
            raise ValueError(f"kernel_size must be 1 or 3, got {self.kernel_size}")
        if self.hidden_ratio <= 0:
            raise ValueError(f"hidden_ratio must be positive, got {self.hidden_ratio}")

    def hidden_channels(self, channels: int) -> int:
        return max(1, int(round(self.hidden_ratio * channels)))


class CouplingStep:
    """One permutation + subnet + clamped affine transform.

    The subnet maps the passive half (c/2 channels) to c channels that are
    split into the raw log-scale and the shift. The effective scale is
    s = exp(clamp * tanh(s_raw / clamp)), so it always lies in
    [e^-clamp, e^clamp] and the step is invertible by construction.
    """

    __slots__ = ("perm", "inv_perm", "kernel_size", "clamp",
                 "conv1_w", "conv1_b", "conv2_w", "conv2_b")

    def __init__(self, perm, kernel_size, clamp, conv1_w, conv1_b, conv2_w, conv2_b):
        self.perm = np.asarray(perm, dtype=np.int64)
        self.inv_perm = tensors.invert_permutation(self.perm)
        self.kernel_size = int(kernel_size)
        self.clamp = float(clamp)
        self.conv1_w = conv1_w
        self.conv1_b = conv1_b
        self.conv2_w = conv2_w
        self.conv2_b = conv2_b

    @property
    def channels(self) -> int:
        return self.perm.size

    def params(self) -> list[Param]:
        return [self.conv1_w, self.conv1_b, self.conv2_w, self.conv2_b]

    def kernels(self) -> tuple[ConvKernel, ConvKernel]:
        return (
            ConvKernel(self.conv1_w.value, self.conv1_b.value),
            ConvKernel(self.conv2_w.value, self.conv2_b.value),
        )


class FlowModel:
    """K coupling steps over a fixed channel count."""

    def __init__(self, channels, steps, schedule, hidden_ratio, clamp, seed):
        self.channels = channels
        self.steps = steps
        self.schedule = schedule
        self.hidden_ratio = hidden_ratio
        self.clamp = clamp
        self.seed = seed

    @property
    def depth(self) -> int:
        return len(self.steps)

    @property
    def dtype(self):
        return self.steps[0].conv1_w.array.dtype

    def kernel_sizes(self) -> list[int]:
        return [s.kernel_size for s in self.steps]

    def parameters(self) -> list[Param]:
        return [p for step in self.steps for p in step.params()]

    def num_params(self) -> int:
        return sum(p.array.size for p in self.parameters())

    def clone(self) -> "FlowModel":
        steps = []
        for s in self.steps:
            steps.append(CouplingStep(
                s.perm.copy(), s.kernel_size, s.clamp,
                *[Param(_copy_value(p.value), p.name) for p in s.params()],
            ))
        return FlowModel(self.channels, steps, self.schedule, self.hidden_ratio,
                         self.clamp, self.seed)


def _copy_value(v):
    return v.copy() if isinstance(v, Tensor4) else v.copy()


@dataclass
class LatentResult:
    """Latent tensor plus the accumulated per-location log|det| map (c=1)."""

    z: Tensor4
    logdet_map: Tensor4


def schedule_kernel_sizes(schedule: str, depth: int) -> list[int]:
    if schedule == "3-1":
        return [3 if i % 2 == 0 else 1 for i in range(depth)]
    if schedule == "3-3":
        return [3] * depth
    raise ValueError(f"unknown kernel schedule {schedule!r}, expected one of {SCHEDULES}")


def _draw_perms(rng, channels: int, depth: int) -> list[np.ndarray]:
    # c=2 degenerates to swapping halves every step. Otherwise the first
    # depth-1 permutations are random and the last is constructed so every
    # channel lineage lands in the transformed half at least once: after one
    # or more steps at most c/2 lineages are still untouched, which always
    # fit into the final step's b-half. (depth 1 necessarily leaves half the
    # channels untransformed.)
    if channels == 2:
        return [np.array([1, 0], dtype=np.int64)] * depth
    if depth == 1:
        return [rng.permutation(channels).astype(np.int64)]
    half = channels // 2
    perms = [rng.permutation(channels).astype(np.int64) for _ in range(depth - 1)]
    lineage = np.arange(channels, dtype=np.int64)
    transformed = np.zeros(channels, dtype=bool)
    for p in perms:
        lineage = lineage[p]
        transformed[lineage[half:]] = True
    untouched = np.flatnonzero(~transformed[lineage])  # positions, not lineages
    touched = rng.permutation(np.flatnonzero(transformed[lineage]))
    extra = half - untouched.size
    b_side = np.concatenate([untouched, touched[:extra]])
    a_side = touched[extra:]
    final = np.concatenate([rng.permutation(a_side), rng.permutation(b_side)])
    perms.append(final.astype(np.int64))
    return perms


def init_flow(channels: int, depth: int, schedule: str = "3-3",
              hidden_ratio: float = 1.0, clamp: float = 2.0, seed: int = 0,
              dtype=np.float32) -> FlowModel:
    """Deterministically seeded model that starts as the identity map.

    The final conv of every subnet is zero-initialized so s = 1 and b = 0
    everywhere; earlier layers use a uniform fan-in scheme.
    """
    if channels < 2 or channels % 2 != 0:
        raise ValueError(f"channels must be even and >= 2, got {channels}")
    if depth < 1:
        raise ValueError(f"depth must be >= 1, got {depth}")
    if clamp <= 0:
        raise ValueError(f"clamp must be positive, got {clamp}")
    sizes = schedule_kernel_sizes(schedule, depth)
    rng = np.random.Generator(np.random.PCG64(np.random.SeedSequence(seed)))
    perms = _draw_perms(rng, channels, depth)
    half = channels // 2
    steps = []
    for i, (k, perm) in enumerate(zip(sizes, perms)):
        hidden = SubnetConfig(k, hidden_ratio).hidden_channels(channels)
        bound = 1.0 / math.sqrt(half * k * k)
        w1 = rng.uniform(-bound, bound, size=(hidden, half, k, k)).astype(dtype)
        b1 = rng.uniform(-bound, bound, size=(hidden,)).astype(dtype)
        steps.append(CouplingStep(
            perm, k, clamp,
            Param(Tensor4(w1), f"step{i}.conv1.weight"),
            Param(b1, f"step{i}.conv1.bias"),
            Param(Tensor4(np.zeros((channels, hidden, k, k), dtype=dtype)), f"step{i}.conv2.weight"),
            Param(np.zeros((channels,), dtype=dtype), f"step{i}.conv2.bias"),
        ))
    return FlowModel(channels, steps, schedule, hidden_ratio, clamp, seed)


# -- forward (single implementation, taped or not) ---------------------------

def coupling_forward_vars(step: CouplingStep, tape: Tape, y: Var) -> tuple[Var, Var]:
    alpha = step.clamp
    yp = tape.permute_channels(y, step.perm)
    ya, yb = tape.split_channels(yp)
    hidden = tape.relu(tape.conv2d(ya, tape.watch(step.conv1_w), tape.watch(step.conv1_b)))
    net = tape.conv2d(hidden, tape.watch(step.conv2_w), tape.watch(step.conv2_b))
    s_raw, shift = tape.split_channels(net)
    log_s = tape.scale(tape.tanh(tape.scale(s_raw, 1.0 / alpha)), alpha)
    yb2 = tape.add(tape.mul(tape.exp(log_s), yb), shift)
    out = tape.concat_channels(ya, yb2)
    return out, tape.sum_over_channels(log_s)


def flow_forward_vars(model: FlowModel, tape: Tape, x: Var) -> tuple[Var, Var]:
    if x.shape[1] != model.channels:
        raise ShapeError(f"flow expects {model.channels} channels, got input shape {x.shape}")
    z, logdet = x, None
    for step in model.steps:
        z, contrib = coupling_forward_vars(step, tape, z)
        logdet = contrib if logdet is None else tape.add(logdet, contrib)
    return z, logdet


def coupling_forward(step: CouplingStep, y: Tensor4) -> tuple[Tensor4, Tensor4]:
    """Transform y and return (y', per-location logdet contribution)."""
    tape = Tape(recording=False)
    out, logdet = coupling_forward_vars(step, tape, tape.input(y))
    return Tensor4(out.value), Tensor4(logdet.value)


def flow_forward(model: FlowModel, x: Tensor4) -> LatentResult:
    tape = Tape(recording=False)
    z, logdet = flow_forward_vars(model, tape, tape.input(x))
    return LatentResult(Tensor4(z.value), Tensor4(logdet.value))


# -- inverse (inference only, never differentiated) --------------------------

def coupling_inverse(step: CouplingStep, y2: Tensor4) -> Tensor4:
    if y2.c != step.channels:
        raise ShapeError(f"coupling step expects {step.channels} channels, got {y2.c}")
    alpha = step.clamp
    ya, yb2 = tensors.split_channels(y2)
    k1, k2 = step.kernels()
    net = tensors.conv2d(tensors.relu(tensors.conv2d(ya, k1)), k2)
    s_raw, shift = tensors.split_channels(net)
    log_s = tensors.scale(tensors.tanh(tensors.scale(s_raw, 1.0 / alpha)), alpha)
    yb = tensors.mul(tensors.sub(yb2, shift), tensors.exp(tensors.scale(log_s, -1.0)))
    return tensors.permute_channels(tensors.concat_channels(ya, yb), step.inv_perm)


def flow_inverse(model: FlowModel, z: Tensor4) -> Tensor4:
    if z.c != model.channels:
        raise ShapeError(f"flow expects {model.channels} channels, got input shape {z.shape}")
    x = z
    for step in reversed(model.steps):
        x = coupling_inverse(step, x)
    return x


# -- likelihood ---------------------------------------------------------------

def nll_loss_vars(tape: Tape, z: Var, logdet: Var) -> Var:
    n, c, h, w = z.shape
    dims = c * h * w
    per_image = tape.sub(tape.scale(tape.sum_all(tape.square(z)), 0.5), tape.sum_all(logdet))
    return tape.add_scalar(tape.scale(per_image, 1.0 / n), 0.5 * dims * LOG_2PI)


def nll_loss(result: LatentResult) -> float:
    """Mean negative log-likelihood per image under a standard-normal base."""
    tape = Tape(recording=False)
    return float(nll_loss_vars(tape, tape.input(result.z), tape.input(result.logdet_map)).value)


def count_params(channels: int, depth: int, schedule: str, hidden_ratio: float) -> int:
    """Closed-form parameter count; mirrors what init_flow allocates."""
    half = channels // 2
    total = 0
    for k in schedule_kernel_sizes(schedule, depth):
        hidden = SubnetConfig(k, hidden_ratio).hidden_channels(channels)
        total += hidden * half * k * k + hidden            # first conv
        total += channels * hidden * k * k + channels      # final conv
    return total
