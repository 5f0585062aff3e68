"""Dense rank-4 tensors in (batch, channel, height, width) layout and the
numerical kernels the coupling flow is built from: 2D convolution, channel
split/concat/permute, bilinear resize and a small elementwise suite.

All operations are pure: inputs are never mutated and every call allocates
its result. float32 is the production dtype; float64 exists so that
finite-difference oracles are not drowned in rounding noise. Convolution
accumulates in the tensor's own dtype.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import ShapeError

DTYPES = (np.float32, np.float64)
_DTYPE_NAMES = {np.dtype(np.float32): "float32", np.dtype(np.float64): "float64"}


class Tensor4:
    """Immutable-by-convention dense (n, c, h, w) array, row-major, float32/64."""

    __slots__ = ("data",)

    def __init__(self, data, dtype=None):
        arr = np.asarray(data, dtype=dtype)
        if arr.dtype not in _DTYPE_NAMES:
            arr = arr.astype(np.float32)
        if arr.ndim != 4:
            raise ShapeError(f"Tensor4 requires a rank-4 array, got shape {arr.shape}")
        if min(arr.shape) < 1:
            raise ShapeError(f"Tensor4 dimensions must all be >= 1, got {arr.shape}")
        self.data = np.ascontiguousarray(arr)

    @classmethod
    def zeros(cls, n, c, h, w, dtype=np.float32):
        return cls(np.zeros((n, c, h, w), dtype=dtype))

    @classmethod
    def full(cls, n, c, h, w, value, dtype=np.float32):
        return cls(np.full((n, c, h, w), value, dtype=dtype))

    @property
    def n(self):
        return self.data.shape[0]

    @property
    def c(self):
        return self.data.shape[1]

    @property
    def h(self):
        return self.data.shape[2]

    @property
    def w(self):
        return self.data.shape[3]

    @property
    def shape(self):
        return self.data.shape

    @property
    def dtype(self):
        return self.data.dtype

    @property
    def size(self):
        return self.data.size

    def copy(self):
        return Tensor4(self.data.copy())

    def astype(self, dtype):
        return Tensor4(self.data.astype(dtype))

    def is_finite(self):
        return bool(np.isfinite(self.data).all())

    def __repr__(self):
        return f"Tensor4(shape={self.data.shape}, dtype={_DTYPE_NAMES[self.data.dtype]})"


@dataclass(frozen=True)
class ConvKernel:
    """Square convolution kernel, k in {1, 3}.

    3x3 kernels are applied with zero padding 1 and stride 1, 1x1 with no
    padding, so output spatial size always equals input spatial size.
    """

    weights: Tensor4  # (c_out, c_in, k, k)
    bias: np.ndarray  # (c_out,)

    def __post_init__(self):
        co, ci, kh, kw = self.weights.shape
        if kh != kw or kh not in (1, 3):
            raise ShapeError(f"kernel must be square with k in {{1, 3}}, got {kh}x{kw}")
        b = np.asarray(self.bias)
        if b.shape != (co,):
            raise ShapeError(f"bias shape {b.shape} does not match c_out={co}")
        if b.dtype != self.weights.dtype:
            object.__setattr__(self, "bias", b.astype(self.weights.dtype))

    @property
    def c_out(self):
        return self.weights.shape[0]

    @property
    def c_in(self):
        return self.weights.shape[1]

    @property
    def k(self):
        return self.weights.shape[2]

    @property
    def padding(self):
        return self.k // 2


def _require_same_shape(a: Tensor4, b: Tensor4, op: str):
    if a.shape != b.shape:
        raise ShapeError(f"{op}: shape mismatch {a.shape} vs {b.shape}")
    if a.dtype != b.dtype:
        raise ShapeError(f"{op}: dtype mismatch {a.dtype} vs {b.dtype}")


# -- convolution ------------------------------------------------------------

def _im2col(x: np.ndarray, k: int) -> np.ndarray:
    """Unfold (n, c, h, w) into (n, c*k*k, h*w) patch columns, zero-padded."""
    pad = k // 2
    if pad:
        x = np.pad(x, ((0, 0), (0, 0), (pad, pad), (pad, pad)))
    n, c, hp, wp = x.shape
    oh, ow = hp - k + 1, wp - k + 1
    sn, sc, sh, sw = x.strides
    win = np.lib.stride_tricks.as_strided(
        x, (n, c, k, k, oh, ow), (sn, sc, sh, sw, sh, sw), writeable=False
    )
    return win.reshape(n, c * k * k, oh * ow)


def _col2im(dcols: np.ndarray, x_shape, k: int) -> np.ndarray:
    """Adjoint of _im2col: fold (n, c*k*k, h*w) columns back, summing overlaps."""
    n, c, h, w = x_shape
    pad = k // 2
    acc = np.zeros((n, c, h + 2 * pad, w + 2 * pad), dtype=dcols.dtype)
    cols6 = dcols.reshape(n, c, k, k, h, w)
    for i in range(k):
        for j in range(k):
            acc[:, :, i : i + h, j : j + w] += cols6[:, :, i, j]
    if pad:
        return acc[:, :, pad : pad + h, pad : pad + w].copy()
    return acc


def _conv2d_raw(x: np.ndarray, w: np.ndarray, b: np.ndarray, cols: np.ndarray | None = None):
    co, ci, k, _ = w.shape
    n, c, h, wd = x.shape
    if cols is None:
        cols = _im2col(x, k)
    w2 = w.reshape(co, ci * k * k)
    out = np.matmul(w2[None, :, :], cols)
    out += b[None, :, None]
    return out.reshape(n, co, h, wd)


def conv2d(x: Tensor4, kernel: ConvKernel) -> Tensor4:
    """Cross-correlation with bias; spatial size preserved (see ConvKernel)."""
    if x.c != kernel.c_in:
        raise ShapeError(
            f"conv2d: input has {x.c} channels (shape {x.shape}) but kernel "
            f"expects {kernel.c_in} (shape {kernel.weights.shape})"
        )
    if x.dtype != kernel.weights.dtype:
        raise ShapeError(f"conv2d: dtype mismatch {x.dtype} vs {kernel.weights.dtype}")
    return Tensor4(_conv2d_raw(x.data, kernel.weights.data, kernel.bias))


# -- channel plumbing -------------------------------------------------------

def split_channels(x: Tensor4) -> tuple[Tensor4, Tensor4]:
    if x.c % 2 != 0:
        raise ShapeError(f"split_channels: channel count must be even, got {x.c}")
    half = x.c // 2
    return Tensor4(x.data[:, :half].copy()), Tensor4(x.data[:, half:].copy())


def concat_channels(a: Tensor4, b: Tensor4) -> Tensor4:
    if a.n != b.n or a.h != b.h or a.w != b.w:
        raise ShapeError(f"concat_channels: shape mismatch {a.shape} vs {b.shape}")
    if a.dtype != b.dtype:
        raise ShapeError(f"concat_channels: dtype mismatch {a.dtype} vs {b.dtype}")
    return Tensor4(np.concatenate([a.data, b.data], axis=1))


def check_permutation(perm, c: int) -> np.ndarray:
    p = np.asarray(perm, dtype=np.int64)
    if p.shape != (c,) or not np.array_equal(np.sort(p), np.arange(c)):
        raise ValueError(f"perm must be a bijection on [0, {c}), got {list(perm)}")
    return p


def invert_permutation(perm) -> np.ndarray:
    p = np.asarray(perm, dtype=np.int64)
    inv = np.empty_like(p)
    inv[p] = np.arange(p.size)
    return inv


def permute_channels(x: Tensor4, perm) -> Tensor4:
    """Output channel i is input channel perm[i]."""
    p = check_permutation(perm, x.c)
    return Tensor4(x.data[:, p].copy())


# -- resize -----------------------------------------------------------------

def _axis_coords(dst: int, src: int):
    # half-pixel centers: src coord = (dst + 0.5) * (src/dst) - 0.5, clamped
    coords = (np.arange(dst, dtype=np.float64) + 0.5) * (src / dst) - 0.5
    np.clip(coords, 0.0, src - 1.0, out=coords)
    lo = np.floor(coords).astype(np.int64)
    hi = np.minimum(lo + 1, src - 1)
    frac = coords - lo
    return lo, hi, frac


def _bilinear_raw(x: np.ndarray, out_h: int, out_w: int) -> np.ndarray:
    ylo, yhi, fy = _axis_coords(out_h, x.shape[2])
    xlo, xhi, fx = _axis_coords(out_w, x.shape[3])
    fy = fy[None, None, :, None].astype(x.dtype)
    fx = fx[None, None, None, :].astype(x.dtype)
    top = x[:, :, ylo, :]
    # formulated as a + f*(b - a) so constant fields and integer coords are exact
    rows = top + fy * (x[:, :, yhi, :] - top)
    left = rows[:, :, :, xlo]
    return left + fx * (rows[:, :, :, xhi] - left)


def bilinear_resize(x: Tensor4, out_h: int, out_w: int) -> Tensor4:
    if out_h < 1 or out_w < 1:
        raise ShapeError(f"bilinear_resize: target size must be >= 1, got ({out_h}, {out_w})")
    return Tensor4(_bilinear_raw(x.data, out_h, out_w))


# -- elementwise suite ------------------------------------------------------

def add(a: Tensor4, b: Tensor4) -> Tensor4:
    _require_same_shape(a, b, "add")
    return Tensor4(a.data + b.data)


def sub(a: Tensor4, b: Tensor4) -> Tensor4:
    _require_same_shape(a, b, "sub")
    return Tensor4(a.data - b.data)


def mul(a: Tensor4, b: Tensor4) -> Tensor4:
    _require_same_shape(a, b, "mul")
    return Tensor4(a.data * b.data)


def exp(x: Tensor4) -> Tensor4:
    return Tensor4(np.exp(x.data))


def tanh(x: Tensor4) -> Tensor4:
    return Tensor4(np.tanh(x.data))


def relu(x: Tensor4) -> Tensor4:
    return Tensor4(np.maximum(x.data, 0))


def square(x: Tensor4) -> Tensor4:
    return Tensor4(x.data * x.data)


def scale(x: Tensor4, s: float) -> Tensor4:
    return Tensor4(x.data * x.dtype.type(s))


def sum_all(x: Tensor4) -> float:
    return float(x.data.sum())


def mean_all(x: Tensor4) -> float:
    return float(x.data.mean())


def sum_over_channels(x: Tensor4) -> Tensor4:
    return Tensor4(x.data.sum(axis=1, keepdims=True))
