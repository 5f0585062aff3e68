"""Reverse-mode differentiation over the tensor kernel set.

A Tape records every differentiable operation in execution order together
with a backward closure; backward() walks the record in reverse, so the
replay order is automatically a valid reverse-topological order. Gradients
accumulate additively across fan-out. One tape supports exactly one
backward pass.

Values on the tape are raw numpy arrays: rank-4 feature maps, rank-1 bias
vectors, or 0-d scalars. Tensor4 wrapping happens at module boundaries.
The op set is deliberately closed and small - exactly what the coupling
flow's training loss needs. The inverse and scoring paths are never
differentiated.
"""

from __future__ import annotations

import numpy as np

from . import tensors
from .tensors import ShapeError


class Param:
    """A trainable leaf: value plus persistent gradient buffer and a stable name."""

    __slots__ = ("name", "value", "grad")

    def __init__(self, value, name: str):
        self.name = name
        self.value = value  # Tensor4 or 1-d numpy vector
        self.grad = np.zeros_like(self.array)

    @property
    def array(self) -> np.ndarray:
        return self.value.data if isinstance(self.value, tensors.Tensor4) else self.value

    def zero_grad(self):
        self.grad.fill(0)

    def __repr__(self):
        return f"Param({self.name}, shape={self.array.shape})"


class Var:
    """A value produced on (or fed into) a tape."""

    __slots__ = ("value", "grad", "_tape")

    def __init__(self, value: np.ndarray, tape):
        self.value = value
        self.grad = None
        self._tape = tape

    @property
    def shape(self):
        return self.value.shape


def _acc(var: Var, g):
    if var.grad is None:
        var.grad = np.zeros_like(var.value)
    var.grad += g


class Tape:
    """Ordered record of executed ops. recording=False computes values only."""

    def __init__(self, recording: bool = True):
        self.recording = recording
        self._nodes = []  # (backward_fn, outputs)
        self._consumed = False
        self._param_vars: dict[int, Var] = {}

    # -- leaves --------------------------------------------------------

    def input(self, value) -> Var:
        """Wrap an input tensor/array as a leaf; its gradient is tracked."""
        arr = value.data if isinstance(value, tensors.Tensor4) else np.asarray(value)
        return Var(arr, self)

    def watch(self, param: Param) -> Var:
        """Leaf var sharing the param's gradient buffer; memoized per tape."""
        var = self._param_vars.get(id(param))
        if var is None:
            var = Var(param.array, self)
            var.grad = param.grad
            self._param_vars[id(param)] = var
        return var

    def _out(self, value) -> Var:
        return Var(value, self)

    def _record(self, backward_fn, outputs):
        if self.recording:
            self._nodes.append((backward_fn, outputs))

    # -- ops -----------------------------------------------------------

    def conv2d(self, x: Var, w: Var, b: Var) -> Var:
        co, ci, k, _ = w.shape
        if x.shape[1] != ci:
            raise ShapeError(
                f"conv2d: input has {x.shape[1]} channels (shape {x.shape}) "
                f"but kernel expects {ci} (shape {w.shape})"
            )
        cols = tensors._im2col(x.value, k)
        out = self._out(tensors._conv2d_raw(x.value, w.value, b.value, cols=cols))
        w_val, x_shape = w.value, x.value.shape

        def backward():
            g = out.grad.reshape(out.grad.shape[0], co, -1)
            _acc(b, g.sum(axis=(0, 2)))
            w2 = w_val.reshape(co, -1)
            _acc(w, np.matmul(g, cols.transpose(0, 2, 1)).sum(axis=0).reshape(w_val.shape))
            dcols = np.matmul(w2.T[None, :, :], g)
            _acc(x, tensors._col2im(dcols, x_shape, k))

        self._record(backward, (out,))
        return out

    def add(self, a: Var, b: Var) -> Var:
        out = self._out(a.value + b.value)

        def backward():
            _acc(a, out.grad)
            _acc(b, out.grad)

        self._record(backward, (out,))
        return out

    def sub(self, a: Var, b: Var) -> Var:
        out = self._out(a.value - b.value)

        def backward():
            _acc(a, out.grad)
            _acc(b, -out.grad)

        self._record(backward, (out,))
        return out

    def mul(self, a: Var, b: Var) -> Var:
        out = self._out(a.value * b.value)
        av, bv = a.value, b.value

        def backward():
            _acc(a, out.grad * bv)
            _acc(b, out.grad * av)

        self._record(backward, (out,))
        return out

    def exp(self, x: Var) -> Var:
        out = self._out(np.exp(x.value))
        ov = out.value

        def backward():
            _acc(x, out.grad * ov)

        self._record(backward, (out,))
        return out

    def tanh(self, x: Var) -> Var:
        out = self._out(np.tanh(x.value))
        ov = out.value

        def backward():
            _acc(x, out.grad * (1 - ov * ov))

        self._record(backward, (out,))
        return out

    def relu(self, x: Var) -> Var:
        mask = x.value > 0
        out = self._out(np.where(mask, x.value, 0))

        def backward():
            _acc(x, out.grad * mask)

        self._record(backward, (out,))
        return out

    def square(self, x: Var) -> Var:
        out = self._out(x.value * x.value)
        xv = x.value

        def backward():
            _acc(x, out.grad * (2 * xv))

        self._record(backward, (out,))
        return out

    def scale(self, x: Var, s: float) -> Var:
        s = x.value.dtype.type(s)
        out = self._out(x.value * s)

        def backward():
            _acc(x, out.grad * s)

        self._record(backward, (out,))
        return out

    def add_scalar(self, x: Var, s: float) -> Var:
        out = self._out(x.value + x.value.dtype.type(s))

        def backward():
            _acc(x, out.grad)

        self._record(backward, (out,))
        return out

    def sum_all(self, x: Var) -> Var:
        out = self._out(x.value.sum())
        shape, dtype = x.value.shape, x.value.dtype

        def backward():
            _acc(x, np.full(shape, out.grad, dtype=dtype))

        self._record(backward, (out,))
        return out

    def mean_all(self, x: Var) -> Var:
        out = self._out(x.value.mean())
        shape, dtype = x.value.shape, x.value.dtype
        inv = 1.0 / x.value.size

        def backward():
            _acc(x, np.full(shape, out.grad * inv, dtype=dtype))

        self._record(backward, (out,))
        return out

    def sum_over_channels(self, x: Var) -> Var:
        out = self._out(x.value.sum(axis=1, keepdims=True))

        def backward():
            _acc(x, np.broadcast_to(out.grad, x.value.shape))

        self._record(backward, (out,))
        return out

    def split_channels(self, x: Var) -> tuple[Var, Var]:
        c = x.shape[1]
        if c % 2 != 0:
            raise ShapeError(f"split_channels: channel count must be even, got {c}")
        half = c // 2
        a = self._out(x.value[:, :half].copy())
        b = self._out(x.value[:, half:].copy())

        def backward():
            if a.grad is not None:
                _acc_slice(x, slice(0, half), a.grad)
            if b.grad is not None:
                _acc_slice(x, slice(half, c), b.grad)

        self._record(backward, (a, b))
        return a, b

    def concat_channels(self, a: Var, b: Var) -> Var:
        out = self._out(np.concatenate([a.value, b.value], axis=1))
        ca = a.shape[1]

        def backward():
            _acc(a, out.grad[:, :ca])
            _acc(b, out.grad[:, ca:])

        self._record(backward, (out,))
        return out

    def permute_channels(self, x: Var, perm: np.ndarray) -> Var:
        perm = tensors.check_permutation(perm, x.shape[1])
        out = self._out(x.value[:, perm].copy())

        def backward():
            if x.grad is None:
                x.grad = np.zeros_like(x.value)
            x.grad[:, perm] += out.grad  # perm is bijective: indices unique

        self._record(backward, (out,))
        return out

    # -- backward ------------------------------------------------------

    def backward(self, loss: Var):
        """Propagate d(loss)/d(leaf) into every leaf's grad. Consumes the tape."""
        if not self.recording:
            raise RuntimeError("cannot backward a non-recording tape")
        if self._consumed:
            raise RuntimeError("tape already consumed by a previous backward pass")
        if loss._tape is not self:
            raise RuntimeError("loss was not produced on this tape")
        if np.ndim(loss.value) != 0:
            raise RuntimeError(f"loss must be scalar, got shape {np.shape(loss.value)}")
        self._consumed = True
        loss.grad = np.ones((), dtype=loss.value.dtype)
        for backward_fn, outputs in reversed(self._nodes):
            if any(o.grad is not None for o in outputs):
                backward_fn()


def _acc_slice(var: Var, sl: slice, g):
    if var.grad is None:
        var.grad = np.zeros_like(var.value)
    var.grad[:, sl] += g


def grad_check(loss_fn, params: list[Param], eps: float = 1e-5) -> float:
    """Worst relative error between taped gradients and central differences.

    loss_fn(tape) must rebuild the forward graph on the given tape and
    return the scalar loss Var. Params must be float64: float32 rounding
    makes the comparison meaningless.
    """
    for p in params:
        if p.array.dtype != np.float64:
            raise ValueError(f"grad_check requires float64 params, {p.name} is {p.array.dtype}")
        p.zero_grad()
    tape = Tape()
    tape.backward(loss_fn(tape))
    analytic = {p.name: p.grad.copy() for p in params}

    def eval_loss() -> float:
        return float(loss_fn(Tape(recording=False)).value)

    worst = 0.0
    for p in params:
        flat = p.array.reshape(-1)
        for i in range(flat.size):
            orig = flat[i]
            flat[i] = orig + eps
            hi = eval_loss()
            flat[i] = orig - eps
            lo = eval_loss()
            flat[i] = orig
            fd = (hi - lo) / (2 * eps)
            a = analytic[p.name].reshape(-1)[i]
            # denominator floor: gradients below 1e-6 are compared on an
            # absolute scale, everything else relatively
            rel = abs(a - fd) / max(abs(a) + abs(fd), 1e-6)
            worst = max(worst, rel)
    return worst
