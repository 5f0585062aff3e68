import numpy as np

from flow2d import Tensor4
from flow2d.flow import FlowModel, init_flow


def randomize_model(model: FlowModel, rng, scale: float = 0.3) -> FlowModel:
    """Overwrite all params (including the zero-initialized final convs) with
    uniform values so the flow is genuinely non-identity for oracle tests."""
    for p in model.parameters():
        arr = p.array
        arr[...] = rng.uniform(-scale, scale, size=arr.shape).astype(arr.dtype)
    return model


def random_flow(rng, channels, depth, schedule="3-3", dtype=np.float64,
                scale=0.3, clamp=2.0, hidden_ratio=1.0):
    model = init_flow(channels, depth, schedule=schedule, clamp=clamp,
                      hidden_ratio=hidden_ratio, seed=int(rng.integers(2**31)),
                      dtype=dtype)
    return randomize_model(model, rng, scale=scale)


def random_input(rng, n, c, h, w, dtype=np.float64):
    return Tensor4(rng.standard_normal((n, c, h, w)).astype(dtype))
