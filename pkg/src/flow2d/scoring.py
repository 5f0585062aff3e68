"""Per-pixel anomaly maps from latent tensors.

The per-location log-likelihood sums the channel dimension of the base
density and adds the spatially resolved log-det term. Anomaly scores are the
negated log-likelihood (rank-equivalent to 1 - probability for AUROC, and
numerically robust for high channel counts), bilinearly upsampled to the
input image resolution. Multi-scale results are fused by pointwise averaging
after upsampling.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .errors import ShapeError
from .flow import LOG_2PI, LatentResult
from .tensors import Tensor4, _bilinear_raw


@dataclass(frozen=True)
class ScoreAgg:
    """Map -> image-score aggregation. 'max' or 'topk' (mean of top k percent)."""

    mode: str = "max"
    topk_percent: float = 1.0

    def __post_init__(self):
        if self.mode not in ("max", "topk"):
            raise ValueError(f"unknown aggregation mode {self.mode!r}")
        if not 0 < self.topk_percent <= 100:
            raise ValueError(f"topk_percent must be in (0, 100], got {self.topk_percent}")

    def __call__(self, values: np.ndarray) -> float:
        if self.mode == "max":
            return float(values.max())
        count = max(1, int(round(values.size * self.topk_percent / 100.0)))
        top = np.partition(values.reshape(-1), values.size - count)[values.size - count:]
        return float(top.mean())


@dataclass
class AnomalyMap:
    """Anomaly score field at image resolution; higher = more anomalous."""

    scores: np.ndarray          # (H, W)
    image_score: float
    raw_range: tuple[float, float] = field(default=(0.0, 0.0))

    def __post_init__(self):
        if self.scores.ndim != 2:
            raise ShapeError(f"anomaly map must be 2-d, got shape {self.scores.shape}")
        self.raw_range = (float(self.scores.min()), float(self.scores.max()))

    @property
    def shape(self):
        return self.scores.shape


def loglik_map(result: LatentResult, include_logdet: bool = True) -> Tensor4:
    """Per-location log-likelihood, channels summed: a (n, 1, h, w) map.

    include_logdet=False drops the volume term (ablation flag).
    """
    z = result.z.data
    c = z.shape[1]
    ll = -0.5 * (z * z).sum(axis=1, keepdims=True) - z.dtype.type(0.5 * c * LOG_2PI)
    if include_logdet:
        ll = ll + result.logdet_map.data
    return Tensor4(ll)


def anomaly_map(ll: Tensor4, out_h: int, out_w: int, agg: ScoreAgg = ScoreAgg()) -> AnomalyMap:
    """Negate, upsample to image resolution, aggregate an image-level score."""
    if ll.n != 1 or ll.c != 1:
        raise ShapeError(f"anomaly_map expects a (1, 1, h, w) likelihood map, got {ll.shape}")
    if out_h < ll.h or out_w < ll.w:
        raise ShapeError(
            f"target resolution ({out_h}, {out_w}) smaller than feature map ({ll.h}, {ll.w})"
        )
    up = _bilinear_raw(-ll.data, out_h, out_w)[0, 0]
    return AnomalyMap(scores=up, image_score=agg(up))


def fuse_scales(maps: list[AnomalyMap], agg: ScoreAgg = ScoreAgg()) -> AnomalyMap:
    """Pointwise mean of per-scale maps sharing one resolution."""
    if not maps:
        raise ValueError("fuse_scales: empty map list")
    shape = maps[0].shape
    for m in maps[1:]:
        if m.shape != shape:
            raise ShapeError(f"fuse_scales: resolution mismatch {m.shape} vs {shape}")
    fused = np.mean([m.scores for m in maps], axis=0)
    return AnomalyMap(scores=fused, image_score=agg(fused))


def image_score(amap: AnomalyMap, agg: ScoreAgg = ScoreAgg()) -> float:
    return agg(amap.scores)
