"""Length-preserving moving-average trend/residual decomposition.

Every kernel is applied to the original series independently; the trend
is a centered window mean over a copy of the series padded at each end
with ``(k - 1) // 2`` repeats of the first/last value.
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from pathlib import Path
from typing import Sequence

import numpy as np
from numpy.lib.stride_tricks import sliding_window_view

from .errors import EvenKernel, KernelTooLarge, LengthMismatch, ValidationError


@dataclass(frozen=True)
class DecompositionConfig:
    kernel_sizes: tuple[int, ...]

    def __post_init__(self):
        ks = tuple(int(k) for k in self.kernel_sizes)
        if not ks:
            raise ValidationError("need at least one kernel")
        for k in ks:
            if k < 1:
                raise ValidationError(f"kernel size must be >= 1, got {k}")
            if k % 2 == 0:
                raise EvenKernel(f"kernel size {k} is even")
        if len(set(ks)) != len(ks):
            raise ValidationError(f"duplicate kernel sizes in {ks}")
        object.__setattr__(self, "kernel_sizes", tuple(sorted(ks)))

    @property
    def N(self) -> int:
        return len(self.kernel_sizes)


def moving_average_trend(series, kernel: int) -> np.ndarray:
    """Trend of ``series`` along its last axis; output has the input's shape."""
    x = np.asarray(series, dtype=float)
    if kernel % 2 == 0:
        raise EvenKernel(f"kernel size {kernel} is even")
    if kernel < 1:
        raise ValidationError(f"kernel size must be >= 1, got {kernel}")
    length = x.shape[-1]
    if kernel > length:
        raise KernelTooLarge(f"kernel {kernel} exceeds series length {length}")
    if kernel == 1:
        return x.copy()
    half = (kernel - 1) // 2
    head = np.repeat(x[..., :1], half, axis=-1)
    tail = np.repeat(x[..., -1:], half, axis=-1)
    padded = np.concatenate([head, x, tail], axis=-1)
    return sliding_window_view(padded, kernel, axis=-1).sum(axis=-1) / kernel


def residual(series, trend) -> np.ndarray:
    x = np.asarray(series, dtype=float)
    tr = np.asarray(trend, dtype=float)
    if x.shape != tr.shape:
        raise LengthMismatch(f"series shape {x.shape} != trend shape {tr.shape}")
    return x - tr


@dataclass(frozen=True, eq=False)
class DecomposedSeries:
    kernels: tuple[int, ...]
    trends: np.ndarray      # (N, ..., L)
    residuals: np.ndarray   # (N, ..., L)

    @property
    def source_len(self) -> int:
        return int(self.trends.shape[-1])

    def to_dict(self) -> dict:
        return {
            "kernels": list(self.kernels),
            "trends": self.trends.tolist(),
            "residuals": self.residuals.tolist(),
        }

    def dump(self, path: str | Path) -> None:
        Path(path).write_text(json.dumps(self.to_dict()))

    @classmethod
    def from_dict(cls, d: dict) -> "DecomposedSeries":
        return cls(tuple(d["kernels"]), np.asarray(d["trends"], float), np.asarray(d["residuals"], float))


def decompose_multiscale(series, cfg: DecompositionConfig | Sequence[int]) -> DecomposedSeries:
    """Trend and residual for every kernel in ``cfg``.

    ``series`` may be a batch (e.g. ``(n_windows, P)``); decomposition runs
    along the last axis, so each window is padded with its own endpoints.
    """
    if not isinstance(cfg, DecompositionConfig):
        cfg = DecompositionConfig(tuple(cfg))
    x = np.asarray(series, dtype=float)
    trends = np.stack([moving_average_trend(x, k) for k in cfg.kernel_sizes])
    return DecomposedSeries(cfg.kernel_sizes, trends, x[None] - trends)
