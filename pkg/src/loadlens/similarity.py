"""Lag self-similarity of the load and decomposition-kernel suggestions.

Every length-``P`` sample ``L_i`` of the training load is compared, by
cosine similarity, with the ``W`` samples that start 1..W steps later.
Peaks of the per-lag mean reveal the dominant periods.
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from pathlib import Path

import numpy as np
from numpy.lib.stride_tricks import sliding_window_view

from .errors import LengthMismatch, NotEnoughPeaks, SeriesTooShort, ValidationError, ZeroVector

DEFAULT_W = 768
DEFAULT_N = 5


def cosine_similarity(a, b) -> float:
    a = np.asarray(a, dtype=float).ravel()
    b = np.asarray(b, dtype=float).ravel()
    if a.shape != b.shape:
        raise LengthMismatch(f"lengths differ: {a.size} vs {b.size}")
    if a.size == 0:
        raise LengthMismatch("vectors are empty")
    na, nb = np.linalg.norm(a), np.linalg.norm(b)
    if na == 0 or nb == 0:
        raise ZeroVector("cosine similarity of an all-zero vector is undefined")
    return float(np.clip(np.dot(a, b) / (na * nb), -1.0, 1.0))


@dataclass(frozen=True, eq=False)
class SimilarityProfile:
    P: int
    W: int
    rows: np.ndarray         # (M_tr - P - W + 1, W); column j is lag j + 1

    @property
    def mean_by_lag(self) -> np.ndarray:
        return self.rows.mean(axis=0)

    @property
    def lags(self) -> np.ndarray:
        return np.arange(1, self.W + 1)

    def to_dict(self) -> dict:
        return {
            "kind": "similarity_profile",
            "P": self.P,
            "W": self.W,
            "rows": self.rows.tolist(),
            "mean_by_lag": self.mean_by_lag.tolist(),
        }

    @classmethod
    def from_dict(cls, d: dict) -> "SimilarityProfile":
        if d.get("kind") != "similarity_profile":
            raise ValidationError("not a similarity_profile artifact")
        rows = np.asarray(d["rows"], dtype=float).reshape(-1, int(d["W"]))
        return cls(P=int(d["P"]), W=int(d["W"]), rows=rows)


def similarity_profile(load, P: int, W: int = DEFAULT_W) -> SimilarityProfile:
    x = np.asarray(load, dtype=float)
    if P < 1 or W < 1:
        raise ValidationError("P and W must be >= 1")
    if x.size < P + W:
        raise SeriesTooShort(f"need at least P + W = {P + W} points, got {x.size}")
    samples = sliding_window_view(x, P)
    norms = np.linalg.norm(samples, axis=1)
    if np.any(norms == 0):
        i = int(np.flatnonzero(norms == 0)[0])
        raise ZeroVector(f"sample starting at {i} is all zeros")
    unit = samples / norms[:, None]
    n_rows = x.size - P - W + 1
    rows = np.empty((n_rows, W))
    for j in range(W):
        rows[:, j] = np.einsum("ij,ij->i", unit[:n_rows], unit[j + 1:j + 1 + n_rows])
    np.clip(rows, -1.0, 1.0, out=rows)
    return SimilarityProfile(P=P, W=W, rows=rows)


def kernel_for_period(period: int) -> int:
    """Odd kernel centred on a period: even periods round up by one."""
    period = int(period)
    if period < 1:
        raise ValidationError(f"period must be positive, got {period}")
    return period + 1 if period % 2 == 0 else period


@dataclass(frozen=True)
class KernelRecommendation:
    periods: tuple[int, ...]
    kernel_sizes: tuple[int, ...]
    scores: tuple[float, ...] = ()

    def to_dict(self) -> dict:
        return {"periods": list(self.periods), "kernel_sizes": list(self.kernel_sizes),
                "scores": list(self.scores)}


def find_peaks(values) -> list[int]:
    """Indices strictly greater than both neighbours (endpoints never qualify)."""
    v = np.asarray(values, dtype=float)
    if v.size < 3:
        return []
    interior = (v[1:-1] > v[:-2]) & (v[1:-1] > v[2:])
    return [int(i) + 1 for i in np.flatnonzero(interior)]


def recommend_kernels(profile: SimilarityProfile, N: int = DEFAULT_N) -> KernelRecommendation:
    if N < 1:
        raise ValidationError("N must be >= 1")
    mean = profile.mean_by_lag
    peaks = find_peaks(mean)
    if len(peaks) < N:
        raise NotEnoughPeaks(f"profile has {len(peaks)} local maxima, {N} requested")
    lags = profile.lags
    ranked = sorted(peaks, key=lambda i: (-mean[i], lags[i]))[:N]
    periods = tuple(int(lags[i]) for i in ranked)
    return KernelRecommendation(
        periods=periods,
        kernel_sizes=tuple(kernel_for_period(p) for p in periods),
        scores=tuple(float(mean[i]) for i in ranked),
    )


def emit_similarity_heatmap(profile: SimilarityProfile, path: str | Path, image: bool = False,
                            extra: dict | None = None) -> list[Path]:
    """Write ``<path>`` as JSON, plus a PNG next to it when ``image`` is set."""
    path = Path(path)
    payload = profile.to_dict()
    if extra:
        payload.update(extra)
    path.write_text(json.dumps(payload))
    written = [path]
    if image:
        import matplotlib

        matplotlib.use("Agg")
        import matplotlib.pyplot as plt

        fig, (ax0, ax1) = plt.subplots(2, 1, figsize=(8, 6), height_ratios=[3, 1], sharex=True)
        im = ax0.imshow(profile.rows, aspect="auto", cmap="viridis", vmin=-1, vmax=1,
                        extent=(0.5, profile.W + 0.5, profile.rows.shape[0], 0))
        ax0.set_ylabel("sample index")
        fig.colorbar(im, ax=[ax0, ax1], label="cosine similarity")
        ax1.plot(profile.lags, profile.mean_by_lag)
        ax1.set_xlabel("lag (hours)")
        ax1.set_ylabel("mean")
        png = path.with_suffix(".png")
        fig.savefig(png, dpi=100)
        plt.close(fig)
        written.append(png)
    return written


def load_similarity_profile(path: str | Path) -> SimilarityProfile:
    return SimilarityProfile.from_dict(json.loads(Path(path).read_text()))
