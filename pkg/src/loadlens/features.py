"""Per-feature recurrent encoders and their trainable linear combination.

Each auxiliary feature gets its own one-layer LSTM followed by a per-step
projection to a scalar, so feature ``q`` maps a ``P``-step window to a
``P``-step representation without seeing any other feature. The
representations are summed with trainable weights ``gamma`` whose values
are read back as feature significance.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Sequence

import numpy as np
import torch
from torch import nn

from .errors import IndexOutOfRange, ShapeMismatch


class FeatureEncoderBank(nn.Module):
    def __init__(self, names: Sequence[str], hidden: int = 16):
        super().__init__()
        self.names = tuple(names)
        self.hidden = hidden
        self.encoders = nn.ModuleList(nn.LSTM(1, hidden, batch_first=True) for _ in self.names)
        self.heads = nn.ModuleList(nn.Linear(hidden, 1) for _ in self.names)
        k = len(self.names)
        self.gamma = nn.Parameter(torch.full((k,), 1.0 / k if k else 0.0))

    @property
    def K(self) -> int:
        return len(self.names)

    def index(self, q: int | str) -> int:
        if isinstance(q, str):
            if q not in self.names:
                raise IndexOutOfRange(f"no feature named {q!r}")
            return self.names.index(q)
        if not 0 <= q < self.K:
            raise IndexOutOfRange(f"feature index {q} outside [0, {self.K})")
        return int(q)

    def encode(self, q: int | str, x: torch.Tensor) -> torch.Tensor:
        """(B, P) window of feature ``q`` -> (B, P) representation."""
        q = self.index(q)
        out, _ = self.encoders[q](x.unsqueeze(-1))
        return self.heads[q](out).squeeze(-1)

    def representations(self, x: torch.Tensor) -> torch.Tensor:
        """(B, P, K) -> (B, P, K), column ``q`` only ever sees input column ``q``."""
        if x.ndim != 3 or x.shape[-1] != self.K:
            raise ShapeMismatch(f"expected (B, P, {self.K}) features, got {tuple(x.shape)}")
        if self.K == 0:
            return x.new_zeros(x.shape)
        return torch.stack([self.encode(q, x[..., q]) for q in range(self.K)], dim=-1)

    def forward(self, x: torch.Tensor) -> torch.Tensor:
        if self.K == 0:
            if x.ndim != 3:
                raise ShapeMismatch(f"expected (B, P, 0) features, got {tuple(x.shape)}")
            return x.new_zeros(x.shape[:2])
        return self.representations(x) @ self.gamma


def _as_tensor(bank: nn.Module, values) -> torch.Tensor:
    ref = next(bank.parameters())
    return torch.as_tensor(np.asarray(values), dtype=ref.dtype)


@torch.no_grad()
def encode_feature(bank: FeatureEncoderBank, q: int | str, window) -> np.ndarray:
    x = _as_tensor(bank, window)
    if x.ndim != 1:
        raise ShapeMismatch(f"expected a 1-D window, got shape {tuple(x.shape)}")
    return bank.encode(q, x[None]).squeeze(0).numpy()


@torch.no_grad()
def combine_features(bank: FeatureEncoderBank, window_matrix) -> np.ndarray:
    x = _as_tensor(bank, window_matrix)
    if x.ndim != 2 or x.shape[1] != bank.K:
        raise ShapeMismatch(f"expected (P, {bank.K}) matrix, got {tuple(x.shape)}")
    return bank(x[None]).squeeze(0).numpy()


@dataclass(frozen=True)
class FeatureSignificance:
    scores: dict[str, float]

    @property
    def ranking(self) -> list[str]:
        """Feature names by decreasing ``|gamma|``."""
        return sorted(self.scores, key=lambda n: (-abs(self.scores[n]), n))


def feature_significance(bank: FeatureEncoderBank) -> FeatureSignificance:
    gamma = bank.gamma.detach().cpu().double().numpy()
    return FeatureSignificance({n: float(g) for n, g in zip(bank.names, gamma)})
