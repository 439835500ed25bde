"""Forecast error metrics and how they transform under standardization.

All averages are per element: a ``(B, T)`` batch is treated as ``B * T``
scalar errors. If forecasts and targets are both standardized with the same
``(mu, sigma)``, MSE scales by ``1 / sigma**2`` and MAE/RMSE by ``1 / sigma``;
MAPE has no such relation because its denominator shifts with ``mu``.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, replace
from pathlib import Path

import numpy as np

from .errors import MapeUndefined, NonPositiveSigma, ShapeMismatch, ValidationError

UNITS = ("standardized", "actual")


@dataclass(frozen=True)
class MetricsReport:
    mse: float
    mae: float
    rmse: float
    mape: float | None
    units: str = "standardized"
    n_samples: int = 0

    def __post_init__(self):
        if self.units not in UNITS:
            raise ValidationError(f"units must be one of {UNITS}, got {self.units!r}")

    @property
    def mape_defined(self) -> bool:
        return self.mape is not None

    def to_dict(self) -> dict:
        return {"mse": self.mse, "mae": self.mae, "rmse": self.rmse, "mape": self.mape,
                "units": self.units, "n": self.n_samples}

    @classmethod
    def from_dict(cls, d: dict) -> "MetricsReport":
        mape = d.get("mape")
        return cls(float(d["mse"]), float(d["mae"]), float(d["rmse"]),
                   None if mape is None else float(mape), d.get("units", "standardized"), int(d.get("n", 0)))

    def dump(self, path: str | Path) -> None:
        Path(path).write_text(json.dumps(self.to_dict(), indent=2))


def _pair(predictions, targets) -> tuple[np.ndarray, np.ndarray]:
    yhat = np.asarray(predictions, dtype=float)
    y = np.asarray(targets, dtype=float)
    if yhat.shape != y.shape:
        raise ShapeMismatch(f"prediction shape {yhat.shape} != target shape {y.shape}")
    if y.size == 0:
        raise ShapeMismatch("cannot evaluate an empty batch")
    return yhat, y


def mse(predictions, targets) -> float:
    yhat, y = _pair(predictions, targets)
    return float(np.mean((yhat - y) ** 2))


def mae(predictions, targets) -> float:
    yhat, y = _pair(predictions, targets)
    return float(np.mean(np.abs(yhat - y)))


def rmse(predictions, targets) -> float:
    return math.sqrt(mse(predictions, targets))


def mape(predictions, targets) -> float:
    """Mean absolute percentage error, in percent. Raises on any zero target."""
    yhat, y = _pair(predictions, targets)
    if np.any(y == 0):
        raise MapeUndefined("MAPE is undefined when a target equals zero")
    with np.errstate(over="ignore"):
        return float(100.0 * np.mean(np.abs((yhat - y) / y)))


def evaluate(predictions, targets, units: str = "standardized") -> MetricsReport:
    yhat, y = _pair(predictions, targets)
    m = mse(yhat, y)
    try:
        p = mape(yhat, y)
    except MapeUndefined:
        p = None
    n = y.shape[0] if y.ndim > 1 else 1
    return MetricsReport(mse=m, mae=mae(yhat, y), rmse=math.sqrt(m), mape=p, units=units, n_samples=n)


def scale_relations(actual: MetricsReport, sigma_test: float) -> MetricsReport:
    """Standardized-unit metrics implied by actual-unit ones.

    MAPE does not carry over, so the result reports it as undefined.
    """
    if actual.units != "actual":
        raise ValidationError("scale_relations expects a report in actual units")
    if not sigma_test > 0:
        raise NonPositiveSigma(f"sigma must be positive, got {sigma_test}")
    s = float(sigma_test)
    return replace(actual, mse=actual.mse / s**2, mae=actual.mae / s, rmse=actual.rmse / s,
                   mape=None, units="standardized")
