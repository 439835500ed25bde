"""Load + auxiliary-feature series: ingestion, standardization, splits, windows.

A :class:`TimeSeriesDataset` holds one load column and ``K`` named feature
columns sharing a uniform, strictly increasing time index. Everything here
is a pure function of its inputs.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import Mapping, Sequence

import numpy as np
import pandas as pd

from .errors import (
    DatasetTooSmall,
    MissingColumn,
    NonNumericCell,
    NonUniformTimestamps,
    SeriesTooShort,
    ValidationError,
    ZeroVariance,
)

HOUR = np.timedelta64(3600, "s")


@dataclass(frozen=True)
class Standardization:
    """Per-column ``(mean, std)`` used for ``x -> (x - mean) / std``."""

    mean: dict[str, float]
    std: dict[str, float]

    def forward(self, column: str, values):
        return (np.asarray(values, dtype=float) - self.mean[column]) / self.std[column]

    def inverse(self, column: str, values):
        return np.asarray(values, dtype=float) * self.std[column] + self.mean[column]

    def to_dict(self) -> dict:
        return {"mean": dict(self.mean), "std": dict(self.std)}

    @classmethod
    def from_dict(cls, d: Mapping) -> "Standardization":
        return cls(mean={k: float(v) for k, v in d["mean"].items()},
                   std={k: float(v) for k, v in d["std"].items()})


@dataclass(frozen=True, eq=False)
class TimeSeriesDataset:
    timestamps: np.ndarray
    load: np.ndarray
    features: dict[str, np.ndarray]
    load_name: str = "load"
    standardization: Standardization | None = None

    def __post_init__(self):
        load = np.asarray(self.load, dtype=float)
        feats = {str(k): np.asarray(v, dtype=float) for k, v in self.features.items()}
        ts = np.asarray(self.timestamps)
        if ts.dtype.kind != "M":
            ts = ts.astype("datetime64[s]")
        m = load.shape[0]
        if load.ndim != 1 or ts.shape != (m,):
            raise ValidationError("load and timestamps must be 1-D and equally long")
        for name, col in feats.items():
            if col.shape != (m,):
                raise ValidationError(f"feature {name!r} has length {col.shape}, expected {m}")
        if self.load_name in feats:
            raise ValidationError(f"feature name {self.load_name!r} collides with the load column")
        object.__setattr__(self, "load", load)
        object.__setattr__(self, "features", feats)
        object.__setattr__(self, "timestamps", ts)

    @property
    def M(self) -> int:
        return int(self.load.shape[0])

    @property
    def K(self) -> int:
        return len(self.features)

    @property
    def feature_names(self) -> tuple[str, ...]:
        return tuple(self.features)

    def feature_matrix(self, names: Sequence[str] | None = None) -> np.ndarray:
        """``(M, K)`` matrix of the requested feature columns, in order."""
        names = self.feature_names if names is None else tuple(names)
        if not names:
            return np.zeros((self.M, 0))
        missing = [n for n in names if n not in self.features]
        if missing:
            raise MissingColumn(f"unknown feature(s): {missing}")
        return np.column_stack([self.features[n] for n in names])

    def slice(self, start: int, stop: int) -> "TimeSeriesDataset":
        return replace(
            self,
            timestamps=self.timestamps[start:stop],
            load=self.load[start:stop],
            features={k: v[start:stop] for k, v in self.features.items()},
        )

    def select_features(self, names: Sequence[str]) -> "TimeSeriesDataset":
        self.feature_matrix(names)
        return replace(self, features={n: self.features[n] for n in names})

    def fingerprint(self) -> str:
        import hashlib

        h = hashlib.sha256()
        h.update(self.timestamps.astype("datetime64[s]").astype(np.int64).tobytes())
        h.update(np.ascontiguousarray(self.load).tobytes())
        for name in self.feature_names:
            h.update(name.encode())
            h.update(np.ascontiguousarray(self.features[name]).tobytes())
        return h.hexdigest()[:16]


def validate_timestamps(ts: np.ndarray) -> None:
    if ts.shape[0] < 2:
        return
    steps = np.diff(ts)
    bad = np.flatnonzero(steps <= np.timedelta64(0, "s"))
    if bad.size:
        raise NonUniformTimestamps(f"timestamps not strictly increasing at row {int(bad[0]) + 1}")
    bad = np.flatnonzero(steps != steps[0])
    if bad.size:
        raise NonUniformTimestamps(
            f"timestamp spacing changes at row {int(bad[0]) + 1}: "
            f"{steps[bad[0]]} vs {steps[0]}"
        )


@dataclass(frozen=True)
class CsvSchema:
    """Which CSV columns hold the timestamp, the load and the features.

    ``features`` maps CSV column name to feature name; ``None`` takes every
    remaining column under its own name.
    """

    timestamp: str = "timestamp"
    load: str = "load"
    features: Mapping[str, str] | Sequence[str] | None = None

    def feature_map(self, columns: Sequence[str]) -> dict[str, str]:
        if self.features is None:
            return {c: c for c in columns if c not in (self.timestamp, self.load)}
        if isinstance(self.features, Mapping):
            return dict(self.features)
        return {c: c for c in self.features}


def _parse_timestamps(raw: pd.Series, column: str) -> np.ndarray:
    if raw.isna().any():
        row = int(np.flatnonzero(raw.isna().to_numpy())[0])
        raise NonNumericCell(f"missing timestamp in column {column!r} at row {row}")
    if pd.api.types.is_integer_dtype(raw):
        return raw.to_numpy().astype(np.int64) * HOUR + np.datetime64(0, "s")
    try:
        parsed = pd.to_datetime(raw, utc=True)
    except (ValueError, TypeError) as exc:
        raise NonNumericCell(f"unparseable timestamp in column {column!r}: {exc}") from None
    return parsed.dt.tz_localize(None).to_numpy().astype("datetime64[s]")


def _numeric_column(raw: pd.Series, column: str) -> np.ndarray:
    values = pd.to_numeric(raw, errors="coerce")
    bad = values.isna().to_numpy()
    if bad.any():
        row = int(np.flatnonzero(bad)[0])
        cell = raw.iloc[row]
        what = "missing" if pd.isna(cell) else f"non-numeric value {cell!r}"
        raise NonNumericCell(f"{what} in column {column!r} at row {row}")
    return values.to_numpy(dtype=float)


def load_csv(path: str | Path, schema: CsvSchema | None = None) -> TimeSeriesDataset:
    """Read a load CSV. Missing cells are rejected, never imputed."""
    schema = schema or CsvSchema()
    df = pd.read_csv(path, dtype=str, keep_default_na=True)
    for col in (schema.timestamp, schema.load):
        if col not in df.columns:
            raise MissingColumn(f"column {col!r} not found in {path}; have {list(df.columns)}")
    fmap = schema.feature_map(list(df.columns))
    if not fmap:
        raise MissingColumn(f"no feature columns in {path}")
    for col in fmap:
        if col not in df.columns:
            raise MissingColumn(f"feature column {col!r} not found in {path}")

    ts_raw = df[schema.timestamp]
    as_int = pd.to_numeric(ts_raw, errors="coerce")
    if as_int.notna().all() and (as_int == as_int.round()).all():
        ts_raw = as_int.astype(np.int64)
    ts = _parse_timestamps(ts_raw, schema.timestamp)
    validate_timestamps(ts)

    return TimeSeriesDataset(
        timestamps=ts,
        load=_numeric_column(df[schema.load], schema.load),
        features={name: _numeric_column(df[col], col) for col, name in fmap.items()},
        load_name=schema.load,
    )


def column_stats(ds: TimeSeriesDataset) -> Standardization:
    mean, std = {}, {}
    for name, col in [(ds.load_name, ds.load), *ds.features.items()]:
        mean[name] = float(np.mean(col))
        std[name] = float(np.std(col))
    return Standardization(mean=mean, std=std)


def standardize(ds: TimeSeriesDataset, stats: Standardization | None = None) -> TimeSeriesDataset:
    """Z-score every column.

    Pass the train split's ``stats`` when transforming validation or test
    data so no statistics leak across the split boundary.
    """
    if ds.standardization is not None:
        raise ValidationError("dataset is already standardized")
    stats = stats or column_stats(ds)
    for name in (ds.load_name, *ds.feature_names):
        if name not in stats.std:
            raise MissingColumn(f"no standardization stats for column {name!r}")
        if not stats.std[name] > 0:
            raise ZeroVariance(f"column {name!r} has zero variance")
    return replace(
        ds,
        load=stats.forward(ds.load_name, ds.load),
        features={k: stats.forward(k, v) for k, v in ds.features.items()},
        standardization=stats,
    )


def destandardize(ds: TimeSeriesDataset) -> TimeSeriesDataset:
    stats = ds.standardization
    if stats is None:
        return ds
    return replace(
        ds,
        load=stats.inverse(ds.load_name, ds.load),
        features={k: stats.inverse(k, v) for k, v in ds.features.items()},
        standardization=None,
    )


@dataclass(frozen=True)
class SplitSpec:
    ratios: tuple[float, float, float] = (0.7, 0.2, 0.1)
    remainder_policy: str = "to_test"

    def __post_init__(self):
        if len(self.ratios) != 3 or any(r < 0 for r in self.ratios):
            raise ValidationError("split needs three non-negative ratios")
        if abs(sum(self.ratios) - 1.0) > 1e-12:
            raise ValidationError(f"split ratios {self.ratios} do not sum to 1")
        if self.remainder_policy != "to_test":
            raise ValidationError(f"unknown remainder policy {self.remainder_policy!r}")

    def lengths(self, m: int) -> tuple[int, int, int]:
        # round() guards against 0.7 * 17520 landing a hair under 12264
        n_train = math.floor(round(self.ratios[0] * m, 9))
        n_val = math.floor(round(self.ratios[1] * m, 9))
        return n_train, n_val, m - n_train - n_val


def split(ds: TimeSeriesDataset, spec: SplitSpec | None = None):
    """Chronological train/val/test split; leftover rows go to test."""
    spec = spec or SplitSpec()
    if ds.M < 10:
        raise DatasetTooSmall(f"need at least 10 rows to split, got {ds.M}")
    n_train, n_val, _ = spec.lengths(ds.M)
    return (
        ds.slice(0, n_train),
        ds.slice(n_train, n_train + n_val),
        ds.slice(n_train + n_val, ds.M),
    )


@dataclass(frozen=True)
class WindowSample:
    history_load: np.ndarray
    history_features: np.ndarray
    target: np.ndarray
    origin_index: int


@dataclass(frozen=True, eq=False)
class WindowSet:
    """All windows of one series as stacked arrays (the form models consume)."""

    origins: np.ndarray          # (n,)
    load: np.ndarray             # (n, P)
    features: np.ndarray         # (n, P, K)
    target: np.ndarray           # (n, T)
    feature_names: tuple[str, ...] = ()

    def __len__(self) -> int:
        return int(self.origins.shape[0])

    @property
    def P(self) -> int:
        return int(self.load.shape[1])

    @property
    def T(self) -> int:
        return int(self.target.shape[1])

    def select_features(self, names: Sequence[str]) -> np.ndarray:
        idx = []
        for n in names:
            if n not in self.feature_names:
                raise MissingColumn(f"window set has no feature {n!r}")
            idx.append(self.feature_names.index(n))
        return self.features[:, :, idx]

    def samples(self) -> list[WindowSample]:
        return [
            WindowSample(self.load[i], self.features[i], self.target[i], int(self.origins[i]))
            for i in range(len(self))
        ]

    def fingerprint(self) -> str:
        import hashlib

        h = hashlib.sha256()
        for arr in (self.origins, self.load, self.target):
            h.update(np.ascontiguousarray(arr).tobytes())
        return h.hexdigest()[:16]


def n_windows(m: int, P: int, T: int, stride: int = 1) -> int:
    return (m - P - T) // stride + 1


def window_set(ds: TimeSeriesDataset, P: int, T: int, stride: int = 1) -> WindowSet:
    if P < 1 or T < 1 or stride < 1:
        raise ValidationError("P, T and stride must all be >= 1")
    if ds.M < P + T:
        raise SeriesTooShort(f"series of length {ds.M} cannot hold P+T={P + T}")
    n = n_windows(ds.M, P, T, stride)
    origins = np.arange(n) * stride
    hist_idx = origins[:, None] + np.arange(P)
    tgt_idx = origins[:, None] + P + np.arange(T)
    feats = ds.feature_matrix()
    return WindowSet(
        origins=origins,
        load=ds.load[hist_idx],
        features=feats[hist_idx],
        target=ds.load[tgt_idx],
        feature_names=ds.feature_names,
    )


def make_windows(ds: TimeSeriesDataset, P: int, T: int, stride: int = 1) -> list[WindowSample]:
    return window_set(ds, P, T, stride).samples()


@dataclass(frozen=True)
class SyntheticSpec:
    """Recipe for a desk-scale load series with known structure.

    ``seasonal`` maps period (hours) to sinusoid amplitude. ``coupling`` maps
    feature name to its additive coefficient in the load; ``coupling_lag``
    delays that influence by a number of hours. Three features are always
    produced: a sinusoidal ``temperature`` with slow random drift, a binary
    ``calendar`` weekend flag and an unrelated ``humidity`` process.
    """

    length: int = 4000
    seed: int = 0
    level: float = 10.0
    trend_slope: float = 0.0
    seasonal: Mapping[int, float] = field(default_factory=lambda: {24: 1.0})
    coupling: Mapping[str, float] = field(default_factory=dict)
    coupling_lag: int = 0
    noise_std: float = 0.0
    temperature_period: float = 24.0 * 7
    drift_timescale: float = 48.0
    drift_std: float = 0.5
    start: str = "2018-01-01T00:00:00"

    @classmethod
    def from_dict(cls, d: Mapping) -> "SyntheticSpec":
        d = dict(d)
        if "seasonal" in d:
            d["seasonal"] = {int(k): float(v) for k, v in d["seasonal"].items()}
        if "coupling" in d:
            d["coupling"] = {str(k): float(v) for k, v in d["coupling"].items()}
        return cls(**d)

    def to_dict(self) -> dict:
        return {
            "length": self.length, "seed": self.seed, "level": self.level,
            "trend_slope": self.trend_slope,
            "seasonal": {str(k): v for k, v in self.seasonal.items()},
            "coupling": dict(self.coupling), "coupling_lag": self.coupling_lag,
            "noise_std": self.noise_std, "temperature_period": self.temperature_period,
            "drift_timescale": self.drift_timescale,
            "drift_std": self.drift_std, "start": self.start,
        }


def _ar1(rng: np.random.Generator, n: int, timescale: float) -> np.ndarray:
    """Unit-variance AR(1) process with the given e-folding time in steps."""
    phi = math.exp(-1.0 / timescale)
    eps = rng.standard_normal(n) * math.sqrt(1.0 - phi * phi)
    out = np.empty(n)
    out[0] = rng.standard_normal()
    for i in range(1, n):
        out[i] = phi * out[i - 1] + eps[i]
    return out


SYNTHETIC_FEATURES = ("temperature", "calendar", "humidity")


def generate_synthetic(spec: SyntheticSpec | None = None) -> TimeSeriesDataset:
    spec = spec or SyntheticSpec()
    if any(p <= 0 for p in spec.seasonal) or spec.temperature_period <= 0:
        raise ValidationError("periods must be positive")
    unknown = set(spec.coupling) - set(SYNTHETIC_FEATURES)
    if unknown:
        raise ValidationError(f"coupling names unknown features {sorted(unknown)}")
    n, lag = spec.length, spec.coupling_lag
    rng = np.random.default_rng(spec.seed)
    t = np.arange(n, dtype=float)
    # features are generated over lag extra leading hours so lagged coupling is defined everywhere
    tt = np.arange(-lag, n, dtype=float)

    temperature = np.sin(2 * np.pi * tt / spec.temperature_period) + spec.drift_std * _ar1(
        rng, n + lag, spec.drift_timescale)
    calendar = ((tt // 24) % 7 >= 5).astype(float)
    humidity = _ar1(rng, n + lag, spec.drift_timescale)
    full = {"temperature": temperature, "calendar": calendar, "humidity": humidity}

    load = spec.level + spec.trend_slope * t
    for period, amp in spec.seasonal.items():
        load = load + amp * np.sin(2 * np.pi * t / period)
    for name, coef in spec.coupling.items():
        load = load + coef * full[name][:n]
    if spec.noise_std > 0:
        load = load + rng.normal(0.0, spec.noise_std, n)

    start = np.datetime64(spec.start, "s")
    return TimeSeriesDataset(
        timestamps=start + np.arange(n) * HOUR,
        load=load,
        features={k: v[lag:] for k, v in full.items()},
    )
