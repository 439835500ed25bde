"""End-to-end glue: split, standardize with train stats, window, fit, score."""

from __future__ import annotations

from dataclasses import dataclass, field, replace

import numpy as np

from .dataset import (
    SplitSpec,
    Standardization,
    TimeSeriesDataset,
    WindowSet,
    split,
    standardize,
    window_set,
)
from .metrics import MetricsReport, evaluate
from .model import AdditiveForecaster, ModelConfig, TrainConfig, TrainedModel, persistence_forecast, predict, train


@dataclass(frozen=True)
class Experiment:
    """Everything needed to reproduce one training run on a dataset."""

    model: ModelConfig
    train: TrainConfig = field(default_factory=TrainConfig)
    split: SplitSpec = field(default_factory=SplitSpec)
    # stride between training windows; validation/test always use stride 1
    train_stride: int = 1

    def with_seed(self, seed: int) -> "Experiment":
        return replace(self, model=replace(self.model, seed=seed), train=replace(self.train, seed=seed))


@dataclass(frozen=True, eq=False)
class PreparedData:
    train: TimeSeriesDataset
    val: TimeSeriesDataset
    test: TimeSeriesDataset
    stats: Standardization
    train_windows: WindowSet
    val_windows: WindowSet
    test_windows: WindowSet


def prepare_data(ds: TimeSeriesDataset, P: int, T: int, split_spec: SplitSpec | None = None,
                 train_stride: int = 1) -> PreparedData:
    raw_train, raw_val, raw_test = split(ds, split_spec)
    train_ds = standardize(raw_train)
    stats = train_ds.standardization
    val_ds, test_ds = standardize(raw_val, stats), standardize(raw_test, stats)
    return PreparedData(
        train=train_ds, val=val_ds, test=test_ds, stats=stats,
        train_windows=window_set(train_ds, P, T, train_stride),
        val_windows=window_set(val_ds, P, T),
        test_windows=window_set(test_ds, P, T),
    )


def prepare_for(ds: TimeSeriesDataset, exp: Experiment) -> PreparedData:
    return prepare_data(ds, exp.model.P, exp.model.T, exp.split, exp.train_stride)


def fit(data: TimeSeriesDataset | PreparedData, exp: Experiment) -> tuple[TrainedModel, PreparedData]:
    if isinstance(data, TimeSeriesDataset):
        data = prepare_for(data, exp)
    model = AdditiveForecaster(exp.model)
    trained = train(model, data.train_windows, data.val_windows, exp.train,
                    standardization=data.stats, load_name=data.train.load_name)
    return trained, data


def score(trained: TrainedModel, windows: WindowSet) -> dict[str, MetricsReport]:
    """Metrics in standardized units and, when stats are known, actual units."""
    pred = predict(trained, windows)
    out = {"standardized": evaluate(pred, windows.target, "standardized")}
    stats = trained.standardization
    if stats is not None:
        name = trained.load_name
        out["actual"] = evaluate(stats.inverse(name, pred), stats.inverse(name, windows.target), "actual")
    return out


def persistence_score(windows: WindowSet, mode: str = "last_block") -> MetricsReport:
    pred = persistence_forecast(windows.load, windows.T, mode)
    return evaluate(pred, windows.target, "standardized")


def sigma_of(windows: WindowSet) -> float:
    return float(np.std(windows.target))
