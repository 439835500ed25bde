"""Run configuration: one YAML file per run, with dotted-key overrides.

A config names exactly one dataset source (a CSV file or a synthetic
recipe), the window geometry, the kernels (an explicit list or ``auto N``
to take the top ``N`` from the similarity analysis), model and training
settings, and an output directory. Its hash identifies every artifact a
run writes.
"""

from __future__ import annotations

import copy
import hashlib
import json
from dataclasses import dataclass, field, fields
from pathlib import Path
from typing import Any, Mapping, Sequence

import yaml

from .dataset import CsvSchema, SplitSpec, SyntheticSpec, TimeSeriesDataset, generate_synthetic, load_csv
from .errors import ValidationError
from .model import ModelConfig, TrainConfig
from .pipeline import Experiment
from .similarity import DEFAULT_W

# Architecture knobs a config may set; kernels, P, T, features and seed come from elsewhere.
MODEL_KEYS = ("d_model", "n_layers", "n_heads", "ff_dim", "conv_channels", "conv_layers",
              "conv_width", "hidden", "norm_first", "drop_trend", "drop_residual",
              "trend_branches", "residual_branches", "raw_inputs")
TRAIN_KEYS = ("batch_size", "epochs", "lr", "patience", "weight_decay")
TOP_KEYS = ("seed", "out_dir", "dataset", "window", "kernels", "model", "train", "split",
            "image", "perturbations")

BUNDLED_SYNTHETIC = {
    "length": 4000,
    "level": 10.0,
    "trend_slope": 0.0005,
    "seasonal": {12: 1.0, 24: 0.3},
    "coupling": {"temperature": 1.0},
    "coupling_lag": 24,
    "noise_std": 0.1,
    "temperature_period": 8760.0,
    "drift_timescale": 24.0,
    "drift_std": 1.0,
}
BUNDLED_MODEL = {"d_model": 16, "n_layers": 1, "n_heads": 2, "ff_dim": 32,
                 "conv_channels": 32, "conv_layers": 2, "conv_width": 3, "hidden": 16}
BUNDLED_TRAIN = {"epochs": 30, "batch_size": 64, "lr": 1e-3, "patience": 10, "stride": 2}


def bundled_synthetic_spec(seed: int = 0, **overrides) -> SyntheticSpec:
    """The synthetic recipe shipped with the package.

    Hourly load with 12 h and 24 h cycles, a slow upward trend, and a single
    driving feature: temperature, acting with a one-day delay. Calendar and
    humidity are generated but have no effect on the load.
    """
    return SyntheticSpec.from_dict({**BUNDLED_SYNTHETIC, "seed": seed, **overrides})


def bundled_config(seed: int = 0, out_dir: str = "runs/synthetic") -> dict:
    return {
        "seed": seed,
        "out_dir": out_dir,
        "dataset": {"synthetic": copy.deepcopy(BUNDLED_SYNTHETIC)},
        "window": {"P": 96, "T": 24, "W": DEFAULT_W},
        "kernels": "auto 2",
        "model": dict(BUNDLED_MODEL),
        "train": dict(BUNDLED_TRAIN),
        "split": {"ratios": [0.7, 0.2, 0.1]},
        "image": False,
    }


@dataclass(frozen=True)
class CsvSource:
    path: Path
    schema: CsvSchema = field(default_factory=CsvSchema)


@dataclass(frozen=True)
class RunConfig:
    dataset: SyntheticSpec | CsvSource
    P: int = 96
    T: int = 24
    W: int = DEFAULT_W
    kernels: tuple[int, ...] | None = None
    auto_kernels: int | None = None
    model: Mapping[str, Any] = field(default_factory=dict)
    train: TrainConfig = field(default_factory=TrainConfig)
    train_stride: int = 1
    split: SplitSpec = field(default_factory=SplitSpec)
    out_dir: Path = Path("runs/default")
    seed: int = 0
    image: bool = False
    perturbations: tuple[Mapping[str, Any], ...] = ()
    raw: Mapping[str, Any] = field(default_factory=dict, compare=False, repr=False)

    @property
    def config_hash(self) -> str:
        """Hash of everything that affects results; ``out_dir`` is excluded."""
        content = {k: v for k, v in self.raw.items() if k != "out_dir"}
        blob = json.dumps(content, sort_keys=True, separators=(",", ":"), default=str)
        return hashlib.sha256(blob.encode()).hexdigest()[:16]

    def load_dataset(self) -> TimeSeriesDataset:
        if isinstance(self.dataset, SyntheticSpec):
            return generate_synthetic(self.dataset)
        return load_csv(self.dataset.path, self.dataset.schema)

    def experiment(self, kernels: Sequence[int], feature_names: Sequence[str]) -> Experiment:
        model = ModelConfig(kernels=tuple(kernels), P=self.P, T=self.T,
                            feature_names=tuple(feature_names), seed=self.seed, **self.model)
        return Experiment(model, self.train, self.split, self.train_stride)


def _require_mapping(value, where: str) -> dict:
    if value is None:
        return {}
    if not isinstance(value, Mapping):
        raise ValidationError(f"{where} must be a mapping, got {type(value).__name__}")
    return dict(value)


def _reject_unknown(d: Mapping, allowed: Sequence[str], where: str) -> None:
    unknown = sorted(set(d) - set(allowed))
    if unknown:
        raise ValidationError(f"unknown key(s) in {where}: {unknown}; allowed: {sorted(allowed)}")


def _parse_kernels(value) -> tuple[tuple[int, ...] | None, int | None]:
    if isinstance(value, str):
        parts = value.split()
        if len(parts) == 2 and parts[0] == "auto" and parts[1].isdigit() and int(parts[1]) >= 1:
            return None, int(parts[1])
        raise ValidationError(f"kernels must be a list of odd sizes or 'auto N', got {value!r}")
    if isinstance(value, Sequence) and value and all(isinstance(k, int) for k in value):
        return tuple(value), None
    raise ValidationError(f"kernels must be a list of odd sizes or 'auto N', got {value!r}")


def _parse_dataset(d: Mapping, seed: int, base_dir: Path) -> SyntheticSpec | CsvSource:
    d = _require_mapping(d, "dataset")
    sources = [k for k in ("csv", "synthetic") if k in d]
    _reject_unknown(d, ("csv", "synthetic"), "dataset")
    if len(sources) != 1:
        raise ValidationError("dataset must name exactly one source: 'csv' or 'synthetic'")
    if sources[0] == "synthetic":
        spec = _require_mapping(d["synthetic"], "dataset.synthetic")
        _reject_unknown(spec, [f.name for f in fields(SyntheticSpec)], "dataset.synthetic")
        spec.setdefault("seed", seed)
        try:
            return SyntheticSpec.from_dict(spec)
        except (TypeError, ValueError) as exc:
            raise ValidationError(f"bad synthetic spec: {exc}") from exc
    csv = _require_mapping(d["csv"], "dataset.csv")
    _reject_unknown(csv, ("path", "timestamp", "load", "features"), "dataset.csv")
    if "path" not in csv:
        raise ValidationError("dataset.csv.path is required")
    path = Path(csv.pop("path"))
    if not path.is_absolute():
        path = base_dir / path
    return CsvSource(path, CsvSchema(**csv))


def parse_config(raw: Mapping, base_dir: str | Path = ".") -> RunConfig:
    raw = _require_mapping(raw, "config")
    _reject_unknown(raw, TOP_KEYS, "config")
    base_dir = Path(base_dir)
    seed = raw.get("seed", 0)
    if not isinstance(seed, int) or isinstance(seed, bool):
        raise ValidationError(f"seed must be an integer, got {seed!r}")
    if "dataset" not in raw:
        raise ValidationError("config needs a 'dataset' section")

    window = _require_mapping(raw.get("window"), "window")
    _reject_unknown(window, ("P", "T", "W"), "window")
    if "kernels" not in raw:
        raise ValidationError("config needs 'kernels': a list of odd sizes or 'auto N'")
    kernels, auto = _parse_kernels(raw["kernels"])

    model = _require_mapping(raw.get("model"), "model")
    _reject_unknown(model, MODEL_KEYS, "model")
    for key in ("drop_trend", "drop_residual"):
        if key in model:
            model[key] = tuple(model[key])

    train = _require_mapping(raw.get("train"), "train")
    _reject_unknown(train, (*TRAIN_KEYS, "stride"), "train")
    stride = train.pop("stride", 1)
    split = _require_mapping(raw.get("split"), "split")
    _reject_unknown(split, ("ratios", "remainder_policy"), "split")
    if "ratios" in split:
        split["ratios"] = tuple(split["ratios"])

    perturbations = raw.get("perturbations") or ()
    if not isinstance(perturbations, Sequence) or isinstance(perturbations, str):
        raise ValidationError("perturbations must be a list of mappings")

    # relative to the working directory; the CSV path is relative to the config file
    out_dir = Path(raw.get("out_dir", "runs/default"))
    try:
        cfg = RunConfig(
            dataset=_parse_dataset(raw["dataset"], seed, base_dir),
            P=int(window.get("P", 96)),
            T=int(window.get("T", 24)),
            W=int(window.get("W", DEFAULT_W)),
            kernels=kernels,
            auto_kernels=auto,
            model=model,
            train=TrainConfig(seed=seed, **train),
            train_stride=int(stride),
            split=SplitSpec(**split),
            out_dir=out_dir,
            seed=seed,
            image=bool(raw.get("image", False)),
            perturbations=tuple(_require_mapping(p, "perturbation") for p in perturbations),
            raw=copy.deepcopy(raw),
        )
    except ValidationError:
        raise
    except (TypeError, ValueError) as exc:
        raise ValidationError(f"bad config value: {exc}") from exc
    if cfg.train_stride < 1:
        raise ValidationError("train.stride must be >= 1")
    if kernels is not None:
        cfg.experiment(kernels, ())  # surfaces model validation errors early
    return cfg


def apply_overrides(raw: Mapping, overrides: Sequence[str]) -> dict:
    """Apply ``a.b.c=value`` overrides; values are parsed as YAML scalars or lists."""
    out = copy.deepcopy(dict(raw))
    for item in overrides:
        key, sep, value = item.partition("=")
        if not sep or not key:
            raise ValidationError(f"override must look like key=value, got {item!r}")
        *parents, leaf = key.split(".")
        node = out
        for part in parents:
            child = node.get(part)
            if child is None:
                child = node[part] = {}
            if not isinstance(child, dict):
                raise ValidationError(f"cannot set {key!r}: {part!r} is not a section")
            node = child
        try:
            node[leaf] = yaml.safe_load(value)
        except yaml.YAMLError as exc:
            raise ValidationError(f"cannot parse override {item!r}: {exc}") from exc
    return out


def load_config(path: str | Path, overrides: Sequence[str] = ()) -> RunConfig:
    path = Path(path)
    try:
        raw = yaml.safe_load(path.read_text())
    except OSError as exc:
        raise ValidationError(f"cannot read config {path}: {exc}") from exc
    except yaml.YAMLError as exc:
        raise ValidationError(f"config {path} is not valid YAML: {exc}") from exc
    return parse_config(apply_overrides(raw or {}, overrides), path.parent)
