"""Additive forecaster: attention branches on trends, conv branches on residuals.

For every decomposition kernel ``p`` the model owns one transformer-encoder
branch fed ``[trend_p, feature_repr]`` and one 1-D CNN branch fed
``[residual_p, feature_repr]``; each branch maps its ``(P, 2)`` input to a
``T``-step forecast. The final forecast is

    y_hat = sum_p alpha_p * TF_p(trend input) + sum_p beta_p * CN_p(residual input)

with trainable scalars ``alpha``/``beta``. Training minimises MSE.
"""

from __future__ import annotations

import copy
import hashlib
import io
import json
import math
import zipfile
from dataclasses import asdict, dataclass, field
from pathlib import Path
from typing import Sequence

import numpy as np
import torch
from torch import nn

from .dataset import Standardization, WindowSample, WindowSet
from .decomposition import decompose_multiscale
from .errors import (
    DivergedLoss,
    EmptySplit,
    EvenKernel,
    IoError,
    KernelTooLarge,
    LengthMismatch,
    NotTrained,
    ShapeMismatch,
    ValidationError,
)
from .features import FeatureEncoderBank

CHECKPOINT_VERSION = "loadlens-ckpt-v1"


@dataclass(frozen=True)
class ModelConfig:
    kernels: tuple[int, ...] = (13, 25)
    P: int = 96
    T: int = 24
    feature_names: tuple[str, ...] = ()
    d_model: int = 32
    n_layers: int = 2
    n_heads: int = 4
    ff_dim: int = 64
    conv_channels: int = 32
    conv_layers: int = 2
    conv_width: int = 3
    hidden: int = 16
    norm_first: bool = True
    seed: int = 0
    # ablations
    drop_trend: tuple[int, ...] = ()
    drop_residual: tuple[int, ...] = ()
    trend_branches: bool = True
    residual_branches: bool = True
    raw_inputs: bool = False

    def __post_init__(self):
        for name in ("kernels", "feature_names", "drop_trend", "drop_residual"):
            object.__setattr__(self, name, tuple(getattr(self, name)))
        object.__setattr__(self, "kernels", tuple(int(k) for k in self.kernels))
        if not self.kernels:
            raise ValidationError("need at least one kernel (N >= 1)")
        for k in self.kernels:
            if k < 1 or k % 2 == 0:
                raise EvenKernel(f"kernel sizes must be odd and positive, got {k}")
            if k > self.P:
                raise KernelTooLarge(f"kernel {k} exceeds window length P={self.P}")
        if min(self.P, self.T, self.d_model, self.hidden, self.conv_channels,
               self.n_layers, self.n_heads, self.conv_layers, self.conv_width) < 1:
            raise ValidationError("P, T and all layer sizes must be >= 1")
        if self.d_model % self.n_heads:
            raise ValidationError(f"d_model={self.d_model} not divisible by n_heads={self.n_heads}")
        if self.conv_width % 2 == 0:
            raise ValidationError("conv_width must be odd to keep the sequence length")
        for dropped in (self.drop_trend, self.drop_residual):
            unknown = set(dropped) - set(self.kernels)
            if unknown:
                raise ValidationError(f"cannot drop unknown kernels {sorted(unknown)}")
        if not self.trend_kernels and not self.residual_kernels:
            raise ValidationError("configuration leaves no branches")

    @property
    def N(self) -> int:
        return len(self.kernels)

    @property
    def trend_kernels(self) -> tuple[int, ...]:
        if not self.trend_branches:
            return ()
        return tuple(k for k in self.kernels if k not in self.drop_trend)

    @property
    def residual_kernels(self) -> tuple[int, ...]:
        if not self.residual_branches:
            return ()
        return tuple(k for k in self.kernels if k not in self.drop_residual)

    def to_dict(self) -> dict:
        return {k: list(v) if isinstance(v, tuple) else v for k, v in asdict(self).items()}

    @classmethod
    def from_dict(cls, d: dict) -> "ModelConfig":
        return cls(**d)


def positional_encoding(P: int, d: int) -> torch.Tensor:
    """Fixed sinusoidal (P, d) table."""
    pos = torch.arange(P, dtype=torch.float64)[:, None]
    div = torch.exp(torch.arange(0, d, 2, dtype=torch.float64) * (-math.log(10000.0) / d))
    pe = torch.zeros(P, d, dtype=torch.float64)
    pe[:, 0::2] = torch.sin(pos * div)
    pe[:, 1::2] = torch.cos(pos * div)[:, : d // 2]
    return pe.float()


class TrendBranch(nn.Module):
    """Token embedding + positional encoding + self-attention encoder + linear head."""

    def __init__(self, cfg: ModelConfig):
        super().__init__()
        self.token = nn.Linear(2, cfg.d_model)
        self.register_buffer("pe", positional_encoding(cfg.P, cfg.d_model))
        layer = nn.TransformerEncoderLayer(
            cfg.d_model, cfg.n_heads, dim_feedforward=cfg.ff_dim, dropout=0.0, batch_first=True,
            norm_first=cfg.norm_first,
        )
        self.encoder = nn.TransformerEncoder(layer, cfg.n_layers, enable_nested_tensor=False)
        self.head = nn.Linear(cfg.P * cfg.d_model, cfg.T)

    def forward(self, x: torch.Tensor) -> torch.Tensor:
        h = self.encoder(self.token(x) + self.pe)
        return self.head(h.flatten(1))


class ResidualBranch(nn.Module):
    """Stack of same-padded 1-D convolutions with ReLU in between, then a linear head."""

    def __init__(self, cfg: ModelConfig):
        super().__init__()
        layers: list[nn.Module] = []
        in_ch = 2
        for i in range(cfg.conv_layers):
            if i:
                layers.append(nn.ReLU())
            layers.append(nn.Conv1d(in_ch, cfg.conv_channels, cfg.conv_width, padding=cfg.conv_width // 2))
            in_ch = cfg.conv_channels
        self.convs = nn.Sequential(*layers)
        self.head = nn.Linear(cfg.P * cfg.conv_channels, cfg.T)

    def forward(self, x: torch.Tensor) -> torch.Tensor:
        return self.head(self.convs(x.transpose(1, 2)).flatten(1))


def assemble_inputs(trend_window, residual_window, feature_repr):
    """Stack each component with the feature representation as a 2-channel input.

    Works on 1-D windows (P,) -> (P, 2) and batches (B, P) -> (B, P, 2).
    """
    arrays = (trend_window, residual_window, feature_repr)
    shapes = {tuple(a.shape) for a in arrays}
    if len(shapes) != 1:
        raise LengthMismatch(f"component shapes differ: {sorted(shapes)}")
    if isinstance(trend_window, torch.Tensor):
        return (torch.stack([trend_window, feature_repr], dim=-1),
                torch.stack([residual_window, feature_repr], dim=-1))
    trend_window, residual_window, feature_repr = (np.asarray(a, dtype=float) for a in arrays)
    return (np.stack([trend_window, feature_repr], axis=-1),
            np.stack([residual_window, feature_repr], axis=-1))


class AdditiveForecaster(nn.Module):
    def __init__(self, cfg: ModelConfig):
        super().__init__()
        self.cfg = cfg
        with torch.random.fork_rng(devices=[]):
            torch.manual_seed(cfg.seed)
            self.features = FeatureEncoderBank(cfg.feature_names, cfg.hidden)
            self.trend_branches = nn.ModuleList(TrendBranch(cfg) for _ in cfg.trend_kernels)
            self.residual_branches = nn.ModuleList(ResidualBranch(cfg) for _ in cfg.residual_kernels)
        init = 1.0 / (2 * cfg.N)
        self.alpha = nn.Parameter(torch.full((len(cfg.trend_kernels),), init))
        self.beta = nn.Parameter(torch.full((len(cfg.residual_kernels),), init))
        self.trained = False

    def branch_outputs(self, trends, residuals, features):
        """Per-branch forecasts before the alpha/beta combination.

        Returns ``(trend_out, residual_out)`` of shapes ``(B, n_trend, T)`` and
        ``(B, n_residual, T)``.
        """
        cfg = self.cfg
        if trends.ndim != 3 or trends.shape[1:] != (cfg.N, cfg.P) or residuals.shape != trends.shape:
            raise ShapeMismatch(
                f"expected (B, {cfg.N}, {cfg.P}) components, got {tuple(trends.shape)} "
                f"and {tuple(residuals.shape)}"
            )
        if features.shape != (trends.shape[0], cfg.P, len(cfg.feature_names)):
            raise ShapeMismatch(f"features have shape {tuple(features.shape)}")
        f = self.features(features)
        trend_nets = dict(zip(cfg.trend_kernels, self.trend_branches))
        residual_nets = dict(zip(cfg.residual_kernels, self.residual_branches))
        tr, rs = [], []
        for i, k in enumerate(cfg.kernels):
            t_in, r_in = assemble_inputs(trends[:, i], residuals[:, i], f)
            if k in trend_nets:
                tr.append(trend_nets[k](t_in))
            if k in residual_nets:
                rs.append(residual_nets[k](r_in))
        empty = trends.new_zeros((trends.shape[0], 0, cfg.T))
        return (torch.stack(tr, dim=1) if tr else empty,
                torch.stack(rs, dim=1) if rs else empty)

    def forward(self, trends, residuals, features):
        tr, rs = self.branch_outputs(trends, residuals, features)
        return torch.einsum("bnt,n->bt", tr, self.alpha) + torch.einsum("bnt,n->bt", rs, self.beta)


@dataclass(frozen=True, eq=False)
class ModelInputs:
    trends: torch.Tensor      # (n, N, P)
    residuals: torch.Tensor   # (n, N, P)
    features: torch.Tensor    # (n, P, K)
    target: torch.Tensor      # (n, T)

    def __len__(self) -> int:
        return int(self.trends.shape[0])

    def batch(self, idx):
        return self.trends[idx], self.residuals[idx], self.features[idx], self.target[idx]


def prepare_inputs(cfg: ModelConfig, windows: WindowSet, dtype=torch.float32) -> ModelInputs:
    """Decompose every history window on its own (no look-ahead past the window)."""
    if windows.P != cfg.P or windows.T != cfg.T:
        raise ShapeMismatch(f"windows are P={windows.P}, T={windows.T}; model wants P={cfg.P}, T={cfg.T}")
    if cfg.raw_inputs:
        comp = np.repeat(windows.load[:, None, :], cfg.N, axis=1)
        trends, residuals = comp, comp
    else:
        dec = decompose_multiscale(windows.load, cfg.kernels)
        trends, residuals = dec.trends.transpose(1, 0, 2), dec.residuals.transpose(1, 0, 2)
    feats = windows.select_features(cfg.feature_names)

    def t(a):
        return torch.as_tensor(np.ascontiguousarray(a), dtype=dtype)

    return ModelInputs(t(trends), t(residuals), t(feats), t(windows.target))


def sample_inputs(cfg: ModelConfig, sample: WindowSample, feature_names: Sequence[str]):
    ws = WindowSet(
        origins=np.array([sample.origin_index]),
        load=np.asarray(sample.history_load, float)[None],
        features=np.asarray(sample.history_features, float)[None],
        target=np.asarray(sample.target, float)[None],
        feature_names=tuple(feature_names),
    )
    return prepare_inputs(cfg, ws)


def mse_loss(predictions, targets):
    """Mean over every element (divides by B*T)."""
    if tuple(predictions.shape) != tuple(targets.shape):
        raise ShapeMismatch(f"prediction shape {tuple(predictions.shape)} != target shape {tuple(targets.shape)}")
    if isinstance(predictions, torch.Tensor):
        return ((predictions - targets) ** 2).mean()
    return float(np.mean((np.asarray(predictions, float) - np.asarray(targets, float)) ** 2))


@dataclass(frozen=True)
class TrainConfig:
    batch_size: int = 64
    epochs: int = 100
    lr: float = 1e-3
    patience: int = 10
    seed: int = 0
    weight_decay: float = 0.0

    def __post_init__(self):
        if self.batch_size < 1 or self.epochs < 1 or self.patience < 1:
            raise ValidationError("batch_size, epochs and patience must be >= 1")
        if not self.lr > 0:
            raise ValidationError("learning rate must be positive")

    def to_dict(self) -> dict:
        return asdict(self)


@dataclass(eq=False)
class TrainedModel:
    model: AdditiveForecaster
    train_config: TrainConfig
    log: list[dict] = field(default_factory=list)
    standardization: Standardization | None = None
    load_name: str = "load"

    @property
    def config(self) -> ModelConfig:
        return self.model.cfg


@torch.no_grad()
def _evaluate_mse(model: AdditiveForecaster, data: ModelInputs, batch_size: int) -> float:
    total, count = 0.0, 0
    for start in range(0, len(data), batch_size):
        tr, rs, ft, y = data.batch(slice(start, start + batch_size))
        total += float(((model(tr, rs, ft) - y) ** 2).sum())
        count += y.numel()
    return total / count


def train(model: AdditiveForecaster, train_windows: WindowSet, val_windows: WindowSet,
          cfg: TrainConfig | None = None, standardization: Standardization | None = None,
          load_name: str = "load") -> TrainedModel:
    """Adam on per-element MSE with early stopping on validation MSE.

    The returned model holds the best-validation parameters. Each log row has
    the per-element ``train_mse``/``val_mse`` and ``train_loss_per_window``
    (squared error summed over the horizon, averaged over windows).
    """
    cfg = cfg or TrainConfig()
    if len(train_windows) == 0 or len(val_windows) == 0:
        raise EmptySplit("training and validation windows must be non-empty")
    mcfg = model.cfg
    tr_data = prepare_inputs(mcfg, train_windows)
    va_data = prepare_inputs(mcfg, val_windows)

    log: list[dict] = []
    with torch.random.fork_rng(devices=[]):
        torch.manual_seed(cfg.seed)
        gen = torch.Generator().manual_seed(cfg.seed)
        opt = torch.optim.Adam(model.parameters(), lr=cfg.lr, weight_decay=cfg.weight_decay)
        best_val, best_state, bad_epochs = math.inf, None, 0
        n = len(tr_data)
        for epoch in range(1, cfg.epochs + 1):
            model.train()
            perm = torch.randperm(n, generator=gen)
            sq_sum = 0.0
            for start in range(0, n, cfg.batch_size):
                tr, rs, ft, y = tr_data.batch(perm[start:start + cfg.batch_size])
                loss = mse_loss(model(tr, rs, ft), y)
                if not torch.isfinite(loss):
                    raise DivergedLoss(f"non-finite loss at epoch {epoch}")
                opt.zero_grad()
                loss.backward()
                opt.step()
                sq_sum += float(loss.detach()) * y.numel()
            model.eval()
            train_mse = sq_sum / (n * mcfg.T)
            val_mse = _evaluate_mse(model, va_data, 256)
            if not math.isfinite(val_mse):
                raise DivergedLoss(f"non-finite validation loss at epoch {epoch}")
            log.append({
                "epoch": epoch,
                "train_mse": train_mse,
                "train_loss_per_window": train_mse * mcfg.T,
                "val_mse": val_mse,
            })
            if val_mse < best_val:
                best_val, bad_epochs = val_mse, 0
                best_state = copy.deepcopy(model.state_dict())
            else:
                bad_epochs += 1
                if bad_epochs >= cfg.patience:
                    break
    model.load_state_dict(best_state)
    model.eval()
    model.trained = True
    return TrainedModel(model, cfg, log, standardization, load_name)


def _unwrap(model) -> tuple[AdditiveForecaster, Standardization | None, str]:
    if isinstance(model, TrainedModel):
        return model.model, model.standardization, model.load_name
    return model, None, "load"


@torch.no_grad()
def predict(model, windows: WindowSet | ModelInputs, inverse: bool = False,
            batch_size: int = 256) -> np.ndarray:
    """Forecasts of shape (n, T); ``inverse=True`` maps them back to raw units."""
    net, stats, load_name = _unwrap(model)
    if not net.trained:
        raise NotTrained("model has not been trained")
    data = windows if isinstance(windows, ModelInputs) else prepare_inputs(net.cfg, windows)
    net.eval()
    out = [net(*data.batch(slice(s, s + batch_size))[:3]) for s in range(0, len(data), batch_size)]
    pred = torch.cat(out).double().numpy() if out else np.zeros((0, net.cfg.T))
    if inverse:
        if stats is None:
            raise ValidationError("no standardization recorded; cannot invert forecasts")
        pred = stats.inverse(load_name, pred)
    return pred


@torch.no_grad()
def forecast_sample(model: AdditiveForecaster, sample: WindowSample) -> np.ndarray:
    """Forecast one window; decomposition runs on its history only."""
    data = sample_inputs(model.cfg, sample, model.cfg.feature_names)
    dtype = next(model.parameters()).dtype
    return model(*(t.to(dtype) for t in data.batch(slice(0, 1))[:3]))[0].double().numpy()


def persistence_forecast(history, T: int, mode: str = "last_block") -> np.ndarray:
    """Naive forecasts from load histories of shape (n, P).

    ``last_block`` repeats the final ``T`` observed values (tiled when ``T > P``);
    ``last_value`` repeats the final value.
    """
    h = np.asarray(history, dtype=float)
    if h.ndim == 1:
        h = h[None]
    if mode == "last_value":
        return np.repeat(h[:, -1:], T, axis=1)
    if mode != "last_block":
        raise ValidationError(f"unknown persistence mode {mode!r}")
    P = h.shape[1]
    block = h[:, -min(T, P):]
    reps = -(-T // block.shape[1])
    return np.tile(block, (1, reps))[:, :T]


# --- checkpoints -----------------------------------------------------------

_ZIP_DATE = (1980, 1, 1, 0, 0, 0)


def _write_entry(zf: zipfile.ZipFile, name: str, data: bytes) -> None:
    info = zipfile.ZipInfo(name, date_time=_ZIP_DATE)
    info.compress_type = zipfile.ZIP_DEFLATED
    info.external_attr = 0o644 << 16
    zf.writestr(info, data)


def save_checkpoint(trained: TrainedModel, path: str | Path, extra: dict | None = None) -> str:
    """Write a single-file archive; returns its sha256. Byte-identical for identical models."""
    net = trained.model
    meta = {
        "version": CHECKPOINT_VERSION,
        "model_config": net.cfg.to_dict(),
        "train_config": trained.train_config.to_dict(),
        "seed": net.cfg.seed,
        "trained": bool(net.trained),
        "standardization": trained.standardization.to_dict() if trained.standardization else None,
        "load_name": trained.load_name,
        "log": trained.log,
        "parameters": [],
    }
    if extra:
        meta.update(extra)
    state = net.state_dict()
    path = Path(path)
    with zipfile.ZipFile(path, "w") as zf:
        for name, tensor in state.items():
            buf = io.BytesIO()
            np.lib.format.write_array(buf, tensor.detach().cpu().numpy(), allow_pickle=False)
            _write_entry(zf, f"params/{name}.npy", buf.getvalue())
            meta["parameters"].append(name)
        _write_entry(zf, "meta.json", json.dumps(meta, sort_keys=True, indent=1).encode())
    return file_hash(path)


def load_checkpoint(path: str | Path) -> TrainedModel:
    try:
        with zipfile.ZipFile(path) as zf:
            meta = json.loads(zf.read("meta.json"))
            if meta.get("version") != CHECKPOINT_VERSION:
                raise ValidationError(f"unsupported checkpoint version {meta.get('version')!r}")
            state = {
                name: torch.from_numpy(np.lib.format.read_array(io.BytesIO(zf.read(f"params/{name}.npy"))))
                for name in meta["parameters"]
            }
    except (OSError, zipfile.BadZipFile, KeyError, json.JSONDecodeError) as exc:
        raise IoError(f"cannot read checkpoint {path}: {exc}") from exc
    net = AdditiveForecaster(ModelConfig.from_dict(meta["model_config"]))
    net.load_state_dict(state)
    net.eval()
    net.trained = bool(meta["trained"])
    stats = meta.get("standardization")
    return TrainedModel(
        model=net,
        train_config=TrainConfig(**meta["train_config"]),
        log=meta.get("log", []),
        standardization=Standardization.from_dict(stats) if stats else None,
        load_name=meta.get("load_name", "load"),
    )


def read_checkpoint_meta(path: str | Path) -> dict:
    try:
        with zipfile.ZipFile(path) as zf:
            return json.loads(zf.read("meta.json"))
    except (OSError, zipfile.BadZipFile, KeyError, json.JSONDecodeError) as exc:
        raise IoError(f"cannot read checkpoint {path}: {exc}") from exc


def file_hash(path: str | Path) -> str:
    return hashlib.sha256(Path(path).read_bytes()).hexdigest()


def parameter_hash(model: nn.Module) -> str:
    h = hashlib.sha256()
    for name, tensor in model.state_dict().items():
        h.update(name.encode())
        h.update(tensor.detach().cpu().numpy().tobytes())
    return h.hexdigest()[:16]
