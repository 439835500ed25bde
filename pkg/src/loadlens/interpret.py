"""Significance scores of a trained forecaster and ablation checks on them.

The scores are the model's own combination weights: ``gamma`` per auxiliary
feature, ``alpha`` per trend branch and ``beta`` per residual branch, keyed
by kernel size. A perturbation run retrains without selected features or
branches and reports how much the test error moves.
"""

from __future__ import annotations

import json
import logging
from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import Iterable, Sequence

import numpy as np

from .dataset import TimeSeriesDataset
from .errors import KeyMismatch, LoadLensError, NotTrained, ValidationError
from .metrics import MetricsReport
from .model import AdditiveForecaster, TrainedModel, parameter_hash
from .pipeline import Experiment, fit, persistence_score, prepare_for, score
from .similarity import cosine_similarity

log = logging.getLogger(__name__)


@dataclass(frozen=True)
class SignificanceReport:
    features: dict[str, float]
    trend: dict[int, float]
    residual: dict[int, float]
    model: str = ""
    dataset: str = ""

    def ranking(self) -> list[str]:
        """Feature names by decreasing ``|gamma|``."""
        return sorted(self.features, key=lambda n: (-abs(self.features[n]), n))

    def keys(self) -> tuple[tuple[str, ...], tuple[int, ...], tuple[int, ...]]:
        return tuple(sorted(self.features)), tuple(sorted(self.trend)), tuple(sorted(self.residual))

    def vector(self) -> np.ndarray:
        f, t, r = self.keys()
        return np.array([self.features[k] for k in f] + [self.trend[k] for k in t]
                        + [self.residual[k] for k in r], dtype=float)

    def to_dict(self) -> dict:
        return {
            "kind": "significance",
            "features": dict(self.features),
            "trend": {str(k): v for k, v in self.trend.items()},
            "residual": {str(k): v for k, v in self.residual.items()},
            "model": self.model,
            "dataset": self.dataset,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "SignificanceReport":
        if d.get("kind") != "significance":
            raise ValidationError("not a significance artifact")
        return cls(
            features={k: float(v) for k, v in d["features"].items()},
            trend={int(k): float(v) for k, v in d["trend"].items()},
            residual={int(k): float(v) for k, v in d["residual"].items()},
            model=d.get("model", ""),
            dataset=d.get("dataset", ""),
        )


def extract_significance(model: TrainedModel | AdditiveForecaster, dataset: str = "",
                         require_trained: bool = True) -> SignificanceReport:
    """Read the combination weights; never modifies the model."""
    net = model.model if isinstance(model, TrainedModel) else model
    if require_trained and not net.trained:
        raise NotTrained("model has not been trained")
    cfg = net.cfg

    def values(p):
        return [float(v) for v in p.detach().cpu().double().numpy()]

    return SignificanceReport(
        features=dict(zip(cfg.feature_names, values(net.features.gamma))),
        trend=dict(zip(cfg.trend_kernels, values(net.alpha))),
        residual=dict(zip(cfg.residual_kernels, values(net.beta))),
        model=parameter_hash(net),
        dataset=dataset,
    )


def compare_significance(a: SignificanceReport, b: SignificanceReport) -> float:
    """Cosine similarity of the concatenated (gamma, alpha, beta) vectors."""
    if a.keys() != b.keys():
        raise KeyMismatch(f"reports cover different keys: {a.keys()} vs {b.keys()}")
    return cosine_similarity(a.vector(), b.vector())


def emit_significance_heatmap(report: SignificanceReport, path: str | Path, image: bool = False,
                              extra: dict | None = None) -> list[Path]:
    path = Path(path)
    payload = report.to_dict()
    if extra:
        payload.update(extra)
    path.write_text(json.dumps(payload, indent=2))
    written = [path]
    if image:
        import matplotlib

        matplotlib.use("Agg")
        import matplotlib.pyplot as plt

        f, t, r = report.keys()
        fig, axes = plt.subplots(2, 1, figsize=(7, 3.5))
        feats = np.array([[report.features[k] for k in f]])
        temporal = np.array([[report.trend.get(k, np.nan) for k in t],
                             [report.residual.get(k, np.nan) for k in t]]) if t == r else None
        for ax, data, xt, yt, title in (
            (axes[0], feats, list(f), ["gamma"], "auxiliary features"),
            (axes[1], temporal if temporal is not None else np.array([[report.trend[k] for k in t]]),
             [str(k) for k in t], ["trend", "residual"] if temporal is not None else ["trend"],
             "temporal components (kernel hours)"),
        ):
            if data.size == 0:
                ax.axis("off")
                continue
            lim = float(np.nanmax(np.abs(data))) or 1.0
            im = ax.imshow(data, cmap="coolwarm", vmin=-lim, vmax=lim, aspect="auto")
            ax.set_xticks(range(len(xt)), xt)
            ax.set_yticks(range(len(yt)), yt)
            ax.set_title(title, fontsize=9)
            for (i, j), v in np.ndenumerate(data):
                ax.text(j, i, f"{v:.3f}", ha="center", va="center", fontsize=7)
            fig.colorbar(im, ax=ax)
        fig.tight_layout()
        png = path.with_suffix(".png")
        fig.savefig(png, dpi=100)
        plt.close(fig)
        written.append(png)
    return written


def load_significance(path: str | Path) -> SignificanceReport:
    return SignificanceReport.from_dict(json.loads(Path(path).read_text()))


# --- perturbation -----------------------------------------------------------

@dataclass(frozen=True)
class PerturbationSpec:
    drop_features: frozenset[str] = frozenset()
    drop_trend_kernels: frozenset[int] = frozenset()
    drop_residual_kernels: frozenset[int] = frozenset()
    seed: int | None = None
    name: str | None = None

    def __post_init__(self):
        object.__setattr__(self, "drop_features", frozenset(self.drop_features))
        object.__setattr__(self, "drop_trend_kernels", frozenset(int(k) for k in self.drop_trend_kernels))
        object.__setattr__(self, "drop_residual_kernels", frozenset(int(k) for k in self.drop_residual_kernels))

    @property
    def label(self) -> str:
        if self.name:
            return self.name
        parts = [*sorted(self.drop_features),
                 *(f"T{k}" for k in sorted(self.drop_trend_kernels)),
                 *(f"R{k}" for k in sorted(self.drop_residual_kernels))]
        return "w/o " + ", ".join(parts) if parts else "unchanged"

    def apply(self, exp: Experiment) -> Experiment:
        cfg = exp.model
        for what, dropped, have in (
            ("feature", self.drop_features, set(cfg.feature_names)),
            ("trend kernel", self.drop_trend_kernels, set(cfg.kernels)),
            ("residual kernel", self.drop_residual_kernels, set(cfg.kernels)),
        ):
            unknown = dropped - have
            if unknown:
                raise ValidationError(f"cannot drop unknown {what}(s) {sorted(unknown)}")
        model = replace(
            cfg,
            feature_names=tuple(n for n in cfg.feature_names if n not in self.drop_features),
            drop_trend=tuple(sorted(set(cfg.drop_trend) | self.drop_trend_kernels)),
            drop_residual=tuple(sorted(set(cfg.drop_residual) | self.drop_residual_kernels)),
        )
        exp = replace(exp, model=model)
        return exp.with_seed(self.seed) if self.seed is not None else exp

    def to_dict(self) -> dict:
        return {"name": self.label, "drop_features": sorted(self.drop_features),
                "drop_trend_kernels": sorted(self.drop_trend_kernels),
                "drop_residual_kernels": sorted(self.drop_residual_kernels), "seed": self.seed}

    @classmethod
    def from_dict(cls, d: dict) -> "PerturbationSpec":
        return cls(
            drop_features=frozenset(d.get("drop_features", ())),
            drop_trend_kernels=frozenset(d.get("drop_trend_kernels", ())),
            drop_residual_kernels=frozenset(d.get("drop_residual_kernels", ())),
            seed=d.get("seed"),
            name=d.get("name"),
        )


@dataclass(frozen=True)
class PerturbationRow:
    spec: PerturbationSpec
    metrics: MetricsReport | None
    test_fingerprint: str = ""
    error: str | None = None

    @property
    def failed(self) -> bool:
        return self.metrics is None


@dataclass(frozen=True)
class PerturbationReport:
    baseline: MetricsReport
    rows: tuple[PerturbationRow, ...] = ()
    test_fingerprint: str = ""
    significance: SignificanceReport | None = None  # of the baseline model

    def deltas(self) -> dict[str, dict[str, float] | None]:
        out = {}
        for row in self.rows:
            if row.failed:
                out[row.spec.label] = None
                continue
            m, b = row.metrics, self.baseline
            out[row.spec.label] = {"mse": m.mse - b.mse, "mae": m.mae - b.mae, "rmse": m.rmse - b.rmse}
        return out

    def to_dict(self) -> dict:
        deltas = self.deltas()
        return {
            "kind": "perturbation",
            "test_windows": self.test_fingerprint,
            "baseline": self.baseline.to_dict(),
            "baseline_significance": self.significance.to_dict() if self.significance else None,
            "rows": [
                {
                    "spec": row.spec.to_dict(),
                    "metrics": row.metrics.to_dict() if row.metrics else None,
                    "delta": deltas[row.spec.label],
                    "test_windows": row.test_fingerprint,
                    "error": row.error,
                }
                for row in self.rows
            ],
        }


def run_perturbations(ds: TimeSeriesDataset, base: Experiment,
                      specs: Iterable[PerturbationSpec] = ()) -> PerturbationReport:
    """Train the base experiment and one retrained variant per spec.

    Every row is scored on the same standardized test windows. A row whose
    training fails is recorded with its error and the harness moves on.
    """
    specs = list(specs)
    labels = [s.label for s in specs]
    if len(set(labels)) != len(labels):
        raise ValidationError(f"perturbation labels must be unique: {labels}")
    variants = [spec.apply(base) for spec in specs]  # validate before any training

    data = prepare_for(ds, base)
    baseline, _ = fit(data, base)
    base_metrics = score(baseline, data.test_windows)["standardized"]
    fingerprint = data.test_windows.fingerprint()

    rows = []
    for spec, exp in zip(specs, variants):
        log.info("perturbation %s", spec.label)
        try:
            trained, _ = fit(data, exp)
            rows.append(PerturbationRow(spec, score(trained, data.test_windows)["standardized"],
                                        data.test_windows.fingerprint()))
        except LoadLensError as exc:
            rows.append(PerturbationRow(spec, None, fingerprint, f"{type(exc).__name__}: {exc}"))
    significance = extract_significance(baseline, ds.fingerprint())
    return PerturbationReport(base_metrics, tuple(rows), fingerprint, significance)


def persistence_comparison(trained: TrainedModel, data) -> dict[str, MetricsReport]:
    """Model vs. naive last-block persistence on the same test windows."""
    return {
        "model": score(trained, data.test_windows)["standardized"],
        "persistence": persistence_score(data.test_windows),
    }
