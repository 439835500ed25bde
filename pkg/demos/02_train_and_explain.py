"""
Training the additive forecaster and reading its weights
========================================================

Every branch and every feature encoder contributes to the forecast through
a single trainable weight, so the trained weights say how much each part
was used. Temperature is the only feature that drives this synthetic load.
"""

from loadlens import Experiment, ModelConfig, TrainConfig, bundled_synthetic_spec, fit, generate_synthetic
from loadlens.interpret import extract_significance
from loadlens.pipeline import persistence_score, score

ds = generate_synthetic(bundled_synthetic_spec(seed=0))

# 96 h of history in, 24 h out; two scales, 13 h and 25 h.
model = ModelConfig(kernels=(13, 25), P=96, T=24, feature_names=ds.feature_names,
                    d_model=16, n_layers=1, n_heads=2, ff_dim=32, seed=0)
exp = Experiment(model, TrainConfig(epochs=30, seed=0), train_stride=2)

# Splits 7:2:1 in time order, standardizes with training statistics, trains with early stopping.
trained, data = fit(ds, exp)
print(f"stopped after {len(trained.log)} epochs, best validation MSE "
      f"{min(r['val_mse'] for r in trained.log):.4f}")

# Test error in both unit systems, next to repeating the last 24 h.
reports = score(trained, data.test_windows)
print(f"test MSE {reports['standardized'].mse:.4f} standardized, {reports['actual'].mse:.4f} actual")
print(f"persistence MSE {persistence_score(data.test_windows).mse:.4f} standardized")

# The combination weights.
sig = extract_significance(trained)
print("features:", {k: round(v, 3) for k, v in sig.features.items()})
print("trend branches:", {k: round(v, 3) for k, v in sig.trend.items()})
print("residual branches:", {k: round(v, 3) for k, v in sig.residual.items()})
print("ranking:", sig.ranking())
