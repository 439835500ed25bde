"""
Checking the weights by taking things away
==========================================

A large weight should mean the model needs that input. Retraining without
it and scoring on the same test windows checks that directly.
"""

from loadlens import Experiment, ModelConfig, TrainConfig, bundled_synthetic_spec, generate_synthetic
from loadlens.interpret import PerturbationSpec, run_perturbations

# A shorter series keeps the four trainings quick.
ds = generate_synthetic(bundled_synthetic_spec(seed=1, length=2000))
model = ModelConfig(kernels=(13, 25), P=96, T=24, feature_names=ds.feature_names,
                    d_model=16, n_layers=1, n_heads=2, ff_dim=32, seed=1)
base = Experiment(model, TrainConfig(epochs=20, seed=1), train_stride=2)

specs = [
    PerturbationSpec(drop_features={"temperature"}),
    PerturbationSpec(drop_features={"humidity"}),
    PerturbationSpec(drop_trend_kernels={13}, drop_residual_kernels={13}),
]
report = run_perturbations(ds, base, specs)

print("baseline weights:", {k: round(v, 3) for k, v in report.significance.features.items()})
print(f"baseline test MSE {report.baseline.mse:.4f}")
for label, delta in report.deltas().items():
    print(f"  {label:<18} change in MSE {delta['mse']:+.4f}")
