"""
Finding the time scales of a load series
========================================

A lag-similarity scan picks the periods that repeat most strongly, and
each period becomes a moving-average kernel for the decomposition.
"""

import numpy as np

from loadlens import bundled_synthetic_spec, decompose_multiscale, generate_synthetic, split, standardize
from loadlens.similarity import recommend_kernels, similarity_profile

# Four thousand hours of synthetic load with 12 h and 24 h cycles.
ds = generate_synthetic(bundled_synthetic_spec(seed=0))
print(ds.M, "hours, features:", ds.feature_names)

# Only the training part is scanned, in standardized units.
train = standardize(split(ds)[0])

# Row i, column j: cosine similarity of the 96 h window at i with the one j + 1 hours later.
profile = similarity_profile(train.load, P=96, W=768)
print("similarity matrix", profile.rows.shape)

mean = profile.mean_by_lag
for lag in (1, 6, 12, 18, 24, 48, 168):
    print(f"  lag {lag:>3} h  mean similarity {mean[lag - 1]:+.3f}")

# The two strongest local maxima. Even periods get the next odd kernel.
rec = recommend_kernels(profile, N=2)
print("periods", rec.periods, "-> kernels", rec.kernel_sizes)

# Each kernel splits the series into a smooth trend and what is left over.
dec = decompose_multiscale(train.load[:240], rec.kernel_sizes)
for k, trend, resid in zip(dec.kernels, dec.trends, dec.residuals):
    print(f"  kernel {k:>2}: trend std {trend.std():.3f}, residual std {resid.std():.3f}")
assert np.allclose(dec.trends + dec.residuals, train.load[:240])

# With matplotlib installed, the scan can be drawn:
#   from loadlens.similarity import emit_similarity_heatmap
#   emit_similarity_heatmap(profile, "profile.json", image=True)
