"""Tour of the four interval constructions on one synthetic regression task.

Run:  python demos/01_prediction_intervals.py
"""

import numpy as np

from coverkit import (
    Dataset,
    RidgeConfig,
    cv_plus,
    full_conformal_ridge_exact,
    jackknife_plus,
    make_folds,
    ridge_algorithm,
    split_conformal,
)

rng = np.random.default_rng(0)
n, d, alpha = 120, 8, 0.1

beta = rng.standard_normal(d)
x = rng.standard_normal((n, d))
y = x @ beta + rng.standard_normal(n)
data = Dataset(x, y)

x_query = rng.standard_normal(d)
y_query = float(x_query @ beta + rng.standard_normal())

ridge = RidgeConfig(penalty=1e-3)
algo = ridge_algorithm(ridge)

print(f"target miscoverage alpha = {alpha}, query label = {y_query:+.3f}\n")

# split conformal: train on half, calibrate the radius on the other half
half = n // 2
split = split_conformal(data.subset(range(half)), data.subset(range(half, n)), algo, alpha)
ps = split.prediction_set(x_query)
print(f"split conformal      {ps.intervals.round(3).tolist()}  width {ps.total_width:.3f}")

# full conformal, computed exactly through the ridge residuals' affine
# structure: no grid, no refit loop
ps = full_conformal_ridge_exact(data, x_query, ridge, alpha)
print(f"full conformal       {ps.intervals.round(3).tolist()}  width {ps.total_width:.3f}")

# jackknife+: n leave-one-out fits
ps = jackknife_plus(data, x_query, algo, alpha)
print(f"jackknife+           {ps.intervals.round(3).tolist()}  width {ps.total_width:.3f}")

# cv+: K fold-deleted fits
folds = make_folds(n, K=6, seed=1)
ps = cv_plus(data, x_query, algo, alpha, folds)
print(f"cv+ (K=6)            {ps.intervals.round(3).tolist()}  width {ps.total_width:.3f}")

print("\nAll four intervals cover the query label:",
      all(y_query in s for s in (
          split.prediction_set(x_query),
          full_conformal_ridge_exact(data, x_query, ridge, alpha),
          jackknife_plus(data, x_query, algo, alpha),
          cv_plus(data, x_query, algo, alpha, folds),
      )))
