"""Regular, heteroskedastic and efficient WPC on one simulated panel.

Run: python demos/01_factor_estimation.py
"""

from __future__ import annotations

import numpy as np

from wpc import common_components, ewpc_fit, hwpc_fit, pc_fit
from wpc.sim import common_rmse, gen_design1, smallest_canonical_correlation

# %% Draw a two-factor panel with cross-sectionally correlated errors.
truth = gen_design1(N=300, T=150, seed=1)
print("panel shape", truth.Y.shape)

# %% Fit the three estimators and compare them with the truth through
# rotation-invariant measures.
fits = {"PC": pc_fit(truth.Y, 2), "HWPC": hwpc_fit(truth.Y, 2), "EWPC": ewpc_fit(truth.Y, 2)[0]}
for name, est in fits.items():
    cc_l = smallest_canonical_correlation(est.loadings, truth.loadings)
    cc_f = smallest_canonical_correlation(est.factors, truth.factors)
    rmse = common_rmse(common_components(est), truth.common)
    print(f"{name:5s} loadings cc {cc_l:.3f}  factors cc {cc_f:.3f}  RMSE {rmse:.3f}")

# %% The normalization: F'F/T = I and Lambda' W Lambda diagonal.
est = fits["EWPC"]
print("F'F/T =\n", np.round(est.factors.T @ est.factors / est.n_periods, 12))
print("Lambda' W Lambda =\n", np.round(est.weight.quad(est.loadings), 8))
