"""Panel regression with interactive effects: PC versus efficient WPC.

Run: python demos/04_panel_regression.py
"""

from __future__ import annotations

from wpc import IterationConfig, pc_panel_fit, rank_criteria, wpc_panel_fit
from wpc.sim import gen_design2

# %% Regressors load on the factors, so pooled OLS would be inconsistent.
p, truth = gen_design2(N=150, T=100, beta=(1.0, 3.0), seed=11)

# %% Choose the number of factors with both criteria.
table = rank_criteria(p, k_bar=6)
for k, s2, cp, ic in zip(table["k"], table["sigma2"], table["CP"], table["IC"]):
    print(f"k={k} sigma2={s2:.4f} CP={cp:.4f} IC={ic:.4f}")

# %% Fit with the true r = 2.
cfg = IterationConfig(r=2)
pc = pc_panel_fit(p, cfg)
wpc = wpc_panel_fit(p, cfg, initial=pc)
for fit in (pc, wpc):
    lo, hi = fit.conf_int().T
    print(f"{fit.method:3s} beta={fit.beta.round(4)} se={fit.se.round(4)} iterations={fit.iterations}")
    print("     95% CI", [(round(float(a), 3), round(float(b), 3)) for a, b in zip(lo, hi)])
