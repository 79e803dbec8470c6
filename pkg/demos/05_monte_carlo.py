"""Small Monte Carlo runs in the layout of the simulation tables.

Run: python demos/05_monte_carlo.py   (about a minute on one core)
"""

from __future__ import annotations

from wpc.sim import McConfig, format_table, run_monte_carlo

# %% Design 1: canonical correlations and RMSE of PC, HWPC and EWPC.
cells = [(50, 100), (100, 150)]
reports = [run_monte_carlo(McConfig(design=1, N=N, T=T, replications=20, master_seed=7)) for T, N in cells]
print(format_table(reports))

# %% Design 2: mean and normalized SE of beta for PC and WPC.
reports = [run_monte_carlo(McConfig(design=2, N=N, T=T, replications=20, master_seed=7)) for T, N in cells]
print(format_table(reports))
for r in reports:
    print("var(WPC)/var(PC):", [round(v, 3) for v in r.aggregates["WPC-panel"]["relative_efficiency"]])
