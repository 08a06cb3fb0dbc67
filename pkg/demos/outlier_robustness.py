"""Slope estimates on one Study 2 dataset as gross outliers are added.

Run with ``python3 demos/outlier_robustness.py``.
"""
from robust_gplm import BetaSearchSpec, KernelSpec, fit_beta, make_loss
from robust_gplm.simulation import gen_study2

search = BetaSearchSpec(step=0.01, coarse_step=0.25)
kernel = KernelSpec("triangular", 0.1)

print(f"{'outliers':<10}{'QAL':>8}{'RQL':>8}{'MOD':>8}")
for k in range(4):
    data = gen_study2(seed=7, k_outliers=k)
    row = []
    for name in ("qal", "rql", "mod"):
        fit = fit_beta(data, make_loss(name, data.family), kernel, search, covariance=False, warn=False)
        row.append(fit.beta_hat[0])
    print(f"{k:<10}" + "".join(f"{b:8.3f}" for b in row))
print("true slope 2.0")
