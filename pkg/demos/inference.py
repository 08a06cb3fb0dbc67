"""Sandwich standard errors, Wald and Lambda tests on a clean Study 3 sample.

Run with ``python3 demos/inference.py``.
"""
import warnings

from robust_gplm import BetaSearchSpec, KernelSpec, fit_beta, lambda_test, make_loss, wald_test
from robust_gplm.simulation import gen_study3

warnings.simplefilter("ignore")
data = gen_study3(seed=1)
loss = make_loss("mod", data.family)
kernel = KernelSpec("triangular", 0.1)
search = BetaSearchSpec(step=0.05, coarse_step=0.25)

fit = fit_beta(data, loss, kernel, search)
print(f"beta_hat {fit.beta_hat[0]:.3f}  se {fit.se[0]:.3f}  (true 2)")
for null in (2.0, 0.0):
    w = wald_test(fit, fit.cov_beta, [0], null)
    centered = BetaSearchSpec(step=0.05, coarse_step=0.25, center=null)
    lam = lambda_test(data, loss, kernel, [0], centered, null_value=null)
    print(f"H0 beta = {null:g}: Wald {w.statistic:.2f} (p {w.p_value:.3f}), "
          f"Lambda {lam.statistic:.2f} (p {lam.p_value:.3f})")
