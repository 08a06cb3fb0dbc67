"""Regenerate ``golden5_fit.csv`` from the independent oracle fit.

Classical quasi-likelihood, Bernoulli responses, triangular kernel, h = 0.4.
"""
import csv
import sys
from pathlib import Path

import numpy as np

HERE = Path(__file__).parent
sys.path.insert(0, str(HERE.parent))
import oracles  # noqa: E402

H = 0.4


def main():
    rows = np.loadtxt(HERE / "golden5.csv", delimiter=",", skiprows=1)
    y, x, t = rows[:, 0], rows[:, 1], rows[:, 2]
    beta = oracles.profile_qal_irls(y, x, t, H)
    eta, obj = [], 0.0
    for i in range(len(y)):
        a = oracles.local_qal_bernoulli(y, beta * x, oracles.triangular_weights(t[i], t, H))
        eta.append(a)
        u = beta * x[i] + a
        obj += -(y[i] * u - np.logaddexp(0.0, u))
    with open(HERE / "golden5_fit.csv", "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["field", "i", "value"])
        w.writerow(["h", "", H])
        w.writerow(["objective", "", format(obj / len(y), ".17g")])
        w.writerow(["beta_hat", 0, format(beta, ".17g")])
        for i, (ti, e) in enumerate(zip(t, eta)):
            w.writerow(["t", i, format(ti, ".17g")])
            w.writerow(["eta", i, format(e, ".17g")])


if __name__ == "__main__":
    main()
