import math

import numpy as np
import pytest
from scipy import special

from robust_gplm import StudySpec, run_monte_carlo
from robust_gplm.errors import GplmError
from robust_gplm.simulation import STUDY2_OUTLIERS, metrics, gen_study1, gen_study2, gen_study3, stream

import oracles


def test_study1_design():
    d = gen_study1(seed=2)
    assert d.n == 100 and d.beta0 == 3.0
    assert set(np.round(d.t, 1)) <= {round(0.1 * k, 1) for k in range(1, 11)}
    assert np.all((d.x >= -1) & (d.x <= 1))
    assert np.all((d.y >= 0) & (d.y <= 10) & (d.y == np.round(d.y)))
    np.testing.assert_allclose(d.eta0, np.exp(2 * d.t) - 4)


def test_study2_outliers():
    d = gen_study2(seed=0, k_outliers=3)
    for i, (x, y) in enumerate(STUDY2_OUTLIERS):
        assert d.x[i, 0] == x and d.y[i] == y
    clean = gen_study2(seed=0, k_outliers=0)
    # outlier rows keep their t draws and the remaining rows are untouched
    np.testing.assert_array_equal(d.t, clean.t)
    np.testing.assert_array_equal(d.x[3:], clean.x[3:])
    with pytest.raises(ValueError):
        gen_study2(k_outliers=4)


def test_study3_truncation_and_support():
    d = gen_study3(seed=4)
    assert np.all((d.t >= 0.25) & (d.t <= 0.75))
    assert set(np.unique(d.y)) <= {0.0, 1.0}
    np.testing.assert_allclose(d.eta0, 2 * np.sin(4 * np.pi * d.t))


def test_study3_truncated_correlation():
    xs, ts = [], []
    for rep in range(100):
        d = gen_study3(seed=8, rep=rep)
        xs.append(d.x[:, 0])
        ts.append(d.t)
    x, t = np.concatenate(xs), np.concatenate(ts)
    r = np.corrcoef(x, t)[0, 1]
    target = oracles.truncated_bvn_corr(1 / math.sqrt(3), -1.5, 1.5)
    se = (1 - target ** 2) / math.sqrt(len(x))
    assert abs(r - target) <= 3 * se


def test_latent_logistic_identity():
    # P(lin + eps >= 0) = H(lin) for a standard logistic eps, at a fixed linear predictor
    lin = 2 * 0.3 + 2 * math.sin(4 * math.pi * 0.4)
    rng = stream(21, 0)
    u = rng.random(10_000)
    hits = (lin + special.logit(u) >= 0).mean()
    p = special.expit(lin)
    assert abs(hits - p) <= 3 * math.sqrt(p * (1 - p) / 10_000)


def test_c3_fraction():
    hit = np.concatenate([gen_study3(seed=1, contamination="C3", rep=r).info["contaminated"] for r in range(100)])
    assert abs(hit.mean() - 0.1) <= 3 * math.sqrt(0.09 / len(hit))


def test_c2_targets_ten_extreme_points():
    d = gen_study3(seed=2, contamination="C2")
    hit = d.info["contaminated"]
    assert hit.sum() == 10
    assert np.all(special.expit(2 * d.x[hit, 0] + d.eta0[hit]) > 0.99)
    base = gen_study3(seed=2, rep=0)
    if d.info["attempt"] == 0:
        np.testing.assert_array_equal(d.y[~hit], base.y[~hit])


def test_contamination_validation():
    with pytest.raises(ValueError):
        gen_study3(contamination="C4")
    with pytest.raises(ValueError):
        StudySpec(study=1, contamination="C1")
    with pytest.raises(ValueError):
        StudySpec(study=2, contamination=4)


def test_generators_deterministic():
    a, b = gen_study3(seed=6, contamination="C1", rep=3), gen_study3(seed=6, contamination="C1", rep=3)
    np.testing.assert_array_equal(a.y, b.y)
    np.testing.assert_array_equal(a.x, b.x)
    assert not np.array_equal(a.x, gen_study3(seed=6, contamination="C1", rep=4).x)


def test_metrics_identities():
    m = metrics([2.0, 2.0, 2.0], 2.0)
    assert (m.bias, m.sd, m.mse) == (0.0, 0.0, 0.0)
    m = metrics([1.5, 2.5, 1.5, 2.5], 2.0, [0.1, 0.3, 0.2, 0.2])
    assert m.bias == 0.0 and m.mse == pytest.approx(0.25)
    assert m.mse_eta == pytest.approx(0.2)
    assert math.isnan(metrics([2.3], 2.0).sd)


def test_single_replication_and_duplicate_estimator():
    spec = StudySpec(study=2, contamination=0, seed=3)
    res = run_monte_carlo(spec, estimators=("mod", "mod"), h=0.3, reps=1)
    a, b = res.rows
    assert a.reps == 1 and math.isnan(a.sd)
    assert a.mean_beta == res.records[0]["beta_hat"]
    assert a.mse == pytest.approx((a.mean_beta - 2.0) ** 2, abs=1e-15)
    assert (a.mean_beta, a.mse, a.mse_eta) == (b.mean_beta, b.mse, b.mse_eta)


def test_monte_carlo_deterministic_and_shared_data():
    spec = StudySpec(study=1, seed=1)
    one = run_monte_carlo(spec, ("qal", "rql"), h=0.3, reps=2)
    two = run_monte_carlo(spec, ("qal", "rql"), h=0.3, reps=2)
    assert one.records_csv() == two.records_csv()
    assert one.summary_csv() == two.summary_csv()
    assert one.records[0]["rep"] == one.records[1]["rep"] == 0


def test_reps_validation():
    with pytest.raises(ValueError):
        run_monte_carlo(StudySpec(study=2), reps=0)


def test_c2_infeasible_raises():
    with pytest.raises(GplmError):
        gen_study3(n=5, contamination="C2", max_attempts=3)
