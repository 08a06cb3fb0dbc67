import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from robust_gplm import Binomial, ClassicalQuasi, ModifiedLikelihood, Poisson, RobustQuasi, make_loss
from robust_gplm.losses import Psi, chi, correction_G, correction_G_deriv, rho
from robust_gplm.scores import BiancoYohai, CrouxHaesbroeck, Huber

import oracles

FAMILIES = [("bernoulli", Binomial(1)), ("binomial10", Binomial(10)), ("poisson", Poisson())]
LOSSES = ["qal", "rql", "mod"]


def s_grid(fam):
    if isinstance(fam, Binomial):
        return np.linspace(0.02, 0.98, 20)
    return np.linspace(0.1, 20.0, 20)


def oracle_name(fam):
    return ("binomial", fam.trials) if isinstance(fam, Binomial) else ("poisson", 1)


@pytest.mark.parametrize("loss_name", LOSSES + ["mod_by"])
@pytest.mark.parametrize("fam_id, fam", FAMILIES)
def test_fisher_consistency(loss_name, fam_id, fam):
    if loss_name == "mod_by":
        loss = ModifiedLikelihood(family=fam, phi=BiancoYohai(0.5))
    else:
        loss = make_loss(loss_name, fam)
    assert np.max(np.abs(loss.expected_psi(s_grid(fam)))) <= 1e-8


def test_fisher_consistency_at_037():
    for name in LOSSES:
        assert abs(make_loss(name, Binomial(1)).expected_psi(0.37)[0]) <= 1e-10


def _kink_near(loss, y, u, e):
    """True when a kink of Psi in u lies within [u - e, u + e]."""
    fam = loss.family
    lo, hi = fam.state(np.array([u - e])), fam.state(np.array([u + e]))
    if isinstance(loss, ModifiedLikelihood):
        c = loss.phi.c
        a, b = fam.half_deviance(y, lo)[0] - c, fam.half_deviance(y, hi)[0] - c
        if a * b <= 0:
            return True
        ys = np.arange(fam.trials + 1) if isinstance(fam, Binomial) else np.arange(60)
        da = fam.half_deviance(ys, lo) - c
        db = fam.half_deviance(ys, hi) - c
        return bool(np.any(da * db <= 0))
    if isinstance(loss, RobustQuasi) and loss.psi_c.bounded:
        c = loss.psi_c.c
        ys = np.arange(fam.trials + 1) if isinstance(fam, Binomial) else np.arange(60)
        ra = np.abs(fam.resid(ys, lo)) - c
        rb = np.abs(fam.resid(ys, hi)) - c
        return bool(np.any(ra * rb <= 0))
    return False


@pytest.mark.parametrize("loss_name", LOSSES)
@pytest.mark.parametrize("fam_id, fam", FAMILIES)
def test_gradient_chain(loss_name, fam_id, fam):
    loss = make_loss(loss_name, fam)
    rng = np.random.default_rng(11)
    e = 1e-5
    checked = 0
    while checked < 100:
        if isinstance(fam, Binomial):
            u = rng.uniform(-5, 5)
            y = float(rng.integers(0, fam.trials + 1))
        else:
            u = rng.uniform(-3, 3)
            y = float(rng.poisson(math.exp(u) + rng.uniform(0, 3)))
        if _kink_near(loss, y, u, 3 * e):
            continue
        fd_rho = (loss.rho(y, u + e) - loss.rho(y, u - e)) / (2 * e)
        fd_psi = (loss.psi(y, u + e) - loss.psi(y, u - e)) / (2 * e)
        assert abs(loss.psi(y, u) - fd_rho) <= 1e-5, (y, u)
        assert abs(loss.chi(y, u) - fd_psi) <= 1e-4, (y, u)
        checked += 1


def test_mod_binomial10_fd_example():
    loss = make_loss("mod", Binomial(10))
    e = 1e-5
    fd = (loss.rho(7, 0.3 + e) - loss.rho(7, 0.3 - e)) / (2 * e)
    assert float(Psi(loss, 7, 0.3)) == pytest.approx(float(fd), rel=1e-6)


@given(y=st.integers(0, 1), u=st.floats(-20, 20))
def test_classical_quasi_is_residual(y, u):
    loss = make_loss("qal", Binomial(1))
    assert float(loss.psi(y, u)) == pytest.approx(-(y - oracles.expit(u)), abs=1e-15)


def test_correction_derivative_examples():
    rql = make_loss("rql", Binomial(1))
    assert abs(float(correction_G_deriv(rql, 0.5))) <= 1e-15
    qal = make_loss("qal", Poisson())
    assert np.all(correction_G_deriv(qal, np.array([0.1, 1.0, 9.0])) == 0)
    assert np.all(correction_G(qal, np.array([0.1, 1.0, 9.0])) == 0)
    mod = make_loss("mod", Binomial(1))
    # G'(0.3) = phi'(d(1, .3)) * 1 + phi'(d(0, .3)) * (-1) for Bernoulli
    hand = math.exp(-math.sqrt(max(-math.log(0.3), 0.5))) - math.exp(-math.sqrt(max(-math.log(0.7), 0.5)))
    assert float(correction_G_deriv(mod, 0.3)) == pytest.approx(hand, abs=1e-14)


@pytest.mark.parametrize("fam_id, fam", FAMILIES)
def test_correction_matches_quad_oracle(fam_id, fam):
    name, m = oracle_name(fam)
    mod, rql = make_loss("mod", fam), make_loss("rql", fam)
    for s in s_grid(fam)[::4]:
        assert float(mod.G_deriv(s)) == pytest.approx(oracles.mod_G_deriv(name, m, s), abs=1e-12)
        assert float(rql.G_deriv(s)) == pytest.approx(oracles.rql_G_deriv(name, m, s), abs=1e-12)
        assert float(mod.G(s)) == pytest.approx(oracles.mod_G(name, m, s), abs=1e-8)
        assert float(rql.G(s)) == pytest.approx(oracles.rql_G(name, m, s), abs=1e-8)


@pytest.mark.parametrize("fam_id, fam", FAMILIES)
def test_rho_matches_oracle(fam_id, fam):
    name, m = oracle_name(fam)
    mod, rql = make_loss("mod", fam), make_loss("rql", fam)
    ys = [0, 1] if m == 1 and name == "binomial" else [0, 3, 10] if name == "binomial" else [0, 2, 9]
    for s in s_grid(fam)[1::6]:
        u = float(fam.canonical_link.inverse(s))
        for y in ys:
            assert float(rho(mod, y, u)) == pytest.approx(oracles.mod_rho(name, m, y, s), abs=1e-8)
            assert float(rho(rql, y, u)) == pytest.approx(oracles.rql_rho(name, m, y, s), abs=1e-8)


def test_closed_form_G_agrees_with_quadrature():
    loss = make_loss("mod", Binomial(1))
    for s in np.linspace(0.01, 0.99, 15):
        assert abs(float(loss.G(s)) - loss.G_quadrature(s)) <= 1e-8


@pytest.mark.parametrize("fam_id, fam", FAMILIES[1:])
def test_tabulated_G_agrees_with_quadrature(fam_id, fam):
    loss = make_loss("mod", fam)
    for s in s_grid(fam)[::3]:
        assert abs(float(loss.G(s)) - loss.G_quadrature(s)) <= 1e-8
    rql = make_loss("rql", fam)
    for s in s_grid(fam)[1::5]:
        assert abs(float(rql.G(s)) - rql.G_quadrature(s)) <= 1e-8


@pytest.mark.parametrize("m", [1, 10])
def test_bounded_losses_on_grid(m):
    fam = Binomial(m)
    ys = np.arange(m + 1, dtype=float)
    u = np.linspace(-20, 20, 10_000 // (m + 1) + 1)
    Y, U = np.meshgrid(ys, u)
    rql = make_loss("rql", fam)
    c = rql.psi_c.c
    assert np.max(np.abs(rql.rho(Y, U))) <= 2 * c * math.pi / math.sqrt(m)
    assert np.max(np.abs(rql.psi(Y, U))) <= c / math.sqrt(m) + 1e-12
    mod = make_loss("mod", fam)
    phi = mod.phi
    assert np.max(np.abs(mod.rho(Y, U))) <= phi.sup + phi.deriv_sup * math.sqrt(m) * math.pi / 2
    assert np.max(np.abs(mod.psi(Y, U))) <= phi.deriv_sup * (m + math.sqrt(m) / 2)


def test_classical_loss_is_unbounded():
    qal = make_loss("qal", Binomial(1))
    assert not qal.bounded
    assert abs(float(qal.rho(0, 40.0))) > 30


def test_make_loss_names():
    assert isinstance(make_loss("QAL"), ClassicalQuasi)
    assert isinstance(make_loss("rql"), RobustQuasi)
    assert make_loss("rql", c=2.0).psi_c == Huber(2.0)
    assert make_loss("mod", c=1.0).phi == CrouxHaesbroeck(1.0)
    with pytest.raises(ValueError, match="valid names"):
        make_loss("huber")


@settings(max_examples=30, deadline=None)
@given(u=st.floats(-8, 8), y=st.integers(0, 1))
def test_functional_wrappers(u, y):
    loss = make_loss("mod", Binomial(1))
    assert rho(loss, y, u) == loss.rho(y, u)
    assert Psi(loss, y, u) == loss.psi(y, u)
    assert chi(loss, y, u) == loss.chi(y, u)
