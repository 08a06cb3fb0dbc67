"""Independent reference implementations used as test oracles.

Everything here is written from the model definitions with plain loops,
``math`` and ``scipy.integrate.quad``; nothing is imported from the package
except data containers.
"""
import math

import numpy as np
from scipy import integrate, optimize


def expit(u):
    return 1.0 / (1.0 + math.exp(-u)) if u >= 0 else math.exp(u) / (1.0 + math.exp(u))


def binom_pmf(y, m, s):
    return math.comb(m, y) * s ** y * (1 - s) ** (m - y)


def binom_dpmf(y, m, s):
    """d/ds of the binomial pmf."""
    a = y * s ** (y - 1) * (1 - s) ** (m - y) if y > 0 else 0.0
    b = (m - y) * s ** y * (1 - s) ** (m - y - 1) if y < m else 0.0
    return math.comb(m, y) * (a - b)


def poisson_pmf(y, lam):
    return math.exp(y * math.log(lam) - lam - math.lgamma(y + 1))


def poisson_dpmf(y, lam):
    return poisson_pmf(y, lam) * (y / lam - 1.0)


def support(family_name, m, s):
    """Support points carrying all but ~1e-16 of the mass."""
    if family_name == "binomial":
        return range(m + 1)
    top = int(s + 40 * math.sqrt(s) + 40)
    return range(top)


def pmf(family_name, m, y, s):
    return binom_pmf(y, m, s) if family_name == "binomial" else poisson_pmf(y, s)


def dpmf(family_name, m, y, s):
    return binom_dpmf(y, m, s) if family_name == "binomial" else poisson_dpmf(y, s)


def half_deviance(family_name, m, y, s):
    """``ln f(y, saturated) - ln f(y, s)``."""
    if family_name == "binomial":
        out = 0.0
        if y > 0:
            out += y * math.log(y / (m * s))
        if y < m:
            out += (m - y) * math.log((m - y) / (m * (1 - s)))
        return max(out, 0.0)
    out = s - y
    if y > 0:
        out += y * math.log(y / s)
    return max(out, 0.0)


def ch_phi(d, c=0.5):
    if d <= c:
        return d * math.exp(-math.sqrt(c))
    rc, rd = math.sqrt(c), math.sqrt(d)
    return -2 * (1 + rd) * math.exp(-rd) + (2 * (1 + rc) + c) * math.exp(-rc)


def ch_dphi(d, c=0.5):
    return math.exp(-math.sqrt(max(d, c)))


def mod_G_deriv(family_name, m, s, c=0.5):
    """``G'(s) = sum_y phi'(d(y, s)) df(y, s)/ds``: forced by Fisher consistency."""
    return sum(ch_dphi(half_deviance(family_name, m, y, s), c) * dpmf(family_name, m, y, s)
               for y in support(family_name, m, s))


def huber(x, c):
    return max(-c, min(c, x))


def variance(family_name, m, s):
    return m * s * (1 - s) if family_name == "binomial" else s


def mean(family_name, m, s):
    return m * s if family_name == "binomial" else s


def rql_nu(family_name, m, y, s, c=1.2):
    v = variance(family_name, m, s)
    return huber((y - mean(family_name, m, s)) / math.sqrt(v), c) / math.sqrt(v)


def rql_G_deriv(family_name, m, s, c=1.2):
    """``G'(s) = -E_s nu(y, s)``."""
    return -sum(pmf(family_name, m, y, s) * rql_nu(family_name, m, y, s, c)
                for y in support(family_name, m, s))


def _quad(f, a, b, points=()):
    """Integral of ``f`` from ``a`` to ``b``, split at the given kinks."""
    lo, hi = min(a, b), max(a, b)
    cuts = [lo] + sorted(p for p in points if lo < p < hi) + [hi]
    val = sum(integrate.quad(f, u, v, epsabs=1e-14, epsrel=1e-13, limit=200)[0]
              for u, v in zip(cuts, cuts[1:]))
    return val if b >= a else -val


def _roots(g, lo, hi, n=400):
    """Sign changes of ``g`` on a fine grid, polished by Brent's method."""
    xs = np.linspace(lo, hi, n)
    gs = [g(v) for v in xs]
    return [optimize.brentq(g, xs[i], xs[i + 1], xtol=1e-15)
            for i in range(n - 1) if gs[i] * gs[i + 1] < 0]


def rql_kinks(family_name, m, ys, c, lo, hi):
    """Mean values where ``|r(y, s)| = c`` for some ``y`` in ``ys``."""
    out = []
    for y in ys:
        out += _roots(lambda v: abs(y - mean(family_name, m, v)) / math.sqrt(variance(family_name, m, v)) - c,
                      lo, hi)
    return out


def mod_kinks(family_name, m, ys, c, lo, hi):
    """Mean values where the half deviance of some ``y`` in ``ys`` equals ``c``."""
    out = []
    for y in ys:
        out += _roots(lambda v: half_deviance(family_name, m, y, v) - c, lo, hi)
    return out


def _range(family_name, a, b):
    lo, hi = min(a, b), max(a, b)
    return max(lo, 1e-9), (min(hi, 1 - 1e-9) if family_name == "binomial" else hi)


def s_star(family_name):
    return 0.5 if family_name == "binomial" else 1.0


def mod_G(family_name, m, s, c=0.5):
    a = s_star(family_name)
    lo, hi = _range(family_name, a, s)
    ks = mod_kinks(family_name, m, support(family_name, m, hi), c, lo, hi)
    return _quad(lambda v: mod_G_deriv(family_name, m, v, c), a, s, ks)


def rql_G(family_name, m, s, c=1.2):
    a = s_star(family_name)
    lo, hi = _range(family_name, a, s)
    ks = rql_kinks(family_name, m, support(family_name, m, hi), c, lo, hi)
    return _quad(lambda v: rql_G_deriv(family_name, m, v, c), a, s, ks)


def mod_rho(family_name, m, y, s, c=0.5):
    return ch_phi(half_deviance(family_name, m, y, s), c) + mod_G(family_name, m, s, c)


def rql_rho(family_name, m, y, s, c=1.2):
    s0 = y / m if family_name == "binomial" else float(y)
    # at a boundary root (y = 0 or m) the integrand has an integrable singularity
    lo, hi = _range(family_name, s0, s)
    integral = _quad(lambda v: rql_nu(family_name, m, y, v, c), s0, s, rql_kinks(family_name, m, [y], c, lo, hi))
    return -(integral + rql_G(family_name, m, s, c))


# -- local fit and profile oracles ---------------------------------------------

def triangular_weights(t0, t, h):
    k = np.maximum(0.0, 1.0 - np.abs((t0 - np.asarray(t)) / h))
    return k / k.sum()


def local_qal_bernoulli(y, off, w):
    """Root of ``sum w (y - H(off + a)) = 0`` by Brent's method."""
    def g(a):
        return sum(wi * (yi - expit(oi + a)) for yi, oi, wi in zip(y, off, w))
    return optimize.brentq(g, -40.0, 40.0, xtol=1e-14, maxiter=500)


def profile_qal_irls(y, x, t, h, beta0=0.0, iters=200, tol=1e-12):
    """Alternating fit of a logistic partially linear model (classical quasi-likelihood).

    Alternates local Newton steps for ``eta(t_j)`` with a Fisher-scoring step
    for ``beta`` that uses ``z = x + d eta / d beta``.  Bernoulli responses,
    triangular kernel, scalar ``x``.
    """
    y, x, t = (np.asarray(v, dtype=float) for v in (y, x, t))
    tq = np.unique(t)
    W = np.array([triangular_weights(v, t, h) for v in tq])
    idx = np.searchsorted(tq, t)
    beta = beta0
    eta = np.zeros(len(tq))
    for _ in range(iters):
        for _ in range(50):
            mu = 1 / (1 + np.exp(-(x[None, :] * beta + eta[:, None])))
            g = np.sum(W * (y[None, :] - mu), axis=1)
            hdiag = np.sum(W * mu * (1 - mu), axis=1)
            step = g / hdiag
            eta = eta + step
            if np.max(np.abs(step)) < 1e-14:
                break
        mu = 1 / (1 + np.exp(-(x[None, :] * beta + eta[:, None])))
        v = mu * (1 - mu)
        deta = -np.sum(W * v * x[None, :], axis=1) / np.sum(W * v, axis=1)
        mu_i = mu[idx, np.arange(len(y))]
        z = x + deta[idx]
        step = np.sum((y - mu_i) * z) / np.sum(mu_i * (1 - mu_i) * z * z)
        beta += step
        if abs(step) < tol:
            break
    return beta


def qal_sandwich_oracle(beta, y, x, t, h):
    """``A``, ``Sigma`` of the Bernoulli classical quasi-likelihood profile fit at ``beta``."""
    y, x, t = (np.asarray(v, dtype=float) for v in (y, x, t))
    n = len(y)
    A = S = 0.0
    for i in range(n):
        w = triangular_weights(t[i], t, h)
        a = local_qal_bernoulli(y, beta * x, w)
        mu_all = 1 / (1 + np.exp(-(beta * x + a)))
        v_all = mu_all * (1 - mu_all)
        deta = -np.sum(w * v_all * x) / np.sum(w * v_all)
        z = x[i] + deta
        mu = mu_all[i]
        A += mu * (1 - mu) * z * z
        S += (y[i] - mu) ** 2 * z * z
    return A / n, S / n


def truncated_bvn_corr(rho, a, b):
    """Correlation of ``(x, z)`` standard bivariate normal given ``a <= z <= b``."""
    phi = lambda z: math.exp(-z * z / 2) / math.sqrt(2 * math.pi)
    mass = integrate.quad(phi, a, b)[0]
    m1 = integrate.quad(lambda z: z * phi(z), a, b)[0] / mass
    m2 = integrate.quad(lambda z: z * z * phi(z), a, b)[0] / mass
    v = m2 - m1 * m1
    return rho * math.sqrt(v) / math.sqrt(rho * rho * v + 1 - rho * rho)
