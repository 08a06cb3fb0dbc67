"""Exponential families and link functions.

The mean parameter ``s`` of a family is the success probability for the
binomial and the mean for the Poisson.  Losses are evaluated on the link
scale ``u`` with ``s = H(u)``; :meth:`Family.state` collects everything that
depends on ``u`` only, computed in a numerically stable way.
"""
from dataclasses import dataclass

import numpy as np
from scipy import special, stats

from .errors import DegenerateVarianceError, DomainError, PrecisionError

# Poisson series are truncated where the upper tail drops below this mass.
POISSON_TAIL = 1e-12

# Link-scale clamp; keeps exp() finite and variances away from underflow.
U_CLAMP = 700.0


@dataclass(frozen=True)
class Logit:
    """Logistic link, ``H(u) = 1 / (1 + exp(-u))``."""

    name = "logit"

    def H(self, u):
        return special.expit(u)

    def dH(self, u):
        return special.expit(u) * special.expit(-u)

    def d2H(self, u):
        s, sc = special.expit(u), special.expit(-u)
        return s * sc * (sc - s)

    def inverse(self, mu):
        mu = np.asarray(mu, dtype=float)
        if np.any((mu <= 0) | (mu >= 1)):
            raise DomainError("logit inverse needs 0 < mu < 1")
        return special.logit(mu)


@dataclass(frozen=True)
class Log:
    """Log link, ``H(u) = exp(u)``."""

    name = "log"

    def H(self, u):
        return np.exp(u)

    def dH(self, u):
        return np.exp(u)

    def d2H(self, u):
        return np.exp(u)

    def inverse(self, mu):
        mu = np.asarray(mu, dtype=float)
        if np.any(mu <= 0):
            raise DomainError("log inverse needs mu > 0")
        return np.log(mu)


@dataclass
class MeanState:
    """Quantities that depend on the linear predictor only.

    ``mu`` is the response mean, ``var`` its variance, ``dmu`` the derivative
    of ``mu`` in ``u`` and ``q = var_u / var``.  For canonical links
    ``dmu == var``.
    """

    u: np.ndarray
    s: np.ndarray
    sc: np.ndarray
    log_s: np.ndarray
    log_sc: np.ndarray
    mu: np.ndarray
    var: np.ndarray
    dH: np.ndarray
    d2H: np.ndarray
    q: np.ndarray


class Family:
    """Common interface of the response families."""

    canonical_link = None
    s_star = None

    def state(self, u):
        raise NotImplementedError

    def check_support(self, y):
        raise NotImplementedError

    def check_mean(self, s):
        raise NotImplementedError

    def density(self, y, s):
        """Density ``f(y, s)``."""
        y = self.check_support(y)
        s = self.check_mean(s)
        return np.exp(self._logf_s(y, s))

    def density_ds(self, y, s):
        """Partial derivative ``f'(y, s) = df/ds``."""
        y = self.check_support(y)
        s = self.check_mean(s)
        return np.exp(self._logf_s(y, s)) * self._score_s(y, s)

    def pearson_residual(self, y, mu):
        """``(y - mu) / sqrt(V(mu))`` with ``mu`` on the response scale."""
        y = np.asarray(y, dtype=float)
        v = self.variance(mu)
        if np.any(v <= 0):
            raise DegenerateVarianceError(f"V(mu) <= 0 for mu={mu!r}")
        return (y - np.asarray(mu, dtype=float)) / np.sqrt(v)

    def support_table(self, st):
        """Support points and densities for exact expectations.

        Returns ``(ys, f)`` with ``ys`` of shape ``(K,)`` and ``f`` of shape
        ``st.u.shape + (K,)``.
        """
        raise NotImplementedError

    def half_deviance(self, y, st):
        """``-ln f(y, s) + A(y)`` with ``A(y)`` the saturated log-density."""
        raise NotImplementedError

    def resid(self, y, st):
        """Pearson residual evaluated on a :class:`MeanState`."""
        return (y - st.mu) / np.sqrt(st.var)

    def saturated_mean(self, y):
        """Mean parameter at which the quasi-score of ``y`` vanishes."""
        raise NotImplementedError


@dataclass(frozen=True)
class Binomial(Family):
    """Binomial counts out of ``trials`` with success probability ``s``."""

    trials: int = 1

    canonical_link = Logit()
    s_star = 0.5

    def __post_init__(self):
        if int(self.trials) != self.trials or self.trials < 1:
            raise DomainError("trials must be a positive integer")

    @property
    def support_description(self):
        return f"integers 0..{self.trials}"

    def check_support(self, y):
        y = np.asarray(y, dtype=float)
        bad = (y < 0) | (y > self.trials) | (y != np.round(y)) | ~np.isfinite(y)
        if np.any(bad):
            raise DomainError(f"binomial({self.trials}) response outside support: {y[bad]!r}")
        return y

    def check_mean(self, s):
        s = np.asarray(s, dtype=float)
        if np.any(~((s > 0) & (s < 1))):
            raise DomainError("binomial mean parameter must lie in (0, 1)")
        return s

    def variance(self, mu):
        mu = np.asarray(mu, dtype=float)
        return mu * (1.0 - mu / self.trials)

    def _log_choose(self, y):
        m = self.trials
        return special.gammaln(m + 1) - special.gammaln(y + 1) - special.gammaln(m - y + 1)

    @property
    def _tables(self):
        # log C(m, y) and the saturated log-density on the support, for fast lookup
        tab = self.__dict__.get("_tab")
        if tab is None:
            ys = np.arange(self.trials + 1, dtype=float)
            tab = (self._log_choose(ys), self._saturated(ys))
            object.__setattr__(self, "_tab", tab)
        return tab

    def _lookup(self, y, which):
        y = np.asarray(y, dtype=float)
        idx = y.astype(np.intp)
        if np.all(idx == y):
            return self._tables[which][idx]
        return (self._log_choose, self._saturated)[which](y)

    def _logf_s(self, y, s):
        m = self.trials
        return self._log_choose(y) + special.xlogy(y, s) + special.xlog1py(m - y, -s)

    def _score_s(self, y, s):
        return (y - self.trials * s) / (s * (1.0 - s))

    def state(self, u):
        u = np.clip(np.asarray(u, dtype=float), -U_CLAMP, U_CLAMP)
        m = self.trials
        e = np.exp(-np.abs(u))
        big = 1.0 / (1.0 + e)
        small = e * big
        pos = u >= 0
        s = np.where(pos, big, small)
        sc = np.where(pos, small, big)
        l1p = np.log1p(e)
        ssc = s * sc
        return MeanState(
            u=u, s=s, sc=sc,
            log_s=-(np.maximum(-u, 0.0) + l1p), log_sc=-(np.maximum(u, 0.0) + l1p),
            mu=m * s, var=m * ssc, dH=ssc, d2H=ssc * (sc - s), q=sc - s,
        )

    def support_table(self, st):
        ys = np.arange(self.trials + 1, dtype=float)
        lf = (self._tables[0] + ys * st.log_s[..., None]
              + (self.trials - ys) * st.log_sc[..., None])
        return ys, np.exp(lf)

    def _saturated(self, y):
        m = self.trials
        return (self._log_choose(y) + special.xlogy(y, y / m)
                + special.xlogy(m - y, (m - y) / m))

    def saturated_log_density(self, y):
        return self._lookup(y, 1)

    def half_deviance(self, y, st):
        # log C(m, y) cancels between the saturated and fitted log-densities
        m = self.trials
        y = np.asarray(y, dtype=float)
        sat = self._lookup(y, 1) - self._lookup(y, 0)
        return np.maximum(sat - y * st.log_s - (m - y) * st.log_sc, 0.0)

    def saturated_mean(self, y):
        return np.asarray(y, dtype=float) / self.trials


@dataclass(frozen=True)
class Poisson(Family):
    """Poisson counts with mean ``s``."""

    canonical_link = Log()
    s_star = 1.0

    @property
    def support_description(self):
        return "nonnegative integers"

    def check_support(self, y):
        y = np.asarray(y, dtype=float)
        bad = (y < 0) | (y != np.round(y)) | ~np.isfinite(y)
        if np.any(bad):
            raise DomainError(f"Poisson response outside support: {y[bad]!r}")
        return y

    def check_mean(self, s):
        s = np.asarray(s, dtype=float)
        if np.any(~(s > 0) | ~np.isfinite(s)):
            raise DomainError("Poisson mean must be positive and finite")
        return s

    def variance(self, mu):
        return np.asarray(mu, dtype=float).copy()

    def _logf_s(self, y, s):
        return special.xlogy(y, s) - s - special.gammaln(y + 1)

    def _score_s(self, y, s):
        return (y - s) / s

    def state(self, u):
        u = np.clip(np.asarray(u, dtype=float), -U_CLAMP, U_CLAMP)
        s = np.exp(u)
        return MeanState(
            u=u, s=s, sc=np.ones_like(s), log_s=u, log_sc=np.zeros_like(s),
            mu=s, var=s, dH=s, d2H=s, q=np.ones_like(s),
        )

    def support_table(self, st):
        ys = np.arange(poisson_cutoff(np.max(st.s, initial=0.0)) + 1, dtype=float)
        lf = ys * st.log_s[..., None] - st.s[..., None] - special.gammaln(ys + 1)
        return ys, np.exp(lf)

    def saturated_log_density(self, y):
        return special.xlogy(y, y) - y - special.gammaln(y + 1)

    def half_deviance(self, y, st):
        return np.maximum(special.xlogy(y, y) - y - y * st.log_s + st.s, 0.0)

    def saturated_mean(self, y):
        return np.asarray(y, dtype=float)


def poisson_cutoff(smax):
    """Smallest ``Y`` whose Poisson(smax) upper tail ``P(y > Y)`` is below tolerance."""
    y = int(stats.poisson.isf(POISSON_TAIL / 10, smax)) + 1
    if stats.poisson.sf(y, smax) > POISSON_TAIL:
        raise PrecisionError(f"Poisson truncation failed at mean {smax!r}")
    return y


def check_pair(family, link):
    """Only canonical family/link pairs are supported."""
    if link != family.canonical_link:
        raise DomainError(
            f"{type(link).__name__} link is not supported with {type(family).__name__}; "
            f"use {type(family.canonical_link).__name__}")
