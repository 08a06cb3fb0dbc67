"""Loss functions rho(y, u) for the two-step estimator, with derivatives.

Three families of losses are provided:

* :class:`ModifiedLikelihood` -- a bounded score ``phi`` applied to the
  half deviance ``-ln f(y, s) + ln f(y, y_sat)`` plus a correction ``G(s)``.
* :class:`RobustQuasi` -- the negative integral of a Huberized quasi-score
  ``nu(y, s) = psi_c(r(y, s)) / sqrt(V)`` plus its correction.
* :class:`ClassicalQuasi` -- the unbounded quasi-likelihood (identity psi,
  unit weights, zero correction).

``Psi = d rho / du`` and ``chi = d Psi / du`` are analytic.  The correction
``G`` is determined up to a constant; it is anchored at ``G(s*) = 0`` with
``s* = 0.5`` (binomial) or ``1`` (Poisson).  Its derivative is computed
exactly from finite (or tail-truncated) support sums.  Its value comes from a
closed form where one exists and otherwise from Gauss-Legendre integration
tabulated on a fine link-scale grid (kinks on nodes) and read back through a
cubic Hermite interpolant.
"""
from dataclasses import dataclass, field
import numpy as np
from scipy import special

from .families import Binomial, MeanState, Poisson, check_pair
from .quadrature import HermiteTable, cumulative_gauss_legendre, piecewise_simpson
from .scores import CrouxHaesbroeck, Huber, WeightFn

TABLE_STEP = 0.01

# correction tables depend only on the loss type, family and score; shared across instances
_TABLES = {}
BINOMIAL_RANGE = (-45.0, 45.0)
POISSON_RANGE = (-30.0, 6.0)


def _expand(st):
    """Add a trailing axis to every array of a state (for support sums)."""
    return MeanState(**{k: np.asarray(v)[..., None] for k, v in vars(st).items()})


class LossSpec:
    """Shared machinery of the losses; see the module docstring."""

    name = None
    label = None
    bounded = True

    # -- set up -----------------------------------------------------------
    def _init_common(self):
        if self.link is None:
            object.__setattr__(self, "link", self.family.canonical_link)
        check_pair(self.family, self.link)

    def resolve_weights(self, x):
        """Return ``(w1(x), w2(x))`` with data-driven centers resolved on ``x``."""
        w1 = self.w1.resolve(x)
        w2 = self.w2.resolve(x)
        return w1(x), w2(x)

    def with_weights(self, w1, w2):
        """Copy of the loss with the given weight functions."""
        kw = {f: getattr(self, f) for f in self.__dataclass_fields__}
        kw.update(w1=w1, w2=w2)
        return type(self)(**kw)

    # -- public evaluation ------------------------------------------------
    def rho(self, y, u):
        raise NotImplementedError

    def psi(self, y, u):
        raise NotImplementedError

    def chi(self, y, u):
        raise NotImplementedError

    def G(self, s):
        """Correction term at mean parameter ``s`` (anchored at ``s*``)."""
        s = self.family.check_mean(s)
        return self._G_u(self.link.inverse(s))

    def G_deriv(self, s):
        """Exact ``G'(s)``."""
        s = self.family.check_mean(s)
        st = self.family.state(self.link.inverse(s))
        return self._T(st) / st.dH

    def G_quadrature(self, s, tol=1e-10):
        """``G(s)`` by adaptive Simpson on the link scale, split at kinks."""
        s = float(self.family.check_mean(s))
        u = float(self.link.inverse(s))
        u_star = float(self.link.inverse(self.family.s_star))
        lo, hi = min(u, u_star), max(u, u_star)
        breaks = self._kinks(lo, hi)

        def integrand(v):
            return float(self._T(self.family.state(np.array([v])))[0])

        return piecewise_simpson(integrand, u_star, u, breaks, tol)

    def expected_psi(self, s):
        """``E_s Psi(y, H^{-1}(s))`` by an exact support sum."""
        s = self.family.check_mean(np.atleast_1d(s))
        u = self.link.inverse(s)
        st = self.family.state(u)
        ys, f = self.family.support_table(st)
        return np.sum(f * self.psi(ys, u[..., None]), axis=-1)

    # -- correction term internals ---------------------------------------
    def _T(self, st):
        """``d/du G(H(u))`` by support sums."""
        raise NotImplementedError

    def _T_u(self, st):
        raise NotImplementedError

    def _breakpoints(self, ys):
        """Link-scale points where ``G`` loses smoothness for responses ``ys``."""
        return np.empty(0)

    def _table_range(self):
        return BINOMIAL_RANGE if isinstance(self.family, Binomial) else POISSON_RANGE

    def _kinks(self, lo, hi):
        if isinstance(self.family, Binomial):
            ys = np.arange(self.family.trials + 1, dtype=float)
        else:
            from .families import poisson_cutoff
            ys = np.arange(poisson_cutoff(float(np.exp(min(hi, 50.0)))) + 1, dtype=float)
        k = self._breakpoints(ys)
        k = k[np.isfinite(k)]
        return np.sort(k[(k > lo) & (k < hi)])

    def _G_exact(self, u):
        """``G`` off the table; subclasses may override with a closed form."""
        u_star = float(self.link.inverse(self.family.s_star))
        out = np.empty(np.shape(u))
        flat = np.ravel(u)
        for i, v in enumerate(flat):
            lo, hi = min(v, u_star), max(v, u_star)

            def integrand(w):
                return float(self._T(self.family.state(np.array([w])))[0])

            out.flat[i] = piecewise_simpson(integrand, u_star, v, self._kinks(lo, hi), 1e-11)
        return out

    def _G_nodes(self, nodes):
        base = int(np.searchsorted(nodes, float(self.link.inverse(self.family.s_star))))
        return cumulative_gauss_legendre(lambda v: self._T(self.family.state(v)), nodes, base)

    @property
    def _gtable(self):
        key = (type(self).__name__, self.family, self._score)
        table = _TABLES.get(key)
        if table is None:
            table = _TABLES[key] = self._build_table()
        return table

    def _build_table(self):
        lo, hi = self._table_range()
        kinks = self._kinks(lo, hi)
        if isinstance(self.family, Binomial):
            grid = np.round(np.arange(lo, hi + TABLE_STEP / 2, TABLE_STEP), 10)
        else:
            # kinks crowd together like 1/sqrt(s) at large means; refine accordingly
            pts = [lo]
            while pts[-1] < hi:
                pts.append(pts[-1] + TABLE_STEP / max(1.0, np.exp(pts[-1] / 2) / 2))
            grid = np.array(pts[:-1] + [hi])
        u_star = float(self.link.inverse(self.family.s_star))
        if kinks.size:
            gap = np.min(np.abs(grid[:, None] - kinks[None, :]), axis=1)
            grid = grid[gap > 1e-9]
        nodes = np.unique(np.concatenate([grid, kinks, [u_star]]))
        values = self._G_nodes(nodes)
        slopes = self._T(self.family.state(nodes))
        outside = None if isinstance(self.family, Binomial) else self._G_exact
        return HermiteTable(nodes, values, slopes, outside)

    def _G_u(self, u):
        return self._gtable(u)


# ---------------------------------------------------------------------------
# Modified likelihood
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class ModifiedLikelihood(LossSpec):
    """``rho(y, u) = phi(-ln f(y, H(u)) + A(y)) + G(H(u))``."""

    family: object = field(default_factory=Binomial)
    phi: object = field(default_factory=CrouxHaesbroeck)
    link: object = None
    w1: WeightFn = field(default_factory=WeightFn.median_cauchy)
    w2: WeightFn = field(default_factory=WeightFn.median_cauchy)

    name = "mod"
    label = "MOD"

    @property
    def _score(self):
        return self.phi

    def __post_init__(self):
        self._init_common()

    @property
    def bounded(self):
        return bool(np.isfinite(self.phi.sup))

    def rho(self, y, u):
        st = self.family.state(u)
        d = self.family.half_deviance(np.asarray(y, dtype=float), st)
        return self.phi.value(d) + self._G_u(st.u)

    def psi(self, y, u):
        y = np.asarray(y, dtype=float)
        st = self.family.state(u)
        d = self.family.half_deviance(y, st)
        return -self.phi.deriv(d) * (y - st.mu) + self._T(st)

    def chi(self, y, u):
        y = np.asarray(y, dtype=float)
        st = self.family.state(u)
        d = self.family.half_deviance(y, st)
        e = y - st.mu
        return self.phi.deriv2(d) * e * e + self.phi.deriv(d) * st.var + self._T_u(st)

    def _support_terms(self, st):
        ys, f = self.family.support_table(st)
        se = _expand(st)
        d = self.family.half_deviance(ys, se)
        return f, ys - se.mu, d, se

    def _T(self, st):
        f, e, d, _ = self._support_terms(st)
        return np.sum(f * self.phi.deriv(d) * e, axis=-1)

    def _T_u(self, st):
        f, e, d, se = self._support_terms(st)
        p1, p2 = self.phi.deriv(d), self.phi.deriv2(d)
        return np.sum(f * ((p1 - p2) * e * e - p1 * se.var), axis=-1)

    def _breakpoints(self, ys):
        out = []
        for c in self.phi.kinks():
            out.append(_half_deviance_level(self.family, ys, c))
        return np.concatenate(out) if out else np.empty(0)

    @property
    def _closed_form(self):
        return (isinstance(self.phi, CrouxHaesbroeck) and isinstance(self.family, Binomial)
                and self.family.trials == 1)

    def _G_u(self, u):
        if self._closed_form:
            return _ch_bernoulli_G(self.phi.c, np.asarray(u, dtype=float))
        return self._gtable(u)


def _ch_primitive(c, log_s, s):
    """Antiderivative of ``phi'(-ln s)`` for the Croux-Haesbroeck score."""
    v = np.maximum(np.sqrt(np.maximum(-log_s, 0.0)), np.sqrt(c))
    return s * np.exp(-v) + np.exp(0.25) * np.sqrt(np.pi) / 2 * special.erf(v + 0.5)


def _ch_bernoulli_G(c, u):
    u = np.clip(u, -700.0, 700.0)
    s, sc = special.expit(u), special.expit(-u)
    log_s, log_sc = -np.logaddexp(0.0, -u), -np.logaddexp(0.0, u)
    half = _ch_primitive(c, np.log(0.5), 0.5)
    return _ch_primitive(c, log_s, s) + _ch_primitive(c, log_sc, sc) - 2 * half


def _half_deviance_level(family, ys, level, iters=200):
    """Link-scale solutions of ``half_deviance(y, u) = level`` on both sides of the minimum."""
    lo_lim, hi_lim = (BINOMIAL_RANGE if isinstance(family, Binomial) else POISSON_RANGE)
    lo_lim, hi_lim = lo_lim - 5, hi_lim + 5
    sat = family.saturated_mean(ys)
    with np.errstate(divide="ignore"):
        if isinstance(family, Binomial):
            u0 = special.logit(sat)
        else:
            u0 = np.log(sat)
    u0 = np.clip(u0, lo_lim, hi_lim)

    def g(u):
        return family.half_deviance(ys, family.state(u)) - level

    roots = []
    for a, b in ((np.full_like(ys, lo_lim), u0), (u0, np.full_like(ys, hi_lim))):
        ga, gb = g(a), g(b)
        ok = (ga * gb < 0)
        a, b = a.copy(), b.copy()
        for _ in range(iters):
            m = 0.5 * (a + b)
            gm = g(m)
            left = (ga * gm <= 0)
            b = np.where(left, m, b)
            a = np.where(left, a, m)
            ga = np.where(left, ga, gm)
            if np.all(b - a < 1e-13):
                break
        roots.append(np.where(ok, 0.5 * (a + b), np.nan))
    return np.concatenate(roots)


# ---------------------------------------------------------------------------
# Robust and classical quasi-likelihood
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class RobustQuasi(LossSpec):
    """``rho(y, u) = -[int_{s0}^{H(u)} nu(y, s) ds + G(H(u))]``.

    ``nu(y, s) = psi_c(r(y, s)) / sqrt(V)`` with ``r`` the Pearson residual
    and ``s0`` its root, the saturated mean ``y / m`` (or ``y``).  The
    integral is elementary: logarithms in the central region and
    ``arcsin(sqrt(s))`` (or ``sqrt(s)``) in the clipped tails.
    """

    family: object = field(default_factory=Binomial)
    psi_c: Huber = field(default_factory=Huber)
    link: object = None
    w1: WeightFn = field(default_factory=WeightFn.median_cauchy)
    w2: WeightFn = field(default_factory=WeightFn.median_cauchy)

    name = "rql"
    label = "RQL"

    @property
    def _score(self):
        return self.psi_c

    def __post_init__(self):
        self._init_common()

    @property
    def bounded(self):
        return self.psi_c.bounded

    @property
    def _m(self):
        return self.family.trials if isinstance(self.family, Binomial) else 1

    # elementary pieces ----------------------------------------------------
    def _central(self, y, log_s, log_sc, s):
        if isinstance(self.family, Binomial):
            p = y / self._m
            return p * log_s + (1.0 - p) * log_sc
        return y * log_s - s

    def _central_at(self, y, s):
        if isinstance(self.family, Binomial):
            p = y / self._m
            return special.xlogy(p, s) + special.xlog1py(1.0 - p, -s)
        return special.xlogy(y, s) - s

    def _clipped(self, s, sc):
        c = self.psi_c.c
        if isinstance(self.family, Binomial):
            return 2.0 * c / np.sqrt(self._m) * np.arctan2(np.sqrt(s), np.sqrt(sc))
        return 2.0 * c * np.sqrt(s)

    def _region_bounds(self, y):
        """Mean parameters where the Pearson residual of ``y`` equals ``+c`` and ``-c``."""
        c = self.psi_c.c
        y = np.asarray(y, dtype=float)
        if isinstance(self.family, Binomial):
            m = self._m
            a2 = m * m + c * c * m
            b = 2 * m * y + c * c * m
            disc = c * c * m * (4 * y * (m - y) + c * c * m)
            s_hi = (b + np.sqrt(disc)) / (2 * a2)
            s_lo = y * y / (a2 * s_hi)
        else:
            root = c * np.sqrt(4 * y + c * c)
            s_hi = (2 * y + c * c + root) / 2
            s_lo = y * y / s_hi
        return s_lo, s_hi

    def _P0(self, y):
        return self._central_at(y, self.family.saturated_mean(y))

    def rho(self, y, u):
        y = np.asarray(y, dtype=float)
        st = self.family.state(u)
        val = self._central(y, st.log_s, st.log_sc, st.s)
        if self.bounded:
            c = self.psi_c.c
            r = self.family.resid(y, st)
            s_lo, s_hi = self._region_bounds(y)
            if isinstance(self.family, Binomial):
                clip_lo = self._clipped(s_lo, 1.0 - s_lo)
                clip_hi = self._clipped(s_hi, 1.0 - s_hi)
            else:
                clip_lo, clip_hi = self._clipped(s_lo, None), self._clipped(s_hi, None)
            k_up = self._central_at(y, s_lo) - clip_lo
            k_dn = self._central_at(y, s_hi) + clip_hi
            clip = self._clipped(st.s, st.sc)
            val = np.where(r > c, clip + k_up, np.where(r < -c, k_dn - clip, val))
        return -(val - self._P0(y) + self._G_u(st.u))

    def _k(self, st):
        return st.dH / np.sqrt(st.var)

    def _support_terms(self, st):
        ys, f = self.family.support_table(st)
        se = _expand(st)
        return f, ys, se, (ys - se.mu) / np.sqrt(se.var)

    def _T(self, st):
        f, _, _, r = self._support_terms(st)
        return -self._k(st) * np.sum(f * self.psi_c(r), axis=-1)

    def _expected_psi_and_u(self, st):
        f, ys, se, r = self._support_terms(st)
        e_psi = np.sum(f * self.psi_c(r), axis=-1)
        sv = np.sqrt(se.var)
        d_e_psi = np.sum(f * ((ys - se.mu) * self.psi_c(r)
                              + self.psi_c.deriv(r) * (-sv - 0.5 * se.q * r)), axis=-1)
        return e_psi, d_e_psi

    def _T_u(self, st):
        e_psi, d_e_psi = self._expected_psi_and_u(st)
        k = self._k(st)
        return -(d_e_psi * k + e_psi * 0.5 * st.q * k)

    def psi(self, y, u):
        y = np.asarray(y, dtype=float)
        st = self.family.state(u)
        r = self.family.resid(y, st)
        return -self.psi_c(r) * self._k(st) - self._T(st)

    def chi(self, y, u):
        y = np.asarray(y, dtype=float)
        st = self.family.state(u)
        r = self.family.resid(y, st)
        k = self._k(st)
        sv = np.sqrt(st.var)
        r_u = -sv - 0.5 * st.q * r
        e_psi, d_e_psi = self._expected_psi_and_u(st)
        return -(self.psi_c.deriv(r) * r_u - d_e_psi) * k - (self.psi_c(r) - e_psi) * 0.5 * st.q * k

    # correction term ---------------------------------------------------
    def _breakpoints(self, ys):
        s_lo, s_hi = self._region_bounds(ys)
        pts = np.concatenate([s_lo[s_lo > 0], s_hi])
        if isinstance(self.family, Binomial):
            pts = pts[pts < 1]
        return self.link.inverse(pts)

    def _Qtilde(self, s, ys):
        """Antiderivative of ``f(y, s) nu(y, s)`` in ``s``, offset so it vanishes at ``s_lo(y)``.

        ``s`` has shape ``(N, 1)`` and ``ys`` shape ``(K,)``.
        """
        c = self.psi_c.c
        s_lo, s_hi = self._region_bounds(ys)
        fam = self.family
        if isinstance(fam, Binomial):
            m = self._m
            lc = fam._log_choose(ys)
            f = np.exp(lc + special.xlogy(ys, s) + special.xlog1py(m - ys, -s))
            f_lo = np.exp(lc + special.xlogy(ys, s_lo) + special.xlog1py(m - ys, -s_lo))
            f_hi = np.exp(lc + special.xlogy(ys, s_hi) + special.xlog1py(m - ys, -s_hi))
            a, b = ys + 0.5, m - ys + 0.5
            cb = c / np.sqrt(m) * np.exp(lc + special.betaln(a, b))
            up = cb * (special.betainc(a, b, s) - special.betainc(a, b, s_lo))
            dn = -cb * (special.betaincc(a, b, s_hi) - special.betaincc(a, b, s))
            scale = 1.0 / m
        else:
            lg = special.gammaln(ys + 1)
            f = np.exp(special.xlogy(ys, s) - s - lg)
            f_lo = np.exp(special.xlogy(ys, s_lo) - s_lo - lg)
            f_hi = np.exp(special.xlogy(ys, s_hi) - s_hi - lg)
            a = ys + 0.5
            cg = c * np.exp(special.gammaln(a) - lg)
            up = cg * (special.gammainc(a, s) - special.gammainc(a, s_lo))
            dn = -cg * (special.gammaincc(a, s_hi) - special.gammaincc(a, s))
            scale = 1.0
        central = (f - f_lo) * scale
        lower = dn + (f_hi - f_lo) * scale
        return np.where(s < s_lo, up, np.where(s > s_hi, lower, central))

    def _G_exact(self, u):
        """Closed-form ``G`` via incomplete beta / gamma functions."""
        u = np.asarray(u, dtype=float)
        st = self.family.state(u.ravel())
        s = st.s[:, None]
        s_star = self.family.s_star
        if isinstance(self.family, Binomial):
            ys = np.arange(self._m + 1, dtype=float)
        else:
            from .families import poisson_cutoff
            ys = np.arange(poisson_cutoff(max(float(np.max(st.s, initial=0.0)), s_star)) + 1,
                           dtype=float)
        q = self._Qtilde(s, ys) - self._Qtilde(np.array([[s_star]]), ys)
        return (-np.sum(q, axis=-1)).reshape(u.shape)

    def _G_nodes(self, nodes):
        return self._G_exact(nodes)


@dataclass(frozen=True)
class ClassicalQuasi(RobustQuasi):
    """Quasi-likelihood with identity score and unit weights (non-robust)."""

    psi_c: Huber = field(default_factory=lambda: Huber(np.inf))
    w1: WeightFn = field(default_factory=WeightFn.unit)
    w2: WeightFn = field(default_factory=WeightFn.unit)

    name = "qal"
    label = "QAL"

    def __post_init__(self):
        if self.psi_c.bounded:
            raise ValueError("ClassicalQuasi uses the identity score")
        self._init_common()

    def _T(self, st):
        return np.zeros_like(st.s)

    def _T_u(self, st):
        return np.zeros_like(st.s)

    def _G_u(self, u):
        return np.zeros(np.shape(u))

    def G_quadrature(self, s, tol=1e-10):
        self.family.check_mean(s)
        return 0.0

    def psi(self, y, u):
        y = np.asarray(y, dtype=float)
        st = self.family.state(u)
        return -(y - st.mu) * st.dH / st.var

    def chi(self, y, u):
        st = self.family.state(u)
        return np.broadcast_to(st.dH, np.broadcast_shapes(np.shape(y), st.s.shape)).copy()


LOSS_NAMES = ("qal", "rql", "mod")


def make_loss(name, family=None, c=None):
    """Build a loss by its short name (``qal``, ``rql`` or ``mod``) with the default tuning."""
    family = family if family is not None else Binomial(1)
    key = str(name).lower()
    if key == "qal":
        return ClassicalQuasi(family=family)
    if key == "rql":
        return RobustQuasi(family=family, psi_c=Huber(1.2 if c is None else c))
    if key == "mod":
        return ModifiedLikelihood(family=family, phi=CrouxHaesbroeck(0.5 if c is None else c))
    raise ValueError(f"unknown loss {name!r}; valid names are {', '.join(LOSS_NAMES)}")


def rho(loss, y, u):
    return loss.rho(y, u)


def Psi(loss, y, u):
    return loss.psi(y, u)


def chi(loss, y, u):
    return loss.chi(y, u)


def correction_G(loss, s):
    return loss.G(s)


def correction_G_deriv(loss, s):
    return loss.G_deriv(s)
