"""Kernel weights and the local fit of the nonparametric component.

For fixed ``beta`` and query point ``t`` the local objective is

    S_n(a, beta, t) = sum_i W_i(t) rho(y_i, x_i'beta + a) w1(x_i)

and ``eta_hat_beta(t)`` is its global minimizer in ``a``.  Robust losses make
``S_n`` non-convex, so the minimizer is located by a grid scan over a
link-scale bracket followed by a bracketed refinement around the best grid
point.  :class:`LocalSmoother` does this for many query points at once.
"""
import warnings
from dataclasses import dataclass

import numpy as np
from scipy import special, stats

from .errors import BoundaryWarning, EmptyWindowError, IllConditionedDerivativeError
from .families import Binomial

GOLDEN = (3.0 - np.sqrt(5.0)) / 2.0


@dataclass(frozen=True)
class KernelSpec:
    """Kernel shape and bandwidth.  Every shape integrates to one."""

    shape: str = "triangular"
    h: float = 0.2

    def __post_init__(self):
        if self.shape not in ("triangular", "epanechnikov", "gaussian"):
            raise ValueError(f"unknown kernel {self.shape!r}")
        if not (self.h > 0 and np.isfinite(self.h)):
            raise ValueError("bandwidth must be positive")

    @property
    def differentiable(self):
        return self.shape == "gaussian"

    def K(self, z):
        z = np.asarray(z, dtype=float)
        if self.shape == "triangular":
            return np.maximum(0.0, 1.0 - np.abs(z))
        if self.shape == "epanechnikov":
            return np.maximum(0.0, 0.75 * (1.0 - z * z))
        return stats.norm.pdf(z)

    def dK(self, z):
        z = np.asarray(z, dtype=float)
        if self.shape == "triangular":
            return np.where(np.abs(z) < 1, -np.sign(z), 0.0)
        if self.shape == "epanechnikov":
            return np.where(np.abs(z) < 1, -1.5 * z, 0.0)
        return -z * stats.norm.pdf(z)

    def raw(self, t_query, t_data):
        """Matrix of ``K((t_q - t_i) / h)``, queries in rows."""
        tq = np.atleast_1d(np.asarray(t_query, dtype=float))
        return self.K((tq[:, None] - np.asarray(t_data, dtype=float)[None, :]) / self.h)


def weight_matrix(t_query, t_data, kernel):
    """Row-normalized kernel weights; raises on an empty window."""
    k = kernel.raw(t_query, t_data)
    tot = k.sum(axis=1)
    empty = ~(tot > 0)
    if np.any(empty):
        tq = np.atleast_1d(t_query)
        raise EmptyWindowError(float(tq[np.argmax(empty)]), kernel.h)
    return k / tot[:, None]


def kernel_weights(t, t_data, kernel):
    """Weights ``W_i(t)`` of every sample point for a single query ``t``."""
    return weight_matrix([t], t_data, kernel)[0]


def local_objective(a, beta, t, data, loss, kernel):
    """``S_n(a, beta, t)``; ``a`` may be an array."""
    w = kernel_weights(t, data.t, kernel)
    w1, _ = loss.resolve_weights(data.x)
    off = data.x @ np.atleast_1d(beta)
    a = np.asarray(a, dtype=float)
    u = off.reshape((-1,) + (1,) * a.ndim) + a
    r = loss.rho(data.y.reshape((-1,) + (1,) * a.ndim), u)
    return np.tensordot(w * w1, r, axes=(0, 0))


@dataclass(frozen=True)
class ScalarSearchSpec:
    """Grid-then-refine settings for the local fit.

    ``bracket`` overrides the family default; the bracket is widened
    (halfwidth doubled) up to ``max_expand`` times while the best grid point
    sits on its edge.
    """

    grid_points: int = 401
    tol: float = 1e-9
    bracket: tuple = None
    max_expand: int = 4
    max_iter: int = 100

    def __post_init__(self):
        if self.grid_points < 3:
            raise ValueError("grid_points must be at least 3")
        if not self.tol > 0:
            raise ValueError("tol must be positive")


def default_bracket(family, y):
    if isinstance(family, Binomial):
        return float(special.logit(0.001)), float(special.logit(0.999))
    return float(np.log(0.01)), float(np.log(3 * np.max(y) + 1))


@dataclass
class LocalFit:
    """Result of one local minimization."""

    a_hat: float
    objective_value: float
    iterations: int
    converged: bool
    boundary: bool = False


class LocalSmoother:
    """Vectorized local fits at a fixed set of query points.

    Parameters
    ----------
    y, x, t : arrays
        Sample used in the local objective.
    loss : LossSpec
        Loss; its ``w1`` must already be resolvable on ``x``.
    kernel : KernelSpec
    search : ScalarSearchSpec, optional
    t_query : array, optional
        Query points (default: the distinct values of ``t``).
    w1 : array, optional
        Precomputed ``w1(x_i)`` values.
    """

    def __init__(self, y, x, t, loss, kernel, search=None, t_query=None, w1=None):
        self.y = np.asarray(y, dtype=float)
        self.x = np.asarray(x, dtype=float).reshape(len(self.y), -1)
        self.t = np.asarray(t, dtype=float)
        self.loss = loss
        self.kernel = kernel
        self.search = search or ScalarSearchSpec()
        self.t_query = np.unique(self.t) if t_query is None else np.atleast_1d(np.asarray(t_query, float))
        self.w1 = loss.resolve_weights(self.x)[0] if w1 is None else np.asarray(w1, dtype=float)
        self.W = weight_matrix(self.t_query, self.t, kernel)
        self.rows, self.cols = np.nonzero(self.W)
        self.vals = self.W[self.rows, self.cols] * self.w1[self.cols]
        lo, hi = self.search.bracket or default_bracket(loss.family, self.y)
        self.grid = np.linspace(lo, hi, self.search.grid_points)
        self.nq = len(self.t_query)

    # sparse sums over window entries ------------------------------------
    def _entries(self, active):
        if active is None:
            return slice(None)
        return active[self.rows]

    def objective_at(self, a, offset, active=None):
        """``S_n`` at per-query ``a`` (full length ``nq``)."""
        e = self._entries(active)
        r, c = self.rows[e], self.cols[e]
        vals = self.loss.rho(self.y[c], offset[c] + a[r]) * self.vals[e]
        return np.bincount(r, weights=vals, minlength=self.nq)

    def _derivs_at(self, a, offset, active):
        e = self._entries(active)
        r, c = self.rows[e], self.cols[e]
        u = offset[c] + a[r]
        v = self.vals[e]
        g = np.bincount(r, weights=self.loss.psi(self.y[c], u) * v, minlength=self.nq)
        gp = np.bincount(r, weights=self.loss.chi(self.y[c], u) * v, minlength=self.nq)
        return g, gp

    # grid stage ----------------------------------------------------------
    def _scan(self, grid, offset, rows=None):
        R = self.loss.rho(self.y[:, None], offset[:, None] + grid[None, :]) * self.w1[:, None]
        W = self.W if rows is None else self.W[rows]
        return W @ R

    # refinement ----------------------------------------------------------
    def _golden(self, lo, hi, offset, active):
        """Vectorized golden-section search on ``[lo, hi]`` for the active rows."""
        lo, hi = lo.copy(), hi.copy()
        x1 = lo + GOLDEN * (hi - lo)
        x2 = hi - GOLDEN * (hi - lo)
        f1 = self.objective_at(x1, offset, active)
        f2 = self.objective_at(x2, offset, active)
        it = 0
        while it < self.search.max_iter and np.any((hi - lo)[active] > self.search.tol):
            it += 1
            left = f1 <= f2
            lo = np.where(left, lo, x1)
            hi = np.where(left, x2, hi)
            probe = np.where(left, lo + GOLDEN * (hi - lo), hi - GOLDEN * (hi - lo))
            fp = self.objective_at(probe, offset, active)
            x1, x2, f1, f2 = (np.where(left, probe, x2), np.where(left, x1, probe),
                              np.where(left, fp, f2), np.where(left, f1, fp))
        best = np.where(f1 <= f2, x1, x2)
        return best, it

    def _newton(self, lo, hi, x0, offset, active):
        """Bracketed Newton iteration on ``dS/da`` with bisection safeguard."""
        lo, hi, x = lo.copy(), hi.copy(), x0.copy()
        done = ~active.copy()
        iters = np.zeros(self.nq, dtype=int)
        tol = self.search.tol
        for _ in range(self.search.max_iter):
            act = ~done
            if not np.any(act):
                break
            g, gp = self._derivs_at(x, offset, act)
            iters[act] += 1
            neg = g < 0
            lo = np.where(act & neg, x, lo)
            hi = np.where(act & ~neg, x, hi)
            with np.errstate(divide="ignore", invalid="ignore"):
                nstep = g / gp
            xn = x - nstep
            small = (gp > 0) & (np.abs(nstep) <= 0.1 * tol)
            bad = ~small & (~(gp > 0) | ~((xn > lo) & (xn < hi)))
            xn = np.where(bad, 0.5 * (lo + hi), xn)
            x = np.where(act, xn, x)
            done |= act & (small | (hi - lo <= tol) | (g == 0))
        return x, done, iters

    def fit(self, offset):
        """Local minimizers at every query point for linear-predictor offsets ``offset``.

        Returns a dict with arrays ``a_hat``, ``objective``, ``iterations``,
        ``converged`` and ``boundary``.
        """
        offset = np.asarray(offset, dtype=float)
        grid = self.grid
        S = self._scan(grid, offset)
        k = np.argmin(S, axis=1)
        npts = len(grid)
        a_best = grid[k]
        s_best = S[np.arange(self.nq), k]
        step = np.full(self.nq, grid[1] - grid[0])
        s_left = S[np.arange(self.nq), np.maximum(k - 1, 0)]
        s_right = S[np.arange(self.nq), np.minimum(k + 1, npts - 1)]
        edge, right = _no_interior_min(S, s_best)

        center = 0.5 * (grid[0] + grid[-1])
        half = 0.5 * (grid[-1] - grid[0])
        for _ in range(self.search.max_expand):
            if not np.any(edge):
                break
            half *= 2
            g2 = np.linspace(center - half, center + half, npts)
            rows = np.flatnonzero(edge)
            S2 = self._scan(g2, offset, rows)
            k2 = np.argmin(S2, axis=1)
            sb = S2[np.arange(len(rows)), k2]
            e2, r2 = _no_interior_min(S2, sb)
            a_best[rows] = g2[k2]
            s_best[rows] = sb
            s_left[rows] = S2[np.arange(len(rows)), np.maximum(k2 - 1, 0)]
            s_right[rows] = S2[np.arange(len(rows)), np.minimum(k2 + 1, npts - 1)]
            step[rows] = g2[1] - g2[0]
            edge[rows] = e2
            right[rows] = r2

        # no interior minimum even after widening: flag and stay at the edge of the original bracket
        if np.any(edge):
            rows = np.flatnonzero(edge)
            j = np.where(right[rows], npts - 1, 0)
            a_best[rows] = grid[j]
            s_best[rows] = S[rows, j]

        interior = ~edge
        lo = a_best - step
        hi = a_best + step
        curv = s_left - 2 * s_best + s_right
        with np.errstate(divide="ignore", invalid="ignore"):
            x0 = a_best + 0.5 * step * (s_left - s_right) / curv
        x0 = np.where((curv > 0) & (x0 > lo) & (x0 < hi), x0, a_best)

        x, conv, iters = self._newton(lo, hi, x0, offset, interior)
        fx = self.objective_at(x, offset)
        take = interior & conv & (fx <= s_best)
        retry = interior & ~take
        if np.any(retry):
            xg, itg = self._golden(lo, hi, offset, retry)
            fg = self.objective_at(xg, offset, retry)
            iters[retry] += itg
            better = retry & (fg <= s_best)
            x = np.where(better, xg, x)
            fx = np.where(better, fg, fx)
            take |= better
            conv = conv | retry
        a_hat = np.where(take, x, a_best)
        obj = np.where(take, fx, s_best)
        return dict(a_hat=a_hat, objective=obj, iterations=iters,
                    converged=interior & conv, boundary=edge)

    # derivatives of the local fit ---------------------------------------
    def dbeta(self, a_hat, offset, rel_tol=1e-10, boundary=None):
        """``d eta_hat / d beta`` at every query point, shape ``(nq, p)``.

        Rows flagged in ``boundary`` are held at the bracket edge and get 0.
        """
        u = offset[self.cols] + a_hat[self.rows]
        ch = self.loss.chi(self.y[self.cols], u) * self.vals
        den = np.bincount(self.rows, weights=ch, minlength=self.nq)
        gross = np.bincount(self.rows, weights=np.abs(ch), minlength=self.nq)
        held = np.zeros(self.nq, dtype=bool) if boundary is None else np.asarray(boundary, dtype=bool)
        den = np.where(held, 1.0, den)
        bad = ~held & ~(np.abs(den) > rel_tol * gross)
        if np.any(bad):
            q = int(np.argmax(bad))
            raise IllConditionedDerivativeError(float(self.t_query[q]), q)
        num = np.stack([np.bincount(self.rows, weights=ch * self.x[self.cols, j], minlength=self.nq)
                        for j in range(self.x.shape[1])], axis=1)
        num[held] = 0.0
        return -num / den[:, None]

    def dt(self, a_hat, offset, rel_tol=1e-10):
        """``d eta_hat / d t`` at every query point (differentiable kernels only)."""
        if not self.kernel.differentiable:
            raise ValueError("analytic t-derivative needs a differentiable kernel")
        h = self.kernel.h
        z = (self.t_query[:, None] - self.t[None, :]) / h
        K = self.kernel.K(z)
        dK = self.kernel.dK(z) / h
        u = offset[None, :] + a_hat[:, None]
        y = np.broadcast_to(self.y, u.shape)
        ps = self.loss.psi(y, u) * self.w1
        ch = self.loss.chi(y, u) * self.w1
        den = np.sum(K * ch, axis=1)
        gross = np.sum(K * np.abs(ch), axis=1)
        bad = ~(np.abs(den) > rel_tol * gross)
        if np.any(bad):
            q = int(np.argmax(bad))
            raise IllConditionedDerivativeError(float(self.t_query[q]), q)
        return -np.sum(dK * ps, axis=1) / den


def _no_interior_min(S, s_best, flat=1e-12):
    """Rows whose grid minimum is not clearly below an end of the grid, and which end.

    A minimum within ``flat`` (relative) of an end value sits on a plateau
    that reaches the bracket edge, so the minimizer is not identified there.
    """
    lo_end, hi_end = S[:, 0], S[:, -1]
    tol = flat * np.maximum(1.0, np.abs(s_best))
    edge = np.minimum(lo_end, hi_end) - s_best <= tol
    return edge, hi_end < lo_end


def _single(beta, t, data, loss, kernel, search):
    sm = LocalSmoother(data.y, data.x, data.t, loss, kernel, search, t_query=[t])
    off = data.x @ np.atleast_1d(np.asarray(beta, dtype=float))
    return sm, off


def eta_hat(beta, t, data, loss, kernel, search=None):
    """Global minimizer of ``S_n(., beta, t)`` as a :class:`LocalFit`.

    Warns with :class:`BoundaryWarning` if the minimum is still on the edge
    of the widened bracket (no interior minimum, e.g. all responses equal).
    """
    sm, off = _single(beta, t, data, loss, kernel, search)
    r = sm.fit(off)
    if r["boundary"][0]:
        warnings.warn(f"local fit at t={t:g} has no interior minimum in the search bracket",
                      BoundaryWarning, stacklevel=2)
    return LocalFit(float(r["a_hat"][0]), float(r["objective"][0]), int(r["iterations"][0]),
                    bool(r["converged"][0]), bool(r["boundary"][0]))


def eta_hat_dbeta(beta, t, data, loss, kernel, search=None):
    """``d eta_hat_beta(t) / d beta`` from the implicit-function ratio."""
    sm, off = _single(beta, t, data, loss, kernel, search)
    r = sm.fit(off)
    return sm.dbeta(r["a_hat"], off, boundary=r["boundary"])[0]


def eta_hat_dt(beta, t, data, loss, kernel, search=None):
    """``d eta_hat_beta(t) / dt``; central difference with step ``h/100`` for non-smooth kernels."""
    if kernel.differentiable:
        sm, off = _single(beta, t, data, loss, kernel, search)
        r = sm.fit(off)
        return float(sm.dt(r["a_hat"], off)[0])
    e = kernel.h / 100
    up = eta_hat(beta, t + e, data, loss, kernel, search).a_hat
    dn = eta_hat(beta, t - e, data, loss, kernel, search).a_hat
    return (up - dn) / (2 * e)
