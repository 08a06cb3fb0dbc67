"""Profile estimation of the parametric component.

For each candidate ``beta`` the nonparametric component is refit at every
sample ``t_i`` and the profile objective

    F_n(beta) = n^{-1} sum_i rho(y_i, x_i'beta + eta_hat_beta(t_i)) w2(x_i)

is evaluated.  ``beta_hat`` minimizes ``F_n`` over a grid (optionally
refined).  Rows are put in a canonical order first so that results do not
depend on the order of the input.
"""
import warnings
from dataclasses import dataclass, field

import numpy as np

from .errors import BoundaryWarning, DesignError
from .smoothing import GOLDEN, KernelSpec, LocalSmoother, ScalarSearchSpec


@dataclass(frozen=True)
class BetaSearchSpec:
    """How ``F_n`` is searched.

    ``mode="grid"`` probes ``center + step * k`` for ``|step * k| <= halfwidth``.
    ``mode="grid_refine"`` follows that with golden-section search on the two
    grid cells around the best point, down to ``refine_tol``.  When
    ``coarse_step`` (a multiple of ``step``) is given the grid is first
    scanned at that spacing and the fine grid is only probed within one
    coarse cell of the coarse minimum.  For ``p > 1`` coordinate sweeps of
    such line searches are used.
    """

    mode: str = "grid"
    step: float = 0.05
    center: object = 0.0
    halfwidth: float = 5.0
    refine_tol: float = 1e-4
    coarse_step: float = None
    max_sweeps: int = 50
    sweep_tol: float = 1e-5

    def __post_init__(self):
        if self.mode not in ("grid", "grid_refine"):
            raise ValueError(f"unknown beta search mode {self.mode!r}")
        if not self.step > 0:
            raise ValueError("grid step must be positive")
        if not self.halfwidth > 0:
            raise ValueError("halfwidth must be positive")
        if not (0 < self.refine_tol < self.step):
            raise ValueError("refine_tol must lie in (0, step)")
        if self.coarse_step is not None:
            ratio = self.coarse_step / self.step
            if self.coarse_step < self.step or abs(ratio - round(ratio)) > 1e-9:
                raise ValueError("coarse_step must be a multiple of step")

    def centers(self, p):
        c = np.atleast_1d(np.asarray(self.center, dtype=float))
        return np.full(p, c[0]) if c.size == 1 else c


@dataclass
class FitResult:
    """Outcome of a profile fit.

    ``eta`` holds ``eta_hat_{beta_hat}(t_i)`` for every row in input order.
    """

    beta_hat: np.ndarray
    t: np.ndarray
    eta: np.ndarray
    objective: float
    score_norm: float
    cov_beta: np.ndarray = None
    loss: str = ""
    kernel: str = "triangular"
    h: float = float("nan")
    diagnostics: dict = field(default_factory=dict)

    @property
    def eta_at(self):
        return list(zip(self.t.tolist(), self.eta.tolist()))

    @property
    def se(self):
        if self.cov_beta is None:
            return None
        return np.sqrt(np.diag(self.cov_beta))


class ProfileProblem:
    """Profile objective and score for one dataset, loss and kernel.

    Evaluations of ``F_n`` are cached by ``beta``; ``probes`` records every
    ``(beta, F_n)`` pair evaluated.
    """

    def __init__(self, data, loss, kernel, scalar=None):
        order = data.canonical_order()
        self.order = order
        self.data = data.subset(order)
        self.loss = loss
        self.kernel = kernel
        x = self.data.x
        self.w1, self.w2 = loss.resolve_weights(x)
        self.smoother = LocalSmoother(self.data.y, x, self.data.t, loss, kernel, scalar, w1=self.w1)
        self.q_index = np.searchsorted(self.smoother.t_query, self.data.t)
        self._cache = {}
        self.probes = []

    @property
    def n(self):
        return self.data.n

    def local(self, beta):
        beta = np.atleast_1d(np.asarray(beta, dtype=float))
        off = self.data.x @ beta
        return off, self.smoother.fit(off)

    def objective(self, beta):
        beta = np.atleast_1d(np.asarray(beta, dtype=float))
        key = tuple(beta.tolist())
        val = self._cache.get(key)
        if val is None:
            off, r = self.local(beta)
            u = off + r["a_hat"][self.q_index]
            val = float(np.mean(self.loss.rho(self.data.y, u) * self.w2))
            self._cache[key] = val
            self.probes.append((key, val))
        return val

    def pieces(self, beta):
        """Per-row ``u``, ``z = x + d eta_hat / d beta`` and local-fit output at ``beta``."""
        beta = np.atleast_1d(np.asarray(beta, dtype=float))
        off, r = self.local(beta)
        deta = self.smoother.dbeta(r["a_hat"], off, boundary=r["boundary"])[self.q_index]
        u = off + r["a_hat"][self.q_index]
        return u, self.data.x + deta, r

    def score(self, beta):
        u, z, _ = self.pieces(beta)
        psi = self.loss.psi(self.data.y, u)
        return np.mean((psi * self.w2)[:, None] * z, axis=0)


def check_design(data):
    x = data.x
    const = np.all(x == x[0], axis=0)
    if np.any(const):
        raise DesignError(f"covariate column(s) {np.flatnonzero(const).tolist()} are constant")


def profile_objective(beta, data, loss, kernel, scalar=None):
    """``F_n(beta)``."""
    return ProfileProblem(data, loss, kernel, scalar).objective(beta)


def profile_score(beta, data, loss, kernel, scalar=None):
    """``F^1_n(beta) = n^{-1} sum Psi w2 (x_i + d eta_hat / d beta)``."""
    return ProfileProblem(data, loss, kernel, scalar).score(beta)


def _best(points, values):
    """Smallest value; ties go to the lexicographically smallest point."""
    vals = np.asarray(values)
    hit = np.flatnonzero(vals == vals.min())
    pts = [tuple(np.atleast_1d(points[i]).tolist()) for i in hit]
    j = min(range(len(hit)), key=lambda i: pts[i])
    return hit[j]


def _grid_point(c, k, step):
    # rounding keeps grid values free of representation noise (2.05, not 2.0500000000000003)
    return round(float(c) + int(k) * step, 10)


def _line_grid(f, c, search):
    """Grid search of a scalar function around ``c``; returns (best, at_edge)."""
    step, hw = search.step, search.halfwidth
    kmax = int(round(hw / step))
    if search.coarse_step is None:
        ks = np.arange(-kmax, kmax + 1)
    else:
        ratio = int(round(search.coarse_step / step))
        coarse = np.arange(-(kmax // ratio), kmax // ratio + 1) * ratio
        vals = [f(_grid_point(c, k, step)) for k in coarse]
        kc = coarse[_best(coarse, vals)]
        ks = np.arange(max(kc - ratio, -kmax), min(kc + ratio, kmax) + 1)
        ks = np.union1d(ks, coarse)
    pts = [_grid_point(c, k, step) for k in ks]
    vals = [f(b) for b in pts]
    i = _best(pts, vals)
    return float(pts[i]), abs(ks[i]) == kmax


def _golden_line(f, lo, hi, tol):
    a, b = lo, hi
    x1, x2 = a + GOLDEN * (b - a), b - GOLDEN * (b - a)
    f1, f2 = f(x1), f(x2)
    while b - a > tol:
        if f1 <= f2:
            b, x2, f2 = x2, x1, f1
            x1 = a + GOLDEN * (b - a)
            f1 = f(x1)
        else:
            a, x1, f1 = x1, x2, f2
            x2 = b - GOLDEN * (b - a)
            f2 = f(x2)
    return x1 if f1 <= f2 else x2


def fit_beta(data, loss, kernel=None, search=None, scalar=None, fixed=None,
             covariance=True, warn=True):
    """Minimize the profile objective.

    Parameters
    ----------
    data : Dataset
    loss : LossSpec
    kernel : KernelSpec, optional
    search : BetaSearchSpec, optional
    scalar : ScalarSearchSpec, optional
        Settings of the inner local fits.
    fixed : dict, optional
        ``{index: value}`` coordinates held fixed (null-model fits).
    covariance : bool
        Attach the sandwich covariance of ``beta_hat``.
    warn : bool
        Emit :class:`BoundaryWarning` when the minimum sits on the grid edge.

    Returns
    -------
    FitResult
    """
    kernel = kernel or KernelSpec()
    search = search or BetaSearchSpec()
    scalar = scalar or ScalarSearchSpec()
    fixed = dict(fixed or {})
    check_design(data)
    prob = ProfileProblem(data, loss, kernel, scalar)
    p = data.p
    beta = search.centers(p).copy()
    for j, v in fixed.items():
        beta[j] = v
    free = [j for j in range(p) if j not in fixed]
    edge = False

    def along(j, b):
        def f(v):
            bb = b.copy()
            bb[j] = v
            return prob.objective(bb)
        return f

    if len(free) == 1:
        j = free[0]
        f = along(j, beta)
        beta[j], edge = _line_grid(f, search.centers(p)[j], search)
        if search.mode == "grid_refine":
            g = beta[j]
            r = _golden_line(f, g - search.step, g + search.step, search.refine_tol)
            if f(r) <= f(g):
                beta[j] = r
    elif free:
        for sweep in range(search.max_sweeps):
            prev = beta.copy()
            edge = False
            for j in free:
                f = along(j, beta)
                if sweep == 0:
                    g, e = _line_grid(f, search.centers(p)[j], search)
                    edge |= e
                else:
                    g = beta[j]
                r = _golden_line(f, g - search.step, g + search.step, search.refine_tol)
                beta[j] = r if f(r) <= f(g) else g
            if np.max(np.abs(beta - prev)) < search.sweep_tol:
                break
    else:
        prob.objective(beta)

    # report the best point probed; the invariant objective <= F_n(probe) holds by construction
    keys = [k for k, _ in prob.probes]
    vals = [v for _, v in prob.probes]
    if free:
        beta = np.asarray(keys[_best(keys, vals)])
    if edge and warn:
        warnings.warn(f"beta_hat={beta.tolist()} lies on the edge of the search grid",
                      BoundaryWarning, stacklevel=2)
    return finish_fit(prob, beta, data, edge, covariance)


def finish_fit(prob, beta, data, edge=False, covariance=True):
    """Assemble a :class:`FitResult` at ``beta`` (computes score and covariance)."""
    from .inference import sandwich_from_problem

    u, z, r = prob.pieces(beta)
    psi = prob.loss.psi(prob.data.y, u)
    score = np.mean((psi * prob.w2)[:, None] * z, axis=0)
    eta_sorted = r["a_hat"][prob.q_index]
    eta = np.empty_like(eta_sorted)
    eta[prob.order] = eta_sorted
    cov = None
    diag = dict(grid_edge=bool(edge), n_probes=len(prob.probes),
                local_boundary=int(np.sum(r["boundary"])), n=data.n)
    if covariance:
        sw = sandwich_from_problem(prob, beta)
        cov = sw.cov_beta
        diag["condition_number"] = sw.condition_number
    return FitResult(
        beta_hat=np.asarray(beta, dtype=float), t=data.t.copy(), eta=eta,
        objective=prob.objective(beta), score_norm=float(np.linalg.norm(score)),
        cov_beta=cov, loss=prob.loss.label, kernel=prob.kernel.shape, h=prob.kernel.h,
        diagnostics=diag,
    )
