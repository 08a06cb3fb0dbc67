"""Sandwich covariance of ``beta_hat``, Wald tests and the robust Lambda test."""
import warnings
from dataclasses import dataclass

import numpy as np
from scipy import stats

from .errors import NearSingularWarning, OptimizationFailure, SingularMatrixError
from .profile import BetaSearchSpec, ProfileProblem, fit_beta

COND_LIMIT = 1e10
LAMBDA_SLACK = 1e-6


@dataclass
class SandwichEstimate:
    """``A_hat``, ``Sigma_hat`` and ``cov_beta = A^{-1} Sigma A^{-T} / n``."""

    A_hat: np.ndarray
    Sigma_hat: np.ndarray
    cov_beta: np.ndarray
    condition_number: float
    n: int

    @property
    def V(self):
        """Asymptotic covariance of ``sqrt(n) (beta_hat - beta0)``."""
        return self.cov_beta * self.n


@dataclass
class TestResult:
    """A test statistic with its null distribution summary.

    ``df`` is the chi-square degrees of freedom (Wald); ``weights`` the
    chi-square(1) weights of the Lambda null distribution.
    """

    statistic: float
    p_value: float
    method: str
    df: int = None
    weights: np.ndarray = None
    details: dict = None


def _terms(prob, beta):
    u, z, _ = prob.pieces(beta)
    y = prob.data.y
    chi = prob.loss.chi(y, u)
    psi = prob.loss.psi(y, u)
    return z, chi, psi


def _A(z, chi, w2):
    a = (z * (chi * w2)[:, None]).T @ z / len(chi)
    return 0.5 * (a + a.T)


def _Sigma(z, psi, w2):
    return (z * (psi * psi * w2 * w2)[:, None]).T @ z / len(psi)


def _inverse(a):
    cond = float(np.linalg.cond(a, 1))
    if not np.isfinite(cond):
        raise SingularMatrixError("A_hat is singular")
    if cond > COND_LIMIT:
        warnings.warn(f"A_hat is nearly singular (1-norm condition {cond:.3g})",
                      NearSingularWarning, stacklevel=3)
    return np.linalg.inv(a), cond


def sandwich_from_problem(prob, beta):
    z, chi, psi = _terms(prob, beta)
    A = _A(z, chi, prob.w2)
    S = _Sigma(z, psi, prob.w2)
    ainv, cond = _inverse(A)
    cov = ainv @ S @ ainv.T / prob.n
    cov = 0.5 * (cov + cov.T)
    return SandwichEstimate(A, S, cov, cond, prob.n)


def estimate_A(fit, data, loss, kernel, scalar=None):
    """``n^{-1} sum chi z z' w2`` at ``fit.beta_hat`` with ``z = x + d eta_hat / d beta``."""
    prob = ProfileProblem(data, loss, kernel, scalar)
    z, chi, _ = _terms(prob, fit.beta_hat)
    return _A(z, chi, prob.w2)


def estimate_Sigma(fit, data, loss, kernel, scalar=None):
    """``n^{-1} sum Psi^2 w2^2 z z'`` at ``fit.beta_hat``."""
    prob = ProfileProblem(data, loss, kernel, scalar)
    z, _, psi = _terms(prob, fit.beta_hat)
    return _Sigma(z, psi, prob.w2)


def sandwich(fit, data, loss, kernel, scalar=None):
    return sandwich_from_problem(ProfileProblem(data, loss, kernel, scalar), fit.beta_hat)


def wald_test(fit, cov, restriction, null_value=0.0):
    """Wald statistic for ``beta[restriction] == null_value``.

    ``cov`` is a covariance matrix of ``beta_hat`` or a
    :class:`SandwichEstimate`.
    """
    if isinstance(cov, SandwichEstimate):
        cov = cov.cov_beta
    idx = np.atleast_1d(np.asarray(restriction, dtype=int))
    b = np.atleast_1d(fit.beta_hat)[idx] - np.broadcast_to(np.asarray(null_value, float), idx.shape)
    block = np.asarray(cov)[np.ix_(idx, idx)]
    try:
        stat = float(b @ np.linalg.solve(block, b))
    except np.linalg.LinAlgError as exc:
        raise SingularMatrixError("covariance block of the restriction is singular") from exc
    return TestResult(stat, float(stats.chi2.sf(stat, len(idx))), "Wald", df=len(idx))


def lambda_weights(sw, restriction):
    """Eigenvalues of ``A_{22.1} V_{22}``: weights of the chi-square(1) mixture."""
    idx = np.atleast_1d(np.asarray(restriction, dtype=int))
    p = sw.A_hat.shape[0]
    rest = np.setdiff1d(np.arange(p), idx)
    A = sw.A_hat
    a22 = A[np.ix_(idx, idx)]
    if rest.size:
        a21 = A[np.ix_(idx, rest)]
        a11 = A[np.ix_(rest, rest)]
        a22 = a22 - a21 @ np.linalg.solve(a11, a21.T)
    v22 = sw.V[np.ix_(idx, idx)]
    lam = np.linalg.eigvals(a22 @ v22)
    return np.sort(np.real(lam))


def weighted_chi2_pvalue(stat, weights, draws=100_000, seed=0):
    """``P(sum_j w_j chi2_1 >= stat)`` by seeded simulation."""
    rng = np.random.Generator(np.random.Philox(seed))
    z = rng.standard_normal((draws, len(weights)))
    sims = (z * z) @ np.asarray(weights, dtype=float)
    return float(np.mean(sims >= stat))


def lambda_test(data, loss, kernel, restriction, search=None, scalar=None, null_value=0.0,
                draws=100_000, seed=0, full=None):
    """Robust Lambda test of ``beta[restriction] == null_value``.

    ``Lambda = 2 n [F_n(null fit) - F_n(full fit)]``.  The full model is
    searched on a grid centered at the null solution, so the null point is
    among the candidates and the two fits are nested.
    A full-model fit may be passed in as ``full`` (it must carry
    ``cov_beta``).

    Raises
    ------
    OptimizationFailure
        If ``Lambda < -1e-6`` (the null fit beat the full fit).
    """
    search = search or BetaSearchSpec()
    idx = [int(i) for i in np.atleast_1d(restriction)]
    nulls = np.broadcast_to(np.asarray(null_value, float), (len(idx),))
    fixed = dict(zip(idx, nulls.tolist()))
    null = fit_beta(data, loss, kernel, search, scalar, fixed=fixed, covariance=False, warn=False)
    if full is None:
        start = BetaSearchSpec(**{**search.__dict__, "center": tuple(null.beta_hat.tolist())})
        full = fit_beta(data, loss, kernel, start, scalar, warn=False)
    stat = 2.0 * data.n * (null.objective - full.objective)
    if stat < -LAMBDA_SLACK:
        raise OptimizationFailure(f"null fit beat the full fit (Lambda={stat:.3g})")
    sw = sandwich(full, data, loss, kernel, scalar)
    w = lambda_weights(sw, idx)
    p = weighted_chi2_pvalue(max(stat, 0.0), w, draws, seed)
    return TestResult(stat, p, "Lambda", weights=w, details=dict(null_fit=null, full_fit=full))
