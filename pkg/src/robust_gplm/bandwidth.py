"""Bandwidth selection by robust cross-validation on a random holdout split."""
from dataclasses import dataclass, field

import numpy as np

from .errors import BandwidthError, EmptyWindowError
from .profile import fit_beta
from .smoothing import KernelSpec, LocalSmoother


@dataclass(frozen=True)
class CvSpec:
    """Holdout fraction, candidate bandwidths, seed and number of splits."""

    candidate_h: tuple = (0.1, 0.15, 0.2, 0.25, 0.3)
    alpha: float = 0.2
    seed: int = 0
    splits: int = 1

    def __post_init__(self):
        h = tuple(float(v) for v in self.candidate_h)
        object.__setattr__(self, "candidate_h", h)
        if not h:
            raise ValueError("candidate_h must be nonempty")
        if any(v <= 0 for v in h) or any(b <= a for a, b in zip(h, h[1:])):
            raise ValueError("candidate_h must be positive and strictly ascending")
        if not 0 < self.alpha < 1:
            raise ValueError("alpha must lie in (0, 1)")
        if self.splits < 1:
            raise ValueError("splits must be at least 1")


@dataclass
class CvResult:
    """Selected bandwidth, mean validation loss per candidate and the splits used."""

    h: float
    candidate_h: tuple
    losses: np.ndarray
    splits: list = field(default_factory=list)
    failed: list = field(default_factory=list)


def holdout_split(n, alpha, seed, index=0):
    """Training and validation indices (sorted), sampled without replacement."""
    rng = np.random.Generator(np.random.Philox(np.random.SeedSequence(seed, spawn_key=(index,))))
    perm = rng.permutation(n)
    n_train = int(round((1 - alpha) * n))
    return np.sort(perm[:n_train]), np.sort(perm[n_train:])


def validation_loss(train, valid, loss, kernel, search=None, scalar=None):
    """Sum over the validation rows of ``rho w2`` at the training fit.

    ``eta_hat`` at validation points uses kernel windows over the training
    sample only.  An empty window gives ``inf``.
    """
    fit = fit_beta(train, loss, kernel, search, scalar, covariance=False, warn=False)
    beta = fit.beta_hat
    try:
        sm = LocalSmoother(train.y, train.x, train.t, loss, kernel, scalar, t_query=np.unique(valid.t))
    except EmptyWindowError:
        return np.inf
    a = sm.fit(train.x @ beta)["a_hat"]
    eta = a[np.searchsorted(sm.t_query, valid.t)]
    w2 = loss.w2(valid.x)
    return float(np.sum(loss.rho(valid.y, valid.x @ beta + eta) * w2))


def robust_cv(data, loss, kernel_shape="triangular", cv=None, search=None, scalar=None):
    """Select the bandwidth minimizing the validation loss.

    Weight centers are fixed on the full sample before splitting.  Ties go
    to the larger bandwidth.

    Returns
    -------
    CvResult
    """
    cv = cv or CvSpec()
    x = data.x
    loss = loss.with_weights(loss.w1.resolve(x), loss.w2.resolve(x))
    hs = cv.candidate_h
    total = np.zeros(len(hs))
    splits = []
    for s in range(cv.splits):
        tr, va = holdout_split(data.n, cv.alpha, cv.seed, s)
        splits.append((tr, va))
        train, valid = data.subset(tr), data.subset(va)
        for k, h in enumerate(hs):
            total[k] += validation_loss(train, valid, loss, KernelSpec(kernel_shape, h), search, scalar)
    losses = total / cv.splits
    failed = [h for h, v in zip(hs, losses) if not np.isfinite(v)]
    if len(failed) == len(hs):
        raise BandwidthError("every candidate bandwidth left a validation point with an empty window")
    best = np.min(losses)
    pick = max(k for k in range(len(hs)) if losses[k] == best)
    return CvResult(hs[pick], hs, losses, splits, failed)
