"""The sample being fit: responses, covariates, smoothing variable, family."""
from dataclasses import dataclass, field

import numpy as np

from .errors import DomainError
from .families import Binomial


@dataclass(frozen=True)
class Dataset:
    """``n`` observations ``(y_i, x_i, t_i)`` with family metadata.

    ``x`` is stored as an ``(n, p)`` array.  ``beta0`` and ``eta0`` (the true
    ``eta`` at each ``t_i``) are filled in by the simulation generators.
    """

    y: np.ndarray
    x: np.ndarray
    t: np.ndarray
    family: object = field(default_factory=Binomial)
    beta0: np.ndarray = None
    eta0: np.ndarray = None

    def __post_init__(self):
        y = np.asarray(self.y, dtype=float).ravel()
        x = np.asarray(self.x, dtype=float)
        t = np.asarray(self.t, dtype=float).ravel()
        if x.ndim == 1:
            x = x[:, None]
        if not (len(y) == len(t) == x.shape[0]):
            raise DomainError("y, x and t must have the same number of rows")
        if len(y) == 0:
            raise DomainError("no observations")
        if not (np.all(np.isfinite(x)) and np.all(np.isfinite(t))):
            raise DomainError("covariates and t must be finite")
        self.family.check_support(y)
        object.__setattr__(self, "y", y)
        object.__setattr__(self, "x", x)
        object.__setattr__(self, "t", t)
        if self.beta0 is not None:
            object.__setattr__(self, "beta0", np.atleast_1d(np.asarray(self.beta0, dtype=float)))
        if self.eta0 is not None:
            object.__setattr__(self, "eta0", np.asarray(self.eta0, dtype=float).ravel())

    @property
    def n(self):
        return len(self.y)

    @property
    def p(self):
        return self.x.shape[1]

    def subset(self, idx):
        idx = np.asarray(idx)
        return Dataset(self.y[idx], self.x[idx], self.t[idx], self.family, self.beta0,
                       None if self.eta0 is None else self.eta0[idx])

    def canonical_order(self):
        """Row order sorted by ``(t, x, y)``; makes fits independent of input order."""
        keys = [self.y] + [self.x[:, j] for j in range(self.p - 1, -1, -1)] + [self.t]
        return np.lexsort(keys)

    def repeated(self, times=2):
        """Each row repeated ``times`` times."""
        idx = np.repeat(np.arange(self.n), times)
        return self.subset(idx)
