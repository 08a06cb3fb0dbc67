"""Bounded score functions for deviances and Pearson residuals, and covariate weights."""
from dataclasses import dataclass

import numpy as np

from .errors import DomainError


def _nonnegative(d):
    d = np.asarray(d, dtype=float)
    if np.any(d < 0):
        raise DomainError("deviance-scale argument must be nonnegative")
    return d


@dataclass(frozen=True)
class BiancoYohai:
    """``t - t^2/(2c)`` up to ``c``, constant ``c/2`` beyond."""

    c: float = 0.5

    def __post_init__(self):
        if not self.c > 0:
            raise DomainError("tuning constant must be positive")

    def value(self, d):
        d = _nonnegative(d)
        c = self.c
        return np.where(d <= c, d - d * d / (2 * c), c / 2)

    def deriv(self, d):
        d = _nonnegative(d)
        return np.where(d <= self.c, 1.0 - d / self.c, 0.0)

    def deriv2(self, d):
        d = _nonnegative(d)
        return np.where(d <= self.c, -1.0 / self.c, 0.0)

    @property
    def sup(self):
        return self.c / 2

    @property
    def deriv_sup(self):
        return 1.0

    def kinks(self):
        return (self.c,)


@dataclass(frozen=True)
class CrouxHaesbroeck:
    """Linear with slope ``exp(-sqrt(c))`` up to ``c``; saturating exponential beyond."""

    c: float = 0.5

    def __post_init__(self):
        if not self.c > 0:
            raise DomainError("tuning constant must be positive")

    def value(self, d):
        d = _nonnegative(d)
        c = self.c
        rc = np.sqrt(c)
        rd = np.sqrt(d)
        tail = -2 * (1 + rd) * np.exp(-rd) + (2 * (1 + rc) + c) * np.exp(-rc)
        return np.where(d <= c, d * np.exp(-rc), tail)

    def deriv(self, d):
        d = _nonnegative(d)
        return np.exp(-np.sqrt(np.maximum(d, self.c)))

    def deriv2(self, d):
        d = _nonnegative(d)
        dd = np.maximum(d, self.c)
        rd = np.sqrt(dd)
        return np.where(d <= self.c, 0.0, -np.exp(-rd) / (2 * rd))

    @property
    def sup(self):
        rc = np.sqrt(self.c)
        return float((2 * (1 + rc) + self.c) * np.exp(-rc))

    @property
    def deriv_sup(self):
        return float(np.exp(-np.sqrt(self.c)))

    def kinks(self):
        return (self.c,)


@dataclass(frozen=True)
class IdentityPhi:
    """Unbounded identity score; turns the modified likelihood into plain likelihood."""

    def value(self, d):
        return _nonnegative(d).copy()

    def deriv(self, d):
        return np.ones_like(_nonnegative(d))

    def deriv2(self, d):
        return np.zeros_like(_nonnegative(d))

    sup = np.inf
    deriv_sup = 1.0

    def kinks(self):
        return ()


def phi_eval(score, d):
    return score.value(d)


def phi_deriv(score, d):
    return score.deriv(d)


@dataclass(frozen=True)
class Huber:
    """Huber's ``psi_c(x) = max(-c, min(c, x))``.

    ``c = inf`` gives the identity score of classical quasi-likelihood.
    The derivative at the kinks follows the left-derivative convention.
    """

    c: float = 1.2

    def __post_init__(self):
        if not self.c > 0:
            raise DomainError("tuning constant must be positive")

    def __call__(self, x):
        return np.clip(x, -self.c, self.c)

    def deriv(self, x):
        x = np.asarray(x, dtype=float)
        return ((x > -self.c) & (x <= self.c)).astype(float)

    @property
    def bounded(self):
        return np.isfinite(self.c)


@dataclass(frozen=True)
class WeightFn:
    """Covariate weight ``w(x)``.

    ``kind="unit"`` returns 1.  ``kind="median_cauchy"`` returns
    ``(1 + |x - center|^2)^(-1/2)``, where ``center`` defaults to the
    coordinatewise sample median of the data the weight is resolved on.
    """

    kind: str = "unit"
    center: tuple = None

    def __post_init__(self):
        if self.kind not in ("unit", "median_cauchy"):
            raise ValueError(f"unknown weight function {self.kind!r}")
        if self.center is not None:
            object.__setattr__(self, "center", tuple(np.atleast_1d(np.asarray(self.center, float)).tolist()))

    @classmethod
    def unit(cls):
        return cls("unit")

    @classmethod
    def median_cauchy(cls, center=None):
        return cls("median_cauchy", center)

    def resolve(self, x):
        """Fix the center at the coordinatewise median of ``x`` if not set."""
        if self.kind == "unit" or self.center is not None:
            return self
        x = np.asarray(x, dtype=float).reshape(len(x), -1)
        return WeightFn("median_cauchy", tuple(np.median(x, axis=0).tolist()))

    def __call__(self, x):
        x = np.asarray(x, dtype=float)
        if self.kind == "unit":
            return np.ones(x.shape[0] if x.ndim > 1 else x.shape) if x.ndim else np.float64(1.0)
        if self.center is None:
            raise ValueError("median_cauchy weight used before its center was resolved")
        center = np.asarray(self.center)
        if x.ndim == 2:
            dist2 = np.sum((x - center) ** 2, axis=1)
        else:
            dist2 = (x - center[0]) ** 2 if center.size == 1 else np.sum((x - center) ** 2)
        return 1.0 / np.sqrt(1.0 + dist2)


def weight_eval(w, x):
    return w(x)
