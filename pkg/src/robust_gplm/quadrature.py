"""Adaptive Simpson quadrature and a piecewise cubic Hermite table."""
import math

import numpy as np


def adaptive_simpson(f, a, b, tol=1e-10, max_depth=50):
    """Integrate scalar ``f`` over ``[a, b]`` to absolute tolerance ``tol``.

    Uses the classical Richardson-corrected recursion.  ``b < a`` gives the
    negated integral.
    """
    if a == b:
        return 0.0
    if b < a:
        return -adaptive_simpson(f, b, a, tol, max_depth)

    def simpson(fa, fm, fb, a, b):
        return (b - a) / 6.0 * (fa + 4.0 * fm + fb)

    def recurse(a, b, fa, fm, fb, whole, tol, depth):
        m = 0.5 * (a + b)
        lm, rm = 0.5 * (a + m), 0.5 * (m + b)
        flm, frm = f(lm), f(rm)
        left = simpson(fa, flm, fm, a, m)
        right = simpson(fm, frm, fb, m, b)
        delta = left + right - whole
        if depth <= 0 or abs(delta) <= 15.0 * tol:
            return left + right + delta / 15.0
        return (recurse(a, m, fa, flm, fm, left, tol / 2.0, depth - 1)
                + recurse(m, b, fm, frm, fb, right, tol / 2.0, depth - 1))

    fa, fb, fm = f(a), f(b), f(0.5 * (a + b))
    return recurse(a, b, fa, fm, fb, simpson(fa, fm, fb, a, b), tol, max_depth)


def piecewise_simpson(f, a, b, breaks=(), tol=1e-10):
    """Adaptive Simpson split at ``breaks`` lying strictly inside ``(a, b)``."""
    sign = 1.0
    if b < a:
        a, b, sign = b, a, -1.0
    pts = [a] + sorted(x for x in breaks if a < x < b) + [b]
    pieces = len(pts) - 1
    return sign * math.fsum(adaptive_simpson(f, lo, hi, tol / pieces)
                            for lo, hi in zip(pts[:-1], pts[1:]))


_GL_X, _GL_W = np.polynomial.legendre.leggauss(8)


def cumulative_gauss_legendre(fprime, nodes, base_index):
    """Integrate a vectorized ``fprime`` panel by panel between ``nodes``.

    Returns values at each node with value 0 at ``nodes[base_index]``.  The
    integrand should be smooth inside every panel; put kinks on nodes.
    """
    a, b = nodes[:-1], nodes[1:]
    half = 0.5 * (b - a)
    mid = 0.5 * (a + b)
    pts = mid[:, None] + half[:, None] * _GL_X[None, :]
    panels = half * (fprime(pts) @ _GL_W)
    out = np.empty_like(nodes)
    out[0] = 0.0
    np.cumsum(panels, out=out[1:])
    return out - out[base_index]


class HermiteTable:
    """Piecewise cubic Hermite interpolant from values and slopes at nodes.

    Outside ``[nodes[0], nodes[-1]]`` the ``outside`` callable is used, or the
    end value is held if none is given.
    """

    def __init__(self, nodes, values, slopes, outside=None):
        self.nodes = np.asarray(nodes, dtype=float)
        self.values = np.asarray(values, dtype=float)
        self.slopes = np.asarray(slopes, dtype=float)
        self.outside = outside

    def __call__(self, x):
        x = np.asarray(x, dtype=float)
        xn = self.nodes
        xc = np.clip(x, xn[0], xn[-1])
        k = np.clip(np.searchsorted(xn, xc, side="right") - 1, 0, len(xn) - 2)
        h = xn[k + 1] - xn[k]
        tau = (xc - xn[k]) / h
        t2 = tau * tau
        t3 = t2 * tau
        out = ((2 * t3 - 3 * t2 + 1) * self.values[k]
               + (t3 - 2 * t2 + tau) * h * self.slopes[k]
               + (-2 * t3 + 3 * t2) * self.values[k + 1]
               + (t3 - t2) * h * self.slopes[k + 1])
        if self.outside is not None:
            off = (x < xn[0]) | (x > xn[-1])
            if np.any(off):
                out = np.array(out, dtype=float)
                out[off] = self.outside(x[off])
        return out
