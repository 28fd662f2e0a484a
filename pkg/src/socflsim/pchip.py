"""Shape-preserving piecewise cubic Hermite interpolation.

Knot derivatives follow the classic monotone construction (Fritsch-Carlson):
at an interior knot the derivative is zero whenever the two adjacent secant
slopes differ in sign or either is zero, otherwise a weighted harmonic mean
of the slopes; at the two ends a one-sided three-point estimate is used,
clamped to the sign of the boundary slope and to at most three times its
magnitude. Every cubic piece is then monotone between its knots, so the
interpolant never overshoots the bracketing knot values.
"""

from __future__ import annotations

import numpy as np


def _edge_derivative(h0: float, h1: float, m0: float, m1: float) -> float:
    """One-sided three-point derivative estimate for a boundary knot."""
    d = ((2.0 * h0 + h1) * m0 - h0 * m1) / (h0 + h1)
    if np.sign(d) != np.sign(m0):
        return 0.0
    if np.sign(m0) != np.sign(m1) and abs(d) > 3.0 * abs(m0):
        return 3.0 * m0
    return d


def _knot_derivatives(x: np.ndarray, y: np.ndarray) -> np.ndarray:
    h = np.diff(x)
    m = np.diff(y) / h
    n = len(x)
    if n == 2:
        # Two knots define a line; both end derivatives equal the secant.
        return np.array([m[0], m[0]])

    d = np.empty(n)
    sm = np.sign(m)
    flat = (sm[1:] != sm[:-1]) | (m[1:] == 0.0) | (m[:-1] == 0.0)
    w1 = 2.0 * h[1:] + h[:-1]
    w2 = h[1:] + 2.0 * h[:-1]
    with np.errstate(divide="ignore", invalid="ignore"):
        inv = (w1 / (w1 + w2)) / m[:-1] + (w2 / (w1 + w2)) / m[1:]
        d[1:-1] = np.where(flat, 0.0, 1.0 / inv)
    d[0] = _edge_derivative(h[0], h[1], m[0], m[1])
    d[-1] = _edge_derivative(h[-1], h[-2], m[-1], m[-2])
    return d


class MonotoneCubicInterpolator:
    """Cubic Hermite interpolant with shape-preserving knot derivatives.

    Requires at least two knots with strictly increasing, finite x. Queries
    outside the knot range are not supported (callers resample within the
    observed span).
    """

    def __init__(self, x: np.ndarray, y: np.ndarray) -> None:
        x = np.asarray(x, dtype=float)
        y = np.asarray(y, dtype=float)
        if x.ndim != 1 or x.shape != y.shape:
            raise ValueError("knots must be two equal-length 1-d arrays")
        if len(x) < 2:
            raise ValueError("insufficient_samples: need at least 2 knots")
        if not np.all(np.isfinite(x)) or not np.all(np.isfinite(y)):
            raise ValueError("knots must be finite")
        if np.any(np.diff(x) <= 0):
            raise ValueError("knot x values must be strictly increasing")
        self.x = x
        self.y = y
        self.d = _knot_derivatives(x, y)
        h = np.diff(x)
        m = np.diff(y) / h
        # Local power-basis coefficients per segment; evaluating from the left
        # knot keeps flat segments and left knots exact in floating point.
        self._c2 = (3.0 * m - 2.0 * self.d[:-1] - self.d[1:]) / h
        self._c3 = (self.d[:-1] + self.d[1:] - 2.0 * m) / (h * h)

    def __call__(self, q: np.ndarray) -> np.ndarray:
        q = np.asarray(q, dtype=float)
        if q.size and (q.min() < self.x[0] or q.max() > self.x[-1]):
            raise ValueError("query outside knot range")
        idx = np.clip(np.searchsorted(self.x, q, side="right") - 1, 0, len(self.x) - 2)
        s = q - self.x[idx]
        return self.y[idx] + s * (self.d[idx] + s * (self._c2[idx] + s * self._c3[idx]))
