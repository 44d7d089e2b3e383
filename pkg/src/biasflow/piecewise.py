"""Exact algebra and integration for piecewise polynomial functions on the real line.

A function is represented by K strictly increasing finite breakpoints and
K + 1 coefficient rows (ascending powers, monomial basis), one row per open
interval; the two outer intervals extend to -inf and +inf.  Evaluation at a
breakpoint takes the right segment's value.  All arithmetic is exact up to
floating point; integration uses the closed-form antiderivative per segment.
"""

from __future__ import annotations

import numpy as np

# Products of (piecewise-linear)^2 with a polynomial density stay well below
# this; anything larger indicates a runaway product chain.
MAX_DEGREE = 16

_KNOT_RTOL = 1e-12


def _dedupe_knots(xs: np.ndarray) -> np.ndarray:
    """Sort and remove near-duplicates (tolerance 1e-12 * max(1, |x|))."""
    xs = np.sort(np.asarray(xs, dtype=float))
    if xs.size <= 1:
        return xs
    tol = _KNOT_RTOL * np.maximum(1.0, np.abs(xs[1:]))
    keep = np.concatenate([[True], np.diff(xs) > tol])
    return xs[keep]


class PiecewisePolynomial:
    """Immutable piecewise polynomial; safe to share between threads."""

    __slots__ = ("breakpoints", "coeffs", "_anti_cache")

    def __init__(self, breakpoints, coeffs):
        bp = np.atleast_1d(np.asarray(breakpoints, dtype=float))
        if bp.size == 0:
            bp = np.empty(0, dtype=float)
        cf = np.atleast_2d(np.asarray(coeffs, dtype=float))
        if bp.size and not np.all(np.diff(bp) > 0):
            raise ValueError("breakpoints must be strictly increasing")
        if cf.shape[0] != bp.size + 1:
            raise ValueError(
                f"need {bp.size + 1} coefficient rows for {bp.size} breakpoints, "
                f"got {cf.shape[0]}"
            )
        if cf.shape[1] > MAX_DEGREE + 1:
            trimmed = cf[:, MAX_DEGREE + 1 :]
            if np.any(trimmed):
                raise ValueError(f"degree exceeds cap {MAX_DEGREE}")
            cf = cf[:, : MAX_DEGREE + 1]
        self.breakpoints = bp
        self.coeffs = cf

    # -- constructors -------------------------------------------------------

    @classmethod
    def constant(cls, c: float) -> "PiecewisePolynomial":
        return cls(np.empty(0), np.array([[float(c)]]))

    @classmethod
    def from_segments(cls, breakpoints, segments) -> "PiecewisePolynomial":
        """Build from a list of per-segment coefficient lists (ragged ok)."""
        segs = [np.atleast_1d(np.asarray(s, dtype=float)) for s in segments]
        width = max(s.size for s in segs)
        cf = np.zeros((len(segs), width))
        for i, s in enumerate(segs):
            cf[i, : s.size] = s
        return cls(breakpoints, cf)

    @classmethod
    def line(cls, intercept: float, slope: float) -> "PiecewisePolynomial":
        return cls(np.empty(0), np.array([[float(intercept), float(slope)]]))

    # -- basic queries -------------------------------------------------------

    @property
    def degree(self) -> int:
        nz = np.any(self.coeffs != 0.0, axis=0)
        return int(np.max(np.nonzero(nz)[0])) if nz.any() else 0

    def segment_index(self, x) -> np.ndarray:
        return np.searchsorted(self.breakpoints, np.asarray(x, dtype=float), side="right")

    def __call__(self, x):
        return self.eval(x)

    def eval(self, x):
        """Evaluate at x (scalar or array); right-continuous at breakpoints."""
        xs = np.asarray(x, dtype=float)
        scalar = xs.ndim == 0
        xs = np.atleast_1d(xs)
        rows = self.coeffs[self.segment_index(xs)]
        out = np.zeros_like(xs)
        for d in range(rows.shape[-1] - 1, -1, -1):  # Horner
            out = out * xs + rows[..., d]
        return float(out[0]) if scalar else out

    # -- arithmetic ----------------------------------------------------------

    def _aligned(self, other: "PiecewisePolynomial"):
        """Common refinement: merged breakpoints plus both coefficient tables."""
        bp = _dedupe_knots(np.concatenate([self.breakpoints, other.breakpoints]))
        if bp.size == 0:
            reps = np.zeros(1)
        else:
            inner = 0.5 * (bp[:-1] + bp[1:])
            reps = np.concatenate([[bp[0] - 1.0], inner, [bp[-1] + 1.0]])
        a = self.coeffs[np.searchsorted(self.breakpoints, reps, side="right")]
        b = other.coeffs[np.searchsorted(other.breakpoints, reps, side="right")]
        return bp, a, b

    @staticmethod
    def _coerce(other):
        if isinstance(other, PiecewisePolynomial):
            return other
        return PiecewisePolynomial.constant(float(other))

    def __add__(self, other):
        other = self._coerce(other)
        bp, a, b = self._aligned(other)
        width = max(a.shape[1], b.shape[1])
        cf = np.zeros((a.shape[0], width))
        cf[:, : a.shape[1]] += a
        cf[:, : b.shape[1]] += b
        return PiecewisePolynomial(bp, cf)

    def __sub__(self, other):
        return self + self._coerce(other).scale(-1.0)

    def __mul__(self, other):
        if not isinstance(other, PiecewisePolynomial):
            return self.scale(float(other))
        bp, a, b = self._aligned(other)
        width = a.shape[1] + b.shape[1] - 1
        if width > MAX_DEGREE + 1:
            raise ValueError(f"product degree {width - 1} exceeds cap {MAX_DEGREE}")
        cf = np.zeros((a.shape[0], width))
        for i in range(a.shape[1]):
            for j in range(b.shape[1]):
                cf[:, i + j] += a[:, i] * b[:, j]
        return PiecewisePolynomial(bp, cf)

    __rmul__ = __mul__
    __radd__ = __add__

    def scale(self, c: float) -> "PiecewisePolynomial":
        return PiecewisePolynomial(self.breakpoints, self.coeffs * float(c))

    def __neg__(self):
        return self.scale(-1.0)

    def square(self) -> "PiecewisePolynomial":
        return self * self

    def derivative(self) -> "PiecewisePolynomial":
        if self.coeffs.shape[1] == 1:
            return PiecewisePolynomial(self.breakpoints, np.zeros((self.coeffs.shape[0], 1)))
        d = np.arange(1, self.coeffs.shape[1])
        return PiecewisePolynomial(self.breakpoints, self.coeffs[:, 1:] * d)

    # -- integration ---------------------------------------------------------

    def _antiderivative_tables(self):
        """Raw per-segment antiderivative coefficients and continuity offsets.

        Returns (acoef, offsets) with F(x) = polyval(acoef[seg], x) + offsets[seg]
        continuous across breakpoints and F == raw antiderivative on segment 0.
        """
        n, width = self.coeffs.shape
        acoef = np.zeros((n, width + 1))
        acoef[:, 1:] = self.coeffs / np.arange(1, width + 1)
        offsets = np.zeros(n)
        if self.breakpoints.size:
            bp = self.breakpoints
            left = np.zeros_like(bp)
            right = np.zeros_like(bp)
            for d in range(width, -1, -1):
                left = left * bp + acoef[:-1, d]
                right = right * bp + acoef[1:, d]
            offsets[1:] = np.cumsum(left - right)
        return acoef, offsets

    def integrate(self, lo: float, hi: float) -> float:
        """Exact integral over [lo, hi]; both bounds must be finite, lo <= hi."""
        lo, hi = float(lo), float(hi)
        if not (np.isfinite(lo) and np.isfinite(hi)):
            raise ValueError("integration bounds must be finite")
        if lo > hi:
            raise ValueError("need lo <= hi")
        F = self.antideriv_eval
        return F(hi) - F(lo)

    def antideriv_eval(self, x):
        """Evaluate the continuous antiderivative (zero at -inf-side anchor)."""
        acoef, offsets = self._cached_antiderivative()
        xs = np.asarray(x, dtype=float)
        scalar = xs.ndim == 0
        xs = np.atleast_1d(xs)
        idx = self.segment_index(xs)
        rows = acoef[idx]
        out = np.zeros_like(xs)
        for d in range(rows.shape[-1] - 1, -1, -1):
            out = out * xs + rows[..., d]
        out = out + offsets[idx]
        return float(out[0]) if scalar else out

    def _cached_antiderivative(self):
        cache = getattr(self, "_anti_cache", None)
        if cache is None:
            cache = self._antiderivative_tables()
            self._anti_cache = cache
        return cache

    # -- misc ----------------------------------------------------------------

    def __repr__(self):
        return (
            f"PiecewisePolynomial(breakpoints={self.breakpoints.tolist()}, "
            f"coeffs={self.coeffs.tolist()})"
        )


def arithmetic(op: str, a: PiecewisePolynomial, b) -> PiecewisePolynomial:
    """Named dispatch over the exact segment algebra: add|sub|mul|scale."""
    if op == "add":
        return a + b
    if op == "sub":
        return a - b
    if op == "mul":
        return a * PiecewisePolynomial._coerce(b)
    if op == "scale":
        return a.scale(float(b))
    raise ValueError(f"unknown operation {op!r}")


def relu_pp() -> PiecewisePolynomial:
    """max(x, 0) as a piecewise polynomial."""
    return PiecewisePolynomial.from_segments([0.0], [[0.0], [0.0, 1.0]])


def clip_pp() -> PiecewisePolynomial:
    """min(max(x, 0), 1) as a piecewise polynomial."""
    return PiecewisePolynomial.from_segments([0.0, 1.0], [[0.0], [0.0, 1.0], [1.0]])


def indicator_pp(lo: float, hi: float, value: float = 1.0) -> PiecewisePolynomial:
    """value on (lo, hi), zero elsewhere."""
    return PiecewisePolynomial.from_segments([lo, hi], [[0.0], [value], [0.0]])
