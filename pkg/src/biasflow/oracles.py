"""Numeric probability objects behind the initialization analysis.

Everything is computed from the defining integrals (auditable against the
definitions) rather than from special-function identities:

* K0(x) = int_0^inf exp(-x cosh w) dw, truncated where x cosh w > 70 and
  evaluated by adaptive Simpson bisection with the Richardson end correction.
* P(XY <= z) = (2/pi) int_0^z K0(y) dy for X, Y i.i.d. half-normal; the
  logarithmic blow-up of K0 at 0 is integrated through the substitution
  y = e^{-u} on (0, 0.1].
* The Gaussian tail bound int_y^inf sqrt(2/pi) e^{-x^2/2} dx <= e^{-y^2/2},
  with the left side written through the error-function complement.
* Empirical order statistics of sums of the smallest products.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

_TRUNC_EXPONENT = 70.0  # ignore exp(-x cosh w) below e^-70


def _adaptive_simpson(f, a, b, tol, max_depth=48):
    """Adaptive interval bisection, Richardson-accelerated Simpson rule."""
    fa, fm, fb = f(a), f(0.5 * (a + b)), f(b)
    whole = (b - a) / 6.0 * (fa + 4.0 * fm + fb)

    def recurse(a, b, fa, fm, fb, whole, tol, depth):
        m = 0.5 * (a + b)
        lm, rm = 0.5 * (a + m), 0.5 * (m + b)
        flm, frm = f(lm), f(rm)
        left = (m - a) / 6.0 * (fa + 4.0 * flm + fm)
        right = (b - m) / 6.0 * (fm + 4.0 * frm + fb)
        err = left + right - whole
        if depth <= 0 or abs(err) < 15.0 * tol:
            return left + right + err / 15.0
        return (recurse(a, m, fa, flm, fm, left, tol / 2.0, depth - 1)
                + recurse(m, b, fm, frm, fb, right, tol / 2.0, depth - 1))

    return recurse(a, b, fa, fm, fb, whole, tol, max_depth)


def bessel_k0(x: float, tol: float = 1e-12) -> float:
    """Modified Bessel K0 from its integral definition; requires x > 0."""
    x = float(x)
    if x <= 0.0:
        raise ValueError("K0 is defined for positive arguments")
    if x >= _TRUNC_EXPONENT:
        return 0.0
    w_max = math.acosh(_TRUNC_EXPONENT / x)
    return _adaptive_simpson(lambda w: math.exp(-x * math.cosh(w)), 0.0, w_max, tol)


def half_normal_product_cdf(z: float, tol: float = 1e-9) -> float:
    """CDF of the product of two independent half-normals: (2/pi) int_0^z K0."""
    z = float(z)
    if z < 0.0:
        raise ValueError("the product is nonnegative")
    if z == 0.0:
        return 0.0
    k0 = lambda y: bessel_k0(y, tol=1e-11)
    cut = min(z, 0.1)
    # int_0^cut K0(y) dy = int_{ln(1/cut)}^inf K0(e^-u) e^-u du; the integrand
    # decays like u e^-u, so u = 60 is far beyond double precision relevance
    u_lo = math.log(1.0 / cut)
    inner = _adaptive_simpson(
        lambda u: k0(math.exp(-u)) * math.exp(-u), u_lo, 60.0, tol)
    if z > cut:
        # K0 < 1e-18 past 40, below any tolerance in play here
        inner += _adaptive_simpson(k0, cut, min(z, 40.0), tol)
    return min((2.0 / math.pi) * inner, 1.0)


@dataclass(frozen=True)
class TailCheckResult:
    argument: float
    lhs: float
    rhs: float
    holds: bool


def gaussian_tail_check(y: float) -> TailCheckResult:
    """Compare the half-normal tail with its exponential majorant at y >= 0."""
    y = float(y)
    if y < 0.0:
        raise ValueError("tail bound is stated for y >= 0")
    lhs = math.erfc(y / math.sqrt(2.0))
    rhs = math.exp(-0.5 * y * y)
    return TailCheckResult(y, lhs, rhs, lhs <= rhs + 1e-12)


@dataclass(frozen=True)
class OrderStatSummary:
    n_draws: int
    k_smallest: int
    mean: float
    variance: float
    quantiles: dict
    samples: np.ndarray


def order_stat_sum_estimate(
    N: int, gamma: float, trials: int, rng: np.random.Generator
) -> OrderStatSummary:
    """Empirical law of the sum of the ceil(N^gamma) smallest of N products.

    Each product is of two independent standard half-normals.  Requires
    N >= 1 and gamma in (3/4, 1).
    """
    if N < 1:
        raise ValueError("need N >= 1")
    if not (0.75 < gamma < 1.0):
        raise ValueError("gamma must lie in (3/4, 1)")
    k = int(math.ceil(N ** gamma))
    sums = np.empty(trials)
    for t in range(trials):
        prods = np.abs(rng.standard_normal(N)) * np.abs(rng.standard_normal(N))
        prods.sort()
        sums[t] = prods[:k].sum()
    qs = {q: float(np.quantile(sums, q)) for q in (0.1, 0.25, 0.5, 0.75, 0.9)}
    return OrderStatSummary(
        N, k, float(np.mean(sums)), float(np.var(sums, ddof=1)), qs, sums)
