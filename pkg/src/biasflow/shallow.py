"""Shallow 1-d networks with clipping or ReLU activation, trained in the biases.

Two variants share one exact calculus:

* ``clipping``: N(x) = outer_bias + sum_i v_i * clip(w_i x + b_i) with fixed
  positive weights v, w and trainable biases (b_1..b_h, outer_bias).  Neuron i
  is non-constant exactly on the activity interval
  (psi_i, psi_i + 1/w_i) intersected with (a, b), psi_i = -b_i / w_i.
* ``relu``: N(x) = outer_bias + sum_j v_j * max(x - t_j, 0) with kink
  positions t_j as the trainable coordinates (inner weights normalised to 1;
  a general max(w x + b, 0) neuron maps to kink -b/w and outer weight v*w,
  with the w^2 chain-rule factor kept in ``kink_metric`` so the original
  bias-coordinate flow can be reproduced exactly).

The squared-L2 risk against a piecewise-polynomial target f under an
unnormalised density p supported on (a, b) is itself a piecewise-polynomial
integral, so risk, gradient, and Hessian are evaluated in closed form.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .piecewise import PiecewisePolynomial, _dedupe_knots

CLIPPING = "clipping"
RELU = "relu"


@dataclass(frozen=True)
class ShallowParams:
    variant: str
    outer_weights: np.ndarray  # v, length h
    inner_weights: np.ndarray  # w, length h (relu: all ones)
    inner_biases: np.ndarray   # clipping: biases b_i; relu: kink positions
    outer_bias: float
    trainable: np.ndarray = None  # bool mask over (inner..., outer)
    kink_metric: np.ndarray = None  # relu only: w_j^2 of the raw parametrisation

    def __post_init__(self):
        v = np.asarray(self.outer_weights, dtype=float)
        w = np.asarray(self.inner_weights, dtype=float)
        b = np.asarray(self.inner_biases, dtype=float)
        if self.variant not in (CLIPPING, RELU):
            raise ValueError(f"unknown variant {self.variant!r}")
        if not (v.shape == w.shape == b.shape) or v.ndim != 1:
            raise ValueError("outer_weights, inner_weights, inner_biases must be 1-d and equal length")
        if self.variant == CLIPPING:
            if np.min(v) <= 0 or np.min(w) <= 0:
                raise ValueError("clipping variant requires strictly positive weights")
        else:
            if not np.allclose(w, 1.0):
                raise ValueError("relu variant fixes inner weights to 1")
        mask = self.trainable
        if mask is None:
            # clipping theorems train all biases, relu theorems only inner ones
            mask = np.ones(v.size + 1, dtype=bool)
            if self.variant == RELU:
                mask[-1] = False
        mask = np.asarray(mask, dtype=bool)
        if mask.shape != (v.size + 1,):
            raise ValueError("trainable mask must have length h + 1")
        metric = self.kink_metric
        if metric is not None:
            metric = np.asarray(metric, dtype=float)
            if metric.shape != v.shape or np.min(metric) <= 0:
                raise ValueError("kink_metric must be positive, length h")
        object.__setattr__(self, "outer_weights", v)
        object.__setattr__(self, "inner_weights", w)
        object.__setattr__(self, "inner_biases", b)
        object.__setattr__(self, "outer_bias", float(self.outer_bias))
        object.__setattr__(self, "trainable", mask)
        object.__setattr__(self, "kink_metric", metric)

    @property
    def h(self) -> int:
        return self.outer_weights.size

    def kinks(self) -> np.ndarray:
        """Left activation thresholds: psi_i = -b_i/w_i (clipping) or t_j (relu)."""
        if self.variant == CLIPPING:
            return -self.inner_biases / self.inner_weights
        return self.inner_biases.copy()

    def with_biases(self, inner: np.ndarray, outer: float) -> "ShallowParams":
        return ShallowParams(
            self.variant, self.outer_weights, self.inner_weights,
            np.asarray(inner, dtype=float), float(outer),
            trainable=self.trainable, kink_metric=self.kink_metric,
        )

    def bias_vector(self) -> np.ndarray:
        """Trainable-layout state: (inner biases..., outer bias)."""
        return np.concatenate([self.inner_biases, [self.outer_bias]])


@dataclass(frozen=True)
class ProblemData:
    """Target f and unnormalised input density p supported exactly on (a, b)."""

    a: float
    b: float
    f: PiecewisePolynomial
    p: PiecewisePolynomial
    _cache: dict = field(default_factory=dict, compare=False, repr=False)

    def __post_init__(self):
        if not self.b > self.a:
            raise ValueError("need b > a")
        grid = np.linspace(self.a, self.b, 257)[1:-1]
        if np.min(self.p.eval(grid)) < 0:
            raise ValueError("density must be nonnegative on (a, b)")
        lo = self.a - 1e-9 * max(1.0, abs(self.a))
        hi = self.b + 1e-9 * max(1.0, abs(self.b))
        outside = np.concatenate([
            np.linspace(lo - 10.0, lo, 17), np.linspace(hi, hi + 10.0, 17)])
        if np.max(np.abs(self.p.eval(outside))) > 0:
            raise ValueError("density must vanish outside [a, b]")
        if self.mass() <= 0:
            raise ValueError("density must have positive mass on (a, b)")

    def mass(self) -> float:
        return self._cached("mass", lambda: self.p.integrate(self.a, self.b))

    def f_range(self) -> tuple[float, float]:
        return self.f.eval(self.a), self.f.eval(self.b)

    def sup_f_prime(self, n_grid: int = 2001) -> float:
        df = self._cached("df", self.f.derivative)
        xs = np.concatenate([np.linspace(self.a, self.b, n_grid), df.breakpoints])
        xs = xs[(xs >= self.a) & (xs <= self.b)]
        return float(np.max(df.eval(xs)))

    def lipschitz_f(self, n_grid: int = 2001) -> float:
        df = self._cached("df", self.f.derivative)
        xs = np.concatenate([np.linspace(self.a, self.b, n_grid), df.breakpoints])
        xs = xs[(xs >= self.a) & (xs <= self.b)]
        return float(np.max(np.abs(df.eval(xs))))

    def sup_p(self, n_grid: int = 2001) -> float:
        xs = np.concatenate([np.linspace(self.a, self.b, n_grid), self.p.breakpoints])
        xs = xs[(xs >= self.a) & (xs <= self.b)]
        return float(np.max(self.p.eval(xs)))

    def _cached(self, key, builder):
        if key not in self._cache:
            self._cache[key] = builder()
        return self._cache[key]


def uniform_problem(a: float, b: float, f: PiecewisePolynomial) -> ProblemData:
    p = PiecewisePolynomial.from_segments([a, b], [[0.0], [1.0], [0.0]])
    return ProblemData(a, b, f, p)


# -- realization -------------------------------------------------------------

def realization_pp(params: ShallowParams) -> PiecewisePolynomial:
    """The network response as a piecewise-linear function over all of R."""
    v, w = params.outer_weights, params.inner_weights
    if params.variant == CLIPPING:
        lo = -params.inner_biases / w
        events = np.concatenate([lo, lo + 1.0 / w])
        deltas = np.concatenate([v * w, -v * w])
    else:
        events = params.inner_biases
        deltas = v.copy()
    order = np.argsort(events, kind="stable")
    events, deltas = events[order], deltas[order]
    knots = _dedupe_knots(events)
    if knots.size == 0:
        return PiecewisePolynomial.constant(params.outer_bias)
    # accumulate slope changes onto deduped knots
    slot = np.searchsorted(knots, events)
    slot = np.clip(slot, 0, knots.size - 1)
    # events may sit just left of their deduped representative
    near = np.abs(knots[np.minimum(slot, knots.size - 1)] - events) > np.abs(
        knots[np.maximum(slot - 1, 0)] - events)
    slot = np.where(near, np.maximum(slot - 1, 0), slot)
    slope_delta = np.zeros(knots.size)
    np.add.at(slope_delta, slot, deltas)
    slopes = np.concatenate([[0.0], np.cumsum(slope_delta)])  # per segment
    # left of the first knot the response is the constant floor outer_bias;
    # knot values then accumulate slope * gap
    yk = params.outer_bias + np.concatenate(
        [[0.0], np.cumsum(slopes[1:-1] * np.diff(knots))])
    intercepts = np.concatenate([[params.outer_bias], yk - slopes[1:] * knots])
    return PiecewisePolynomial(knots, np.column_stack([intercepts, slopes]))


def realization(params: ShallowParams, x):
    return realization_pp(params).eval(x)


# -- activity intervals ------------------------------------------------------

def activity_interval(params: ShallowParams, i: int, data: ProblemData):
    """Open interval on which clipping neuron i is non-constant, or None.

    Raises for the relu variant, whose activity region is the half line
    (kink, inf) intersected with (a, b); see :func:`active_region`.
    """
    if params.variant != CLIPPING:
        raise ValueError("activity_interval is defined for the clipping variant")
    return active_region(params, i, data)


def active_region(params: ShallowParams, i: int, data: ProblemData):
    """Open subinterval of (a, b) where neuron i is non-constant, or None."""
    if params.variant == CLIPPING:
        psi = -params.inner_biases[i] / params.inner_weights[i]
        lo = max(psi, data.a)
        hi = min(psi + 1.0 / params.inner_weights[i], data.b)
    else:
        lo = max(params.inner_biases[i], data.a)
        hi = data.b
    if lo < hi:
        return (lo, hi)
    return None


def active_regions(params: ShallowParams, data: ProblemData):
    return [active_region(params, i, data) for i in range(params.h)]


# -- risk, gradient, Hessian -------------------------------------------------

def _interval_bounds(params: ShallowParams, data: ProblemData):
    """Clamped per-neuron integration bounds (empty intervals collapse)."""
    if params.variant == CLIPPING:
        psi = -params.inner_biases / params.inner_weights
        lo = np.clip(psi, data.a, data.b)
        hi = np.clip(psi + 1.0 / params.inner_weights, data.a, data.b)
    else:
        lo = np.clip(params.inner_biases, data.a, data.b)
        hi = np.full(params.h, data.b)
    return lo, np.maximum(lo, hi)


def residual_pp(params: ShallowParams, data: ProblemData) -> PiecewisePolynomial:
    return realization_pp(params) - data.f


def risk_exact(params: ShallowParams, data: ProblemData) -> float:
    integrand = residual_pp(params, data).square() * data.p
    return max(integrand.integrate(data.a, data.b), 0.0)


def risk_gradient(params: ShallowParams, data: ProblemData, masked: bool = True) -> np.ndarray:
    """Exact gradient of the risk in the bias coordinates, of length h + 1.

    Entries outside the trainable mask are zeroed when ``masked`` (mirrors the
    index-set indicator in the generalized gradient of the training dynamics).
    """
    q = residual_pp(params, data) * data.p
    F = q.antideriv_eval
    lo, hi = _interval_bounds(params, data)
    g = np.empty(params.h + 1)
    if params.variant == CLIPPING:
        g[:-1] = 2.0 * params.outer_weights * (F(hi) - F(lo))
    else:
        g[:-1] = -2.0 * params.outer_weights * (F(hi) - F(lo))
    g[-1] = 2.0 * (F(data.b) - F(data.a))
    if masked:
        g = np.where(params.trainable, g, 0.0)
    return g


def _boundary_term(params, data, resid):
    """[(N - f) p](x) with p taken as zero outside the open support (a, b)."""
    def val(x):
        if x <= data.a or x >= data.b:
            return 0.0
        return resid.eval(x) * data.p.eval(x)
    return val


def risk_hessian(params: ShallowParams, data: ProblemData) -> np.ndarray:
    """Exact (h+1) x (h+1) Hessian in the bias coordinates (symmetric)."""
    h = params.h
    resid = residual_pp(params, data)
    P = data.p.antideriv_eval
    lo, hi = _interval_bounds(params, data)
    H = np.zeros((h + 1, h + 1))
    v = params.outer_weights
    bval = _boundary_term(params, data, resid)
    if params.variant == CLIPPING:
        w = params.inner_weights
        # overlap masses: integral of p over I_i cap I_j
        olo = np.maximum.outer(lo, lo)
        ohi = np.minimum.outer(hi, hi)
        olo = np.minimum(olo, ohi)
        overlap = P(ohi) - P(olo)
        H[:h, :h] = 2.0 * np.outer(v, v) * overlap
        psi = -params.inner_biases / w
        for i in range(h):
            H[i, i] -= 2.0 * (v[i] / w[i]) * (bval(psi[i] + 1.0 / w[i]) - bval(psi[i]))
        H[:h, h] = H[h, :h] = 2.0 * v * (P(hi) - P(lo))
    else:
        t = params.inner_biases
        start = np.clip(np.maximum.outer(t, t), data.a, data.b)
        H[:h, :h] = 2.0 * np.outer(v, v) * (P(data.b) - P(start))
        for j in range(h):
            if data.a <= t[j] <= data.b:
                H[j, j] += 2.0 * v[j] * bval(t[j])
        H[:h, h] = H[h, :h] = -2.0 * v * (P(data.b) - P(np.clip(t, data.a, data.b)))
    H[h, h] = 2.0 * data.mass()
    return 0.5 * (H + H.T)


# -- structural bounds used as runtime diagnostics ---------------------------

def realization_bound_holds(params: ShallowParams, data: ProblemData, n_grid: int = 512) -> bool:
    """|N(x) - outer_bias| <= sum v_i on [a, b] (clipping variant)."""
    if params.variant != CLIPPING:
        raise ValueError("bound applies to the clipping variant")
    xs = np.linspace(data.a, data.b, n_grid)
    dev = np.abs(realization_pp(params).eval(xs) - params.outer_bias)
    return bool(np.max(dev) <= np.sum(params.outer_weights) + 1e-12)


def outer_bias_bound(params: ShallowParams, data: ProblemData) -> float:
    """Closed-form a-priori bound on |outer_bias| in terms of the risk."""
    mass = data.mass()
    f2 = (data.f * data.f * data.p).integrate(data.a, data.b)
    L = risk_exact(params, data)
    return mass ** -0.5 * (np.sqrt(L) + np.sqrt(max(f2, 0.0))) + float(
        np.sum(params.outer_weights))
