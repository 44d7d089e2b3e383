"""Shared generators for randomized calculus checks.

Finite-difference comparisons need the kink endpoints to stay away from the
breakpoints of f and p (and from each other for second differences): the
risk is C^2 but its third derivative jumps where interval endpoints cross
structure, which would poison the FD truncation error.  The generators below
resample until a margin holds, so the sweeps are deterministic and clean.
"""

import numpy as np
import pytest

from biasflow.piecewise import PiecewisePolynomial
from biasflow.shallow import ProblemData, ShallowParams, uniform_problem

MARGIN = 2e-3


def linear_target_problem():
    return uniform_problem(0.0, 1.0, PiecewisePolynomial.line(0.0, 1.0))


def convex_target_problem():
    # f = x^2 + 2x on (0, 1): f(0) = 0, increasing, strictly convex
    f = PiecewisePolynomial(np.empty(0), [[0.0, 2.0, 1.0]])
    return uniform_problem(0.0, 1.0, f)


def tent_density_problem():
    # piecewise-linear density rising then falling on (0, 1), mass 1
    p = PiecewisePolynomial.from_segments(
        [0.0, 0.5, 1.0], [[0.0], [0.0, 4.0], [4.0, -4.0], [0.0]])
    f = PiecewisePolynomial.from_segments(
        [0.5], [[0.1, 0.8], [0.35, 0.3]])  # increasing, kink at 0.5
    return ProblemData(0.0, 1.0, f, p)


def _kink_points(variant, w, biases):
    if variant == "clipping":
        lo = -biases / w
        return np.concatenate([lo, lo + 1.0 / w])
    return biases


def _margins_ok(variant, w, biases, data, margin=MARGIN):
    pts = _kink_points(variant, w, biases)
    special = np.concatenate([
        [data.a, data.b], data.f.breakpoints, data.p.breakpoints])
    for x in pts:
        if np.min(np.abs(special - x)) < margin:
            return False
    diffs = np.abs(pts[:, None] - pts[None, :])
    np.fill_diagonal(diffs, np.inf)
    return bool(np.min(diffs) > margin)


def random_params(variant, h, rng, data, margin=MARGIN):
    """Random parameters with kinks kept off every structural breakpoint."""
    for _ in range(200):
        if variant == "clipping":
            v = rng.uniform(0.2, 1.5, h)
            w = rng.uniform(0.6, 2.5, h)
            biases = rng.uniform(-2.0, 1.5, h)
        else:
            v = rng.uniform(-1.0, 1.5, h)
            w = np.ones(h)
            biases = rng.uniform(-0.5, 1.3, h)
        if _margins_ok(variant, w, biases, data, margin):
            return ShallowParams(variant, v, w, biases,
                                 float(rng.normal(scale=0.5)))
    raise RuntimeError("could not find a margin-respecting configuration")


@pytest.fixture(scope="session")
def rng():
    return np.random.default_rng(1234)
