"""Random parameter initializations: scaled normal / half-normal families.

Shallow schemes follow the width-scaled laws of the convergence analysis:

* ``clipping_theorem(alpha, beta)`` with alpha in (3/4, 1), beta > alpha + 2:
  inner biases ~ h^beta N(0,1), inner weights ~ h^beta |N(0,1)|,
  outer weights ~ h^-alpha |N(0,1)|, outer bias ~ N(0,1).
* ``relu_theorem(alpha, beta, gamma, delta)`` with 0 < alpha + beta < 1,
  2 alpha + beta < gamma, delta > 0: inner weights ~ h^-alpha |N|,
  outer weights ~ h^-beta |N|, inner biases ~ h^-gamma N, outer bias
  ~ h^-delta N; mapped onto the kink parametrisation (kink = -B/W, slope
  V*W) with the W^2 chain-rule metric retained.

Deep schemes fill the flat layout of :mod:`biasflow.deepnet`.  The
``xavier_normal`` / ``he_normal`` weight laws are implemented exactly as the
cited tail displays read: plain centred normals with variance 2/(fan_in +
fan_out) resp. 2/fan_in (library conventions elsewhere sometimes fold these
to positive half-normals; the displays here do not).

All scales stay finite in float64 even for the h^3-sized draws of the
all-biases experiments (magnitudes ~1e9 at width 1000); overflow would
require widths beyond ~1e100, far past anything runnable here.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .shallow import CLIPPING, RELU, ShallowParams

CLIPPING_THEOREM = "clipping_theorem"
RELU_THEOREM = "relu_theorem"
XAVIER_NORMAL = "xavier_normal"
HE_NORMAL = "he_normal"
CUSTOM_4_4 = "custom_section_4_4"
CUSTOM_4_5 = "custom_section_4_5"

_KINDS = (CLIPPING_THEOREM, RELU_THEOREM, XAVIER_NORMAL, HE_NORMAL, CUSTOM_4_4, CUSTOM_4_5)


@dataclass(frozen=True)
class InitScheme:
    kind: str
    alpha: float = None
    beta: float = None
    gamma: float = None
    delta: float = None

    def __post_init__(self):
        if self.kind not in _KINDS:
            raise ValueError(f"unknown init scheme {self.kind!r}")
        if self.kind == CLIPPING_THEOREM:
            if not (0.75 < self.alpha < 1.0):
                raise ValueError("clipping scheme needs alpha in (3/4, 1)")
            if not (self.beta > self.alpha + 2.0):
                raise ValueError("clipping scheme needs beta > alpha + 2")
        elif self.kind == RELU_THEOREM:
            if not (0.0 < self.alpha + self.beta < 1.0):
                raise ValueError("relu scheme needs 0 < alpha + beta < 1")
            if not (2.0 * self.alpha + self.beta < self.gamma):
                raise ValueError("relu scheme needs 2 alpha + beta < gamma")
            if not (self.delta > 0.0):
                raise ValueError("relu scheme needs delta > 0")

    def resolve(self) -> "InitScheme":
        """Expand the named experiment aliases to explicit exponents."""
        if self.kind == CUSTOM_4_4:
            return InitScheme(CLIPPING_THEOREM, alpha=7.0 / 8.0, beta=3.0)
        if self.kind == CUSTOM_4_5:
            return InitScheme(
                RELU_THEOREM, alpha=4.0 / 15.0, beta=4.0 / 15.0,
                gamma=9.0 / 10.0, delta=9.0 / 10.0)
        return self

    def describe(self) -> str:
        parts = [self.kind]
        for name in ("alpha", "beta", "gamma", "delta"):
            val = getattr(self, name)
            if val is not None:
                parts.append(f"{name}={val:g}")
        return " ".join(parts)


def clipping_theorem(alpha: float, beta: float) -> InitScheme:
    return InitScheme(CLIPPING_THEOREM, alpha=alpha, beta=beta)


def relu_theorem(alpha: float, beta: float, gamma: float, delta: float) -> InitScheme:
    return InitScheme(RELU_THEOREM, alpha=alpha, beta=beta, gamma=gamma, delta=delta)


def xavier_normal() -> InitScheme:
    return InitScheme(XAVIER_NORMAL)


def he_normal() -> InitScheme:
    return InitScheme(HE_NORMAL)


def sample_half_normal(scale: float, rng: np.random.Generator, size=None):
    """scale * |Z| with Z standard normal; strictly positive a.s."""
    if scale <= 0:
        raise ValueError("half-normal scale must be positive")
    return scale * np.abs(rng.standard_normal(size))


def init_shallow(scheme: InitScheme, h: int, rng: np.random.Generator) -> ShallowParams:
    """Draw a width-h shallow parameter vector under the given scheme."""
    scheme = scheme.resolve()
    if h < 1:
        raise ValueError("width must be positive")
    if scheme.kind == CLIPPING_THEOREM:
        hb = float(h) ** scheme.beta
        inner_biases = hb * rng.standard_normal(h)
        inner_weights = sample_half_normal(hb, rng, h)
        outer_weights = sample_half_normal(float(h) ** -scheme.alpha, rng, h)
        outer_bias = float(rng.standard_normal())
        return ShallowParams(CLIPPING, outer_weights, inner_weights, inner_biases, outer_bias)
    if scheme.kind == RELU_THEOREM:
        W = sample_half_normal(float(h) ** -scheme.alpha, rng, h)
        V = sample_half_normal(float(h) ** -scheme.beta, rng, h)
        B = float(h) ** -scheme.gamma * rng.standard_normal(h)
        c = float(h) ** -scheme.delta * float(rng.standard_normal())
        return ShallowParams(
            RELU, V * W, np.ones(h), -B / W, c, kink_metric=W * W)
    raise ValueError(f"scheme {scheme.kind!r} does not describe a shallow network")


def init_deep(arch, scheme: InitScheme, rng: np.random.Generator) -> np.ndarray:
    """Flat parameter vector for a fully-connected net under the scheme.

    Theorem schemes apply to the 3-layer (1, h, 1) architecture only and fill
    the layer blocks with the corresponding shallow laws.
    """
    from .deepnet import FlatParams  # local import to avoid a cycle

    scheme = scheme.resolve()
    dims = arch.dims
    theta = np.zeros(arch.param_count)
    fp = FlatParams(arch, theta)
    if scheme.kind in (XAVIER_NORMAL, HE_NORMAL):
        for k in range(1, arch.L + 1):
            fan_in = dims[k - 1]
            var = 2.0 / (fan_in + dims[k]) if scheme.kind == XAVIER_NORMAL else 2.0 / fan_in
            fp.weights(k)[:] = np.sqrt(var) * rng.standard_normal((dims[k], fan_in))
            # biases stay exactly zero
        return theta
    if len(dims) != 3 or dims[0] != 1 or dims[2] != 1:
        raise ValueError("theorem schemes require a (1, h, 1) architecture")
    h = dims[1]
    if scheme.kind == CLIPPING_THEOREM:
        hb = float(h) ** scheme.beta
        fp.weights(1)[:, 0] = sample_half_normal(hb, rng, h)
        fp.biases(1)[:] = hb * rng.standard_normal(h)
        fp.weights(2)[0, :] = sample_half_normal(float(h) ** -scheme.alpha, rng, h)
        fp.biases(2)[:] = rng.standard_normal(1)
        return theta
    if scheme.kind == RELU_THEOREM:
        fp.weights(1)[:, 0] = sample_half_normal(float(h) ** -scheme.alpha, rng, h)
        fp.biases(1)[:] = float(h) ** -scheme.gamma * rng.standard_normal(h)
        fp.weights(2)[0, :] = sample_half_normal(float(h) ** -scheme.beta, rng, h)
        fp.biases(2)[:] = float(h) ** -scheme.delta * rng.standard_normal(1)
        return theta
    raise ValueError(f"scheme {scheme.kind!r} not supported for deep nets")
