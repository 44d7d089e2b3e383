"""Critical-point detection, classification, and structural bounds.

A point is approximately critical when the masked gradient norm falls below
``grad_tol``; it is *descending* when the Hessian restricted to the trainable
coordinates has an eigenvalue below ``-eig_tol`` (randomly initialized
gradient flow avoids such points almost surely).  The remaining checks are
conditional diagnostics: they are reported always but only meaningful when
the corresponding structural hypotheses hold, so callers assert them only
for qualifying runs.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .shallow import (
    CLIPPING,
    ProblemData,
    ShallowParams,
    active_regions,
    realization_pp,
    risk_exact,
    risk_gradient,
    risk_hessian,
)

DESCENDING = "descending"
NON_DESCENDING = "non-descending"


@dataclass(frozen=True)
class CriticalReport:
    gradient_norm: float
    is_critical: bool
    min_trainable_eigenvalue: float
    classification: str
    nestedness_ok: bool
    slope_sum_ok: bool
    limit_risk_bound: float
    endpoint_bounds: tuple  # signed gaps (N(a) - f(a), N(b) - f(b))
    risk: float
    sum_overlapping_outer: float  # V
    segment_residuals: tuple  # per-interval integral of (N - f) p

    def csv_row(self) -> dict:
        return {
            "gradient_norm": self.gradient_norm,
            "is_critical": int(self.is_critical),
            "min_trainable_eigenvalue": self.min_trainable_eigenvalue,
            "classification": self.classification,
            "nestedness_ok": int(self.nestedness_ok),
            "slope_sum_ok": int(self.slope_sum_ok),
            "limit_risk_bound": self.limit_risk_bound,
            "endpoint_gap_a": self.endpoint_bounds[0],
            "endpoint_gap_b": self.endpoint_bounds[1],
            "risk": self.risk,
            "V": self.sum_overlapping_outer,
        }


CSV_COLUMNS = [
    "gradient_norm", "is_critical", "min_trainable_eigenvalue", "classification",
    "nestedness_ok", "slope_sum_ok", "limit_risk_bound",
    "endpoint_gap_a", "endpoint_gap_b", "risk", "V",
]


def _sweep_points(regions):
    """Midpoints of the refinement induced by all region endpoints."""
    ends = sorted({e for r in regions if r is not None for e in r})
    if len(ends) < 2:
        return []
    return [0.5 * (a + b) for a, b in zip(ends[:-1], ends[1:])]


def overlapping_outer_weight_sup(
    params: ShallowParams, data: ProblemData, min_mass_frac: float = 0.0
) -> float:
    """V = sup_x sum of outer weights over regions covering x (0 if none).

    ``min_mass_frac`` drops regions whose density mass is below that fraction
    of the total: neurons exit the domain only asymptotically, so a detected
    limit can carry vanishing slivers that the asymptotic V does not see.
    The default keeps every region (the literal definition).
    """
    regions = active_regions(params, data)
    if min_mass_frac > 0.0:
        P = data.p.antideriv_eval
        cut = min_mass_frac * data.mass()
        regions = [
            r if r is not None and (P(r[1]) - P(r[0])) >= cut else None
            for r in regions
        ]
    best = 0.0
    for x in _sweep_points(regions):
        tot = sum(
            v for v, r in zip(params.outer_weights, regions)
            if r is not None and r[0] < x < r[1]
        )
        best = max(best, tot)
    return best


def nestedness_check(params: ShallowParams, data: ProblemData) -> bool:
    """True iff every overlapping pair of activity regions is nested."""
    regions = [r for r in active_regions(params, data) if r is not None]
    for i in range(len(regions)):
        for j in range(i + 1, len(regions)):
            (a1, b1), (a2, b2) = regions[i], regions[j]
            if min(b1, b2) <= max(a1, a2):
                continue  # disjoint
            nested = (a1 <= a2 and b2 <= b1) or (a2 <= a1 and b1 <= b2)
            if not nested:
                return False
    return True


def slope_sum_check(params: ShallowParams, data: ProblemData, tol: float = 1e-8) -> bool:
    """sum of v_j w_j over covering regions <= 4 max, at every sweep point."""
    regions = active_regions(params, data)
    vw = params.outer_weights * params.inner_weights
    for x in _sweep_points(regions):
        covering = [
            vw[i] for i, r in enumerate(regions)
            if r is not None and r[0] < x < r[1]
        ]
        if covering and sum(covering) > 4.0 * max(covering) + tol:
            return False
    return True


def theorem_risk_bound(params: ShallowParams, data: ProblemData) -> float:
    """Variant-appropriate closed-form bound on the limit risk."""
    if params.variant == CLIPPING:
        V = overlapping_outer_weight_sup(params, data)
        fa, fb = data.f_range()
        return (2.0 * V * V + (fb - fa) * V) * data.mass()
    M = max(float(np.max(params.outer_weights)), abs(params.outer_bias))
    L = data.sup_f_prime()
    return M * (L + M) * data.sup_p() * (data.b - data.a)


def bounds_at_limit(params: ShallowParams, data: ProblemData) -> dict:
    V = overlapping_outer_weight_sup(params, data)
    fa, fb = data.f_range()
    N = realization_pp(params)
    M = max(float(np.max(params.outer_weights)), abs(params.outer_bias))
    L = data.sup_f_prime()
    return {
        "V": V,
        "theorem_2_25_rhs": (2.0 * V * V + (fb - fa) * V) * data.mass(),
        "cor_3_7_rhs": M * (L + M) * data.sup_p() * (data.b - data.a),
        "endpoint_gaps": (abs(N.eval(data.a) - fa), abs(N.eval(data.b) - fb)),
    }


def mean_residuals(params: ShallowParams, data: ProblemData,
                   min_mass_frac: float = 0.0) -> np.ndarray:
    """p-weighted mean of (N - f) over each active region, plus overall.

    At a critical point of the masked dynamics all entries vanish; unlike
    the raw gradient components they are not damped by small outer weights
    or narrow activity windows, so their size certifies genuine proximity
    to a critical point.  Regions carrying less than ``min_mass_frac`` of
    the density mass are skipped (exit transients, cf.
    :func:`overlapping_outer_weight_sup`).
    """
    q = (realization_pp(params) - data.f) * data.p
    F = q.antideriv_eval
    P = data.p.antideriv_eval
    cut = min_mass_frac * data.mass()
    out = []
    for active, r in zip(params.trainable[:-1], active_regions(params, data)):
        if r is None or not active:
            out.append(0.0)
            continue
        mass = P(r[1]) - P(r[0])
        out.append((F(r[1]) - F(r[0])) / mass if mass > cut else 0.0)
    # the overall residual is a critical equation only for a trained outer bias
    if params.trainable[-1]:
        out.append((F(data.b) - F(data.a)) / data.mass())
    return np.array(out)


def segment_residuals(params: ShallowParams, data: ProblemData) -> tuple:
    """Integrals of (N - f) p over the refinement by region endpoints.

    All of them vanish at critical points of the masked dynamics whenever
    the corresponding neuron integrals do; reported as raw diagnostics.
    """
    regions = [r for r in active_regions(params, data) if r is not None]
    ends = sorted({e for r in regions for e in r} | {data.a, data.b})
    q = (realization_pp(params) - data.f) * data.p
    F = q.antideriv_eval
    return tuple(F(hi) - F(lo) for lo, hi in zip(ends[:-1], ends[1:]))


def classify(
    params: ShallowParams,
    data: ProblemData,
    grad_tol: float = 1e-7,
    eig_tol: float = 1e-6,
) -> CriticalReport:
    g = risk_gradient(params, data)
    gnorm = float(np.linalg.norm(g))
    H = risk_hessian(params, data)
    mask = params.trainable
    Ht = H[np.ix_(mask, mask)]
    try:
        eigs = np.linalg.eigvalsh(Ht) if Ht.size else np.array([0.0])
    except np.linalg.LinAlgError as exc:  # pragma: no cover
        raise RuntimeError("eigenvalue solve failed on the trainable Hessian") from exc
    min_eig = float(eigs[0])
    N = realization_pp(params)
    fa, fb = data.f_range()
    return CriticalReport(
        gradient_norm=gnorm,
        is_critical=gnorm <= grad_tol,
        min_trainable_eigenvalue=min_eig,
        classification=DESCENDING if min_eig < -eig_tol else NON_DESCENDING,
        nestedness_ok=nestedness_check(params, data),
        slope_sum_ok=slope_sum_check(params, data),
        limit_risk_bound=theorem_risk_bound(params, data),
        endpoint_bounds=(N.eval(data.a) - fa, N.eval(data.b) - fb),
        risk=risk_exact(params, data),
        sum_overlapping_outer=overlapping_outer_weight_sup(params, data),
        segment_residuals=segment_residuals(params, data),
    )


# -- hypothesis checkers for the conditional bound assertions -----------------

def clipping_bound_hypotheses(
    init: ShallowParams, limit: ShallowParams, data: ProblemData,
    min_mass_frac: float = 0.0,
) -> dict:
    """The three run-level hypotheses behind the clipping limit-risk bound.

    (lip) Lip(f) < min_i v_i w_i, (mass) V below the balanced-fit margin,
    (init_activity) enough outer-weight mass active at time zero.  V is the
    sliver-filtered sup when ``min_mass_frac`` is positive.
    """
    lip = data.lipschitz_f()
    vw_min = float(np.min(init.outer_weights * init.inner_weights))
    V = overlapping_outer_weight_sup(limit, data, min_mass_frac)
    fa, fb = data.f_range()
    upper = ((data.f * (-1.0) + fb) * data.p).integrate(data.a, data.b)
    lower = ((data.f - fa) * data.p).integrate(data.a, data.b)
    margin = min(upper, lower) / data.mass()
    active0 = sum(
        v for v, r in zip(init.outer_weights, active_regions(init, data))
        if r is not None
    )
    return {
        "lip": bool(lip < vw_min),
        "mass": bool(V < margin),
        "init_activity": bool(active0 > (fb - fa) + 4.0 * V),
        "V": V,
        "all": bool(lip < vw_min and V < margin
                    and active0 > (fb - fa) + 4.0 * V),
    }


def relu_bound_hypotheses(init: ShallowParams, data: ProblemData) -> dict:
    """Slope-mass condition guaranteeing the limit overshoots f at b."""
    L = data.sup_f_prime()
    mass = float(np.sum(init.outer_weights[init.inner_biases < data.b]))
    pos = float(np.min(init.outer_weights)) > 0
    return {"slope_mass": bool(mass >= L), "positive_weights": bool(pos),
            "all": bool(pos and mass >= L)}
