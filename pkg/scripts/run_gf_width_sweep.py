#!/usr/bin/env python3
"""Gradient-flow width sweep: limiting risks and classifications per width.

Runs the randomly initialized gradient-flow experiment at several hidden
widths for one activation variant and prints a summary table (median
limiting risk, fraction below the threshold, descending counts).
"""

import argparse

import numpy as np

from biasflow import flow
from biasflow import initschemes as ini
from biasflow import shallow as sh
from biasflow.piecewise import PiecewisePolynomial as PP


def build_problem(variant):
    if variant == "clipping":
        f = PP.line(0.6, 0.28)
        p = PP.from_segments([-2.0, 2.0], [[0.0], [0.25], [0.0]])
        return sh.ProblemData(-2.0, 2.0, f, p)
    f = PP(np.empty(0), [[0.0, 1.0, 0.5]])
    p = PP.from_segments([0.0, 1.0], [[0.0], [1.0], [0.0]])
    return sh.ProblemData(0.0, 1.0, f, p)


def main():
    ap = argparse.ArgumentParser()
    ap.add_argument("--variant", choices=["clipping", "relu"], default="clipping")
    ap.add_argument("--widths", type=int, nargs="+", default=[4, 16, 64])
    ap.add_argument("--trials", type=int, default=50)
    ap.add_argument("--seed", type=int, default=0)
    ap.add_argument("--threshold", type=float, default=None)
    args = ap.parse_args()

    data = build_problem(args.variant)
    if args.variant == "clipping":
        scheme = ini.clipping_theorem(7 / 8, 3.0)
        kind, kwargs = flow.CLIPPING_EXPERIMENT, dict(
            horizon=25.0, max_horizon=400.0, movement_tol=1e-6)
        threshold = args.threshold if args.threshold is not None else 0.03
    else:
        scheme = ini.relu_theorem(4 / 15, 4 / 15, 9 / 10, 9 / 10)
        kind, kwargs = flow.RELU_EXPERIMENT, dict(
            horizon=150.0, max_horizon=450.0, movement_tol=3e-3)
        threshold = args.threshold if args.threshold is not None else 0.01

    print(f"variant={args.variant} scheme={scheme.describe()} "
          f"trials={args.trials} threshold={threshold}")
    print("width  converged  descending  median_risk  frac_below")
    for h in args.widths:
        outs = flow.run_theorem_experiment(
            kind, h, data, scheme, args.trials, args.seed,
            sliver_frac=1e-3, **kwargs)
        s = flow.summarize_outcomes(outs, threshold)
        print(f"{h:5d}  {s['converged']:9d}  {s['descending']:10d}  "
              f"{s['median_risk']:11.5g}  {s['frac_below_threshold']:10.2f}")


if __name__ == "__main__":
    main()
