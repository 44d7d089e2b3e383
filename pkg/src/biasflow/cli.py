"""Command-line front end: subcommand dispatch, persistence, figure emission.

Subcommands
-----------
``mc``         run a Monte-Carlo preset (``--preset sec_4_4 .. sec_4_13``)
``train``      one deep training trial, trajectory CSV plus snapshot archive
``gf``         shallow gradient-flow theorem experiment, per-trial CSV
``landscape``  classify a parameter file into a critical-point report row
``oracle``     run the probability-oracle checks as a table

Config files are flat key/value text with ``[section]`` headers; piecewise
polynomials are entered as a ``breakpoints`` row plus ``segment.<i>``
coefficient rows (ascending powers).  The manifest is written last, so its
presence marks a completed run.  The seed may be overridden through the
``BIASFLOW_SEED`` environment variable; the effective value is echoed in the
manifest.
"""

from __future__ import annotations

import argparse
import datetime
import os
import sys
from pathlib import Path

import numpy as np

from . import __version__
from .deepnet import Schedule
from .experiments import PRESETS, AggregateStats, run_monte_carlo, run_trial
from .flow import (
    CLIPPING_EXPERIMENT,
    RELU_EXPERIMENT,
    run_theorem_experiment,
    summarize_outcomes,
)
from .initschemes import clipping_theorem, relu_theorem
from .landscape import CSV_COLUMNS, classify
from .oracles import bessel_k0, gaussian_tail_check, half_normal_product_cdf
from .piecewise import PiecewisePolynomial
from .shallow import ProblemData, ShallowParams

SEED_ENV = "BIASFLOW_SEED"


# -- config text format --------------------------------------------------------

def parse_config(text: str) -> dict:
    """[section] headers with ``key = value`` lines; later keys win."""
    sections: dict[str, dict[str, str]] = {}
    current = None
    for lineno, raw in enumerate(text.splitlines(), 1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if line.startswith("[") and line.endswith("]"):
            current = line[1:-1].strip()
            sections.setdefault(current, {})
            continue
        if "=" not in line or current is None:
            raise ValueError(f"config line {lineno}: expected 'key = value' inside a section")
        key, value = line.split("=", 1)
        sections[current][key.strip()] = value.strip()
    return sections


def serialize_config(sections: dict) -> str:
    out = []
    for name in sections:
        out.append(f"[{name}]")
        for key, value in sections[name].items():
            out.append(f"{key} = {value}")
        out.append("")
    return "\n".join(out)


def pp_from_section(sec: dict, prefix: str) -> PiecewisePolynomial:
    bps = [float(t) for t in sec.get(f"{prefix}.breakpoints", "").split()]
    segs = []
    i = 0
    while f"{prefix}.segment.{i}" in sec:
        segs.append([float(t) for t in sec[f"{prefix}.segment.{i}"].split()])
        i += 1
    if not segs:
        raise ValueError(f"no '{prefix}.segment.N' rows found")
    return PiecewisePolynomial.from_segments(np.array(bps), segs)


def problem_from_config(sections: dict) -> ProblemData:
    sec = sections["problem"]
    return ProblemData(
        float(sec["a"]), float(sec["b"]),
        pp_from_section(sec, "f"), pp_from_section(sec, "p"))


def shallow_params_from_config(sections: dict) -> ShallowParams:
    sec = sections["params"]
    parse = lambda key: np.array([float(t) for t in sec[key].split()])
    kwargs = {}
    if "trainable" in sec:
        kwargs["trainable"] = np.array([t == "1" for t in sec["trainable"].split()])
    return ShallowParams(
        sec["variant"], parse("outer_weights"), parse("inner_weights"),
        parse("inner_biases"), float(sec["outer_bias"]), **kwargs)


# -- artifact writers ------------------------------------------------------------

def _fmt(x) -> str:
    if isinstance(x, (int, np.integer)):
        return str(int(x))
    return format(float(x), ".17g")


def write_csv(path: Path, header: list, rows) -> None:
    with open(path, "w") as fh:
        fh.write(",".join(header) + "\n")
        for row in rows:
            fh.write(",".join(_fmt(v) if not isinstance(v, str) else v for v in row) + "\n")


def write_histogram_csv(path: Path, edges, counts) -> None:
    rows = [(edges[i], edges[i + 1], int(counts[i])) for i in range(len(counts))]
    write_csv(path, ["edge_lo", "edge_hi", "count"], rows)


def write_curve_csv(path: Path, curve) -> None:
    write_csv(path, ["step", "value", "stderr_band"], curve)


def write_trajectory_csv(path: Path, traj) -> None:
    header = ["t", "risk", "grad_norm"] + [
        f"param_{i}" for i in range(traj.checkpoints[0].biases.size)]
    rows = [[c.t, c.risk, c.gradient_norm] + list(c.biases)
            for c in traj.checkpoints]
    write_csv(path, header, rows)


def pp_to_section(pp, prefix: str) -> dict:
    out = {f"{prefix}.breakpoints": " ".join(_fmt(b) for b in pp.breakpoints)}
    for i, row in enumerate(pp.coeffs):
        out[f"{prefix}.segment.{i}"] = " ".join(_fmt(c) for c in row)
    return out


def emit_figure(stats_or_curve, kind: str, path: Path, log_scale: bool = False) -> None:
    """Write a static vector figure (SVG); no display server involved."""
    import matplotlib

    matplotlib.use("Agg")
    import matplotlib.pyplot as plt

    fig, ax = plt.subplots(figsize=(6, 4))
    if kind == "histogram":
        stats: AggregateStats = stats_or_curve
        if stats.final_losses.size == 0:
            raise ValueError("nothing to plot")
        widths = np.diff(stats.hist_edges)
        ax.bar(stats.hist_edges[:-1], stats.hist_counts, width=widths, align="edge")
        ax.set_xlabel("final loss")
        ax.set_ylabel("count")
    elif kind == "curve":
        curve = np.asarray(stats_or_curve)
        if curve.size == 0:
            raise ValueError("nothing to plot")
        ax.plot(curve[:, 0], curve[:, 1])
        if curve.shape[1] > 2:
            ax.fill_between(curve[:, 0], curve[:, 1] - curve[:, 2],
                            curve[:, 1] + curve[:, 2], alpha=0.25)
        if log_scale:
            ax.set_yscale("log")
        ax.set_xlabel("step")
        ax.set_ylabel("value")
    else:
        raise ValueError(f"unknown figure kind {kind!r}")
    fig.tight_layout()
    fig.savefig(path, format="svg")
    plt.close(fig)


class RunManifest:
    """Completion marker: config echo, seeds, artifact list; written last."""

    def __init__(self, command: str, config_echo: dict, base_seed: int, scale: float):
        self.command = command
        self.config_echo = config_echo
        self.base_seed = base_seed
        self.scale = scale
        self.started = datetime.datetime.now(datetime.timezone.utc)
        self.artifacts: list[str] = []

    def add(self, path: Path) -> Path:
        self.artifacts.append(str(path))
        return path

    def write(self, path: Path) -> None:
        ended = datetime.datetime.now(datetime.timezone.utc)
        lines = [
            f"command: {self.command}",
            f"version: {__version__}",
            f"base_seed: {self.base_seed}",
            f"seed_env: {os.environ.get(SEED_ENV, '')}",
            f"scale: {self.scale:g}",
            f"started_utc: {self.started.isoformat()}",
            f"ended_utc: {ended.isoformat()}",
            "artifacts:",
        ]
        lines += [f"  - {a}" for a in self.artifacts]
        lines.append("config:")
        for line in serialize_config(self.config_echo).splitlines():
            lines.append(f"  {line}")
        path.write_text("\n".join(lines) + "\n")


# -- subcommands -----------------------------------------------------------------

def _resolve_seed(args) -> int:
    env = os.environ.get(SEED_ENV)
    if env is not None:
        return int(env)
    return args.seed


def _outdir(args) -> Path:
    out = Path(args.out_dir)
    out.mkdir(parents=True, exist_ok=True)
    return out


def cmd_mc(args) -> int:
    if args.preset not in PRESETS:
        print(f"unknown preset {args.preset!r}; choose from {sorted(PRESETS)}",
              file=sys.stderr)
        return 2
    config = PRESETS[args.preset]
    if args.width is not None:
        config = config.with_width(args.width)
    if args.scale != 1.0:
        config = config.scaled(args.scale)
    overrides = {}
    if args.trials is not None:
        overrides["trials"] = args.trials
    if args.steps is not None:
        overrides["steps"] = args.steps
    if args.batch is not None:
        overrides["batch_size"] = args.batch
    if overrides:
        from dataclasses import replace
        config = replace(config, **overrides)
    seed = _resolve_seed(args)
    from dataclasses import replace
    config = replace(config, base_seed=seed)
    out = _outdir(args)
    stats = run_monte_carlo(config, workers=args.threads)
    echo = {"experiment": {
        "name": config.name, "dims": " ".join(map(str, config.dims)),
        "activation": config.activation, "init": config.init.describe(),
        "trainable": config.trainable, "optimizer": config.optimizer,
        "schedule": config.schedule.describe(),
        "batch_size": str(config.batch_size), "steps": str(config.steps),
        "trials": str(config.trials), "bins": str(config.bins),
        "checkpoint_stride": str(config.checkpoint_stride),
        "reference_step": str(config.reference_step),
        "target": config.target, "aborted_trials": str(stats.aborted),
    }}
    manifest = RunManifest("mc " + config.name, echo, seed, config.scale)
    write_histogram_csv(manifest.add(out / "final_loss_hist.csv"),
                        stats.hist_edges, stats.hist_counts)
    write_curve_csv(manifest.add(out / "grad_norm_curve.csv"), stats.grad_curve)
    write_curve_csv(manifest.add(out / "distance_curve.csv"), stats.distance_curve)
    emit_figure(stats, "histogram", manifest.add(out / "final_loss_hist.svg"))
    emit_figure(stats.grad_curve, "curve", manifest.add(out / "grad_norm_curve.svg"),
                log_scale=args.log_scale)
    emit_figure(stats.distance_curve, "curve",
                manifest.add(out / "distance_curve.svg"), log_scale=args.log_scale)
    manifest.write(out / "manifest.txt")
    print(f"{config.name}: {len(stats.final_losses)} trials, "
          f"median final loss {np.median(stats.final_losses):.6g}")
    return 0


def cmd_train(args) -> int:
    if args.preset not in PRESETS:
        print(f"unknown preset {args.preset!r}", file=sys.stderr)
        return 2
    from dataclasses import replace
    config = PRESETS[args.preset]
    if args.width is not None:
        config = config.with_width(args.width)
    if args.steps is not None:
        config = replace(config, steps=args.steps)
    if args.batch is not None:
        config = replace(config, batch_size=args.batch)
    seed = _resolve_seed(args)
    config = replace(config, base_seed=seed)
    out = _outdir(args)
    rec = run_trial(config, args.trial_index)
    echo = {"train": {"preset": config.name, "steps": str(config.steps),
                      "trial_index": str(args.trial_index),
                      "aborted": str(int(rec.aborted))}}
    manifest = RunManifest("train " + config.name, echo, seed, config.scale)
    rows = list(zip(rec.checkpoint_steps, rec.losses, rec.grad_norms))
    write_csv(manifest.add(out / "trajectory.csv"),
              ["step", "loss", "grad_norm"], rows)
    np.savez(manifest.add(out / "snapshots.npz"),
             **{f"step_{k}": v for k, v in rec.snapshots.items()})
    manifest.write(out / "manifest.txt")
    print(f"final loss {rec.final_loss:.6g} (initial {rec.initial_loss:.6g})")
    return 0 if not rec.aborted else 1


def _default_gf_problem(variant: str):
    """Desk-scale defaults: increasing linear target (clipping) on (-10, 10),
    strictly convex target (relu) on (0, 1); mass-one uniform density."""
    if variant == "clipping":
        f = PiecewisePolynomial.line(0.25, 0.025)
        p = PiecewisePolynomial.from_segments([-10.0, 10.0], [[0.0], [0.05], [0.0]])
        return ProblemData(-10.0, 10.0, f, p)
    f = PiecewisePolynomial(np.empty(0), [[0.0, 0.5, 0.25]])
    p = PiecewisePolynomial.from_segments([0.0, 1.0], [[0.0], [1.0], [0.0]])
    return ProblemData(0.0, 1.0, f, p)


def cmd_gf(args) -> int:
    seed = _resolve_seed(args)
    if args.config:
        sections = parse_config(Path(args.config).read_text())
        data = problem_from_config(sections)
    else:
        data = _default_gf_problem(args.variant)
    if args.variant == "clipping":
        scheme = clipping_theorem(args.alpha, args.beta)
        variant = CLIPPING_EXPERIMENT
    else:
        scheme = relu_theorem(args.alpha, args.beta, args.gamma, args.delta)
        variant = RELU_EXPERIMENT
    outcomes = run_theorem_experiment(
        variant, args.width, data, scheme, args.trials, seed,
        horizon=args.horizon, keep_trajectories=args.save_trajectories > 0)
    out = _outdir(args)
    echo = {"gf": {
        "variant": args.variant, "width": str(args.width),
        "trials": str(args.trials), "scheme": scheme.describe(),
        "horizon": str(args.horizon), "threshold": str(args.threshold),
    }}
    manifest = RunManifest("gf " + args.variant, echo, seed, 1.0)
    rows = []
    for o in outcomes:
        r = o.report.csv_row()
        rows.append([o.index, int(o.converged), o.limiting_risk, o.horizon]
                    + [r[c] for c in CSV_COLUMNS])
    write_csv(manifest.add(out / "gf_trials.csv"),
              ["trial", "converged", "limiting_risk", "horizon"] + CSV_COLUMNS, rows)
    summary = summarize_outcomes(outcomes, args.threshold)
    write_csv(manifest.add(out / "gf_summary.csv"),
              list(summary), [list(summary.values())])
    for o in outcomes[: args.save_trajectories]:
        write_trajectory_csv(
            manifest.add(out / f"trajectory_{o.index}.csv"), o.trajectory)
    manifest.write(out / "manifest.txt")
    print(f"{summary['converged']}/{summary['trials']} converged, "
          f"{summary['descending']} descending, "
          f"median limiting risk {summary['median_risk']:.6g}")
    return 0


def cmd_landscape(args) -> int:
    sections = parse_config(Path(args.params).read_text())
    data = problem_from_config(sections)
    params = shallow_params_from_config(sections)
    report = classify(params, data, grad_tol=args.grad_tol, eig_tol=args.eig_tol)
    row = report.csv_row()
    out = ",".join(CSV_COLUMNS) + "\n" + ",".join(
        str(row[c]) if isinstance(row[c], str) else _fmt(row[c]) for c in CSV_COLUMNS)
    if args.out_file:
        Path(args.out_file).write_text(out + "\n")
    print(out)
    return 0


def cmd_oracle(args) -> int:
    ok = True
    if args.check in ("gaussian-tail", "all"):
        print("check=gaussian-tail")
        print("y,lhs,rhs,holds")
        for y in np.linspace(0.0, 5.0, 11):
            r = gaussian_tail_check(y)
            ok &= r.holds
            print(f"{r.argument:g},{r.lhs:.12g},{r.rhs:.12g},{int(r.holds)}")
    if args.check in ("bessel-k0", "all"):
        print("check=bessel-k0")
        print("x,k0")
        vals = [(x, bessel_k0(x)) for x in (0.25, 0.5, 1.0, 2.0, 4.0)]
        for x, v in vals:
            print(f"{x:g},{v:.12g}")
        ok &= all(a[1] > b[1] for a, b in zip(vals, vals[1:]))
    if args.check in ("product-cdf", "all"):
        print("check=product-cdf")
        print("z,cdf")
        last = -1.0
        for z in (0.0, 0.1, 0.5, 1.0, 2.0, 5.0, 50.0):
            c = half_normal_product_cdf(z)
            ok &= c >= last and 0.0 <= c <= 1.0
            last = c
            print(f"{z:g},{c:.12g}")
        ok &= abs(last - 1.0) <= 1e-8
    return 0 if ok else 1


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="biasflow",
        description="Gradient-flow and SGD experiments on shallow/deep networks")
    sub = parser.add_subparsers(dest="command", required=True)

    def common(p):
        p.add_argument("--seed", type=int, default=0)
        p.add_argument("--out-dir", default="out")
        p.add_argument("--threads", type=int, default=1)
        p.add_argument("--config", default=None, help="config file path")

    p_mc = sub.add_parser("mc", help="Monte-Carlo experiment presets")
    common(p_mc)
    p_mc.add_argument("--preset", required=True)
    p_mc.add_argument("--scale", type=float, default=1.0)
    p_mc.add_argument("--width", type=int, default=None)
    p_mc.add_argument("--trials", type=int, default=None)
    p_mc.add_argument("--steps", type=int, default=None)
    p_mc.add_argument("--batch", type=int, default=None)
    p_mc.add_argument("--log-scale", action="store_true")
    p_mc.set_defaults(func=cmd_mc)

    p_tr = sub.add_parser("train", help="single deep training run")
    common(p_tr)
    p_tr.add_argument("--preset", required=True)
    p_tr.add_argument("--width", type=int, default=None)
    p_tr.add_argument("--steps", type=int, default=None)
    p_tr.add_argument("--batch", type=int, default=None)
    p_tr.add_argument("--trial-index", type=int, default=0)
    p_tr.set_defaults(func=cmd_train)

    p_gf = sub.add_parser("gf", help="shallow gradient-flow experiments")
    common(p_gf)
    p_gf.add_argument("--variant", choices=["clipping", "relu"], required=True)
    p_gf.add_argument("--width", type=int, default=16)
    p_gf.add_argument("--trials", type=int, default=50)
    p_gf.add_argument("--horizon", type=float, default=50.0)
    p_gf.add_argument("--threshold", type=float, default=0.05)
    p_gf.add_argument("--save-trajectories", type=int, default=0,
                      help="dump the first N trial trajectories as CSV")
    p_gf.add_argument("--alpha", type=float, default=None)
    p_gf.add_argument("--beta", type=float, default=None)
    p_gf.add_argument("--gamma", type=float, default=None)
    p_gf.add_argument("--delta", type=float, default=None)
    p_gf.set_defaults(func=cmd_gf)

    p_ls = sub.add_parser("landscape", help="classify a parameter file")
    common(p_ls)
    p_ls.add_argument("--params", required=True, help="config file with [problem] and [params]")
    p_ls.add_argument("--grad-tol", type=float, default=1e-7)
    p_ls.add_argument("--eig-tol", type=float, default=1e-6)
    p_ls.add_argument("--out-file", default=None)
    p_ls.set_defaults(func=cmd_landscape)

    p_or = sub.add_parser("oracle", help="probability-oracle checks")
    common(p_or)
    p_or.add_argument("--check", default="all",
                      choices=["all", "gaussian-tail", "bessel-k0", "product-cdf"])
    p_or.set_defaults(func=cmd_oracle)
    return parser


def _apply_scheme_defaults(args) -> None:
    if getattr(args, "variant", None) == "clipping":
        args.alpha = 7.0 / 8.0 if args.alpha is None else args.alpha
        args.beta = 3.0 if args.beta is None else args.beta
    elif getattr(args, "variant", None) == "relu":
        args.alpha = 4.0 / 15.0 if args.alpha is None else args.alpha
        args.beta = 4.0 / 15.0 if args.beta is None else args.beta
        args.gamma = 9.0 / 10.0 if args.gamma is None else args.gamma
        args.delta = 9.0 / 10.0 if args.delta is None else args.delta


def dispatch(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code or 0)
    _apply_scheme_defaults(args)
    return args.func(args)


def main() -> None:
    sys.exit(dispatch())
