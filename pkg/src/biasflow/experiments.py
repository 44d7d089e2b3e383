"""Monte-Carlo reproduction of the training experiments at configurable scale.

Each preset pins a full protocol: architecture, activation, target, trainable
index set, initialization, optimizer and step-size schedule, batch size, step
count, trial count, checkpoint stride, histogram bin count, and the reference
step of the distance curve.  The built-in presets carry the published
hyperparameters verbatim; a scale factor shrinks trials and steps for desk
runs without touching any other hyperparameter, and every emitted artifact
records the factor so shrunk runs are never mistaken for full ones.

Per-trial randomness is seeded as SeedSequence([base_seed, trial_index]), so
results are reproducible and independent of execution order or worker count.
"""

from __future__ import annotations

import math
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, replace
from typing import Callable

import numpy as np

from .deepnet import Architecture, OptimizerState, Schedule, TrialRecord, train
from .initschemes import (
    InitScheme,
    clipping_theorem,
    he_normal,
    init_deep,
    relu_theorem,
    xavier_normal,
)

TARGETS: dict[str, Callable] = {
    "abs_pow_quarter": lambda x: np.abs(x) ** 0.25,
    "x4_sin_x": lambda x: x ** 4 * np.sin(x),
    "x2_plus_2x": lambda x: x ** 2 + 2.0 * x,
}


@dataclass(frozen=True)
class ExperimentConfig:
    name: str
    dims: tuple
    activation: str
    init: InitScheme
    trainable: str  # "all" | "biases" | "inner_biases"
    optimizer: str  # "sgd" | "adam"
    schedule: Schedule
    batch_size: int
    steps: int
    trials: int
    checkpoint_stride: int
    bins: int
    target: str
    adam_alpha: float = 0.9
    adam_beta: float = 0.999
    adam_eps: float = 1e-8
    scale: float = 1.0
    base_seed: int = 0
    widths: tuple = ()  # alternative hidden widths published for this preset

    @property
    def reference_step(self) -> int:
        return self.steps - self.checkpoint_stride + 1

    def checkpoint_steps(self) -> np.ndarray:
        # plotted grid {stride*k + 1} stops one stride short of the reference
        return np.arange(1, self.reference_step, self.checkpoint_stride)

    def scaled(self, factor: float) -> "ExperimentConfig":
        """Shrink trials and steps by ``factor``; records the factor."""
        if factor <= 0:
            raise ValueError("scale factor must be positive")
        steps = max(2 * self.checkpoint_stride, int(round(self.steps * factor)))
        trials = max(1, int(round(self.trials * factor)))
        return replace(self, steps=steps, trials=trials, scale=self.scale * factor)

    def with_width(self, width: int) -> "ExperimentConfig":
        if len(self.dims) != 3:
            raise ValueError("width substitution applies to one-hidden-layer presets")
        return replace(self, dims=(self.dims[0], int(width), self.dims[2]))

    def architecture(self) -> Architecture:
        return Architecture(self.dims, self.activation)

    def target_fn(self) -> Callable:
        return TARGETS[self.target]

    def trainable_mask(self) -> np.ndarray:
        arch = self.architecture()
        mask = np.zeros(arch.param_count, dtype=bool)
        if self.trainable == "all":
            mask[:] = True
            return mask
        if self.trainable not in ("biases", "inner_biases"):
            raise ValueError(f"unknown trainable set {self.trainable!r}")
        last = arch.L if self.trainable == "biases" else arch.L - 1
        for k in range(1, last + 1):
            off = arch.layer_offset(k) + arch.dims[k] * arch.dims[k - 1]
            mask[off : off + arch.dims[k]] = True
        return mask

    def optimizer_state(self) -> OptimizerState:
        return OptimizerState(
            kind=self.optimizer, schedule=self.schedule,
            alpha=self.adam_alpha, beta=self.adam_beta, eps=self.adam_eps)


def _preset(name, dims, activation, init, trainable, schedule, bins, stride,
            target, optimizer="sgd", widths=(), steps=10000, batch=1024, trials=300):
    return ExperimentConfig(
        name=name, dims=dims, activation=activation, init=init,
        trainable=trainable, optimizer=optimizer, schedule=schedule,
        batch_size=batch, steps=steps, trials=trials, checkpoint_stride=stride,
        bins=bins, target=target, widths=widths)


def _presets() -> dict:
    quarter = Schedule(1e-2, 150)
    tenth = Schedule(1e-1, 500)
    flat = Schedule(1e-2, None)
    adam_sched = Schedule(1e-2, 500)
    # the one-hidden-layer all-parameter runs use width-scaled half-normal
    # weights / normal biases; exponents restated as the generic scheme
    sec46_init = relu_theorem(1.0 / 7.0, 1.0 / 7.0, 0.5, 0.5)
    p = {}
    p["sec_4_4"] = _preset(
        "sec_4_4", (1, 10, 1), "clipping", clipping_theorem(7.0 / 8.0, 3.0),
        "biases", quarter, 40, 20, "abs_pow_quarter", widths=(10, 100, 1000))
    p["sec_4_5"] = _preset(
        "sec_4_5", (1, 5, 1), "relu",
        relu_theorem(4.0 / 15.0, 4.0 / 15.0, 9.0 / 10.0, 9.0 / 10.0),
        "inner_biases", tenth, 200, 20, "x4_sin_x", widths=(5, 20, 100))
    p["sec_4_6"] = _preset(
        "sec_4_6", (1, 5, 1), "relu", sec46_init, "all", flat, 80, 10,
        "x2_plus_2x", widths=(5, 20, 150))
    p["sec_4_7"] = _preset(
        "sec_4_7", (1, 32, 1), "relu", he_normal(), "all", flat, 80, 10,
        "x2_plus_2x")
    p["sec_4_8"] = _preset(
        "sec_4_8", (1, 50, 50, 1), "relu", xavier_normal(), "all", flat, 80,
        10, "x2_plus_2x")
    p["sec_4_9"] = _preset(
        "sec_4_9", (1, 50, 50, 1), "relu", he_normal(), "all", flat, 80, 10,
        "x2_plus_2x")
    p["sec_4_10"] = _preset(
        "sec_4_10", (1, 50, 50, 1), "relu", xavier_normal(), "all",
        adam_sched, 80, 10, "x2_plus_2x", optimizer="adam")
    p["sec_4_11"] = _preset(
        "sec_4_11", (1, 50, 50, 1), "relu", he_normal(), "all", adam_sched,
        80, 10, "x2_plus_2x", optimizer="adam")
    p["sec_4_12"] = _preset(
        "sec_4_12", (1, 32, 32, 32, 1), "relu", xavier_normal(), "all", flat,
        80, 10, "x2_plus_2x")
    p["sec_4_13"] = _preset(
        "sec_4_13", (1, 32, 32, 32, 1), "relu", he_normal(), "all", flat, 80,
        10, "x2_plus_2x")
    return p


PRESETS = _presets()


# -- aggregation ---------------------------------------------------------------

def histogram(values, bins: int):
    """Equal-width histogram over [min, max]; counts sum to len(values)."""
    values = np.asarray(values, dtype=float)
    if values.size == 0:
        raise ValueError("histogram needs at least one value")
    if bins < 1:
        raise ValueError("need at least one bin")
    lo, hi = float(values.min()), float(values.max())
    if lo == hi:
        lo, hi = lo - 0.5, hi + 0.5
    edges = np.linspace(lo, hi, bins + 1)
    counts, _ = np.histogram(values, bins=edges)
    return edges, counts


@dataclass
class AggregateStats:
    config: ExperimentConfig
    final_losses: np.ndarray
    initial_losses: np.ndarray
    hist_edges: np.ndarray
    hist_counts: np.ndarray
    grad_curve: np.ndarray      # columns: step, value, band (3 stderr, delta method)
    distance_curve: np.ndarray  # columns: step, value, band
    seeds: list
    aborted: int = 0


def _root_mean_square_curve(steps, per_trial_squared):
    """sqrt(mean of squares) per step with a 3-stderr band on the root scale."""
    sq = np.asarray(per_trial_squared, dtype=float)  # trials x steps
    mean_sq = sq.mean(axis=0)
    value = np.sqrt(mean_sq)
    if sq.shape[0] > 1:
        sem = sq.std(axis=0, ddof=1) / math.sqrt(sq.shape[0])
        band = np.where(value > 0, 3.0 * sem / np.maximum(2.0 * value, 1e-300), 0.0)
    else:
        band = np.zeros_like(value)
    return np.column_stack([steps, value, band])


def curve_stats(records: list, checkpoints, reference_step: int):
    """Gradient-norm and distance-to-reference curves across trials."""
    checkpoints = np.asarray(list(checkpoints), dtype=int)
    grad_sq, dist_sq = [], []
    for rec in records:
        if rec.checkpoint_steps.size != checkpoints.size or np.any(
                rec.checkpoint_steps != checkpoints):
            raise ValueError("trial checkpoints do not match the requested grid")
        if reference_step not in rec.snapshots:
            raise KeyError(f"no snapshot at reference step {reference_step}")
        ref = rec.snapshots[reference_step]
        grad_sq.append(rec.grad_norms ** 2)
        dist_sq.append([
            float(np.sum((rec.snapshots[n] - ref) ** 2)) for n in checkpoints])
    grad_curve = _root_mean_square_curve(checkpoints, grad_sq)
    dist_curve = _root_mean_square_curve(checkpoints, dist_sq)
    ref_sq = [[float(np.sum((r.snapshots[reference_step] - r.snapshots[reference_step]) ** 2))]
              for r in records]
    ref_row = _root_mean_square_curve(np.array([reference_step]), ref_sq)
    return grad_curve, np.vstack([dist_curve, ref_row])


def run_trial(config: ExperimentConfig, index: int) -> TrialRecord:
    rng = np.random.default_rng(np.random.SeedSequence([config.base_seed, index]))
    arch = config.architecture()
    theta0 = init_deep(arch, config.init, rng)
    ckpts = config.checkpoint_steps()
    snaps = list(ckpts) + [config.reference_step]
    return train(
        arch, theta0, config.optimizer_state(), config.target_fn(),
        config.batch_size, config.steps, rng,
        checkpoint_steps=ckpts, snapshot_steps=snaps,
        trainable=config.trainable_mask())


def run_monte_carlo(config: ExperimentConfig, workers: int = 1) -> AggregateStats:
    """Run all trials (optionally in parallel) and aggregate the artifacts."""
    indices = list(range(config.trials))
    if workers > 1:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            records = list(pool.map(run_trial, [config] * len(indices), indices))
    else:
        records = [run_trial(config, i) for i in indices]
    good = [r for r in records if not r.aborted]
    aborted = len(records) - len(good)
    if not good:
        raise RuntimeError("every trial aborted")
    finals = np.array([r.final_loss for r in good])
    initials = np.array([r.initial_loss for r in good])
    edges, counts = histogram(finals, config.bins)
    grad_curve, dist_curve = curve_stats(
        good, config.checkpoint_steps(), config.reference_step)
    return AggregateStats(
        config=config,
        final_losses=finals,
        initial_losses=initials,
        hist_edges=edges,
        hist_counts=counts,
        grad_curve=grad_curve,
        distance_curve=dist_curve,
        seeds=[[config.base_seed, i] for i in indices],
        aborted=aborted,
    )
