"""Fully-connected networks on a flat parameter vector, with SGD and Adam.

Layer k maps R^{l_{k-1}} -> R^{l_k} through an affine step followed (except
after the last layer) by a componentwise activation.  The flat layout packs,
per layer, the weight matrix row-major and then the bias vector, so

    w[k][i, j] -> theta[(i-1) l_{k-1} + j + off_k]
    b[k][i]    -> theta[l_k l_{k-1} + i + off_k]      (1-based i, j, k)

with off_k the total size of the earlier layers.  Gradients are reverse-mode
with the pointwise activation derivatives relu'(x) = 1_(0,inf)(x) and
clip'(x) = 1_(0,1)(x); the derivative is taken to vanish exactly at the
activation breakpoints.  Coordinates outside the trainable index set are
zeroed in the gradient, so frozen parameters never move.
"""

from __future__ import annotations

from dataclasses import dataclass, replace
from typing import Callable, Optional

import numpy as np

RELU = "relu"
CLIPPING = "clipping"


@dataclass(frozen=True)
class Architecture:
    dims: tuple
    activation: str = RELU

    def __post_init__(self):
        dims = tuple(int(d) for d in self.dims)
        if len(dims) < 2 or min(dims) < 1:
            raise ValueError("need at least two positive layer sizes")
        if self.activation not in (RELU, CLIPPING):
            raise ValueError(f"unknown activation {self.activation!r}")
        object.__setattr__(self, "dims", dims)

    @property
    def L(self) -> int:
        return len(self.dims) - 1

    @property
    def param_count(self) -> int:
        d = self.dims
        return sum(d[k] * (d[k - 1] + 1) for k in range(1, len(d)))

    def layer_offset(self, k: int) -> int:
        d = self.dims
        return sum(d[j] * (d[j - 1] + 1) for j in range(1, k))


class FlatParams:
    """View helpers over a flat parameter vector for a fixed architecture."""

    def __init__(self, arch: Architecture, theta: np.ndarray):
        theta = np.asarray(theta, dtype=float)
        if theta.shape != (arch.param_count,):
            raise ValueError(f"theta must have length {arch.param_count}")
        self.arch = arch
        self.theta = theta

    def weights(self, k: int) -> np.ndarray:
        d = self.arch.dims
        off = self.arch.layer_offset(k)
        return self.theta[off : off + d[k] * d[k - 1]].reshape(d[k], d[k - 1])

    def biases(self, k: int) -> np.ndarray:
        d = self.arch.dims
        off = self.arch.layer_offset(k) + d[k] * d[k - 1]
        return self.theta[off : off + d[k]]

    def weight_index(self, k: int, i: int, j: int) -> int:
        """0-based flat index of w[k][i, j] (k, i, j 1-based)."""
        d = self.arch.dims
        return self.arch.layer_offset(k) + (i - 1) * d[k - 1] + (j - 1)

    def bias_index(self, k: int, i: int) -> int:
        d = self.arch.dims
        return self.arch.layer_offset(k) + d[k] * d[k - 1] + (i - 1)


def _act(arch: Architecture, z: np.ndarray) -> np.ndarray:
    if arch.activation == RELU:
        return np.maximum(z, 0.0)
    return np.clip(z, 0.0, 1.0)


def _act_prime(arch: Architecture, z: np.ndarray) -> np.ndarray:
    if arch.activation == RELU:
        return (z > 0.0).astype(float)
    return ((z > 0.0) & (z < 1.0)).astype(float)


def forward(arch: Architecture, theta: np.ndarray, x: np.ndarray) -> np.ndarray:
    """Network output; x is (m, l_0) or a single length-l_0 vector."""
    fp = FlatParams(arch, theta)
    single = np.ndim(x) == 1
    a = np.atleast_2d(np.asarray(x, dtype=float))
    if a.shape[1] != arch.dims[0]:
        raise ValueError(f"input width {a.shape[1]} != l_0 = {arch.dims[0]}")
    for k in range(1, arch.L + 1):
        z = a @ fp.weights(k).T + fp.biases(k)
        a = _act(arch, z) if k < arch.L else z
    return a[0] if single else a


def minibatch_loss(arch, theta, batch: np.ndarray, target: Callable) -> float:
    out = forward(arch, theta, batch)
    y = np.atleast_2d(np.asarray(target(batch), dtype=float))
    if y.shape != out.shape:
        y = y.reshape(out.shape)
    return float(np.mean(np.sum((out - y) ** 2, axis=1)))


def generalized_gradient(
    arch: Architecture,
    theta: np.ndarray,
    batch: np.ndarray,
    target: Callable,
    trainable: Optional[np.ndarray] = None,
) -> np.ndarray:
    """Minibatch gradient of the squared loss, zeroed off the trainable set."""
    fp = FlatParams(arch, theta)
    m = batch.shape[0]
    acts = [np.asarray(batch, dtype=float)]
    pre = []
    a = acts[0]
    for k in range(1, arch.L + 1):
        z = a @ fp.weights(k).T + fp.biases(k)
        pre.append(z)
        a = _act(arch, z) if k < arch.L else z
        acts.append(a)
    y = np.atleast_2d(np.asarray(target(batch), dtype=float))
    if y.shape != acts[-1].shape:
        y = y.reshape(acts[-1].shape)
    grad = np.zeros_like(theta)
    gp = FlatParams(arch, grad)
    delta = 2.0 * (acts[-1] - y) / m
    for k in range(arch.L, 0, -1):
        gp.weights(k)[:] = delta.T @ acts[k - 1]
        gp.biases(k)[:] = delta.sum(axis=0)
        if k > 1:
            delta = (delta @ fp.weights(k)) * _act_prime(arch, pre[k - 2])
    if trainable is not None:
        grad[~np.asarray(trainable, dtype=bool)] = 0.0
    return grad


# -- optimizers ----------------------------------------------------------------

@dataclass(frozen=True)
class Schedule:
    """Step sizes gamma_n = base * 2^{-floor(n / halve_every)} (n >= 1)."""

    base: float
    halve_every: Optional[int] = None

    def __call__(self, n: int) -> float:
        if self.halve_every is None:
            return self.base
        return self.base * 2.0 ** (-(n // self.halve_every))

    def describe(self) -> str:
        if self.halve_every is None:
            return f"{self.base:g}"
        return f"{self.base:g}*2^-floor(n/{self.halve_every})"


@dataclass
class OptimizerState:
    kind: str  # "sgd" | "adam"
    schedule: Schedule
    alpha: float = 0.9
    beta: float = 0.999
    eps: float = 1e-8
    n: int = 0
    m1: np.ndarray = None  # first moments (adam)
    m2: np.ndarray = None  # second moments (adam)

    def __post_init__(self):
        if self.kind not in ("sgd", "adam"):
            raise ValueError(f"unknown optimizer {self.kind!r}")


def optimizer_step(state: OptimizerState, grad: np.ndarray, theta: np.ndarray):
    """One update; returns (new_theta, new_state) without mutating inputs."""
    n = state.n + 1
    gamma = state.schedule(n)
    if state.kind == "sgd":
        return theta - gamma * grad, replace(state, n=n)
    m1 = np.zeros_like(theta) if state.m1 is None else state.m1
    m2 = np.zeros_like(theta) if state.m2 is None else state.m2
    m1 = state.alpha * m1 + (1.0 - state.alpha) * grad
    m2 = state.beta * m2 + (1.0 - state.beta) * grad * grad
    m1_hat = m1 / (1.0 - state.alpha ** n)
    m2_hat = m2 / (1.0 - state.beta ** n)
    new_theta = theta - gamma * m1_hat / (state.eps + np.sqrt(m2_hat))
    return new_theta, replace(state, n=n, m1=m1, m2=m2)


# -- training loop --------------------------------------------------------------

class DivergenceError(RuntimeError):
    def __init__(self, step, loss):
        super().__init__(f"non-finite loss {loss!r} at step {step}")
        self.step = step
        self.loss = loss


@dataclass
class TrialRecord:
    steps: int
    checkpoint_steps: np.ndarray  # states Theta_n recorded at these n
    losses: np.ndarray            # minibatch loss at Theta_n (fresh batch)
    grad_norms: np.ndarray        # ||G_{n+1}(Theta_n)||
    snapshots: dict               # n -> copy of Theta_n
    initial_loss: float
    final_loss: float             # loss of a fresh batch at Theta_steps
    final_theta: np.ndarray
    aborted: bool = False
    abort_step: Optional[int] = None


def train(
    arch: Architecture,
    theta0: np.ndarray,
    optimizer: OptimizerState,
    target: Callable,
    batch_size: int,
    steps: int,
    rng: np.random.Generator,
    checkpoint_steps=(),
    snapshot_steps=(),
    trainable: Optional[np.ndarray] = None,
) -> TrialRecord:
    """Run the stochastic training loop with a fresh uniform batch per step.

    ``checkpoint_steps`` index the *states* Theta_n at which the loss and the
    norm of the next-step gradient G_{n+1}(Theta_n) are recorded; state 0 is
    always recorded as ``initial_loss``.
    """
    if steps < 1:
        raise ValueError("need at least one step")
    theta = np.array(theta0, dtype=float)
    state = optimizer
    ckpts = sorted(set(int(c) for c in checkpoint_steps))
    snaps = sorted(set(int(s) for s in snapshot_steps))
    rec_steps, rec_loss, rec_gnorm = [], [], []
    snapshots = {}
    initial_loss = None
    l0 = arch.dims[0]
    ckpt_set, snap_set = set(ckpts), set(snaps)
    for n_state in range(0, steps):
        batch = rng.uniform(0.0, 1.0, size=(batch_size, l0))
        grad = generalized_gradient(arch, theta, batch, target, trainable)
        if not np.all(np.isfinite(grad)):
            bad = minibatch_loss(arch, theta, batch, target)
            return TrialRecord(
                steps, np.array(rec_steps), np.array(rec_loss), np.array(rec_gnorm),
                snapshots, initial_loss if initial_loss is not None else bad,
                bad, theta, aborted=True, abort_step=n_state)
        if n_state == 0:
            initial_loss = minibatch_loss(arch, theta, batch, target)
        if n_state in ckpt_set:
            rec_steps.append(n_state)
            rec_loss.append(minibatch_loss(arch, theta, batch, target))
            rec_gnorm.append(float(np.linalg.norm(grad)))
        if n_state in snap_set:
            snapshots[n_state] = theta.copy()
        theta, state = optimizer_step(state, grad, theta)
    final_batch = rng.uniform(0.0, 1.0, size=(batch_size, l0))
    final_loss = minibatch_loss(arch, theta, final_batch, target)
    if not np.isfinite(final_loss):
        return TrialRecord(
            steps, np.array(rec_steps), np.array(rec_loss), np.array(rec_gnorm),
            snapshots, initial_loss, final_loss, theta, aborted=True, abort_step=steps)
    if steps in snaps:
        snapshots[steps] = theta.copy()
    return TrialRecord(
        steps, np.array(rec_steps), np.array(rec_loss), np.array(rec_gnorm),
        snapshots, initial_loss, final_loss, theta)
