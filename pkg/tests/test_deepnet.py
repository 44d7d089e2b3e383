import numpy as np
import pytest

from biasflow import deepnet as dn
from biasflow import shallow as sh
from biasflow.piecewise import PiecewisePolynomial as PP


def quad_target(x):
    return x ** 2 + 2.0 * x


class TestFlatIndexing:
    def test_closed_form_index(self, rng):
        arch = dn.Architecture((3, 5, 4, 2))
        fp = dn.FlatParams(arch, np.zeros(arch.param_count))
        d = arch.dims
        for _ in range(50):
            k = int(rng.integers(1, arch.L + 1))
            i = int(rng.integers(1, d[k] + 1))
            j = int(rng.integers(1, d[k - 1] + 1))
            off = sum(d[m] * (d[m - 1] + 1) for m in range(1, k))
            assert fp.weight_index(k, i, j) == (i - 1) * d[k - 1] + (j - 1) + off
            assert fp.bias_index(k, i) == d[k] * d[k - 1] + (i - 1) + off

    def test_accessor_round_trip(self, rng):
        arch = dn.Architecture((2, 3, 2))
        theta = np.zeros(arch.param_count)
        fp = dn.FlatParams(arch, theta)
        fp.weights(1)[1, 0] = 7.5
        fp.biases(2)[1] = -2.25
        assert theta[fp.weight_index(1, 2, 1)] == 7.5
        assert theta[fp.bias_index(2, 2)] == -2.25

    def test_param_count_formula(self):
        assert dn.Architecture((1, 10, 1)).param_count == 31
        assert dn.Architecture((1, 50, 50, 1)).param_count == 2701
        assert dn.Architecture((1, 32, 32, 32, 1)).param_count == 2209


class TestForward:
    def test_positive_passthrough(self):
        arch = dn.Architecture((1, 1, 1))
        theta = np.array([1.0, 0.0, 1.0, 0.0])  # w1, b1, w2, b2
        assert dn.forward(arch, theta, np.array([2.0]))[0] == 2.0

    def test_dead_path(self):
        arch = dn.Architecture((1, 1, 1))
        theta = np.array([1.0, 0.0, 1.0, 0.0])
        assert dn.forward(arch, theta, np.array([-2.0]))[0] == 0.0

    def test_hand_computed_1_2_1(self):
        # layout for (1, 2, 1): w1 at theta_1..2, b1 at 3..4, w2 at 5..6, b2 at 7
        arch = dn.Architecture((1, 2, 1))
        assert arch.param_count == 7
        theta = np.array([2.0, -1.0, -0.5, 1.0, 3.0, 2.0, 0.25])
        x = 0.75
        h = np.maximum([2.0 * x - 0.5, -1.0 * x + 1.0], 0.0)
        expect = 3.0 * h[0] + 2.0 * h[1] + 0.25
        assert dn.forward(arch, theta, np.array([x]))[0] == pytest.approx(expect)
        fp = dn.FlatParams(arch, theta)
        assert fp.weights(1)[1, 0] == -1.0 and fp.biases(2)[0] == 0.25

    def test_clipping_activation(self):
        arch = dn.Architecture((1, 1, 1), activation="clipping")
        theta = np.array([1.0, 0.0, 2.0, 0.0])
        assert dn.forward(arch, theta, np.array([5.0]))[0] == 2.0

    def test_dimension_mismatch(self):
        arch = dn.Architecture((2, 3, 1))
        with pytest.raises(ValueError):
            dn.forward(arch, np.zeros(arch.param_count), np.zeros((4, 3)))


class TestLoss:
    def test_zero_when_matching(self, rng):
        arch = dn.Architecture((1, 3, 1))
        theta = rng.normal(size=arch.param_count)
        batch = rng.uniform(size=(32, 1))
        out = dn.forward(arch, theta, batch)
        assert dn.minibatch_loss(arch, theta, batch, lambda x: out) == 0.0

    def test_constant_network_against_exact_integral(self):
        # zero network vs x^2 + 2x on uniform (0, 1): exact second moment
        # 38/15, computed with the piecewise integrator as the oracle
        f = PP(np.empty(0), [[0.0, 2.0, 1.0]])
        exact = (f * f).integrate(0.0, 1.0)
        assert exact == pytest.approx(38.0 / 15.0, abs=1e-14)
        arch = dn.Architecture((1, 2, 1))
        theta = np.zeros(arch.param_count)
        rng = np.random.default_rng(5)
        batch = rng.uniform(size=(1024, 1))
        loss = dn.minibatch_loss(arch, theta, batch, quad_target)
        samples = (batch[:, 0] ** 2 + 2 * batch[:, 0]) ** 2
        band = 3.0 * np.std(samples) / np.sqrt(1024)
        assert abs(loss - exact) < band

    def test_batch_of_one(self):
        arch = dn.Architecture((1, 1, 1))
        theta = np.array([1.0, 0.0, 1.0, 0.0])
        batch = np.array([[0.5]])
        expect = (0.5 - quad_target(0.5)) ** 2
        assert dn.minibatch_loss(arch, theta, batch, quad_target) == pytest.approx(expect)


def _fd_grad(arch, theta, batch, target, eps=1e-6):
    out = np.zeros_like(theta)
    for k in range(theta.size):
        tp, tm = theta.copy(), theta.copy()
        tp[k] += eps
        tm[k] -= eps
        out[k] = (dn.minibatch_loss(arch, tp, batch, target)
                  - dn.minibatch_loss(arch, tm, batch, target)) / (2 * eps)
    return out


def _margin_ok(arch, theta, batch, margin=1e-4):
    fp = dn.FlatParams(arch, theta)
    a = batch
    for k in range(1, arch.L):
        z = a @ fp.weights(k).T + fp.biases(k)
        lo = np.min(np.abs(z))
        hi = np.min(np.abs(z - 1.0)) if arch.activation == "clipping" else np.inf
        if min(lo, hi) < margin:
            return False
        a = np.maximum(z, 0) if arch.activation == "relu" else np.clip(z, 0, 1)
    return True


class TestGeneralizedGradient:
    @pytest.mark.parametrize("dims,activation", [
        ((1, 3, 1), "relu"), ((1, 4, 4, 1), "relu"), ((1, 3, 1), "clipping")])
    def test_fd_agreement(self, dims, activation):
        rng = np.random.default_rng(21)
        arch = dn.Architecture(dims, activation)
        for _ in range(40):
            theta = rng.normal(scale=0.8, size=arch.param_count)
            batch = rng.uniform(size=(16, 1))
            if not _margin_ok(arch, theta, batch):
                continue
            g = dn.generalized_gradient(arch, theta, batch, quad_target)
            fd = _fd_grad(arch, theta, batch, quad_target)
            err = np.abs(g - fd) / np.maximum(1.0, np.abs(fd))
            assert np.max(err) < 1e-5
            break
        else:
            pytest.fail("no margin-respecting draw found")

    def test_mask_zeroes_exactly(self, rng):
        arch = dn.Architecture((1, 4, 1))
        theta = rng.normal(size=arch.param_count)
        batch = rng.uniform(size=(8, 1))
        mask = np.zeros(arch.param_count, dtype=bool)
        mask[4:8] = True  # inner biases only
        g = dn.generalized_gradient(arch, theta, batch, quad_target, mask)
        assert np.all(g[~mask] == 0.0)
        assert np.any(g[mask] != 0.0)

    def test_breakpoint_derivative_zero(self):
        # a pre-activation sitting exactly at the relu kink contributes no
        # gradient to the upstream weight
        arch = dn.Architecture((1, 1, 1))
        theta = np.array([1.0, 0.0, 1.0, 0.0])
        batch = np.array([[0.0]])  # z = 0 exactly
        g = dn.generalized_gradient(arch, theta, batch, lambda x: x * 0.0 + 1.0)
        assert g[0] == 0.0 and g[1] == 0.0

    def test_matches_exact_shallow_gradient(self):
        # (1, h, 1) relu net with unit inner weights and trained inner
        # biases: the minibatch gradient converges to the exact population
        # gradient in kink coordinates (sign flipped: kink = -b1)
        rng = np.random.default_rng(22)
        h = 6
        arch = dn.Architecture((1, h, 1))
        theta = np.zeros(arch.param_count)
        fp = dn.FlatParams(arch, theta)
        kinks = rng.uniform(0.05, 0.9, h)
        v = rng.uniform(0.2, 1.0, h)
        fp.weights(1)[:, 0] = 1.0
        fp.biases(1)[:] = -kinks
        fp.weights(2)[0, :] = v
        fp.biases(2)[:] = 0.1
        batch = rng.uniform(size=(10 ** 6, 1))
        mask = np.zeros(arch.param_count, dtype=bool)
        mask[h : 2 * h] = True
        g = dn.generalized_gradient(arch, theta, batch, quad_target, mask)

        f = PP(np.empty(0), [[0.0, 2.0, 1.0]])
        data = sh.uniform_problem(0.0, 1.0, f)
        params = sh.ShallowParams("relu", v, np.ones(h), kinks, 0.1)
        g_exact = sh.risk_gradient(params, data)[:-1]
        assert np.max(np.abs(g[h : 2 * h] - (-g_exact))) < 1e-2


class TestOptimizers:
    def test_adam_first_step_closed_form(self, rng):
        g = rng.normal(size=7)
        theta = rng.normal(size=7)
        state = dn.OptimizerState("adam", dn.Schedule(0.05), alpha=0.9,
                                  beta=0.999, eps=1e-8)
        new, st = dn.optimizer_step(state, g, theta)
        assert np.allclose(new, theta - 0.05 * g / (1e-8 + np.abs(g)), atol=1e-16)
        assert st.n == 1

    def test_adam_recursions_machine_precision(self, rng):
        d = 5
        state = dn.OptimizerState("adam", dn.Schedule(1e-2, 500))
        theta = rng.normal(size=d)
        m_ref = np.zeros(d)
        M_ref = np.zeros(d)
        for n in range(1, 1001):
            g = rng.normal(size=d)
            theta, state = dn.optimizer_step(state, g, theta)
            # the recursion identities hold to rounding error of the update
            scale = 1.0 + np.abs(state.m1) + np.abs(g)
            assert np.all(np.abs(state.m1 - 0.9 * m_ref - 0.1 * g)
                          <= 1e-15 * scale)
            assert np.all(np.abs(state.m2 - 0.999 * M_ref - 0.001 * g * g)
                          <= 1e-15 * (1.0 + np.abs(state.m2) + g * g))
            m_ref, M_ref = state.m1, state.m2

    def test_sgd_matches_reference_recursion(self, rng):
        d = 6
        sched = dn.Schedule(1e-2, 150)
        state = dn.OptimizerState("sgd", sched)
        theta = rng.normal(size=d)
        ref = theta.copy()
        for n in range(1, 400):
            g = rng.normal(size=d)
            theta, state = dn.optimizer_step(state, g, theta)
            ref = ref - sched(n) * g
            assert np.array_equal(theta, ref)

    def test_schedule_halving(self):
        sched = dn.Schedule(1e-2, 150)
        assert sched(1) == 1e-2
        assert sched(149) == 1e-2
        assert sched(150) == 1e-2 * 0.5
        assert sched(450) == 1e-2 * 0.125

    def test_zero_gradient_fixed_point(self, rng):
        theta = rng.normal(size=4)
        for kind in ("sgd", "adam"):
            state = dn.OptimizerState(kind, dn.Schedule(0.1))
            new, _ = dn.optimizer_step(state, np.zeros(4), theta)
            assert np.array_equal(new, theta)


class TestTrain:
    def _small_config(self):
        arch = dn.Architecture((1, 10, 1), activation="clipping")
        mask = np.zeros(arch.param_count, dtype=bool)
        mask[10:20] = True
        mask[30] = True
        return arch, mask

    def test_deterministic_repeat(self):
        arch, mask = self._small_config()
        theta0 = np.random.default_rng(1).normal(size=arch.param_count)
        recs = []
        for _ in range(2):
            rng = np.random.default_rng(42)
            state = dn.OptimizerState("sgd", dn.Schedule(1e-2, 150))
            recs.append(dn.train(arch, theta0, state, lambda x: np.abs(x) ** 0.25,
                                 64, 10, rng, checkpoint_steps=[0, 5],
                                 snapshot_steps=[5], trainable=mask))
        a, b = recs
        assert np.array_equal(a.losses, b.losses)
        assert np.array_equal(a.final_theta, b.final_theta)
        assert a.final_theta.tobytes() == b.final_theta.tobytes()

    def test_frozen_weights_never_move(self):
        arch, mask = self._small_config()
        theta0 = np.random.default_rng(2).normal(size=arch.param_count)
        rng = np.random.default_rng(3)
        state = dn.OptimizerState("sgd", dn.Schedule(1e-2))
        rec = dn.train(arch, theta0, state, lambda x: np.abs(x) ** 0.25,
                       32, 50, rng, trainable=mask)
        assert np.array_equal(rec.final_theta[~mask], theta0[~mask])
        assert not np.array_equal(rec.final_theta[mask], theta0[mask])

    def test_divergence_abort(self):
        arch = dn.Architecture((1, 2, 1))
        theta0 = np.full(arch.param_count, 2.0)
        rng = np.random.default_rng(4)
        state = dn.OptimizerState("sgd", dn.Schedule(1e12))
        rec = dn.train(arch, theta0, state, quad_target, 8, 60, rng)
        assert rec.aborted and rec.abort_step is not None

    def test_requires_steps(self):
        arch = dn.Architecture((1, 2, 1))
        with pytest.raises(ValueError):
            dn.train(arch, np.zeros(arch.param_count),
                     dn.OptimizerState("sgd", dn.Schedule(0.1)),
                     quad_target, 4, 0, np.random.default_rng(0))
