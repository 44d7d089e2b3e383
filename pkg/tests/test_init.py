import math

import numpy as np
import pytest
from scipy import stats

from biasflow import initschemes as ini
from biasflow.deepnet import Architecture, FlatParams


class TestHalfNormal:
    def test_positive(self, rng):
        x = ini.sample_half_normal(1.0, rng, 1000)
        assert np.all(x > 0)

    def test_moments(self):
        rng = np.random.default_rng(7)
        n = 10 ** 6
        x = ini.sample_half_normal(1.0, rng, n)
        mean_se = math.sqrt((1.0 - 2.0 / math.pi) / n)
        assert abs(np.mean(x) - math.sqrt(2.0 / math.pi)) < 3.0 * mean_se
        m2 = np.mean(x ** 2)
        m2_se = np.std(x ** 2) / math.sqrt(n)
        assert abs(m2 - 1.0) < 3.0 * m2_se

    def test_zero_scale_forbidden(self, rng):
        with pytest.raises(ValueError):
            ini.sample_half_normal(0.0, rng)


class TestSchemeValidation:
    def test_clipping_ranges(self):
        ini.clipping_theorem(7 / 8, 3.0)
        with pytest.raises(ValueError):
            ini.clipping_theorem(0.7, 3.0)
        with pytest.raises(ValueError):
            ini.clipping_theorem(7 / 8, 2.5)

    def test_relu_ranges(self):
        ini.relu_theorem(4 / 15, 4 / 15, 9 / 10, 9 / 10)
        with pytest.raises(ValueError):
            ini.relu_theorem(0.6, 0.5, 2.0, 1.0)
        with pytest.raises(ValueError):
            ini.relu_theorem(0.3, 0.3, 0.8, 1.0)  # 2a + b = 0.9 >= gamma
        with pytest.raises(ValueError):
            ini.relu_theorem(0.2, 0.2, 0.9, 0.0)

    def test_aliases_resolve(self):
        s44 = ini.InitScheme(ini.CUSTOM_4_4).resolve()
        assert (s44.kind, s44.alpha, s44.beta) == (ini.CLIPPING_THEOREM, 7 / 8, 3.0)
        s45 = ini.InitScheme(ini.CUSTOM_4_5).resolve()
        assert s45.kind == ini.RELU_THEOREM
        assert (s45.alpha, s45.gamma) == (4 / 15, 9 / 10)


class TestShallowInit:
    def test_clipping_h1_unit_scales_ks(self):
        # at h = 1 every scale equals 1; KS sanity at level 1e-3
        rng = np.random.default_rng(11)
        n = 10 ** 5
        biases = np.array([ini.init_shallow(
            ini.clipping_theorem(7 / 8, 3.0), 1, rng).inner_biases[0]
            for _ in range(200)])
        assert stats.kstest(biases, "norm").pvalue > 1e-3
        big = ini.clipping_theorem(7 / 8, 3.0)
        draws = ini.init_shallow(big, n, np.random.default_rng(12))
        hb = float(n) ** 3.0
        assert stats.kstest(draws.inner_biases / hb, "norm").pvalue > 1e-3
        assert stats.kstest(draws.inner_weights / hb, "halfnorm").pvalue > 1e-3
        assert stats.kstest(draws.outer_weights * float(n) ** (7 / 8),
                            "halfnorm").pvalue > 1e-3
        assert np.all(draws.outer_weights > 0) and np.all(draws.inner_weights > 0)

    def test_relu_mapping(self):
        rng = np.random.default_rng(13)
        h = 10 ** 5
        scheme = ini.relu_theorem(4 / 15, 4 / 15, 9 / 10, 9 / 10)
        p = ini.init_shallow(scheme, h, rng)
        assert p.variant == "relu"
        assert np.allclose(p.inner_weights, 1.0)
        # outer weight = V * W, metric = W^2, kink = -B / W; the recovered
        # raw draws must follow the scheme's laws
        W = np.sqrt(p.kink_metric)
        V = p.outer_weights / W
        B = -p.inner_biases * W
        assert stats.kstest(W * float(h) ** (4 / 15), "halfnorm").pvalue > 1e-3
        assert stats.kstest(V * float(h) ** (4 / 15), "halfnorm").pvalue > 1e-3
        assert stats.kstest(B * float(h) ** (9 / 10), "norm").pvalue > 1e-3

    def test_coordinate_independence(self):
        rng = np.random.default_rng(14)
        n = 10 ** 4
        draws = np.array([
            np.concatenate([p.inner_biases, p.inner_weights, p.outer_weights,
                            [p.outer_bias]])
            for p in (ini.init_shallow(ini.clipping_theorem(7 / 8, 3.0), 2, rng)
                      for _ in range(n))])
        c = np.corrcoef(draws.T)
        off = c[~np.eye(c.shape[0], dtype=bool)]
        assert np.max(np.abs(off)) < 3.0 / math.sqrt(n)

    def test_variant_mismatch(self, rng):
        with pytest.raises(ValueError):
            ini.init_shallow(ini.xavier_normal(), 4, rng)


class TestDeepInit:
    @pytest.mark.parametrize("dims,count", [
        ((1, 10, 1), 31), ((1, 100, 1), 301), ((1, 1000, 1), 3001),
        ((1, 50, 50, 1), 2701), ((1, 32, 32, 32, 1), 2209)])
    def test_param_counts(self, dims, count, rng):
        arch = Architecture(dims)
        assert arch.param_count == count
        theta = ini.init_deep(arch, ini.xavier_normal(), rng)
        assert theta.size == count

    def test_xavier_law(self):
        rng = np.random.default_rng(15)
        arch = Architecture((1, 400, 400, 1))
        theta = ini.init_deep(arch, ini.xavier_normal(), rng)
        fp = FlatParams(arch, theta)
        for k in (1, 2, 3):
            assert np.all(fp.biases(k) == 0.0)
        w2 = fp.weights(2).ravel()
        var = 2.0 / (400 + 400)
        assert np.var(w2) == pytest.approx(var, rel=0.05)
        # the published tail display is a plain centred normal, so signs
        # are balanced rather than folded positive
        assert 0.45 < np.mean(w2 > 0) < 0.55
        assert stats.kstest(w2 / math.sqrt(var), "norm").pvalue > 1e-3

    def test_he_law(self):
        rng = np.random.default_rng(16)
        arch = Architecture((1, 500, 1))
        theta = ini.init_deep(arch, ini.he_normal(), rng)
        fp = FlatParams(arch, theta)
        w2 = fp.weights(2).ravel()
        assert np.var(w2) == pytest.approx(2.0 / 500.0, rel=0.1)

    def test_section_4_4_layout(self):
        rng = np.random.default_rng(17)
        arch = Architecture((1, 1000, 1), activation="clipping")
        theta = ini.init_deep(arch, ini.InitScheme(ini.CUSTOM_4_4), rng)
        fp = FlatParams(arch, theta)
        s = 1000.0 ** 3
        assert np.all(fp.weights(1) > 0)
        assert np.std(fp.weights(1)) == pytest.approx(
            s * math.sqrt(1 - 2 / math.pi), rel=0.1)
        assert np.std(fp.biases(1)) == pytest.approx(s, rel=0.1)
        assert np.all(fp.weights(2) > 0)
        assert np.std(fp.weights(2)) == pytest.approx(
            1000.0 ** (-7 / 8) * math.sqrt(1 - 2 / math.pi), rel=0.1)

    def test_theorem_scheme_requires_one_hidden_layer(self, rng):
        arch = Architecture((1, 8, 8, 1))
        with pytest.raises(ValueError):
            ini.init_deep(arch, ini.InitScheme(ini.CUSTOM_4_4), rng)


class TestOrderStatisticsOfInit:
    def test_kink_location_trend(self):
        # fraction of draws with min_{n <= ceil(h^eps)} B_n / W_n > -b
        # grows with h when the bias scale dominates the weight scale
        alpha, gamma, eps, b = 4 / 15, 9 / 10, 0.5, 1.0
        rng = np.random.default_rng(18)
        fractions = []
        for h in (16, 64, 256):
            k = math.ceil(h ** eps)
            reps = 3000
            B = float(h) ** -gamma * rng.standard_normal((reps, k))
            W = float(h) ** -alpha * np.abs(rng.standard_normal((reps, k)))
            fractions.append(np.mean(np.min(B / W, axis=1) > -b))
        assert fractions[0] <= fractions[1] <= fractions[2]
        assert fractions[2] > fractions[0]

    def test_max_outer_weight_trend(self):
        # P(max_i outer weight >= h^{-alpha + eps}) shrinks with h
        alpha, eps = 7 / 8, 0.25
        rng = np.random.default_rng(19)
        probs = []
        for h in (16, 64, 256):
            reps = 4000
            V = float(h) ** -alpha * np.abs(rng.standard_normal((reps, h)))
            probs.append(np.mean(np.max(V, axis=1) >= float(h) ** (-alpha + eps)))
        assert probs[0] >= probs[1] >= probs[2]
        assert probs[0] > probs[2]
