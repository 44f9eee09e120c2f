import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from noisy_qkernel.errors import ConfigError, NumericalError
from noisy_qkernel.kernel_matrix import KernelKind, KernelMatrix
from noisy_qkernel.noise import (
    ShotConfig,
    apply_depolarization,
    compose_depolarization,
    sample_estimated_kernel,
    sample_estimated_values,
    worst_kernel,
)
from noisy_qkernel.statevector import CircuitConfig, gram_matrix


def ideal(entries, D=4):
    return KernelMatrix(np.asarray(entries, dtype=float), KernelKind.IDEAL, D)


def noisy_from(entries, p_layer, L, D=4):
    return apply_depolarization(ideal(entries, D), compose_depolarization(p_layer, L))


class TestCompose:
    def test_noiseless(self):
        assert compose_depolarization(0.0, 100).composed_rate == 0.0

    def test_one_layer(self):
        assert compose_depolarization(0.1, 1).composed_rate == pytest.approx(0.19, abs=1e-15)

    def test_thirty_layers_high_precision(self):
        # 1 - 0.9**60 evaluated with mpmath at 50 digits.
        expected = 0.99820298970008556878958682017049
        assert compose_depolarization(0.1, 30).composed_rate == pytest.approx(expected, abs=1e-12)

    def test_full_rate(self):
        assert compose_depolarization(1.0, 3).composed_rate == 1.0

    def test_huge_L_no_underflow_issue(self):
        nm = compose_depolarization(1e-6, 10**9)
        assert nm.composed_rate == pytest.approx(1 - np.exp(-2000.0002), abs=1e-12)
        assert nm.survival > 0 or nm.composed_rate == 1.0

    @pytest.mark.parametrize("rate", [-0.1, 1.5])
    def test_bad_rate(self, rate):
        with pytest.raises(ConfigError):
            compose_depolarization(rate, 1)

    def test_bad_L(self):
        with pytest.raises(ConfigError):
            compose_depolarization(0.1, 0)

    @settings(max_examples=100, deadline=None)
    @given(st.floats(0, 1), st.floats(0, 1), st.integers(1, 200), st.integers(1, 200))
    def test_monotone(self, a, b, L1, L2):
        lo, hi = sorted((a, b))
        La, Lb = sorted((L1, L2))
        assert compose_depolarization(lo, La).composed_rate <= compose_depolarization(hi, La).composed_rate
        assert compose_depolarization(lo, La).composed_rate <= compose_depolarization(lo, Lb).composed_rate
        nm = compose_depolarization(lo, La)
        assert nm.composed_rate == pytest.approx(1 - (1 - lo) ** (2 * La), abs=1e-12)


class TestApplyDepolarization:
    def test_p0_identity(self, rng):
        K = gram_matrix(rng.uniform(-1, 1, (5, 2)), CircuitConfig(2))
        out = apply_depolarization(K, compose_depolarization(0.0, 5))
        assert np.array_equal(out.entries, K.entries)
        assert out.kind is KernelKind.NOISY

    def test_p1_worst(self, rng):
        K = gram_matrix(rng.uniform(-1, 1, (5, 2)), CircuitConfig(2))
        out = apply_depolarization(K, compose_depolarization(1.0, 1))
        assert np.all(out.entries == 0.25)

    def test_exact_entry(self):
        out = noisy_from([[1.0]], 0.1, 1)
        # 0.81 * 1 + 0.19 / 4
        assert out.entries[0, 0] == pytest.approx(0.8575, abs=1e-15)

    def test_requires_ideal(self):
        K = worst_kernel(2, 4)
        with pytest.raises(ConfigError):
            apply_depolarization(K, compose_depolarization(0.1, 1))

    def test_interpolation_toward_worst(self, rng):
        K = gram_matrix(rng.uniform(-1, 1, (6, 3)), CircuitConfig(3))
        prev = None
        for L in (1, 2, 5, 10, 20):
            dist = np.abs(apply_depolarization(K, compose_depolarization(0.1, L)).entries - 1 / 8)
            if prev is not None:
                assert np.all(dist <= prev)
            prev = dist

    def test_spectral_norm_gap_bound(self, rng):
        # ||K_bar - K_noisy||_2 <= n (1 - p) (1 + 1/D)
        for _ in range(50):
            N = int(rng.integers(1, 6))
            n = int(rng.integers(1, 30))
            K = gram_matrix(rng.uniform(-1, 1, (n, N)), CircuitConfig(N))
            nm = compose_depolarization(float(rng.uniform(0.01, 0.5)), int(rng.integers(1, 20)))
            Kn = apply_depolarization(K, nm).entries
            gap = np.abs(np.linalg.eigvalsh(np.full((n, n), 1 / K.dim_D) - Kn)).max()
            assert gap <= n * (1 - nm.composed_rate) * (1 + 1 / K.dim_D) + 1e-12


class TestWorstKernel:
    def test_two_by_two(self):
        assert worst_kernel(2, 4).entries.tolist() == [[0.25, 0.25], [0.25, 0.25]]

    def test_one_by_one(self):
        K = worst_kernel(1, 2)
        assert K.entries.tolist() == [[0.5]]
        assert K.kind is KernelKind.WORST

    @pytest.mark.parametrize("n,D", [(3, 2), (10, 16), (7, 1024)])
    def test_spectral_norm(self, n, D):
        eig = np.linalg.eigvalsh(worst_kernel(n, D).entries)
        assert np.abs(eig).max() == pytest.approx(n / D, rel=1e-12)

    def test_worst_kind_invariant(self):
        with pytest.raises(NumericalError):
            KernelMatrix(np.eye(2), KernelKind.WORST, 4)


class TestShotSampling:
    def test_degenerate_entries(self):
        noisy = KernelMatrix(np.array([[1.0, 0.0], [0.0, 1.0]]), KernelKind.NOISY, 2)
        for m in (1, 7, 1000):
            est = sample_estimated_kernel(noisy, ShotConfig(m, 5))
            assert est.entries.tolist() == [[1.0, 0.0], [0.0, 1.0]]

    def test_three_sigma_band(self):
        p, m = 0.8575, 10**5
        sigma = np.sqrt(p * (1 - p) / m)
        noisy = KernelMatrix(np.full((1, 1), p), KernelKind.NOISY, 4)
        outside = sum(
            abs(sample_estimated_kernel(noisy, ShotConfig(m, seed)).entries[0, 0] - p) > 3 * sigma
            for seed in range(100)
        )
        assert outside <= 1

    def test_unbiased_over_seeds(self):
        probs = np.array([[0.9, 0.3], [0.3, 0.6]])
        noisy = KernelMatrix(probs, KernelKind.NOISY, 4)
        m, seeds = 20, 10_000
        total = np.zeros((2, 2))
        for seed in range(seeds):
            total += sample_estimated_kernel(noisy, ShotConfig(m, seed)).entries
        mean = total / seeds
        stderr = np.sqrt(probs * (1 - probs) / (m * seeds))
        assert np.all(np.abs(mean - probs) <= 4 * stderr)

    def test_symmetric_reproducible_and_thread_independent(self, rng):
        K = gram_matrix(rng.uniform(-1, 1, (9, 3)), CircuitConfig(3))
        noisy = apply_depolarization(K, compose_depolarization(0.05, 2))
        a = sample_estimated_kernel(noisy, ShotConfig(50, 99))
        b = sample_estimated_kernel(noisy, ShotConfig(50, 99), threads=3)
        assert np.array_equal(a.entries, b.entries)
        assert np.array_equal(a.entries, a.entries.T)
        assert a.kind is KernelKind.ESTIMATED
        c = sample_estimated_kernel(noisy, ShotConfig(50, 100))
        assert not np.array_equal(a.entries, c.entries)

    def test_requires_noisy(self):
        with pytest.raises(ConfigError):
            sample_estimated_kernel(worst_kernel(2, 4), ShotConfig(10))

    def test_rejects_out_of_range_values(self):
        with pytest.raises(NumericalError):
            sample_estimated_values(np.array([[1.2]]), ShotConfig(10))

    def test_shot_config_validation(self):
        with pytest.raises(ConfigError):
            ShotConfig(0)
        with pytest.raises(ConfigError):
            ShotConfig(5, -1)

    def test_query_values_shape(self):
        out = sample_estimated_values(np.full((3, 4), 0.5), ShotConfig(100, 1))
        assert out.shape == (3, 4)
        assert np.all((out >= 0) & (out <= 1))
