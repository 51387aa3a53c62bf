import itertools
import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from bsqtok import entropy as ent
from bsqtok.errors import BadGroupSize, EmptyBatch, TooLarge
from bsqtok.quantizer import decode_token, project_to_sphere


def random_sphere(rng, n, L):
    return project_to_sphere(rng.standard_normal((n, L)))


def loop_code_dist(u, tau):
    """Plain-Python softmax over every sign pattern; codes indexed LSB first."""
    L = len(u)
    logits = []
    for k in range(1 << L):
        c = [(1.0 if (k >> d) & 1 else -1.0) / math.sqrt(L) for d in range(L)]
        logits.append(tau * sum(ci * ui for ci, ui in zip(c, u)))
    top = max(logits)
    w = [math.exp(x - top) for x in logits]
    s = sum(w)
    return np.array([x / s for x in w])


def loop_entropy(mass):
    return -sum(m * math.log2(m) for m in mass if m > 0)


class TestSoftAssign:
    def test_small_tau_is_half(self):
        u = random_sphere(np.random.default_rng(0), 4, 9)
        np.testing.assert_allclose(ent.soft_assign(u, 1e-12), 0.5, atol=1e-12)

    def test_one_dim(self):
        assert ent.soft_assign([1.0], 1.0)[0] == pytest.approx(1.0 / (1.0 + math.exp(-2.0)), abs=1e-15)
        assert ent.soft_assign([1.0], 1.0)[0] == pytest.approx(0.8807970779778823, abs=1e-15)

    def test_zero_coordinate(self):
        for tau in (0.01, 1.0, 1e3):
            assert ent.soft_assign([0.0, 1.0], tau)[0] == 0.5

    def test_sigmoid_extremes_are_finite(self):
        s = ent.sigmoid(np.array([-1e4, -30.0, 0.0, 30.0, 1e4]))
        assert np.all(np.isfinite(s))
        np.testing.assert_allclose(s + ent.sigmoid(-np.array([-1e4, -30.0, 0.0, 30.0, 1e4])), 1.0)


class TestBruteForce:
    def test_matches_loop_oracle(self):
        rng = np.random.default_rng(1)
        for L in (1, 2, 3, 5, 7):
            for tau in (0.01, 1.0, 10.0):
                u = random_sphere(rng, 1, L)[0]
                np.testing.assert_allclose(ent.brute_force_code_dist(u, tau), loop_code_dist(u, tau), atol=1e-14)

    def test_zero_tau_uniform(self):
        u = random_sphere(np.random.default_rng(2), 1, 6)[0]
        np.testing.assert_allclose(ent.brute_force_code_dist(u, 0.0), 1 / 64, rtol=0, atol=1e-15)

    def test_concentrates_on_aligned_code(self):
        L, k0 = 6, 45
        u = decode_token(k0, L)
        mass = ent.brute_force_code_dist(u, 1000.0)
        assert mass[k0] > 0.999
        assert int(np.argmax(mass)) == k0

    def test_one_bit(self):
        for u1, tau in ((1.0, 0.3), (-1.0, 2.0)):
            p = 1.0 / (1.0 + math.exp(-2.0 * tau * u1))
            np.testing.assert_allclose(ent.brute_force_code_dist([u1], tau), [1 - p, p], atol=1e-15)

    def test_sums_to_one(self):
        mass = ent.brute_force_code_dist(random_sphere(np.random.default_rng(3), 20, 12), 3.0)
        np.testing.assert_allclose(mass.sum(axis=-1), 1.0, atol=1e-12)

    def test_too_large(self):
        with pytest.raises(TooLarge):
            ent.brute_force_code_dist(np.ones(21) / math.sqrt(21), 1.0)

    @pytest.mark.parametrize("L", [2, 4, 8, 12])
    def test_factorization_identity(self, L):
        rng = np.random.default_rng(L)
        u = random_sphere(rng, 50, L)
        for tau in (0.01, 1.0, 10.0):
            fact = ent.factorized_code_dist(ent.soft_assign(u, tau))
            assert np.max(np.abs(fact - ent.brute_force_code_dist(u, tau))) <= 1e-9


class TestLfqSoftAssign:
    def test_zero_tau_uniform(self):
        np.testing.assert_allclose(ent.lfq_soft_assign([0.3, -2.0, 1.0], 0.0), 1 / 8)

    def test_corner_concentrates(self):
        z = np.array([1.0, -1.0, -1.0, 1.0])
        mass = ent.lfq_soft_assign(z, 50.0)
        assert mass[0b1001] > 0.999

    def test_one_dim_origin(self):
        np.testing.assert_allclose(ent.lfq_soft_assign([0.0], 3.0), [0.5, 0.5])

    def test_factorized_form(self):
        z = np.random.default_rng(4).normal(size=(30, 6))
        for tau in (0.1, 1.0):
            fact = ent.factorized_code_dist(ent.lfq_soft_assign_factorized(z, tau))
            np.testing.assert_allclose(fact, ent.lfq_soft_assign(z, tau), atol=1e-12)


class TestPerSampleEntropy:
    def test_uniform_eighteen_bits(self):
        assert ent.per_sample_entropy(np.full(18, 0.5)) == pytest.approx(18.0, abs=1e-12)

    def test_deterministic_limit(self):
        assert ent.per_sample_entropy(np.array([0.0, 1.0, 1.0, 0.0])) < 1e-9

    def test_matches_brute_force(self):
        rng = np.random.default_rng(5)
        for L in (2, 6, 10, 14, 16):
            u = random_sphere(rng, 5, L)
            for tau in (0.01, 1.0, 10.0):
                brute = ent.distribution_entropy(ent.brute_force_code_dist(u, tau))
                np.testing.assert_allclose(ent.per_sample_entropy(ent.soft_assign(u, tau)), brute, atol=1e-9)

    def test_matches_loop_entropy(self):
        u = random_sphere(np.random.default_rng(6), 1, 5)[0]
        assert ent.per_sample_entropy(ent.soft_assign(u, 2.0)) == pytest.approx(
            loop_entropy(loop_code_dist(u, 2.0)), abs=1e-12
        )


class TestDatasetEntropy:
    def test_identical_rows(self):
        p = np.random.default_rng(7).uniform(0.05, 0.95, 9)
        batch = np.tile(p, (13, 1))
        assert ent.dataset_entropy_approx(batch) == pytest.approx(float(ent.per_sample_entropy(p)), abs=1e-12)

    def test_complementary_pair(self):
        p = np.random.default_rng(8).uniform(0.01, 0.99, 7)
        assert ent.dataset_entropy_approx(np.stack([p, 1 - p])) == pytest.approx(7.0, abs=1e-12)

    def test_empty(self):
        with pytest.raises(EmptyBatch):
            ent.dataset_entropy_approx(np.zeros((0, 4)))
        with pytest.raises(EmptyBatch):
            ent.entropy_loss(np.zeros((0, 4)))

    def test_upper_bounds_mixture(self):
        rng = np.random.default_rng(9)
        for L in (3, 6, 9, 12):
            for tau in (0.5, 5.0, 50.0):
                u = random_sphere(rng, 16, L)
                exact = ent.distribution_entropy(ent.mixture_code_dist(u, tau))
                assert ent.dataset_entropy_approx(ent.soft_assign(u, tau)) >= exact - 1e-9


class TestEntropyLoss:
    def test_uniform(self):
        assert ent.entropy_loss(np.full((5, 6), 0.5), 1.0) == pytest.approx(0.0, abs=1e-12)

    def test_gamma_zero(self):
        batch = np.random.default_rng(10).uniform(0.1, 0.9, (8, 5))
        assert ent.entropy_loss(batch, 0.0) == pytest.approx(float(ent.per_sample_entropy(batch).mean()))

    def test_deterministic_identical(self):
        batch = np.tile([1.0, 0.0, 1.0], (4, 1))
        assert abs(ent.entropy_loss(batch, 1.0)) < 1e-9

    def test_gradient(self):
        from bsqtok.grad import grad_check

        rng = np.random.default_rng(11)
        for gamma in (0.0, 1.0, 2.5):
            batch = rng.uniform(0.02, 0.98, (6, 5))
            report = grad_check(lambda b: ent.entropy_loss(b, gamma), ent.entropy_loss_grad(batch, gamma), batch)
            assert report.passed, report


class TestApproximationGap:
    def test_single_sample_is_exact(self):
        rng = np.random.default_rng(12)
        for L in (2, 5, 8):
            for tau in (0.1, 3.0, 30.0):
                assert abs(ent.approximation_gap(random_sphere(rng, 1, L), tau)) <= 1e-9

    @pytest.mark.parametrize("L", [4, 8])
    def test_adversarial_pair(self, L):
        pair = np.stack([np.ones(L), -np.ones(L)]) / math.sqrt(L)
        gap = ent.approximation_gap(pair, 100.0)
        assert gap >= 0.9 * (L - 1)
        assert gap <= L - 1 + 1e-9

    def test_small_tau(self):
        rng = np.random.default_rng(13)
        gaps = [ent.approximation_gap(random_sphere(rng, 64, 8), 0.01) for _ in range(10)]
        assert min(gaps) >= -1e-9
        assert np.mean(gaps) <= 0.01

    def test_too_large(self):
        with pytest.raises(TooLarge):
            ent.approximation_gap(random_sphere(np.random.default_rng(0), 2, 13), 1.0)

    @settings(max_examples=60, deadline=None)
    @given(
        st.integers(1, 8),
        st.integers(1, 12),
        st.floats(1e-3, 200.0),
        st.integers(0, 2**32 - 1),
    )
    def test_never_negative(self, L, n, tau, seed):
        u = random_sphere(np.random.default_rng(seed), n, L)
        assert ent.approximation_gap(u, tau) >= -1e-9


class TestMProjection:
    """The batch marginals minimize KL(mixture || factorized) over factorized laws."""

    def test_coordinate_search_cannot_improve(self):
        rng = np.random.default_rng(14)
        for trial in range(6):
            L = int(rng.integers(2, 9))
            u = random_sphere(rng, 12, L)
            tau = float(rng.choice([0.5, 2.0, 8.0]))
            mixture = ent.mixture_code_dist(u, tau)
            best_params = ent.batch_marginals(ent.soft_assign(u, tau))
            best = ent.kl_divergence(mixture, ent.factorized_code_dist(best_params))
            params = best_params.copy()
            for step in (0.1, 0.03, 0.01, 0.003, 0.001):
                for d in range(L):
                    for sign in (-1.0, 1.0):
                        trial_params = params.copy()
                        trial_params[d] = np.clip(trial_params[d] + sign * step, 1e-6, 1 - 1e-6)
                        kl = ent.kl_divergence(mixture, ent.factorized_code_dist(trial_params))
                        assert kl >= best - 1e-6

    def test_random_factorized_laws_are_worse(self):
        rng = np.random.default_rng(15)
        u = random_sphere(rng, 20, 6)
        mixture = ent.mixture_code_dist(u, 3.0)
        best = ent.kl_divergence(mixture, ent.factorized_code_dist(ent.batch_marginals(ent.soft_assign(u, 3.0))))
        for _ in range(200):
            q = ent.factorized_code_dist(rng.uniform(0.01, 0.99, 6))
            assert ent.kl_divergence(mixture, q) >= best - 1e-12


class TestGroupedEntropy:
    def test_group_one_is_per_sample_exactly(self):
        rng = np.random.default_rng(16)
        for L in (1, 4, 9, 18):
            for tau in (0.1, 1.0, 5.0, 10.0):
                batch = ent.soft_assign(random_sphere(rng, 10, L), tau)
                assert ent.grouped_entropy(batch, 1) == float(ent.per_sample_entropy(batch).mean())
                assert ent.grouped_dataset_entropy(batch, 1) == ent.dataset_entropy_approx(batch)

    @pytest.mark.parametrize("L", [2, 6, 12])
    def test_full_group_is_brute_force(self, L):
        rng = np.random.default_rng(L + 100)
        u = random_sphere(rng, 8, L)
        for tau in (0.01, 1.0, 10.0):
            brute = float(ent.distribution_entropy(ent.brute_force_code_dist(u, tau)).mean())
            assert abs(ent.grouped_entropy(ent.soft_assign(u, tau), L) - brute) <= 1e-9

    def test_uniform_any_group(self):
        for g in (1, 2, 3, 4, 6, 12):
            assert ent.grouped_entropy(np.full((3, 12), 0.5), g) == pytest.approx(12.0, abs=1e-9)

    def test_bad_group(self):
        batch = np.full((2, 12), 0.5)
        for g in (0, 5, 24):
            with pytest.raises(BadGroupSize):
                ent.grouped_entropy(batch, g)
        with pytest.raises(BadGroupSize):
            ent.grouped_entropy(np.full((1, 42), 0.5), 21)

    def test_dataset_grouping_tightens(self):
        rng = np.random.default_rng(17)
        u = random_sphere(rng, 32, 8)
        batch = ent.soft_assign(u, 20.0)
        values = [ent.grouped_dataset_entropy(batch, g) for g in (1, 2, 4, 8)]
        assert values[0] == pytest.approx(ent.dataset_entropy_approx(batch), abs=1e-12)
        assert all(a >= b - 1e-9 for a, b in itertools.pairwise(values))
        exact = ent.distribution_entropy(ent.mixture_code_dist(u, 20.0))
        assert values[-1] == pytest.approx(float(exact), abs=1e-9)
