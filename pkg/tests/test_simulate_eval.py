import itertools

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from bparhmm.conjugacy import MNIWPrior
from bparhmm.errors import ContractViolation
from bparhmm.evaluate import hungarian_align, normalized_hamming
from bparhmm.geweke import GewekeConfig, forward_draw, geweke_joint_test, statistics
from bparhmm.model import ModelHypers, check_consistent, joint_log_prob, joint_log_prob_terms
from bparhmm.oracles import OracleSizeError, brute_joint_log_prob, random_tiny_instance
from bparhmm.simulate import (generate_synthetic, random_ownership, sample_ibp,
                              separated_behaviors)


def brute_assignment_cost(cost):
    r, c = cost.shape
    if r <= c:
        return min(cost[np.arange(r), list(p)].sum() for p in itertools.permutations(range(c), r))
    return min(cost[list(p), np.arange(c)].sum() for p in itertools.permutations(range(r), c))


class TestHungarian:
    def test_identity(self):
        cost = np.ones((4, 4)) - 0.9 * np.eye(4)
        mapping, total = hungarian_align(cost)
        assert mapping == {k: k for k in range(4)} and total == pytest.approx(0.4)

    def test_anti_diagonal(self):
        mapping, total = hungarian_align(np.array([[1.0, 0.0], [0.0, 1.0]]))
        assert mapping == {0: 1, 1: 0} and total == 0.0

    def test_rectangular_5x7(self, rng):
        cost = rng.random((5, 7))
        mapping, total = hungarian_align(cost)
        assert len(set(mapping.values())) == 5
        assert total == pytest.approx(brute_assignment_cost(cost), abs=1e-12)

    @settings(max_examples=60, deadline=None)
    @given(st.integers(1, 7), st.integers(1, 7), st.integers(0, 2 ** 32 - 1))
    def test_matches_exhaustive(self, r, c, seed):
        cost = np.random.default_rng(seed).normal(size=(r, c))
        mapping, total = hungarian_align(cost)
        assert len(mapping) == min(r, c) and len(set(mapping.values())) == len(mapping)
        assert total == pytest.approx(brute_assignment_cost(cost), abs=1e-9)

    def test_non_finite(self):
        with pytest.raises(ValueError):
            hungarian_align(np.array([[np.nan]]))


class TestHamming:
    def test_identical(self):
        assert normalized_hamming([1, 2, 3, 3], [1, 2, 3, 3]).normalizedHamming == 0.0

    def test_permutation(self):
        assert normalized_hamming([5, 5, 7, 9], [1, 1, 2, 3]).normalizedHamming == 0.0

    def test_example(self):
        res = normalized_hamming([3, 3, 3, 4], [1, 1, 2, 2])
        assert res.normalizedHamming == pytest.approx(0.25)
        assert res.mapping == {3: 1, 4: 2}

    def test_pooled_sequences(self):
        res = normalized_hamming([np.array([0, 0]), np.array([1])], [np.array([2, 2]), np.array([2])])
        assert res.normalizedHamming == pytest.approx(1 / 3)

    def test_length_mismatch(self):
        with pytest.raises(ContractViolation):
            normalized_hamming([1, 2], [1, 2, 3])

    def test_symmetry_and_bounds(self, rng):
        for _ in range(50):
            n = int(rng.integers(1, 40))
            a = rng.integers(0, 4, n)
            b = rng.integers(0, 6, n)
            h = normalized_hamming(a, b).normalizedHamming
            assert 0.0 <= h <= 1.0
            relabel_a = rng.permutation(10)[a]
            relabel_b = rng.permutation(10)[b]
            assert normalized_hamming(relabel_a, relabel_b).normalizedHamming == pytest.approx(h)
            assert normalized_hamming(b, a).normalizedHamming == pytest.approx(h)
            assert normalized_hamming(a, a).normalizedHamming == 0.0


class TestSimulation:
    def test_ibp_expected_features(self, rng):
        n = 5000
        K = np.array([sample_ibp(10, 2.0, 1.0, rng, nonempty_rows=False).shape[1]
                      for _ in range(n)])
        want = 2.0 * np.sum(1.0 / np.arange(1, 11))
        assert abs(K.mean() - want) < 3.5 * np.sqrt(want / n)

    def test_nonempty_rows(self, rng):
        for _ in range(200):
            F = sample_ibp(5, 0.3, 1.0, rng)
            assert F.any(axis=1).all() and F.any(axis=0).all()

    def test_tiny_alpha_single_shared_feature(self, rng):
        F = sample_ibp(6, 1e-8, 1.0, rng)
        assert F.shape == (6, 1) and F.all()

    def test_seed_determinism(self):
        h = ModelHypers(mniw=MNIWPrior.default(2, 1))
        a_data, a_truth = generate_synthetic(h, 3, 20, 2, 1, np.random.default_rng(4))
        b_data, b_truth = generate_synthetic(h, 3, 20, 2, 1, np.random.default_rng(4))
        assert all(np.array_equal(x.y, y.y) for x, y in zip(a_data, b_data))
        assert np.array_equal(a_truth.trueF, b_truth.trueF)

    def test_ground_truth_consistent(self, rng):
        for _ in range(10):
            h = ModelHypers(alpha=2.0, mniw=MNIWPrior.default(2, 2))
            data, truth = generate_synthetic(h, 3, 25, 2, 2, rng)
            check_consistent(truth.trueF, truth.trueZ)
            assert truth.trueF.any(axis=1).all() and truth.trueF.any(axis=0).all()
            assert truth.trueThetas.K == truth.trueF.shape[1]
            assert all(len(zi) == s.n_steps for zi, s in zip(truth.trueZ, data))
            assert np.isfinite(joint_log_prob(data, truth.trueF, truth.trueZ, h))

    def test_separated_behaviors_stable(self):
        th = separated_behaviors(4, 2)
        assert np.all(np.abs(np.linalg.eigvals(th.A)) < 1.0)

    def test_random_ownership(self, rng):
        F = random_ownership(8, 4, rng)
        assert (F.sum(axis=1) >= 2).all() and F.any(axis=0).all()


class TestOracle:
    def test_single_feature_single_path(self, rng):
        data, F, z, h = random_tiny_instance(rng, max_K=1)
        assert joint_log_prob_terms(data, F, z, h)["trans"] == pytest.approx(0.0)
        assert brute_joint_log_prob(data, F, z, h) == pytest.approx(joint_log_prob(data, F, z, h),
                                                                    abs=1e-8)

    def test_refuses_large(self, rng):
        data, F, z, h = random_tiny_instance(rng)
        with pytest.raises(OracleSizeError):
            brute_joint_log_prob(data * 11, np.vstack([F] * 11), z * 11, h)


class TestGeweke:
    def test_zero_iterations_inconclusive(self, rng):
        rep = geweke_joint_test(GewekeConfig(), 0, rng)
        assert rep.inconclusive and not rep.passed() and "inconclusive" in rep.summary()

    def test_config_limits(self):
        with pytest.raises(ValueError):
            GewekeConfig(N=3)

    def test_forward_draw_valid(self, rng):
        cfg = GewekeConfig()
        for _ in range(50):
            state, data = forward_draw(cfg, rng)
            check_consistent(state.F, state.z)
            assert len(data) == 2 and all(s.T == 10 for s in data)
            assert set(statistics(state)) == {"K", "sum_m", "self_transitions", "alpha"}

    def test_short_run_reports(self, rng):
        rep = geweke_joint_test(GewekeConfig(n_forward=200, burn=5, n_batches=5), 50, rng)
        assert rep.n_chain == 50 and set(rep.z_scores) == set(rep.statistics)
        assert all(np.isfinite(v) for v in rep.z_scores.values())
