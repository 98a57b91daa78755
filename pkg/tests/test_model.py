import itertools

import numpy as np
import pytest
from scipy.stats import poisson

from bparhmm.conjugacy import MNIWPrior, log_marginal_likelihood_raw
from bparhmm.errors import ContractViolation
from bparhmm.model import (ModelHypers, SequenceData, check_consistent, compact_features,
                           ibp_log_prob, joint_log_prob, joint_log_prob_terms,
                           log_prob_nonempty_rows, pooled_raw_stats, trans_log_prob_collapsed,
                           usage_counts)
from bparhmm.oracles import (brute_joint_log_prob, brute_log_evidence, customer_ibp_log_prob,
                             polya_trans_log_prob, random_tiny_instance)

from conftest import random_prior


def d1_hypers(**kw):
    prior = MNIWPrior(n0=3.0, S0=np.eye(1), M=np.zeros((1, 1)), L=np.eye(1))
    return ModelHypers(mniw=prior, **kw)


class TestSequenceData:
    def test_lag_rows(self):
        y = np.arange(12.0).reshape(6, 2)
        seq = SequenceData(y, r=2)
        assert seq.n_steps == 4
        assert np.array_equal(seq.Y[0], y[2])
        assert np.array_equal(seq.X[0], np.concatenate([y[1], y[0]]))
        assert np.array_equal(seq.yLagged, seq.X)

    def test_too_short(self):
        with pytest.raises(ContractViolation):
            SequenceData(np.zeros((2, 1)), r=2)


class TestIBP:
    def test_single_row_two_features(self):
        assert ibp_log_prob(np.ones((1, 2), bool), 1.0, 1.0) == pytest.approx(-1.0 - np.log(2), abs=1e-4)
        assert ibp_log_prob(np.ones((1, 2), bool), 1.0, 1.0) == pytest.approx(-1.6931, abs=1e-4)

    def test_empty(self):
        assert ibp_log_prob(np.zeros((1, 0), bool), 2.5, 1.0) == pytest.approx(-2.5)

    def test_poisson_single_row(self):
        for K in range(6):
            assert ibp_log_prob(np.ones((1, K), bool), 1.7, 1.0) == pytest.approx(
                poisson.logpmf(K, 1.7), abs=1e-12)

    def test_permutation_invariance(self, rng):
        for _ in range(20):
            F = rng.random((5, 6)) < 0.5
            perm = rng.permutation(6)
            assert ibp_log_prob(F, 1.3, 0.7) == pytest.approx(ibp_log_prob(F[:, perm], 1.3, 0.7),
                                                               abs=1e-12)

    def test_vs_customer_process(self, rng):
        for _ in range(30):
            N, K = int(rng.integers(1, 5)), int(rng.integers(0, 5))
            F = rng.random((N, K)) < 0.5
            a, c = rng.gamma(2.0) + 0.1, rng.gamma(2.0) + 0.1
            assert ibp_log_prob(F, a, c) == pytest.approx(customer_ibp_log_prob(F, a, c), abs=1e-10)

    def test_bad_params(self):
        with pytest.raises(ValueError):
            ibp_log_prob(np.ones((1, 1), bool), 0.0, 1.0)
        with pytest.raises(ValueError):
            ibp_log_prob(np.ones((1, 1), bool), 1.0, -1.0)

    def test_lof_sums_to_one_on_small_support(self):
        # N=2: enumerate lof classes by counts of the three column histories
        a, c = 0.8, 1.4
        total = 0.0
        for n10, n01, n11 in itertools.product(range(25), repeat=3):
            F = np.array([[1] * n10 + [0] * n01 + [1] * n11,
                          [0] * n10 + [1] * n01 + [1] * n11], dtype=bool).reshape(2, -1)
            total += np.exp(ibp_log_prob(F, a, c))
        assert total == pytest.approx(1.0, abs=1e-9)


class TestNonemptyRows:
    def test_single_row(self):
        assert log_prob_nonempty_rows(1, 2.0, 1.0) == pytest.approx(np.log1p(-np.exp(-2.0)))

    def test_matches_enumeration(self):
        # N=2: P(both rows nonempty) by summing the lof pmf over nonempty classes
        a, c = 1.1, 0.6
        total = 0.0
        for n10, n01, n11 in itertools.product(range(25), repeat=3):
            if n10 + n11 == 0 or n01 + n11 == 0:
                continue
            F = np.array([[1] * n10 + [0] * n01 + [1] * n11,
                          [0] * n10 + [1] * n01 + [1] * n11], dtype=bool).reshape(2, -1)
            total += np.exp(ibp_log_prob(F, a, c))
        assert log_prob_nonempty_rows(2, a, c) == pytest.approx(np.log(total), abs=1e-9)

    def test_high_precision_path(self):
        # tiny alpha: the alternating sum cancels and the exact fallback is used
        val = log_prob_nonempty_rows(30, 1e-3, 1.0)
        assert np.isfinite(val) and val < np.log(1e-3)


class TestTransition:
    def test_single_state(self):
        assert trans_log_prob_collapsed([0, 0, 0, 0], [True], 1.0, 3.0) == pytest.approx(0.0)

    def test_hand_value(self):
        # initial row Dir(1,1) then row of state 1 Dir(1,1): 1/2 * 1/2
        val = trans_log_prob_collapsed([0, 1], [True, True], 1.0, 0.0)
        assert abs(val - np.log(0.25)) < 1e-10

    def test_vs_polya(self, rng):
        for _ in range(50):
            K = int(rng.integers(1, 5))
            f = np.zeros(K + 2, bool)
            active = np.sort(rng.choice(K + 2, size=K, replace=False))
            f[active] = True
            zl = rng.integers(0, K, size=int(rng.integers(1, 15)))
            g, k = rng.gamma(2.0) + 0.05, rng.gamma(2.0) * 2
            assert trans_log_prob_collapsed(active[zl], f, g, k) == pytest.approx(
                polya_trans_log_prob(zl, K, g, k), abs=1e-10)

    def test_not_scale_invariant(self):
        z, f = [0, 1, 1, 0, 1], [True, True]
        assert abs(trans_log_prob_collapsed(z, f, 1.0, 2.0)
                   - trans_log_prob_collapsed(z, f, 2.0, 4.0)) > 1e-3

    def test_label_outside_active(self):
        with pytest.raises(ContractViolation):
            trans_log_prob_collapsed([0, 2], [True, True, False], 1.0, 1.0)


class TestCompact:
    def test_no_empty_columns(self):
        F = np.array([[1, 0], [1, 1]], bool)
        z = [np.array([0, 0]), np.array([1, 0])]
        F2, z2, m = compact_features(F, z)
        assert np.array_equal(F2, F) and np.array_equal(m, [0, 1])
        assert all(np.array_equal(a, b) for a, b in zip(z, z2))

    def test_middle_column(self):
        F = np.array([[1, 0, 1], [1, 0, 0]], bool)
        z = [np.array([0, 2, 2]), np.array([0, 0])]
        F2, z2, m = compact_features(F, z)
        assert F2.shape == (2, 2) and np.array_equal(m, [0, -1, 1])
        assert np.array_equal(z2[0], [0, 1, 1])

    def test_idempotent(self, rng):
        F = rng.random((4, 6)) < 0.3
        F[:, 0] = True
        z = [np.zeros(3, dtype=np.int64) for _ in range(4)]
        once = compact_features(F, z)
        twice = compact_features(once[0], once[1])
        assert np.array_equal(once[0], twice[0])
        assert all(np.array_equal(a, b) for a, b in zip(once[1], twice[1]))

    def test_joint_unchanged(self, rng):
        data, F, z, h = random_tiny_instance(rng)
        N, K = F.shape
        Fp = np.insert(F, 1 if K > 1 else 0, False, axis=1)
        zp = [np.where(zi >= (1 if K > 1 else 0), zi + 1, zi) for zi in z]
        assert joint_log_prob(data, Fp, zp, h) == pytest.approx(joint_log_prob(data, F, z, h),
                                                                 abs=1e-10)
        F2, z2, _ = compact_features(Fp, zp)
        assert joint_log_prob(data, F2, z2, h) == pytest.approx(joint_log_prob(data, F, z, h),
                                                                 abs=1e-12)


class TestJoint:
    def test_vs_brute(self, rng):
        for _ in range(25):
            data, F, z, h = random_tiny_instance(rng)
            assert abs(joint_log_prob(data, F, z, h) - brute_joint_log_prob(data, F, z, h)) < 1e-8

    def test_decomposition(self, rng):
        h = d1_hypers(alpha=1.3, c=0.9, gamma=0.7, kappa=2.0)
        data = [SequenceData(rng.standard_normal((4, 1))) for _ in range(2)]
        F = np.array([[1, 1], [0, 1]], bool)
        z = [np.array([0, 1, 1]), np.array([1, 1, 1])]
        ibp = ibp_log_prob(F, h.alpha, h.c)
        trans = sum(trans_log_prob_collapsed(zi, F[i], h.gamma, h.kappa) for i, zi in enumerate(z))
        lik = float(np.sum(log_marginal_likelihood_raw(h.mniw, *pooled_raw_stats(data, z, 2))))
        terms = joint_log_prob_terms(data, F, z, h)
        assert terms == pytest.approx({"ibp": ibp, "trans": trans, "lik": lik}, abs=1e-12)
        assert joint_log_prob(data, F, z, h) == pytest.approx(ibp + trans + lik, abs=1e-12)

    def test_evidence_by_enumeration(self, rng):
        # N=1, T=6, K=2: sum over all 2^5 paths
        h = d1_hypers(alpha=1.0, c=1.0, gamma=1.0, kappa=2.0)
        data = [SequenceData(rng.standard_normal((6, 1)))]
        F = np.ones((1, 2), bool)
        terms = [joint_log_prob(data, F, [np.array(p)], h)
                 for p in itertools.product(range(2), repeat=5)]
        assert abs(np.logaddexp.reduce(terms) - brute_log_evidence(data, F, h)) < 1e-8

    def test_zero_modeled_steps(self):
        h = d1_hypers(alpha=1.5)
        seq = SequenceData(np.zeros((2, 1)))
        seq.Y, seq.X = seq.Y[:0], seq.X[:0]
        F = np.ones((1, 1), bool)
        val = joint_log_prob([seq], F, [np.zeros(0, dtype=np.int64)], h)
        assert val == pytest.approx(ibp_log_prob(F, 1.5, 1.0), abs=1e-12)

    def test_permutation_invariance(self, rng):
        for _ in range(10):
            data, F, z, h = random_tiny_instance(rng)
            perm = rng.permutation(F.shape[1])
            inv = np.argsort(perm)
            val = joint_log_prob(data, F[:, perm], [inv[zi] for zi in z], h)
            assert val == pytest.approx(joint_log_prob(data, F, z, h), abs=1e-10)

    def test_duplicate_sequence_couples(self, rng):
        h = d1_hypers()
        y = np.zeros((40, 1))
        for t in range(1, 40):
            y[t] = 0.9 * y[t - 1] + 0.1 * rng.standard_normal()
        one = [SequenceData(y)]
        two = [SequenceData(y), SequenceData(y)]
        z1 = [np.zeros(39, dtype=np.int64)]
        lik1 = joint_log_prob_terms(one, np.ones((1, 1), bool), z1, h)["lik"]
        lik2 = joint_log_prob_terms(two, np.ones((2, 1), bool), z1 * 2, h)["lik"]
        assert lik2 - lik1 > lik1

    def test_inconsistent(self, rng):
        data, F, z, h = random_tiny_instance(rng)
        z = list(z)
        z[0] = np.full_like(z[0], F.shape[1])
        with pytest.raises(ContractViolation):
            joint_log_prob(data, F, z, h)

    def test_mixed_dimensions(self):
        h = ModelHypers(mniw=random_prior(1, 1, np.random.default_rng(0)))
        data = [SequenceData(np.zeros((3, 1))), SequenceData(np.zeros((3, 2)))]
        with pytest.raises(ContractViolation):
            joint_log_prob(data, np.ones((2, 1), bool), [np.zeros(2, np.int64)] * 2, h)


def test_usage_and_consistency():
    F = np.array([[1, 0, 1], [1, 1, 0]], bool)
    assert np.array_equal(usage_counts(F), [2, 1, 1])
    check_consistent(F, [np.array([0, 2]), np.array([1])])
    with pytest.raises(ContractViolation):
        check_consistent(F, [np.array([1]), np.array([1])])
    with pytest.raises(ContractViolation):
        check_consistent(F, [np.array([0])])


def test_hypers_validation():
    with pytest.raises(ContractViolation):
        ModelHypers(alpha=0.0)
    with pytest.raises(ContractViolation):
        ModelHypers(kappa=-1.0)
