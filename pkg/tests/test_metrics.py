"""Selection, L1, NMI, and concordance metrics against hand oracles."""

import numpy as np
import pytest

import survmix as sm
from survmix.metrics import contingency, match_clusters


def model(*idx):
    return sm.ModelIndex(tuple(idx))


class TestSelectionMetrics:
    def test_perfect_recovery(self):
        rep = sm.selection_metrics(model(*range(6)), model(*range(6)), 40)
        assert (rep.sensitivity, rep.specificity, rep.fdr) == (1.0, 1.0, 0.0)

    def test_nothing_selected(self):
        rep = sm.selection_metrics(model(*range(6)), model(), 40)
        assert (rep.sensitivity, rep.specificity, rep.fdr) == (0.0, 1.0, 0.0)

    def test_confusion_count_oracle(self):
        # true {0..5}, est {0..4, 6}: TP=5, FP=1, TN=33 of 34 negatives
        rep = sm.selection_metrics(model(*range(6)), model(0, 1, 2, 3, 4, 6), 40)
        assert rep.sensitivity == pytest.approx(5 / 6)
        assert rep.specificity == pytest.approx(33 / 34)
        assert rep.fdr == pytest.approx(1 / 6)

    def test_empty_true_model_is_vacuous(self):
        rep = sm.selection_metrics(model(), model(1), 10)
        assert rep.sensitivity == 1.0 and rep.vacuous

    def test_counts_recoverable_exactly(self):
        true, est, p = model(2, 5, 7), model(2, 3), 9
        rep = sm.selection_metrics(true, est, p)
        tp = rep.sensitivity * true.size
        assert tp == pytest.approx(round(tp))
        assert round(tp) == len(set(true.indices) & set(est.indices))


class TestL1Error:
    def test_perfect_recovery_is_zero(self):
        true = np.zeros((2, 5))
        true[0, :2] = [1.0, 2.0]
        true[1, :2] = [25.0, 25.5]
        est = {0: true[0].copy(), 1: true[1].copy()}
        labels = np.repeat([0, 1], 10)
        assert sm.l1_error(true, est, labels, labels) == 0.0

    def test_zero_estimate_sums_truth_mass(self):
        # direct-summation oracle: one group, est identically zero
        truth = np.zeros((1, 40))
        truth[0, :6] = 25.5
        est = {0: np.zeros(40)}
        labels = np.zeros(20, dtype=int)
        assert sm.l1_error(truth, est, labels, labels) == pytest.approx(153.0)

    def test_relabeling_invariance(self):
        rng = np.random.default_rng(0)
        true = rng.normal(size=(2, 6))
        est_vectors = rng.normal(size=(3, 6))
        true_labels = rng.integers(0, 2, size=60)
        est_labels = rng.integers(0, 3, size=60)
        base = sm.l1_error(true, {k: est_vectors[k] for k in range(3)},
                           true_labels, est_labels)
        perm = {0: 7, 1: 5, 2: 9}
        relabeled = np.array([perm[k] for k in est_labels])
        permuted = sm.l1_error(true, {perm[k]: est_vectors[k] for k in range(3)},
                               true_labels, relabeled)
        assert base == pytest.approx(permuted)

    def test_unmatched_estimated_cluster_adds_mass(self):
        true = np.array([[1.0, 0.0]])
        est = {0: np.array([1.0, 0.0]), 1: np.array([0.0, 3.0])}
        true_labels = np.zeros(10, dtype=int)
        est_labels = np.array([0] * 9 + [1])
        assert sm.l1_error(true, est, true_labels, est_labels) == pytest.approx(3.0)

    def test_unmatched_true_group_adds_mass(self):
        # single estimated cluster, two true groups: the unmatched group's
        # coefficients were implicitly estimated as zero
        true = np.array([[1.0, 0.0], [0.0, 4.0]])
        est = {0: np.array([1.0, 0.0])}
        true_labels = np.repeat([0, 1], 10)
        est_labels = np.zeros(20, dtype=int)
        assert sm.l1_error(true, est, true_labels, est_labels) == pytest.approx(4.0)

    def test_nonnegative_and_zero_iff_identical(self):
        rng = np.random.default_rng(1)
        true = rng.normal(size=(2, 4))
        est = {0: true[0] + 0.1, 1: true[1].copy()}
        labels = np.repeat([0, 1], 8)
        assert sm.l1_error(true, est, labels, labels) > 0


class TestMatching:
    def test_overlap_maximizing_assignment(self):
        true_labels = np.repeat([0, 1], 10)
        est_labels = np.array([5] * 9 + [7] * 11)
        pairs = dict(match_clusters(true_labels, est_labels))
        assert pairs == {0: 5, 1: 7}

    def test_contingency_counts(self):
        table, va, vb = contingency([0, 0, 1, 1], [3, 3, 3, 4])
        assert table.tolist() == [[2, 0], [1, 1]]
        assert va.tolist() == [0, 1] and vb.tolist() == [3, 4]


class TestNmi:
    def test_identical_partitions(self):
        z = np.array([0, 0, 1, 1, 2])
        assert sm.nmi(z, z) == pytest.approx(1.0)

    def test_label_permutation_invariance(self):
        z = np.array([0, 0, 1, 1, 2, 2, 2])
        sigma = np.array([4, 4, 0, 0, 9, 9, 9])
        assert sm.nmi(z, sigma) == pytest.approx(1.0)

    def test_independent_labels_near_zero(self):
        rng = np.random.default_rng(2)
        a = rng.integers(0, 2, size=10_000)
        b = rng.integers(0, 2, size=10_000)
        assert sm.nmi(a, b) < 0.01

    def test_symmetry(self):
        rng = np.random.default_rng(3)
        a = rng.integers(0, 3, size=200)
        b = rng.integers(0, 4, size=200)
        assert sm.nmi(a, b) == pytest.approx(sm.nmi(b, a))

    def test_single_block_conventions(self):
        ones = np.ones(10, dtype=int)
        split = np.array([0, 1] * 5)
        assert sm.nmi(ones, ones) == 1.0
        assert sm.nmi(ones, split) == 0.0

    def test_bounded_in_unit_interval(self):
        rng = np.random.default_rng(4)
        for _ in range(20):
            a = rng.integers(0, 5, size=50)
            b = rng.integers(0, 5, size=50)
            assert 0.0 <= sm.nmi(a, b) <= 1.0


class TestConcordance:
    def test_perfect_ranking(self):
        t = np.array([3.0, 1.0, 2.0])
        risk = np.array([0.1, 0.9, 0.5])  # higher risk, earlier death
        assert sm.concordance_index(t, [1, 1, 1], risk) == 1.0

    def test_all_tied_scores(self):
        assert sm.concordance_index([1.0, 2.0, 3.0], [1, 1, 1], [0.5, 0.5, 0.5]) == 0.5

    def test_three_subject_pair_enumeration(self):
        # hand oracle over pairs (1,2), (1,3), (2,3) with times (1,2,3) and
        # scores (0.2, 0.9, 0.1): only (1,2) is discordant
        c = sm.concordance_index([1.0, 2.0, 3.0], [1, 1, 1], [0.2, 0.9, 0.1])
        assert c == pytest.approx(2 / 3)

    def test_matches_bruteforce_with_censoring(self):
        rng = np.random.default_rng(5)
        n = 40
        t = rng.exponential(size=n) + 0.01
        d = rng.integers(0, 2, size=n)
        r = rng.normal(size=n)
        conc = comp = 0.0
        for i in range(n):
            for j in range(n):
                if t[i] < t[j] and d[i] == 1:
                    comp += 1
                    if r[i] > r[j]:
                        conc += 1
                    elif r[i] == r[j]:
                        conc += 0.5
        assert sm.concordance_index(t, d, r) == pytest.approx(conc / comp)

    def test_monotone_transform_invariance(self):
        rng = np.random.default_rng(6)
        t = rng.exponential(size=30) + 0.01
        d = rng.integers(0, 2, size=30)
        r = rng.normal(size=30)
        assert sm.concordance_index(t, d, r) == pytest.approx(
            sm.concordance_index(t, d, np.exp(r)))

    def test_no_comparable_pairs_is_none(self):
        assert sm.concordance_index([1.0, 1.0], [1, 1], [0.2, 0.4]) is None
        assert sm.concordance_index([1.0, 2.0], [0, 0], [0.2, 0.4]) is None
