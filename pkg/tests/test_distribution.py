import numpy as np
import pytest

from cald import (
    BoundingBox,
    ClassDistribution,
    ConfigError,
    EmptyPoolError,
    InsufficientCandidatesError,
    InvalidDistributionError,
    PredictionRecord,
    count_distribution,
    labeled_pool_distribution,
    mutual_information,
    select_by_mutual_information,
    softmax,
    unlabeled_image_distribution,
)
from oracles import greedy_selection_loop, js_divergence_sum, softmax_direct


def rec(scores, x0=0.0):
    return PredictionRecord(
        box=BoundingBox(x0, 0, x0 + 10, 10), scores=np.array(scores, dtype=float)
    )


class TestSoftmax:
    def test_equal_inputs_are_uniform(self):
        np.testing.assert_allclose(softmax(np.array([3.0, 3.0, 3.0])), np.full(3, 1 / 3))

    def test_single_count_spot_value(self):
        # e/(e+1) = 0.731058..., frozen from the direct-exp oracle
        want = softmax_direct([1.0, 0.0])
        assert want[0] == pytest.approx(0.7311, abs=1e-4)
        np.testing.assert_allclose(softmax(np.array([1.0, 0.0])), want, atol=1e-12)

    def test_shift_invariance(self, rng):
        for _ in range(100):
            v = rng.uniform(-5, 5, size=6)
            shift = float(rng.uniform(-100, 100))
            np.testing.assert_allclose(softmax(v), softmax(v + shift), atol=1e-12)


class TestLabeledPoolDistribution:
    def test_equal_counts(self):
        out = labeled_pool_distribution(np.array([3, 3, 3]))
        np.testing.assert_allclose(out.probs, np.full(3, 1 / 3), atol=1e-12)

    def test_spot_value(self):
        out = labeled_pool_distribution(np.array([1, 0]))
        np.testing.assert_allclose(out.probs, softmax_direct([1.0, 0.0]), atol=1e-12)

    def test_slightly_peaked(self):
        out = labeled_pool_distribution(np.array([10, 10, 11]))
        assert int(np.argmax(out.probs)) == 2
        assert np.all(np.diff(out.probs) >= 0)
        np.testing.assert_allclose(out.probs, softmax_direct([10, 10, 11]), atol=1e-12)

    def test_normalized_counts_mode(self):
        raw = labeled_pool_distribution(np.array([100, 50]), mode="raw_counts")
        norm = labeled_pool_distribution(np.array([100, 50]), mode="normalized_counts")
        # raw softmax saturates on large gaps; normalized stays soft
        assert raw.probs[0] > 0.999
        assert norm.probs[0] < 0.6
        np.testing.assert_allclose(norm.probs, softmax_direct([2 / 3, 1 / 3]), atol=1e-12)

    def test_errors(self):
        with pytest.raises(EmptyPoolError):
            labeled_pool_distribution(np.zeros(4, dtype=int))
        with pytest.raises(ValueError):
            labeled_pool_distribution(np.array([3, -1]))
        with pytest.raises(ConfigError):
            labeled_pool_distribution(np.array([1, 2]), mode="log_counts")


class TestUnlabeledImageDistribution:
    def test_no_predictions_is_uniform(self):
        out = unlabeled_image_distribution([], [], num_classes=4)
        np.testing.assert_allclose(out.probs, np.full(4, 0.25), atol=1e-12)

    def test_worked_example(self):
        # original peak (0.9, 0.1) plus augmented peak (0.7, 0.3):
        # softmax(1.6, 0.4), frozen from the direct-exp oracle
        out = unlabeled_image_distribution(
            [rec([0.9, 0.1])], [[rec([0.7, 0.3])]], num_classes=2
        )
        want = softmax_direct([1.6, 0.4])
        assert want[0] == pytest.approx(0.7685, abs=1e-4)
        np.testing.assert_allclose(out.probs, want, atol=1e-12)

    def test_duplicates_do_not_change_peaks(self):
        one = unlabeled_image_distribution([rec([0.9, 0.1])], [[rec([0.7, 0.3])]], 2)
        dup = unlabeled_image_distribution(
            [rec([0.9, 0.1]), rec([0.9, 0.1], x0=30.0)],
            [[rec([0.7, 0.3])], [rec([0.7, 0.3], x0=30.0)]],
            2,
        )
        np.testing.assert_allclose(one.probs, dup.probs, atol=1e-12)

    def test_order_invariance(self, rng):
        originals = [rec(rng.uniform(0, 1, 3)) for _ in range(4)]
        augmented = [[rec(rng.uniform(0, 1, 3)) for _ in range(3)] for _ in range(2)]
        a = unlabeled_image_distribution(originals, augmented, 3)
        b = unlabeled_image_distribution(
            list(reversed(originals)), [list(reversed(g)) for g in reversed(augmented)], 3
        )
        np.testing.assert_allclose(a.probs, b.probs, atol=1e-12)

    def test_outputs_are_valid_distributions(self, rng):
        for _ in range(50):
            originals = [rec(rng.uniform(0, 1, 5)) for _ in range(int(rng.integers(0, 4)))]
            augmented = [
                [rec(rng.uniform(0, 1, 5)) for _ in range(int(rng.integers(0, 4)))]
                for _ in range(int(rng.integers(0, 3)))
            ]
            out = unlabeled_image_distribution(originals, augmented, 5)
            assert abs(out.probs.sum() - 1.0) < 1e-9
            assert np.all(out.probs >= 0)


class TestMutualInformation:
    def test_identical_distributions(self):
        d = ClassDistribution(np.array([0.3, 0.7]))
        assert mutual_information(d, d) == 0.0

    def test_disjoint_one_hots(self):
        a = ClassDistribution(np.array([1.0, 0.0]))
        b = ClassDistribution(np.array([0.0, 1.0]))
        assert mutual_information(a, b) == 1.0

    def test_uniform_vs_peaked_oracle_value(self):
        # direct-summation oracle value: 0.0411676726...
        pool = ClassDistribution(softmax(np.array([1.0, 0.0])))
        uniform = ClassDistribution(np.array([0.5, 0.5]))
        want = js_divergence_sum(uniform.probs, pool.probs)
        assert want == pytest.approx(0.041168, abs=1e-6)
        assert mutual_information(uniform, pool) == pytest.approx(want, abs=1e-12)

    def test_invalid_distribution_rejected(self):
        with pytest.raises(InvalidDistributionError):
            ClassDistribution(np.array([0.5, 0.6]))


def random_dist(rng, n):
    v = rng.uniform(0.01, 1, n)
    return ClassDistribution(v / v.sum())


class TestSelectByMutualInformation:
    def test_ranked_example(self):
        pool_dist = ClassDistribution(np.array([1.0, 0.0]))
        images = [
            ("a", ClassDistribution(np.array([0.9, 0.1]))),
            ("b", ClassDistribution(np.array([0.5, 0.5]))),
            ("c", ClassDistribution(np.array([0.7, 0.3]))),
        ]
        # divergence from the pool rises with distance: b > c > a
        assert select_by_mutual_information(images, pool_dist, 2) == ["b", "c"]
        assert select_by_mutual_information(images, pool_dist, 3) == ["b", "c", "a"]

    def test_budget_zero(self):
        assert select_by_mutual_information([], ClassDistribution(np.array([1.0])), 0) == []

    def test_budget_overflow(self):
        with pytest.raises(InsufficientCandidatesError):
            select_by_mutual_information([], ClassDistribution(np.array([1.0])), 1)

    def test_tie_breaks_by_image_id(self):
        pool_dist = ClassDistribution(np.array([0.5, 0.5]))
        same = ClassDistribution(np.array([0.9, 0.1]))
        images = [("z", same), ("a", same), ("m", same)]
        assert select_by_mutual_information(images, pool_dist, 2) == ["a", "m"]

    def test_matches_literal_greedy_loop(self, rng):
        for _ in range(200):
            n = int(rng.integers(1, 51))
            budget = int(rng.integers(0, n + 1))
            k = int(rng.integers(2, 7))
            pool_dist = random_dist(rng, k)
            images = [(f"img_{i:03d}", random_dist(rng, k)) for i in range(n)]
            got = select_by_mutual_information(images, pool_dist, budget)
            want = greedy_selection_loop(images, pool_dist, budget, mutual_information)
            assert got == want
