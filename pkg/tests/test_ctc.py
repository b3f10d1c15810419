"""CTC loss, gradient, and feasibility tests against independent oracles."""

import itertools

import numpy as np
import pytest

from uedkit import ctc
from uedkit.errors import InfeasibleTargetError, ValidationError


def uniform_logits(T, V):
    return np.zeros((T, V), dtype=np.float64)


class TestMinFrames:
    def test_empty(self):
        assert ctc.min_frames([]) == 0

    def test_no_repeats(self):
        assert ctc.min_frames([0, 1, 2]) == 3

    def test_adjacent_repeat_needs_separator(self):
        # a,a requires a blank between: 3 frames
        assert ctc.min_frames([4, 4]) == 3

    def test_mixed(self):
        assert ctc.min_frames([1, 1, 2, 2, 2]) == 5 + 3


class TestFeasibility:
    def test_repeat_too_short_raises(self):
        lg = uniform_logits(2, 3)
        with pytest.raises(InfeasibleTargetError):
            ctc.ctc_loss(lg, [1, 1])

    def test_too_many_labels_raises(self):
        lg = uniform_logits(2, 4)
        with pytest.raises(InfeasibleTargetError):
            ctc.ctc_loss(lg, [0, 1, 2])

    def test_boundary_is_feasible(self):
        lg = uniform_logits(3, 3)
        loss = ctc.ctc_loss(lg, [1, 1])
        assert np.isfinite(loss)

    def test_blank_in_target_rejected(self):
        lg = uniform_logits(3, 3)
        with pytest.raises(ValidationError):
            ctc.ctc_loss(lg, [0, 2])  # 2 is the blank index for V=3

    def test_negative_label_rejected(self):
        lg = uniform_logits(3, 3)
        with pytest.raises(ValidationError):
            ctc.ctc_loss(lg, [-1])


class TestClosedFormValues:
    def test_single_frame_single_label(self):
        # T=1, target=[a]: only path is "a", loss = -log softmax(a)
        rng = np.random.default_rng(11)
        lg = rng.normal(size=(1, 4))
        p = np.exp(lg[0]) / np.exp(lg[0]).sum()
        assert ctc.ctc_loss(lg, [2]) == pytest.approx(-np.log(p[2]), abs=1e-12)

    def test_two_frames_one_label_three_paths(self):
        # paths aa, a-, -a
        rng = np.random.default_rng(12)
        lg = rng.normal(size=(2, 3))
        p = np.exp(lg) / np.exp(lg).sum(axis=1, keepdims=True)
        a, b = 0, 2  # label, blank
        total = p[0, a] * p[1, a] + p[0, a] * p[1, b] + p[0, b] * p[1, a]
        assert ctc.ctc_loss(lg, [a]) == pytest.approx(-np.log(total), rel=1e-12)

    def test_uniform_two_frames(self):
        # 3 classes incl. blank, uniform: each path has prob 1/9, 3 paths
        lg = uniform_logits(2, 3)
        assert ctc.ctc_loss(lg, [0]) == pytest.approx(-np.log(3.0 / 9.0), abs=1e-12)

    def test_uniform_empty_target(self):
        # only the all-blank path survives
        lg = uniform_logits(2, 3)
        assert ctc.ctc_loss(lg, []) == pytest.approx(-np.log(1.0 / 9.0), abs=1e-12)

    def test_empty_target_closed_form_random(self):
        rng = np.random.default_rng(13)
        lg = rng.normal(size=(4, 5)) * 2.0
        logp = lg - np.log(np.exp(lg).sum(axis=1, keepdims=True))
        expected = -logp[:, -1].sum()
        assert ctc.ctc_loss(lg, []) == pytest.approx(expected, rel=1e-12)


class TestBruteForceAgreement:
    def test_random_instances(self):
        rng = np.random.default_rng(101)
        for _ in range(200):
            T = int(rng.integers(1, 6))
            K = int(rng.integers(1, 4))
            lg = rng.normal(size=(T, K + 1)) * 2.0
            L = int(rng.integers(0, T + 1))
            target = rng.integers(0, K, size=L).tolist()
            if ctc.min_frames(target) > T:
                with pytest.raises(InfeasibleTargetError):
                    ctc.ctc_loss(lg, target)
                continue
            got = ctc.ctc_loss(lg, target)
            ref = ctc.ctc_brute_force(lg, target)
            assert got == pytest.approx(ref, abs=1e-9)

    def test_extreme_logits_no_nan(self):
        rng = np.random.default_rng(102)
        for _ in range(50):
            T = int(rng.integers(1, 8))
            K = int(rng.integers(1, 5))
            lg = rng.normal(size=(T, K + 1)) * 40.0
            target = rng.integers(0, K, size=int(rng.integers(0, T + 1)))
            if ctc.min_frames(target) > T:
                continue
            loss, grad = ctc.ctc_grad(lg, target)
            assert np.isfinite(loss)
            assert np.all(np.isfinite(grad))


class TestTotalProbability:
    @staticmethod
    def feasible_targets(K, T):
        outs = [()]
        for L in range(1, T + 1):
            for seq in itertools.product(range(K), repeat=L):
                if ctc.min_frames(np.asarray(seq)) <= T:
                    outs.append(seq)
        return outs

    def test_partition_sums_to_one(self):
        # every alignment path collapses to exactly one target sequence,
        # so the losses over all feasible targets form a partition
        rng = np.random.default_rng(103)
        for _ in range(20):
            T = int(rng.integers(1, 5))
            K = int(rng.integers(1, 4))
            lg = rng.normal(size=(T, K + 1)) * 1.5
            total = sum(
                np.exp(-ctc.ctc_loss(lg, list(t)))
                for t in self.feasible_targets(K, T)
            )
            assert total == pytest.approx(1.0, abs=1e-6)

    def test_probabilities_in_unit_interval(self):
        rng = np.random.default_rng(104)
        lg = rng.normal(size=(4, 4))
        for t in self.feasible_targets(3, 4):
            p = np.exp(-ctc.ctc_loss(lg, list(t)))
            assert 0.0 < p <= 1.0

    def test_repeat_targets_carry_mass(self):
        # with T>=3 the path (0, blank, 0) collapses to [0,0], so targets
        # with adjacent repeats hold probability the dedup subset misses
        lg = uniform_logits(4, 4)
        dedup = [
            t for t in self.feasible_targets(3, 4)
            if all(t[i] != t[i + 1] for i in range(len(t) - 1))
        ]
        sub = sum(np.exp(-ctc.ctc_loss(lg, list(t))) for t in dedup)
        assert sub < 1.0 - 1e-3


class TestGradient:
    def test_finite_differences(self):
        rng = np.random.default_rng(105)
        checked = 0
        while checked < 60:
            T = int(rng.integers(1, 6))
            K = int(rng.integers(1, 4))
            lg = rng.normal(size=(T, K + 1)) * 2.0
            target = rng.integers(0, K, size=int(rng.integers(0, T + 1)))
            if ctc.min_frames(target) > T:
                continue
            _, grad = ctc.ctc_grad(lg, target)
            eps = 1e-4
            for _ in range(3):
                t = int(rng.integers(0, T))
                v = int(rng.integers(0, K + 1))
                hi = lg.copy(); hi[t, v] += eps
                lo = lg.copy(); lo[t, v] -= eps
                num = (ctc.ctc_loss(hi, target) - ctc.ctc_loss(lo, target)) / (2 * eps)
                assert grad[t, v] == pytest.approx(num, abs=1e-5)
            checked += 1

    def test_rows_sum_to_zero(self):
        # grad = softmax - gamma, both rows sum to 1
        rng = np.random.default_rng(106)
        for _ in range(40):
            T = int(rng.integers(1, 7))
            K = int(rng.integers(1, 5))
            lg = rng.normal(size=(T, K + 1)) * 3.0
            target = rng.integers(0, K, size=int(rng.integers(0, T + 1)))
            if ctc.min_frames(target) > T:
                continue
            _, grad = ctc.ctc_grad(lg, target)
            assert np.abs(grad.sum(axis=1)).max() < 1e-9

    def test_single_frame_closed_form(self):
        # T=1, target=[a]: grad = softmax - onehot(a)
        rng = np.random.default_rng(107)
        lg = rng.normal(size=(1, 5))
        _, grad = ctc.ctc_grad(lg, [3])
        p = np.exp(lg) / np.exp(lg).sum()
        expected = p.copy()
        expected[0, 3] -= 1.0
        np.testing.assert_allclose(grad, expected, atol=1e-12)


class TestCollapse:
    def test_merges_repeats_then_drops_blanks(self):
        # (0, blank, 0) keeps both zeros: blank separates the runs
        assert ctc.collapse_path([0, 3, 0], blank=3) == [0, 0]

    def test_plain_run(self):
        assert ctc.collapse_path([1, 1, 2, 2, 2, 3], blank=4) == [1, 2, 3]

    def test_all_blank(self):
        assert ctc.collapse_path([2, 2, 2], blank=2) == []

    def test_empty(self):
        assert ctc.collapse_path([], blank=0) == []


class TestValidation:
    def test_bad_shape(self):
        with pytest.raises(ValidationError):
            ctc.ctc_loss(np.zeros(5), [0])

    def test_single_column_rejected(self):
        # need at least one real label class plus blank
        with pytest.raises(ValidationError):
            ctc.ctc_loss(np.zeros((3, 1)), [])

    def test_nonfinite_logits_rejected(self):
        lg = np.zeros((2, 3))
        lg[0, 0] = np.nan
        with pytest.raises(ValidationError):
            ctc.ctc_loss(lg, [0])
