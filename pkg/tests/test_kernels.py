"""Kernel dispatch and Levenshtein tests.

The native extension (when built) must agree bit-for-bit in structure with
the pure numpy path, since both use the same association order.
"""

import functools

import numpy as np
import pytest

from uedkit import kernels


@functools.lru_cache(maxsize=None)
def _lev_recursive(a, b):
    if not a:
        return len(b)
    if not b:
        return len(a)
    cost = 0 if a[-1] == b[-1] else 1
    return min(
        _lev_recursive(a[:-1], b) + 1,
        _lev_recursive(a, b[:-1]) + 1,
        _lev_recursive(a[:-1], b[:-1]) + cost,
    )


class TestLevenshtein:
    def test_known_values(self):
        assert kernels.levenshtein_kernel([], []) == 0
        assert kernels.levenshtein_kernel([1, 2, 3], [1, 2, 3]) == 0
        assert kernels.levenshtein_kernel([1, 2, 3], []) == 3
        assert kernels.levenshtein_kernel([], [7]) == 1
        assert kernels.levenshtein_kernel([1, 2, 3], [1, 3]) == 1
        assert kernels.levenshtein_kernel([1, 2], [2, 1]) == 2
        assert kernels.levenshtein_kernel([0, 1, 2, 3], [0, 9, 2, 3]) == 1

    def test_matches_recursive_oracle(self):
        rng = np.random.default_rng(21)
        for _ in range(300):
            n = int(rng.integers(0, 9))
            m = int(rng.integers(0, 9))
            a = tuple(int(v) for v in rng.integers(0, 4, size=n))
            b = tuple(int(v) for v in rng.integers(0, 4, size=m))
            assert kernels.levenshtein_kernel(list(a), list(b)) == _lev_recursive(a, b)

    def test_symmetry(self):
        rng = np.random.default_rng(22)
        for _ in range(100):
            a = rng.integers(0, 5, size=int(rng.integers(0, 20)))
            b = rng.integers(0, 5, size=int(rng.integers(0, 20)))
            assert kernels.levenshtein_kernel(a, b) == kernels.levenshtein_kernel(b, a)

    def test_triangle_inequality(self):
        rng = np.random.default_rng(23)
        for _ in range(100):
            a = rng.integers(0, 4, size=int(rng.integers(0, 12)))
            b = rng.integers(0, 4, size=int(rng.integers(0, 12)))
            c = rng.integers(0, 4, size=int(rng.integers(0, 12)))
            ab = kernels.levenshtein_kernel(a, b)
            bc = kernels.levenshtein_kernel(b, c)
            ac = kernels.levenshtein_kernel(a, c)
            assert ac <= ab + bc

    def test_bounded_by_longer_length(self):
        rng = np.random.default_rng(24)
        for _ in range(100):
            a = rng.integers(0, 3, size=int(rng.integers(0, 15)))
            b = rng.integers(0, 3, size=int(rng.integers(0, 15)))
            d = kernels.levenshtein_kernel(a, b)
            assert abs(len(a) - len(b)) <= d <= max(len(a), len(b))

    def test_long_sequences(self):
        rng = np.random.default_rng(25)
        a = rng.integers(0, 50, size=400)
        b = a.copy()
        # 10 substitutions at distinct positions with fresh symbols
        idx = rng.choice(400, size=10, replace=False)
        b[idx] = 100 + np.arange(10)
        assert kernels.levenshtein_kernel(a, b) == 10


class TestDispatch:
    def test_backend_reported(self):
        assert kernels.BACKEND in ("native", "pure")

    def test_pure_functions_always_available(self):
        lg = np.log(np.full((3, 3), 1.0 / 3.0))
        loss, gamma = kernels.ctc_forward_backward_py(lg, np.array([0], dtype=np.int64), 2)
        assert np.isfinite(loss)
        assert gamma.shape == (3, 3)

    @pytest.mark.skipif(kernels.BACKEND != "native", reason="extension not built")
    def test_native_matches_pure_ctc(self):
        from uedkit import _speedups

        rng = np.random.default_rng(31)
        for _ in range(100):
            T = int(rng.integers(1, 12))
            K = int(rng.integers(1, 6))
            lg = rng.normal(size=(T, K + 1)) * 3.0
            logp = lg - np.log(np.exp(lg).sum(axis=1, keepdims=True))
            L = int(rng.integers(0, T + 1))
            target = rng.integers(0, K, size=L).astype(np.int64)
            reps = int(np.sum(target[1:] == target[:-1])) if L > 1 else 0
            if L + reps > T:
                continue
            l_py, g_py = kernels.ctc_forward_backward_py(logp, target, K)
            l_nat, g_nat = _speedups.ctc_forward_backward(logp, target, K)
            assert l_nat == pytest.approx(l_py, abs=1e-12)
            np.testing.assert_allclose(g_nat, g_py, atol=1e-12)

    @pytest.mark.skipif(kernels.BACKEND != "native", reason="extension not built")
    def test_native_matches_pure_forward(self):
        from uedkit import _speedups

        rng = np.random.default_rng(32)
        for _ in range(100):
            T = int(rng.integers(1, 12))
            K = int(rng.integers(1, 6))
            lg = rng.normal(size=(T, K + 1)) * 3.0
            logp = lg - np.log(np.exp(lg).sum(axis=1, keepdims=True))
            L = int(rng.integers(0, T + 1))
            target = rng.integers(0, K, size=L).astype(np.int64)
            reps = int(np.sum(target[1:] == target[:-1])) if L > 1 else 0
            if L + reps > T:
                continue
            assert _speedups.ctc_forward(logp, target, K) == pytest.approx(
                kernels.ctc_forward_py(logp, target, K), abs=1e-12
            )

    @pytest.mark.skipif(kernels.BACKEND != "native", reason="extension not built")
    def test_native_matches_pure_levenshtein(self):
        from uedkit import _speedups

        rng = np.random.default_rng(33)
        for _ in range(200):
            a = rng.integers(0, 6, size=int(rng.integers(0, 40))).astype(np.int64)
            b = rng.integers(0, 6, size=int(rng.integers(0, 40))).astype(np.int64)
            assert _speedups.levenshtein(a, b) == kernels.levenshtein_py(a, b)


class TestLogSpaceSafety:
    def test_neg_inf_sentinel_saturates(self):
        # impossible transitions stay at the sentinel instead of underflowing
        lg = np.full((4, 3), -1e3)
        lg[:, 2] = 0.0  # blank overwhelmingly likely
        logp = lg - np.log(np.exp(lg).sum(axis=1, keepdims=True))
        loss, gamma = kernels.ctc_forward_backward_py(logp, np.array([0, 1], dtype=np.int64), 2)
        assert np.isfinite(loss)
        assert np.all(np.isfinite(gamma))
        assert np.all(gamma >= 0.0)

    def test_gamma_rows_sum_to_one(self):
        rng = np.random.default_rng(34)
        for _ in range(50):
            T = int(rng.integers(1, 8))
            K = int(rng.integers(1, 4))
            lg = rng.normal(size=(T, K + 1)) * 2.0
            logp = lg - np.log(np.exp(lg).sum(axis=1, keepdims=True))
            L = int(rng.integers(0, T + 1))
            target = rng.integers(0, K, size=L).astype(np.int64)
            reps = int(np.sum(target[1:] == target[:-1])) if L > 1 else 0
            if L + reps > T:
                continue
            _, gamma = kernels.ctc_forward_backward_py(logp, target, K)
            np.testing.assert_allclose(gamma.sum(axis=1), 1.0, atol=1e-9)
