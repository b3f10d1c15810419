"""Time the compiled kernels against the pure numpy fallbacks.

Runs each hot kernel on realistic workload shapes with both backends in the
same process and prints a speedup table. Also cross-checks the outputs so a
backend mismatch is caught before any timing is trusted.

Usage: python3 benchmarks/bench_kernels.py [--repeats N] [--seed S]
"""

import argparse
import timeit

import numpy as np

from uedkit.kernels import (
    ctc_forward_backward_py,
    ctc_forward_py,
    levenshtein_py,
    _as_f64,
    _as_i64,
    _native,
)


def make_ctc_instance(rng, T=200, L=40, K=50):
    """Log-prob matrix plus a repeat-free target string, as training sees them."""
    logits = rng.standard_normal((T, K + 1))
    log_probs = logits - np.log(np.exp(logits).sum(axis=1, keepdims=True))
    targets = np.empty(L, dtype=np.int64)
    targets[0] = rng.integers(K)
    for i in range(1, L):
        c = rng.integers(K - 1)
        targets[i] = c if c < targets[i - 1] else c + 1
    return _as_f64(log_probs), _as_i64(targets)


def make_unit_pair(rng, n=150, m=160, K=50):
    return _as_i64(rng.integers(K, size=n)), _as_i64(rng.integers(K, size=m))


def best_time(fn, repeats):
    # best-of timing; per-call cost in seconds
    number = max(1, int(0.05 / max(timeit.timeit(fn, number=3) / 3, 1e-9)))
    return min(timeit.repeat(fn, number=number, repeat=repeats)) / number


def check_parity(lp, tg, blank, a, b):
    loss_n, gamma_n = _native.ctc_forward_backward(lp, tg, blank)
    loss_p, gamma_p = ctc_forward_backward_py(lp, tg, blank)
    assert abs(loss_n - loss_p) < 1e-9, (loss_n, loss_p)
    assert np.max(np.abs(gamma_n - gamma_p)) < 1e-9
    assert abs(_native.ctc_forward(lp, tg, blank) - ctc_forward_py(lp, tg, blank)) < 1e-9
    assert _native.levenshtein(a, b) == levenshtein_py(a, b)


def main():
    parser = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    parser.add_argument("--repeats", type=int, default=5)
    parser.add_argument("--seed", type=int, default=0)
    args = parser.parse_args()

    rng = np.random.default_rng(args.seed)
    lp, tg = make_ctc_instance(rng)
    a, b = make_unit_pair(rng)
    blank = lp.shape[1] - 1

    cases = [
        ("ctc_forward_backward (T=200, L=40, K=50)",
         lambda f: f(lp, tg, blank),
         _native.ctc_forward_backward if _native else None,
         ctc_forward_backward_py),
        ("ctc_forward          (T=200, L=40, K=50)",
         lambda f: f(lp, tg, blank),
         _native.ctc_forward if _native else None,
         ctc_forward_py),
        ("levenshtein          (150 x 160 units)",
         lambda f: f(a, b),
         _native.levenshtein if _native else None,
         levenshtein_py),
    ]

    if _native is None:
        print("native extension not built; timing the pure backend only\n")
    else:
        check_parity(lp, tg, blank, a, b)
        print("backend parity verified (1e-9)\n")

    header = f"{'kernel':44s} {'pure':>10s} {'native':>10s} {'speedup':>9s}"
    print(header)
    print("-" * len(header))
    for name, call, native_fn, pure_fn in cases:
        t_pure = best_time(lambda: call(pure_fn), args.repeats)
        if native_fn is None:
            print(f"{name:44s} {t_pure * 1e3:8.3f}ms {'n/a':>10s} {'n/a':>9s}")
            continue
        t_native = best_time(lambda: call(native_fn), args.repeats)
        print(f"{name:44s} {t_pure * 1e3:8.3f}ms {t_native * 1e3:8.3f}ms "
              f"{t_pure / t_native:8.1f}x")


if __name__ == "__main__":
    main()
