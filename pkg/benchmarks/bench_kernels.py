#!/usr/bin/env python3
"""Benchmark the contrastive-loss core: compiled kernel vs NumPy fallback.

Times the fused value+gradient computation (the per-step hot loop of
training) across batch sizes, for a supcon-shaped call (positives inside
the denominator) and a reco-shaped call (Bernoulli-masked denominator).

Run:  python benchmarks/bench_kernels.py
"""

import timeit

import numpy as np

from recobench._kernels import fallback

try:
    from recobench._kernels import _core
except ImportError:
    _core = None


def make_case(rng, n_views, with_mask):
    dim = 64
    z = rng.normal(size=(n_views, dim))
    z /= np.linalg.norm(z, axis=1, keepdims=True)
    logits = (z @ z.T) / 0.1
    labels = np.repeat(np.arange(n_views // 2) % 8, 2)
    pos = labels[:, None] == labels[None, :]
    np.fill_diagonal(pos, False)
    if with_mask:
        den = rng.random((n_views, n_views)) < 0.6
        den &= ~pos
        np.fill_diagonal(den, False)
    else:
        den = np.ones((n_views, n_views), dtype=bool)
        np.fill_diagonal(den, False)
    return logits, pos, den


def time_call(impl, case, add_excluded):
    call = lambda: impl.contrastive_core(*case, add_excluded)
    n = max(3, int(2e7 / case[0].size))
    return min(timeit.repeat(call, number=n, repeat=3)) / n


def main():
    rng = np.random.default_rng(0)
    print(f"{'shape':>12} {'case':>8} {'python':>12} {'cython':>12} {'speedup':>9}")
    for n_views in (16, 64, 256, 1024):
        for with_mask, label in ((False, "supcon"), (True, "reco")):
            case = make_case(rng, n_views, with_mask)
            t_py = time_call(fallback, case, with_mask)
            if _core is None:
                print(f"{n_views:>10}^2 {label:>8} {t_py * 1e6:>10.1f}us {'n/a':>12}")
                continue
            t_cy = time_call(_core, case, with_mask)
            v_py = fallback.contrastive_core(*case, with_mask)[0]
            v_cy = _core.contrastive_core(*case, with_mask)[0]
            assert abs(v_py - v_cy) <= 1e-9 * max(1.0, abs(v_py)), "backends disagree"
            print(f"{n_views:>10}^2 {label:>8} {t_py * 1e6:>10.1f}us "
                  f"{t_cy * 1e6:>10.1f}us {t_py / t_cy:>8.1f}x")
    if _core is None:
        print("\ncompiled kernel not built; showing fallback only")


if __name__ == "__main__":
    main()
