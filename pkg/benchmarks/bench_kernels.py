"""Compare the numba and numpy HMM kernels on a range of sizes.

Run with ``python benchmarks/bench_kernels.py``.  Each kernel is checked for
agreement between backends before timing.
"""
import argparse
import time

import numpy as np

from bparhmm import kernels


def _inputs(T, K, rng):
    log_pi = np.log(rng.dirichlet(np.ones(K), size=K + 1))
    log_em = rng.normal(size=(T, K))
    return log_pi, log_em


def _time(fn, repeats):
    fn()  # warm-up (triggers compilation)
    best = np.inf
    for _ in range(repeats):
        t0 = time.perf_counter()
        fn()
        best = min(best, time.perf_counter() - t0)
    return best


def bench(T, K, repeats, rng):
    log_pi, log_em = _inputs(T, K, rng)
    u = rng.random(T)
    rows = []
    results = {}
    for backend in kernels.available_backends():
        kernels.set_backend(backend)
        beta, _, ll = kernels.backward_messages(log_pi, log_em)
        results[backend] = (ll, kernels.sample_path(log_pi, log_em, beta, u))
        rows.append((backend,
                     _time(lambda: kernels.backward_messages(log_pi, log_em), repeats),
                     _time(lambda: kernels.forward_loglik(log_pi, log_em), repeats),
                     _time(lambda: kernels.sample_path(log_pi, log_em, beta, u), repeats)))
    lls = [v[0] for v in results.values()]
    paths = [v[1] for v in results.values()]
    assert np.allclose(lls, lls[0], rtol=0, atol=1e-9), "backends disagree on log-likelihood"
    assert all(np.array_equal(p, paths[0]) for p in paths), "backends disagree on sampled path"
    return rows


def main():
    p = argparse.ArgumentParser(description=__doc__)
    p.add_argument("--repeats", type=int, default=20)
    args = p.parse_args()
    rng = np.random.default_rng(0)
    initial = kernels.get_backend()
    print(f"{'T':>6} {'K':>3} {'backend':>8} {'backward ms':>12} {'forward ms':>11} {'sample ms':>10}")
    for T in (100, 1000, 10000):
        for K in (3, 10, 30):
            for backend, b, f, s in bench(T, K, args.repeats, rng):
                print(f"{T:6d} {K:3d} {backend:>8} {1e3 * b:12.3f} {1e3 * f:11.3f} {1e3 * s:10.3f}")
    kernels.set_backend(initial)


if __name__ == "__main__":
    main()
