"""Compare the compiled kernels against the numpy fallback.

Usage::

    python benchmarks/bench_kernels.py [--repeat 3]

Both backends receive identical inputs; their outputs are checked for
equality before any timing is reported.
"""
import argparse
import time

import numpy as np

from robust_amn import _kernels_py

try:
    from robust_amn import _kernels as _kernels_c
except ImportError:  # pragma: no cover - only when the extension is not built
    _kernels_c = None


def _timeit(fn, repeat):
    best = np.inf
    out = None
    for _ in range(repeat):
        t0 = time.perf_counter()
        out = fn()
        best = min(best, time.perf_counter() - t0)
    return best, out


def rround_case(N=200, m=600, K=2, trials=200, phases=32, seed=0):
    rng = np.random.default_rng(seed)
    ystar = rng.dirichlet(np.ones(K), size=N)
    estar = rng.random(m)
    ks = rng.integers(0, K, size=(trials, phases))
    bs = rng.integers(0, 2, size=(trials, phases))
    betas = 1.0 - rng.random((trials, phases))

    def run(mod):
        labels = np.full((trials, N), -1, dtype=np.int64)
        keep = np.full((trials, m), -1, dtype=np.int8)
        used = mod.rround_batch(ystar, estar, ks, bs, betas, labels, keep)
        return used, labels, keep

    return run


def scan_case(N=9, m=10, q=4, d_del=2, d_add=1, seed=0):
    rng = np.random.default_rng(seed)
    pairs = [(i, j) for i in range(N) for j in range(i + 1, N)]
    pick = rng.choice(len(pairs), m + q, replace=False)
    edges = np.array([pairs[p] for p in pick[:m]], dtype=np.int64)
    nonedges = np.array([pairs[p] for p in pick[m:]], dtype=np.int64)
    node = rng.normal(size=(N, 2))
    edge_w = rng.random(2)
    hat = rng.random(m)

    def run(mod):
        return mod.brute_force_scan(node, edges, edge_w, hat, nonedges, d_del, d_add, -1, 0.5)

    return run


def _same(a, b):
    if isinstance(a, tuple):
        return all(_same(x, y) for x, y in zip(a, b))
    return np.array_equal(np.asarray(a), np.asarray(b))


def main(argv=None):
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--repeat", type=int, default=3)
    args = ap.parse_args(argv)
    if _kernels_c is None:
        print("compiled extension not built; run `python setup.py build_ext --inplace` first")
        return 1
    cases = [("rround_batch N=200 m=600 T=200", rround_case()),
             ("brute_force_scan N=9 m=10 q=4", scan_case())]
    print(f"{'kernel':36s} {'python [s]':>11s} {'cython [s]':>11s} {'speedup':>8s}")
    for name, run in cases:
        tp, op = _timeit(lambda: run(_kernels_py), args.repeat)
        tc, oc = _timeit(lambda: run(_kernels_c), args.repeat)
        if not _same(op, oc):
            raise SystemExit(f"{name}: backends disagree")
        print(f"{name:36s} {tp:11.4f} {tc:11.4f} {tp / tc:7.1f}x")
    return 0


if __name__ == "__main__":
    raise SystemExit(main())
