"""Compiled vs pure-Python belief propagation on random loopy networks.

    python benchmarks/bench_bp.py [--sizes 8,32,128] [--repeats 20]
"""

import argparse
import time

import numpy as np

from sarp import kernels
from sarp.inference import BpConfig, PairwiseMarkovNetwork, loopy_bp


def random_network(rng, n, extra):
    edges = [(int(rng.integers(c)), c) for c in range(1, n)]
    present = set(edges)
    while len(edges) < n - 1 + extra:
        i, j = sorted(rng.choice(n, size=2, replace=False).tolist())
        if (i, j) not in present:
            present.add((i, j))
            edges.append((i, j))
    tables = [rng.uniform(size=(2, 2)) + 1e-3 for _ in edges]
    return PairwiseMarkovNetwork(n, edges, tables)


def best_time(fn, repeats):
    best = float("inf")
    for _ in range(repeats):
        t0 = time.perf_counter()
        fn()
        best = min(best, time.perf_counter() - t0)
    return best


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--sizes", default="8,32,128,512")
    ap.add_argument("--repeats", type=int, default=20)
    ap.add_argument("--seed", type=int, default=0)
    args = ap.parse_args()
    if not kernels.HAVE_EXTENSION:
        raise SystemExit("compiled kernel not built; reinstall with Cython available")
    rng = np.random.default_rng(args.seed)
    config = BpConfig(max_iterations=100)
    print(f"{'nodes':>6}{'edges':>7}{'iters':>7}{'cython ms':>12}{'python ms':>12}{'speedup':>9}")
    for n in (int(s) for s in args.sizes.split(",")):
        net = random_network(rng, n, extra=max(1, n // 4))
        evidence = {0: 1}
        net.compiled()  # message layout is shared; time the sweeps only
        fast = best_time(lambda: loopy_bp(net, evidence, config, "cython"), args.repeats)
        slow = best_time(lambda: loopy_bp(net, evidence, config, "python"), max(1, args.repeats // 4))
        a = loopy_bp(net, evidence, config, "cython")
        b = loopy_bp(net, evidence, config, "python")
        assert np.allclose(a.p1, b.p1, atol=1e-12)
        print(f"{n:>6}{len(net.edges):>7}{a.iterations:>7}{fast * 1e3:>12.3f}{slow * 1e3:>12.3f}"
              f"{slow / fast:>9.1f}")


if __name__ == "__main__":
    main()
