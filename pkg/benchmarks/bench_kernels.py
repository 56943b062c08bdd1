"""Time the numba kernels against their pure-numpy fallbacks.

    python benchmarks/bench_kernels.py [--users 2000 --items 1500 --repeat 3]

Numba compile time is excluded by a warm-up call on a tiny input. Inputs are
synthetic with a long-tailed item popularity so that L-core peeling and
SLIM have realistic work to do.
"""

import argparse
import statistics
import time

import numpy as np
import scipy.sparse as sp

from recsys_evalkit import kernels


def synthetic(n_users, n_items, density, seed=0):
    g = np.random.default_rng(seed)
    pop = 1.0 / np.arange(1, n_items + 1) ** 0.8
    pop *= density * n_items / pop.sum()
    X = g.random((n_users, n_items)) < np.minimum(pop, 1.0)[None, :]
    return sp.csr_matrix(X.astype(np.float64))


def timed(fn, repeat):
    out = []
    for _ in range(repeat):
        t = time.perf_counter()
        fn()
        out.append(time.perf_counter() - t)
    return statistics.median(out)


def cases(X, n_slim_cols):
    n_users, n_items = X.shape
    G = (X.T @ X).toarray()
    g = np.random.default_rng(1)
    scores = g.normal(size=(512, n_items))
    rel_indptr = np.arange(513, dtype=np.int64)
    rel = g.integers(0, n_items, 512)
    masks = [np.setdiff1d(X.indices[X.indptr[u] : X.indptr[u + 1]], rel[u : u + 1]) for u in range(512)]
    mask_indptr = np.cumsum([0] + [len(m) for m in masks]).astype(np.int64)
    mask_indices = np.concatenate(masks).astype(np.int64)
    Y = g.normal(size=(n_items, 32))
    cols = np.linspace(0, n_items - 1, n_slim_cols).astype(int)
    return {
        "lcore (L=5)": lambda b: kernels.lcore_masks(X.indptr, X.indices, n_items, 5, backend=b),
        "ranks (512 users)": lambda b: kernels.relevant_ranks(scores, mask_indptr, mask_indices, rel_indptr, rel, backend=b),
        f"slim ({n_slim_cols} columns)": lambda b: [kernels.slim_column(G, j, 1.0, 1.0, backend=b) for j in cols],
        "als half-sweep (f=32)": lambda b: kernels.als_half_sweep(X.indptr, X.indices, Y, 1.0, backend=b),
    }


def main(argv=None):
    p = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    p.add_argument("--users", type=int, default=2000)
    p.add_argument("--items", type=int, default=1500)
    p.add_argument("--density", type=float, default=0.03)
    p.add_argument("--slim-columns", type=int, default=50)
    p.add_argument("--repeat", type=int, default=3)
    args = p.parse_args(argv)

    warm = cases(synthetic(600, 40, 0.3, seed=2), 2)
    for fn in warm.values():
        fn("numba")

    X = synthetic(args.users, args.items, args.density)
    print(f"{args.users} users x {args.items} items, {X.nnz} interactions, median of {args.repeat}")
    print(f"{'kernel':<24}{'numpy s':>10}{'numba s':>10}{'speedup':>9}")
    for name, fn in cases(X, args.slim_columns).items():
        t_np = timed(lambda: fn("numpy"), args.repeat)
        t_nb = timed(lambda: fn("numba"), args.repeat)
        print(f"{name:<24}{t_np:>10.4f}{t_nb:>10.4f}{t_np / t_nb:>8.1f}x")


if __name__ == "__main__":
    main()
