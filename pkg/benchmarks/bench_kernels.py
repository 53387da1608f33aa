"""Compiled vs pure-numpy kernel timings.

    python benchmarks/bench_kernels.py [--repeat 5]

Both backends are imported directly, so the ASRLAB_PURE_PYTHON switch does
not matter here. Each kernel gets identical inputs; the table reports the
best of ``--repeat`` runs and the speed-up.
"""

import argparse
import sys
import timeit

import numpy as np

from asrlab import _fallback

try:
    from asrlab import _kernels
except ImportError:
    _kernels = None


def _cases(rng):
    K, D, N = 64, 156, 800
    W = rng.normal(size=(K, D))
    X = rng.normal(size=(N, D))
    side = int(np.sqrt(K))
    grid = np.array([(i, j) for i in range(side) for j in range(side)], dtype=np.float64)
    d2 = ((grid[:, None] - grid[None]) ** 2).sum(-1)
    order = rng.permutation(N).astype(np.intp)

    H, V = 64, 20
    Xm = rng.random((N, K))
    labels = rng.integers(0, V, N).astype(np.intp)
    mlp = [rng.normal(0, 0.1, (H, K)), np.zeros(H), rng.normal(0, 0.1, (V, H)), np.zeros(V)]

    T = 10
    A = rng.dirichlet(np.ones(V), V)
    pi = rng.dirichlet(np.ones(V))
    L = rng.random((T, V)) + 0.01

    return {
        "som_train_epoch": lambda k: k.som_train_epoch(W.copy(), X, order, d2, 0.1, 1.0),
        "mlp_sgd_epoch": lambda k: k.mlp_sgd_epoch(*[p.copy() for p in mlp], Xm, labels, order, 0.01),
        "mlp_forward_rows": lambda k: k.mlp_forward_rows(*mlp, Xm),
        "viterbi_log x200": lambda k: [k.viterbi_log(np.log(pi), np.log(A), np.log(L)) for _ in range(200)],
        "forward_scaled x200": lambda k: [k.forward_scaled(pi, A, L) for _ in range(200)],
    }


def main(argv=None):
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--repeat", type=int, default=5)
    args = ap.parse_args(argv)
    if _kernels is None:
        print("compiled backend not built; run `pip install -e . --no-build-isolation` first", file=sys.stderr)
        return 1
    cases = _cases(np.random.default_rng(0))
    print(f"{'kernel':<22}{'compiled ms':>14}{'python ms':>14}{'speed-up':>10}")
    for name, fn in cases.items():
        fast = min(timeit.repeat(lambda: fn(_kernels), number=1, repeat=args.repeat)) * 1e3
        slow = min(timeit.repeat(lambda: fn(_fallback), number=1, repeat=args.repeat)) * 1e3
        print(f"{name:<22}{fast:>14.2f}{slow:>14.2f}{slow / fast:>9.1f}x")
    return 0


if __name__ == "__main__":
    sys.exit(main())
