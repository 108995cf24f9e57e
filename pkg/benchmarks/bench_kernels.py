"""Time the numba kernels against their numpy twins.

    python benchmarks/bench_kernels.py [--repeats 5] [--quick]

Both backends are imported in one process through ``_kernels.BACKENDS``; the
numba functions are warmed up once so compilation is not timed. The
``NGP_DISABLE_NUMBA`` flag only changes which pair the library dispatches to.
"""

import argparse
import time

import numpy as np

from ngp import _kernels
from ngp.data import one_hot

MLP_CASES = [
    # (samples, features, hidden, loss) -- the first row is a typical candidate fit
    (240, 3, 500, _kernels.MSE),
    (300, 5, 500, _kernels.MSE),
    (800, 2, 100, _kernels.MSE),
    (300, 16, 100, _kernels.CROSS_ENTROPY),
    (300, 50, 500, _kernels.MSE),
]
LASSO_CASES = [(300, 100, 0.01), (600, 500, 0.01)]


def _best(fn, repeats):
    times = []
    for _ in range(repeats):
        t0 = time.perf_counter()
        fn()
        times.append(time.perf_counter() - t0)
    return min(times)


def bench_mlp(J, d, h, loss, repeats, epochs=10, batch=32):
    g = np.random.default_rng(0)
    X = g.standard_normal((J, d))
    T = g.standard_normal((J, 1)) if loss == _kernels.MSE else one_hot(g.integers(0, 2, J), 2)
    q = T.shape[1]
    init = [g.uniform(-0.1, 0.1, (d, h)), np.zeros(h), g.uniform(-0.1, 0.1, (h, q)), np.zeros(q)]
    order = np.stack([g.permutation(J) for _ in range(epochs)])
    out = {}
    for name, k in _kernels.BACKENDS.items():
        def run():
            params = [p.copy() for p in init]
            k["train_mlp"](X, T, *params, order, 0.01, 0.9, 1e-4, batch, loss)
        run()
        out[name] = _best(run, repeats)
    return out


def bench_lasso(J, P, lam, repeats):
    g = np.random.default_rng(1)
    X = g.standard_normal((J, P))
    X -= X.mean(axis=0)
    X /= X.std(axis=0)
    t = X[:, :5] @ np.arange(1, 6) + g.standard_normal(J)
    t -= t.mean()
    out = {}
    for name, k in _kernels.BACKENDS.items():
        def run():
            k["lasso_cd"](X, t, np.zeros(P), lam, 1e-7, 10_000)
        run()
        out[name] = _best(run, repeats)
    return out


def main(argv=None):
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--repeats", type=int, default=5)
    ap.add_argument("--quick", action="store_true", help="first case of each kernel only")
    args = ap.parse_args(argv)
    mlp = MLP_CASES[:1] if args.quick else MLP_CASES
    lasso = LASSO_CASES[:1] if args.quick else LASSO_CASES

    print(f"{'kernel':<38} {'numba ms':>10} {'numpy ms':>10} {'speedup':>8}")
    for J, d, h, loss in mlp:
        r = bench_mlp(J, d, h, loss, args.repeats)
        tag = "mse" if loss == _kernels.MSE else "xent"
        label = f"mlp 10 epochs J={J} d={d} h={h} {tag}"
        print(f"{label:<38} {1e3 * r['numba']:>10.2f} {1e3 * r['numpy']:>10.2f} "
              f"{r['numpy'] / r['numba']:>7.2f}x")
    for J, P, lam in lasso:
        r = bench_lasso(J, P, lam, args.repeats)
        label = f"lasso cd J={J} P={P} lambda={lam}"
        print(f"{label:<38} {1e3 * r['numba']:>10.2f} {1e3 * r['numpy']:>10.2f} "
              f"{r['numpy'] / r['numba']:>7.2f}x")
    print(f"library dispatch: {'numba' if _kernels.USE_NUMBA else 'numpy'}")


if __name__ == "__main__":
    main()
