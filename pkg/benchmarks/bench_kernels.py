"""Compare the compiled and numpy kernel backends on boosting hot loops.

Usage: python3 benchmarks/bench_kernels.py [--rows N] [--features F] [--repeat R]
"""

import argparse
import time

import numpy as np

from deepboost_af import boosting, kernels


def best_of(fn, repeat):
    times = []
    for _ in range(repeat):
        t0 = time.perf_counter()
        fn()
        times.append(time.perf_counter() - t0)
    return min(times)


def main(argv=None):
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--rows", type=int, default=4000)
    ap.add_argument("--features", type=int, default=1125)
    ap.add_argument("--repeat", type=int, default=3)
    args = ap.parse_args(argv)

    rng = np.random.default_rng(0)
    X = rng.normal(size=(args.rows, args.features))
    y01 = (X[:, 0] + 0.5 * rng.normal(size=args.rows) > 0).astype(int)
    binning = boosting.build_binning(X, 255)
    binned = binning.transform(X)
    rows = np.arange(args.rows, dtype=np.intp)
    g, h = boosting.logistic_grad_hess(np.zeros(args.rows), y01)
    G, H = kernels.build_histograms(binned, rows, g, h, 255)
    order = np.argsort(X, axis=0, kind="stable").T.copy()
    w = np.full(args.rows, 1.0 / args.rows)
    ypm = 2.0 * y01 - 1.0

    cases = {
        "histograms": lambda be: kernels.build_histograms(binned, rows, g, h, 255, backend=be),
        "split scan": lambda be: kernels.find_best_split(G, H, binning.n_bins, 1.0, 0.0, 1.0, backend=be),
        "stump search": lambda be: kernels.best_stump(X, order, ypm, w, backend=be),
        "gbdt 5 trees": lambda be: boosting.gbdt_train(X, y01, boosting.GBDTParams(trees=5),
                                                        binning=binning, backend=be),
    }
    names = [b for b in ("cython", "python") if b in kernels.BACKENDS]
    print(f"{args.rows} rows x {args.features} features, best of {args.repeat}")
    print(f"{'kernel':<14}" + "".join(f"{n:>12}" for n in names) + ("     speedup" if len(names) == 2 else ""))
    for label, fn in cases.items():
        t = [best_of(lambda: fn(be), args.repeat) for be in names]
        line = f"{label:<14}" + "".join(f"{v * 1e3:>10.2f}ms" for v in t)
        if len(t) == 2:
            line += f"{t[1] / t[0]:>11.1f}x"
        print(line)


if __name__ == "__main__":
    main()
