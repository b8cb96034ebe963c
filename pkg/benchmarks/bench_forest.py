"""Compare the compiled and numpy forest kernels on the same training job.

    python3 benchmarks/bench_forest.py --rows 4000 --trees 20

Both backends grow identical trees, so the script also checks that the
predictions agree bit for bit.
"""

import argparse
import time

import numpy as np

from streamqoe.learner import ForestParams, available_backends, fit_forest


def synthetic(rows: int, seed: int):
    rng = np.random.default_rng(seed)
    X = rng.normal(size=(rows, 11))
    y = np.clip(3 + np.tanh(X[:, 0]) - 0.4 * X[:, 1] * X[:, 2] + rng.normal(scale=0.2, size=rows), 1, 5)
    return X, y


def main(argv=None):
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--rows", type=int, default=4000)
    ap.add_argument("--trees", type=int, default=20)
    ap.add_argument("--seed", type=int, default=0)
    args = ap.parse_args(argv)

    X, y = synthetic(args.rows, args.seed)
    Xt, _ = synthetic(1000, args.seed + 1)
    params = ForestParams(n_estimators=args.trees, seed=args.seed)
    results = {}
    for backend in available_backends():
        t0 = time.perf_counter()
        model = fit_forest((X, y), params, backend=backend)
        fit_s = time.perf_counter() - t0
        t0 = time.perf_counter()
        pred = model.predict_raw(Xt, backend)
        pred_s = time.perf_counter() - t0
        results[backend] = (fit_s, pred_s, pred)
        print(f"{backend:7s} fit {fit_s:8.3f} s ({fit_s / args.trees * 1000:7.1f} ms/tree)  "
              f"predict {pred_s * 1000:8.1f} ms")
    if len(results) == 2:
        speedup = results["python"][0] / results["cython"][0]
        same = np.array_equal(results["python"][2], results["cython"][2])
        print(f"fit speedup {speedup:.1f}x; predictions identical: {same}")
    else:
        print("compiled kernel not built; only the numpy fallback was timed")


if __name__ == "__main__":
    main()
