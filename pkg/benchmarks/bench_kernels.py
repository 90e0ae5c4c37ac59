"""Compiled core versus numpy fallback on the hot loops.

    python benchmarks/bench_kernels.py [--repeat 5]

Prints best-of-N wall time per kernel and backend, the speedup, and the max
abs difference between the two backends' outputs.
"""

import argparse
import time

import numpy as np

from ossfield import kernels


def cases(rng):
    a = rng.standard_normal((20000, 3, 3))
    mats = np.ascontiguousarray(np.exp(-np.linspace(0, 30, 64))[:, None, None] * np.eye(2))
    w = np.full(64, 30 / 64)
    x = rng.standard_normal((50000, 2))
    raw2 = np.random.Philox(1).random_raw(400000).reshape(-1, 2)
    raw4 = np.random.Philox(2).random_raw(800000).reshape(-1, 4)
    scales = np.ones(raw4.shape[0])
    return {
        "expm_batch (20000 x 3x3)": lambda: kernels.expm_batch(a),
        "radial_norm_batch (50000 pts)": lambda: kernels.radial_norm_batch(mats, w, x),
        "symmetric_stable_from_raw (2e5)": lambda: kernels.symmetric_stable_from_raw(1.5, raw2),
        "positive_stable_from_raw (2e5)": lambda: kernels.positive_stable_from_raw(0.75, raw2),
        "isotropic_from_raw (2e5, m=2)": lambda: kernels.isotropic_from_raw(
            1.5, 2 ** 0.5, raw4, scales, 2),
    }


def best(fn, repeat):
    out, t = None, np.inf
    for _ in range(repeat):
        t0 = time.perf_counter()
        out = fn()
        t = min(t, time.perf_counter() - t0)
    return t, out


def main(argv=None):
    p = argparse.ArgumentParser()
    p.add_argument("--repeat", type=int, default=5)
    args = p.parse_args(argv)
    if "compiled" not in kernels.available():
        print("compiled core not built; only the python backend is available")
        return 1
    rng = np.random.default_rng(0)
    table = cases(rng)
    print(f"{'kernel':36s} {'compiled s':>11s} {'python s':>11s} {'speedup':>8s} {'max diff':>10s}")
    for name in table:
        res = {}
        for backend in ("compiled", "python"):
            kernels.set_backend(backend)
            res[backend] = best(table[name], args.repeat)
        kernels.set_backend("compiled")
        tc, oc = res["compiled"]
        tp, op = res["python"]
        diff = float(np.max(np.abs(np.asarray(oc) - np.asarray(op))))
        print(f"{name:36s} {tc:11.4f} {tp:11.4f} {tp / tc:8.1f} {diff:10.2e}")
    return 0


if __name__ == "__main__":
    raise SystemExit(main())
