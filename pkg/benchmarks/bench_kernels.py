"""Time the numba and numpy backends of the hot kernels.

Run ``python3 benchmarks/bench_kernels.py``; both backends are timed in the
same process via ``set_backend`` (compile time is excluded by a warm-up call).
"""
import argparse
import time

import numpy as np

from prosodic_codes import _accel, kernels


def _time(fn, repeats):
    fn()  # warm-up / jit compile
    best = np.inf
    for _ in range(repeats):
        t0 = time.perf_counter()
        fn()
        best = min(best, time.perf_counter() - t0)
    return best


def cases(rng):
    T, B, H = 300, 16, 64
    xproj = rng.standard_normal((T, B, 3 * H)) * 0.3
    U = rng.standard_normal((H, 3 * H)) * 0.1
    h0 = np.zeros((B, H))
    hs, zs, rs, ns = kernels.gru_forward(xproj, U, h0)
    dh = rng.standard_normal(hs.shape)

    n = 2000
    band = np.vstack([np.full(n, 4.0), np.full(n, -1.0), np.full(n, 0.5)])
    rhs = rng.standard_normal(n)

    X = rng.standard_normal((5000, 16))
    C = rng.standard_normal((20, 16))
    return {
        f"gru_forward T={T} B={B} H={H}": lambda: kernels.gru_forward(xproj, U, h0),
        f"gru_backward T={T} B={B} H={H}": lambda: kernels.gru_backward(dh, U, h0, hs, zs, rs, ns),
        f"banded_cholesky_solve T={n}": lambda: kernels.banded_cholesky_solve(band, rhs),
        "nearest_centroid N=5000 K=20 D=16": lambda: kernels.nearest_centroid(X, C),
    }


def main():
    ap = argparse.ArgumentParser()
    ap.add_argument("--repeats", type=int, default=5)
    args = ap.parse_args()
    rng = np.random.default_rng(0)
    backends = ["numpy"] + (["numba"] if _accel.NUMBA_AVAILABLE else [])
    results = {}
    for backend in backends:
        prev = _accel.set_backend(backend)
        try:
            for name, fn in cases(rng).items():
                results.setdefault(name, {})[backend] = _time(fn, args.repeats)
        finally:
            _accel.set_backend(prev)
    print(f"{'kernel':40s} " + " ".join(f"{b:>10s}" for b in backends) + "    speedup")
    for name, row in results.items():
        cols = " ".join(f"{row[b] * 1e3:9.2f}ms" for b in backends)
        speed = f"{row['numpy'] / row['numba']:8.1f}x" if "numba" in row else ""
        print(f"{name:40s} {cols} {speed}")


if __name__ == "__main__":
    main()
