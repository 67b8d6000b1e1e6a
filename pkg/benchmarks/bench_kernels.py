"""Time the numba and numpy versions of each inner kernel side by side.

    python3 benchmarks/bench_kernels.py [--repeat 5] [--n 600]

Each kernel is called once untimed (numba compiles on first call, and the
on-disk cache makes later processes fast), then ``--repeat`` times.  The
median wall time per call is reported with the speedup, and outputs of the
two backends are checked for agreement.
"""

import argparse
import statistics
import time

import numpy as np

from mmtwist import kernels


def median_time(fn, repeat):
    fn()
    times = []
    for _ in range(repeat):
        t0 = time.perf_counter()
        fn()
        times.append(time.perf_counter() - t0)
    return statistics.median(times)


def cases(n, rng):
    z = rng.integers(3, size=n)
    B = 0.02 + 0.03 * np.eye(3)
    u = rng.random(kernels.n_uniforms(n, False))
    yield (
        f"bernoulli_layer n={n}",
        lambda: kernels.bernoulli_layer_numpy(z, B, u, False),
        lambda: kernels.bernoulli_layer_numba(z, B, u, False),
    )

    pts = np.vstack([rng.normal(c, 0.3, size=(n // 4, 6)) for c in range(4)])
    c0 = pts[rng.choice(len(pts), 4, replace=False)].copy()
    yield (
        f"lloyd {len(pts)}x6 k=4",
        lambda: kernels.lloyd_numpy(pts, c0.copy(), 100, 1e-8),
        lambda: kernels.lloyd_numba(pts, c0.copy(), 100, 1e-8),
    )

    W = np.repeat(np.eye(3), 40, axis=0)[rng.permutation(120)] + rng.normal(0, 0.01, (120, 3))
    yield (
        "threshold_scan 120x3",
        lambda: kernels.threshold_scan_numpy(W, 0.5),
        lambda: kernels.threshold_scan_numba(W, 0.5),
    )


def same(a, b):
    if isinstance(a, tuple):
        return all(same(x, y) for x, y in zip(a, b))
    if isinstance(a, np.ndarray):
        return a.shape == b.shape and np.allclose(a, b, rtol=1e-12, atol=1e-12)
    return a == b


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--repeat", type=int, default=5)
    ap.add_argument("--n", type=int, default=600)
    ap.add_argument("--seed", type=int, default=0)
    args = ap.parse_args()
    if not kernels.HAVE_NUMBA:
        raise SystemExit("numba is not installed; nothing to compare")

    print(f"{'kernel':28s} {'numpy ms':>10s} {'numba ms':>10s} {'speedup':>8s}  agree")
    for name, np_fn, nb_fn in cases(args.n, np.random.default_rng(args.seed)):
        t_np = median_time(np_fn, args.repeat)
        t_nb = median_time(nb_fn, args.repeat)
        agree = same(np_fn(), nb_fn())
        print(f"{name:28s} {1e3 * t_np:10.3f} {1e3 * t_nb:10.3f} {t_np / t_nb:8.1f}x  {agree}")


if __name__ == "__main__":
    main()
