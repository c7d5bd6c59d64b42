"""Time the compiled planning kernels against the numpy fallback.

    python benchmarks/bench_kernels.py [--repeat N]

Prints one line per kernel with the best-of-N wall time of each backend
and the speed-up. Exits with status 1 when the extension is not built.
"""

import argparse
import sys
import timeit

import numpy as np

from ippal import _pykernels as py

try:
    from ippal import _ckernels as ck
except ImportError:
    ck = None


def cases(rng):
    H = W = 128
    h = w = 16
    S = rng.uniform(0, 2, (H, W))
    T = rng.integers(0, 5, (H, W)).astype(float)
    ss, st = py.summed_area(S), py.summed_area(T)

    # path objective: one CMA-ES generation worth of candidate paths
    n, P = 64, 5
    r0 = rng.integers(0, H - h + 1, (n, P))
    c0 = rng.integers(0, W - w + 1, (n, P))
    costs = rng.uniform(1, 10, (n, P))

    # rollout: 8 headings, a long history, 20 steps
    ang = np.arange(8) * np.pi / 4
    dx, dy = 8.0 * np.cos(ang), 8.0 * np.sin(ang)
    hr = rng.integers(0, H - h + 1, 60)
    hc = rng.integers(0, W - w + 1, 60)
    u = rng.random(20)
    roll = (hr, hc, 64.0, 64.0, 200.0, 20, dx, dy, u, (8.0, 120.0, 8.0, 120.0), 1.0, h, w, 2.0, 2.0, 0.5, 256.0)

    ri = rng.integers(0, H - h + 1, 4096)
    ci = rng.integers(0, W - w + 1, 4096)
    return [
        ("rect_sums x4096", lambda m: m.rect_sums(ss, ri, ci, h, w)),
        ("path_objective 64x5", lambda m: m.path_objective(ss, st, r0, c0, costs, h, w, 256.0)),
        ("mcts_rollout 20 steps", lambda m: m.mcts_rollout(ss, st, *roll)),
    ]


def best_time(fn, repeat, number):
    return min(timeit.repeat(fn, repeat=repeat, number=number)) / number


def main(argv=None):
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--repeat", type=int, default=5)
    ap.add_argument("--number", type=int, default=50)
    args = ap.parse_args(argv)
    if ck is None:
        print("compiled extension not built; reinstall with Cython available", file=sys.stderr)
        return 1
    rng = np.random.default_rng(0)
    print(f"{'kernel':24s} {'python [us]':>12s} {'cython [us]':>12s} {'speed-up':>9s}")
    for name, call in cases(rng):
        a, b = call(py), call(ck)
        if not np.allclose(a, b, rtol=1e-10, atol=1e-12):
            print(f"{name}: backends disagree", file=sys.stderr)
            return 1
        tp = best_time(lambda: call(py), args.repeat, args.number)
        tc = best_time(lambda: call(ck), args.repeat, args.number)
        print(f"{name:24s} {tp * 1e6:12.1f} {tc * 1e6:12.1f} {tp / tc:8.1f}x")
    return 0


if __name__ == "__main__":
    sys.exit(main())
