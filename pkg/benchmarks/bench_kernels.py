"""Time the numba kernels against their numpy twins.

    python benchmarks/bench_kernels.py [--sizes 16 64 256] [--repeat 20]

Each kernel is called once before timing so numba compilation is excluded.
"""

import argparse
import time

import numpy as np

from guidedplace.data import synthetic_netlist
from guidedplace.kernels import _numba, _numpy


def best_of(fn, repeat):
    fn()
    times = []
    for _ in range(repeat):
        t0 = time.perf_counter()
        fn()
        times.append(time.perf_counter() - t0)
    return min(times)


def cases(nl, x):
    a = nl.arrays
    pos = np.ascontiguousarray(a.positions(x))
    sizes = np.ascontiguousarray(a.sizes[: a.n_movable])
    w = np.ones(a.n_nets)
    placed = np.zeros((a.n_movable, 4))
    placed[:, :2] = x
    placed[:, 2:] = sizes
    return {
        "net_hpwl": lambda k: k.net_hpwl(pos, a.half, a.pin_node, a.pin_off, a.net_ptr),
        "hpwl_smooth": lambda k: k.net_hpwl_smooth(pos, a.half, a.pin_node, a.pin_off, a.net_ptr, 0.01),
        "hpwl_grad": lambda k: k.weighted_hpwl_grad(pos, a.half, a.pin_node, a.pin_off, a.net_ptr,
                                                    0.01, w, a.n_movable),
        "overlap": lambda k: k.overlap_penalty(x, sizes, a.canvas),
        "spiral": lambda k: k.spiral_search(0.0, 0.0, 0.1, 0.1, placed, a.n_movable, a.canvas, 0.02, 200),
    }


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--sizes", type=int, nargs="+", default=[16, 64, 256])
    ap.add_argument("--repeat", type=int, default=20)
    args = ap.parse_args()

    print(f"{'kernel':<12} {'macros':>6} {'numba us':>10} {'numpy us':>10} {'speedup':>8}")
    for m in args.sizes:
        nl = synthetic_netlist(m, 7).normalized
        x = np.random.default_rng(m).uniform(-1, 0.8, (m, 2))
        for name, call in cases(nl, x).items():
            tn = best_of(lambda: call(_numba), args.repeat)
            tp = best_of(lambda: call(_numpy), args.repeat)
            print(f"{name:<12} {m:>6} {tn * 1e6:>10.1f} {tp * 1e6:>10.1f} {tp / tn:>8.1f}")


if __name__ == "__main__":
    main()
