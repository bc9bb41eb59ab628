"""Time the numba and numpy kernels on the reference tree scenario.

    python3 benchmarks/bench_kernels.py [--repeat 5] [--scenario tracking_tree]

The first numba call includes compilation and is reported separately.
"""
import argparse
import time

import numpy as np

from adkf.consensus import LinkArrays
from adkf.graph import consensus_rounds
from adkf.kernels import backend
from adkf.scenario import load_scenario
from adkf.simulate import generate_run


def filter_args(sc, data, window, track):
    arrays = LinkArrays.from_topology(sc.topology, sc.unit_weights)
    phi, q = sc.system.stacked(sc.horizon)
    return (phi, q, sc.system.init_mean.astype(float), sc.system.init_cov.astype(float), data.psi, data.info,
            arrays.src, arrays.dst, arrays.weight, arrays.in_ptr, arrays.in_edge, data.arrival, window,
            consensus_rounds(sc.topology), track)


def best_of(fn, repeat):
    times = []
    for _ in range(repeat):
        t0 = time.perf_counter()
        out = fn()
        times.append(time.perf_counter() - t0)
    return min(times), out


def main():
    p = argparse.ArgumentParser()
    p.add_argument("--scenario", default="tracking_tree")
    p.add_argument("--repeat", type=int, default=5)
    args = p.parse_args()

    sc = load_scenario(args.scenario)
    data = generate_run(sc, 0)
    cases = [("buffered", sc.delay.max_delay, False), ("buffered+cross", sc.delay.max_delay, True),
             ("drop-late", 0, False)]
    nb, npy = backend("numba"), backend("numpy")

    t0 = time.perf_counter()
    nb.run_filter(*filter_args(sc, data, 0, True))
    print(f"numba compile + first call: {time.perf_counter() - t0:.2f}s")

    print(f"{'case':16s} {'numba':>10s} {'numpy':>10s} {'speedup':>8s} {'max diff':>10s}")
    for name, window, track in cases:
        a = filter_args(sc, data, window, track)
        t_nb, r_nb = best_of(lambda: nb.run_filter(*a), args.repeat)
        t_np, r_np = best_of(lambda: npy.run_filter(*a), args.repeat)
        diff = max(np.abs(r_nb[0] - r_np[0]).max(), np.abs(r_nb[1] - r_np[1]).max())
        print(f"{name:16s} {t_nb * 1e3:8.1f}ms {t_np * 1e3:8.1f}ms {t_np / t_nb:7.1f}x {diff:10.2g}")


if __name__ == "__main__":
    main()
