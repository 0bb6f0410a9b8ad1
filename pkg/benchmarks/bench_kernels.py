"""Time the hot kernels under the numba and pure-numpy backends.

Usage: python3 benchmarks/bench_kernels.py [--window N] [--walkers W] [--steps S]

The script re-runs itself in a subprocess per backend (MCRT_NUMBA=1 / 0),
so each measurement sees a freshly imported package.
"""
import argparse
import json
import math
import os
import subprocess
import sys
import time


def _measure(args) -> dict:
    import numpy as np

    from matedcrt._accel import backend
    from matedcrt.graph_core import bfs_distances, grid_graph
    from matedcrt.map_builder import build_adjacency, build_adjacency_bruteforce
    from matedcrt.walk_gen import WalkParams, generate_walk
    from matedcrt.walker import displacement_samples, return_prob_exact

    def timed(fn, repeat=3):
        fn()  # warm-up (includes JIT compilation)
        best = math.inf
        for _ in range(repeat):
            t = time.perf_counter()
            fn()
            best = min(best, time.perf_counter() - t)
        return best

    walk = generate_walk(WalkParams(math.sqrt(2), args.window, 1, 1))
    small = generate_walk(WalkParams(math.sqrt(2), 1000, 1, 1))
    g = build_adjacency(walk)
    grid = grid_graph(301)
    out = {"backend": backend()}
    out["build_adjacency"] = timed(lambda: build_adjacency(walk))
    out["bruteforce_w1000"] = timed(lambda: build_adjacency_bruteforce(small), repeat=1)
    out["bfs_full"] = timed(lambda: bfs_distances(g.graph, g.root))
    out["walkers"] = timed(lambda: displacement_samples(g.graph, g.root, [args.steps], args.walkers, 3), repeat=1)
    out["evolve_grid"] = timed(lambda: return_prob_exact(grid, 150 * 301 + 150, 256), repeat=1)
    return out


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--window", type=int, default=200_000)
    ap.add_argument("--walkers", type=int, default=2000)
    ap.add_argument("--steps", type=int, default=2000)
    ap.add_argument("--child", action="store_true", help=argparse.SUPPRESS)
    args = ap.parse_args()
    if args.child:
        print(json.dumps(_measure(args)))
        return
    rows = {}
    for flag in ("1", "0"):
        env = dict(os.environ, MCRT_NUMBA=flag)
        cmd = [sys.executable, __file__, "--child", "--window", str(args.window), "--walkers", str(args.walkers),
               "--steps", str(args.steps)]
        res = json.loads(subprocess.run(cmd, env=env, check=True, capture_output=True, text=True).stdout)
        rows[res.pop("backend")] = res
    keys = list(rows["numba"])
    print(f"{'kernel':<20}{'numba [s]':>12}{'numpy [s]':>12}{'speedup':>10}")
    for k in keys:
        a, b = rows["numba"][k], rows["numpy"][k]
        print(f"{k:<20}{a:>12.4f}{b:>12.4f}{b / a:>10.1f}")


if __name__ == "__main__":
    main()
