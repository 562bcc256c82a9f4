"""Time the compiled kernels against their pure-Python twins on generated houses.

    python3 benchmarks/bench_kernels.py [--repeat N] [--viewpoints N]

Also checks that both backends return identical arrays on the benchmark inputs.
"""
import argparse
import time

import numpy as np

from remote_grounding import kernels
from remote_grounding.world import WorldParams, generate_environment


def _time(fn, repeat):
    best = float("inf")
    for _ in range(repeat):
        t = time.perf_counter()
        fn()
        best = min(best, time.perf_counter() - t)
    return best


def main(argv=None):
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--repeat", type=int, default=5)
    ap.add_argument("--viewpoints", type=int, default=240)
    ap.add_argument("--boxes", type=int, default=20000)
    args = ap.parse_args(argv)

    try:
        cy = kernels.get_backend("cython")
    except ImportError:
        print("compiled extension not built; only the Python backend is available")
        return 1
    py = kernels.get_backend("python")

    env = generate_environment(0, WorldParams(n_viewpoints=args.viewpoints, n_rooms=max(1, args.viewpoints // 15)))
    indptr, indices, weights = env.graph.csr
    n = len(env.graph)
    rng = np.random.default_rng(0)
    lo = rng.uniform(0, 10, size=(args.boxes, 3))
    hi = lo + rng.uniform(0.1, 1.0, size=(args.boxes, 3))
    tlo, thi = np.array([4.0, 4.0, 4.0]), np.array([5.0, 5.5, 4.6])

    cases = {
        "bfs_hops (all sources)": lambda k: [k.bfs_hops(indptr, indices, [s], -1) for s in range(n)],
        "dijkstra (all sources)": lambda k: [k.dijkstra(indptr, indices, weights, s) for s in range(n)],
        f"box_iou ({args.boxes} boxes)": lambda k: k.box_iou(lo, hi, tlo, thi),
    }
    print(f"graph: {n} viewpoints, {len(indices) // 2} edges; best of {args.repeat}")
    print(f"{'kernel':28s} {'python ms':>10s} {'cython ms':>10s} {'speedup':>8s}  identical")
    for name, fn in cases.items():
        same = _identical(fn(py), fn(cy))
        tp = _time(lambda: fn(py), args.repeat)
        tc = _time(lambda: fn(cy), args.repeat)
        print(f"{name:28s} {tp * 1e3:10.2f} {tc * 1e3:10.2f} {tp / tc:8.1f}x  {same}")
    return 0


def _identical(a, b):
    if isinstance(a, (list, tuple)):
        return all(_identical(x, y) for x, y in zip(a, b)) and len(a) == len(b)
    return np.array_equal(np.asarray(a), np.asarray(b))


if __name__ == "__main__":
    raise SystemExit(main())
