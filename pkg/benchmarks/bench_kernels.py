"""Compare the pure-Python and compiled gossip kernels.

    python benchmarks/bench_kernels.py [--steps 200000] [--repeat 3]

Each case runs through the public entry points with an explicit backend so
the two timings cover identical work; the printed check confirms the traces
agree.
"""

from __future__ import annotations

import argparse
import time

import numpy as np

from qformation.formation import PerceptionModel, Streams, run_formation
from qformation.geometry import FormationState, PolarVec
from qformation.gossip import EdgeStream, GossipGraph, derive_rng, run_z
from qformation.kernels import compiled_available, get_backend
from qformation.quantizer import QuantizerConfig, angle_at, radius_at


def z_case(backend, steps: int):
    g = GossipGraph.chain(8)
    z0 = derive_rng(1, 0, "init").integers(-20, 21, 8).tolist()
    run = run_z(z0, g, 0.618, EdgeStream(g, derive_rng(1, 0, "edges")), steps,
                stop_at_equilibrium=False, backend=backend)
    return run.trace[-1]


def y_case(backend, steps: int):
    cfg = QuantizerConfig(2.0, 8)
    n = 6
    targets = FormationState([PolarVec(4.0, 0.0)] * n)
    y0 = FormationState(PolarVec(radius_at(cfg, 2 + k % 3 - 1), angle_at(cfg, (k % 3) - 1))
                        for k in range(n))
    g = GossipGraph.chain(n)
    run = run_formation(y0, targets, cfg, g, PerceptionModel.bounded(cfg),
                        Streams.from_seed(g, 2), steps, stop_at_target=False,
                        record=False, backend=backend)
    return np.concatenate([run.r[-1], run.theta[-1]])


def best_of(fn, backend, steps: int, repeat: int) -> tuple[float, np.ndarray]:
    best, out = float("inf"), None
    for _ in range(repeat):
        t0 = time.perf_counter()
        out = fn(backend, steps)
        best = min(best, time.perf_counter() - t0)
    return best, out


def main() -> None:
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--steps", type=int, default=200_000)
    ap.add_argument("--repeat", type=int, default=3)
    args = ap.parse_args()
    names = ["python"] + (["compiled"] if compiled_available() else [])
    if len(names) == 1:
        print("compiled extension not built; timing the Python backend only")
    print(f"{'case':<10}{'backend':<10}{'seconds':>10}{'steps/s':>14}")
    for label, fn in (("z-system", z_case), ("y-system", y_case)):
        finals = []
        for name in names:
            dt, out = best_of(fn, get_backend(name), args.steps, args.repeat)
            finals.append(out)
            print(f"{label:<10}{name:<10}{dt:>10.4f}{args.steps / dt:>14.0f}")
        if len(finals) == 2:
            print(f"{'':<10}final states identical: {bool(np.array_equal(*finals))}")


if __name__ == "__main__":
    main()
