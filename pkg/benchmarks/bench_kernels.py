#!/usr/bin/env python3
"""Compare the pure-Python and compiled kernel backends.

Runs each hot kernel on identical inputs through every available backend,
reports wall-clock times and speedups, and verifies the outputs agree bit
for bit (the backends are required to be numerically interchangeable).

Usage: python3 benchmarks/bench_kernels.py [--repeat N]
"""

import argparse
import time

import numpy as np

from amtamper import _kernels, corpus, gcode, mesh


def timed(fn, repeat):
    best = float("inf")
    result = None
    for _ in range(repeat):
        t0 = time.perf_counter()
        result = fn()
        best = min(best, time.perf_counter() - t0)
    return best, result


def bench_ray_crossings(backends, repeat):
    m, _ = corpus.make_mesh(corpus.FixtureSpec("prism"))
    rng = np.random.default_rng(7)
    box = mesh.bounding_box(m)
    origins = rng.uniform(
        np.array(box.min) - 1.0, np.array(box.max) + 1.0, size=(200_000, 3)
    )
    direction = mesh.PRIMARY_RAY_DIRECTION
    rows = {}
    for name, impl in backends.items():
        rows[name] = timed(
            lambda impl=impl: _kernels.ray_crossings(
                m.vertices, m.facets, origins, direction, impl=impl
            ),
            repeat,
        )
    outs = [r[1] for r in rows.values()]
    for other in outs[1:]:
        assert np.array_equal(outs[0][0], other[0])
        assert np.array_equal(outs[0][1], other[1])
    return "ray_crossings (200k points x 156 facets)", rows


def bench_surface_distances(backends, repeat):
    m, _ = corpus.make_mesh(corpus.FixtureSpec("prism"))
    rng = np.random.default_rng(8)
    box = mesh.bounding_box(m)
    points = rng.uniform(
        np.array(box.min) - 2.0, np.array(box.max) + 2.0, size=(20_000, 3)
    )
    rows = {}
    for name, impl in backends.items():
        rows[name] = timed(
            lambda impl=impl: _kernels.surface_distances(
                m.vertices, m.facets, points, impl=impl
            ),
            repeat,
        )
    outs = [r[1] for r in rows.values()]
    for other in outs[1:]:
        assert np.max(np.abs(outs[0] - other)) == 0.0
    return "surface_distances (20k points x 156 facets)", rows


def bench_voxelize(backends, repeat):
    program, _ = corpus.make_print(
        corpus.FixtureSpec("raster", layers=20, lines_per_layer=40)
    )
    toolpath = gcode.interpret(program)
    printing = [s for s in toolpath.segments if s.is_printing]
    starts = np.array([s.start for s in printing])
    ends = np.array([s.end for s in printing])
    origin = np.array([-1.0, -1.0, -1.0])
    dims = np.array([120, 260, 60], dtype=np.int64)
    n_cells = int(dims.prod())

    rows = {}
    for name, impl in backends.items():
        def run(impl=impl):
            bits = np.zeros((n_cells + 7) // 8, dtype=np.uint8)
            _kernels.voxelize_segments(
                starts, ends, origin, 0.1, dims, 0.25, 0.1, bits, impl=impl
            )
            return bits

        rows[name] = timed(run, repeat)
    outs = [r[1] for r in rows.values()]
    for other in outs[1:]:
        assert np.array_equal(outs[0], other)
    return f"voxelize_segments ({len(printing)} segments into {n_cells} cells)", rows


def main():
    parser = argparse.ArgumentParser(description=__doc__)
    parser.add_argument("--repeat", type=int, default=3,
                        help="repetitions per measurement (best is kept)")
    args = parser.parse_args()

    backends = _kernels.available_backends()
    print(f"active backend: {_kernels.BACKEND}")
    print(f"available: {', '.join(backends)}")
    print()

    benches = (bench_ray_crossings, bench_surface_distances, bench_voxelize)
    for bench in benches:
        label, rows = bench(backends, args.repeat)
        print(label)
        base = rows.get("python", next(iter(rows.values())))[0]
        for name, (seconds, _) in rows.items():
            speedup = base / seconds if seconds > 0 else float("inf")
            print(f"  {name:10s} {seconds * 1000:9.2f} ms   x{speedup:.1f}")
        print("  outputs bitwise identical across backends")
        print()


if __name__ == "__main__":
    main()
