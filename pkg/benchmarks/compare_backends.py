#!/usr/bin/env python3
"""Time the hot kernels under both backends and print a comparison table.

Runs each stage (projection, normals, full network forward, nearest-range
assignment, KNN assignment) on the same synthetic frame under the numba
and numpy kernel implementations.  The first call per backend is an
uncounted warm-up so JIT compilation never lands in a timing.

    python3 benchmarks/compare_backends.py
    python3 benchmarks/compare_backends.py --height 64 --width 2048 --repeats 5
"""

import argparse
import statistics
import time

import numpy as np

from rangeseg.kernels import available_backends, set_backend
from rangeseg.network import NetworkConfig, build_network, forward
from rangeseg.normals import compute_normals
from rangeseg.postprocess import PatchConfig, knn_postprocess, nla
from rangeseg.projection import (CH_RANGE, ProjectionConfig,
                                 spherical_project)


def make_scan(rng, n):
    r = rng.uniform(2.0, 50.0, n)
    azimuth = rng.uniform(-np.pi, np.pi, n)
    elevation = rng.uniform(np.radians(-25.0), np.radians(3.0), n)
    z = r * np.sin(elevation)
    horiz = r * np.cos(elevation)
    return np.column_stack([horiz * np.cos(azimuth),
                            horiz * np.sin(azimuth),
                            z, rng.uniform(0.0, 1.0, n)]).astype(np.float32)


def timed(fn, repeats):
    fn()  # warm-up: JIT compile + cache fill, uncounted
    samples = []
    for _ in range(repeats):
        t0 = time.perf_counter()
        fn()
        samples.append(time.perf_counter() - t0)
    return statistics.median(samples)


def run_backend(name, scan, model, proj_cfg, patch_cfg, repeats):
    set_backend(name)
    times = {}
    times["project"] = timed(lambda: spherical_project(scan, proj_cfg),
                             repeats)
    image, pmap = spherical_project(scan, proj_cfg)
    times["normals"] = timed(lambda: compute_normals(image), repeats)
    channels = image.channels.copy()
    times["forward"] = timed(lambda: forward(model, channels), repeats)
    label_image = np.argmax(forward(model, channels), axis=0).astype(np.int32)
    ranges = image.channels[CH_RANGE]
    times["nla"] = timed(
        lambda: nla(ranges, label_image, pmap, patch_cfg), repeats)
    times["knn"] = timed(
        lambda: knn_postprocess(ranges, label_image, pmap, patch_cfg),
        repeats)
    return times


def main(argv=None):
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--height", type=int, default=64)
    ap.add_argument("--width", type=int, default=512)
    ap.add_argument("--points", type=int, default=30000)
    ap.add_argument("--repeats", type=int, default=3)
    ap.add_argument("--seed", type=int, default=0)
    args = ap.parse_args(argv)

    rng = np.random.default_rng(args.seed)
    scan = make_scan(rng, args.points)
    proj_cfg = ProjectionConfig(height=args.height, width=args.width)
    patch_cfg = PatchConfig(k=5)
    model = build_network(NetworkConfig(), seed=args.seed)

    backends = available_backends()
    results = {b: run_backend(b, scan, model, proj_cfg, patch_cfg,
                              args.repeats)
               for b in backends}

    print(f"image {args.height}x{args.width}, {args.points} points, "
          f"median of {args.repeats} runs (ms)")
    stages = ["project", "normals", "forward", "nla", "knn"]
    header = f"{'stage':<10}" + "".join(f"{b:>12}" for b in backends)
    if len(backends) == 2:
        header += f"{'speedup':>10}"
    print(header)
    for stage in stages:
        row = f"{stage:<10}"
        for b in backends:
            row += f"{1e3 * results[b][stage]:>12.2f}"
        if len(backends) == 2:
            lo, hi = (results[b][stage] for b in backends)
            row += f"{hi / lo:>9.2f}x"
        print(row)
    total_row = f"{'total':<10}"
    totals = {b: sum(results[b].values()) for b in backends}
    for b in backends:
        total_row += f"{1e3 * totals[b]:>12.2f}"
    if len(backends) == 2:
        lo, hi = (totals[b] for b in backends)
        total_row += f"{hi / lo:>9.2f}x"
    print(total_row)
    return 0


if __name__ == "__main__":
    raise SystemExit(main())
