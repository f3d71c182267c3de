"""Benchmark the hot kernels under the jitted and fallback paths.

Run ``python benchmarks/bench_kernels.py`` for a timing table in the current
backend, or ``--compare`` to also run the pure-NumPy fallback in a subprocess
(backend selection happens at import, via STITCHFORGE_NUMBA) and print the
speedups side by side.
"""

import argparse
import json
import os
import subprocess
import sys
import time

import numpy as np

from stitchforge.kernels import (
    active_backend,
    dilate_max_filter,
    fmm_inpaint,
    gaussian_taps,
    separable_blur,
    warp_bilinear,
)


def _time(fn, repeats=3):
    fn()  # warm-up (JIT compile / cache load)
    best = float("inf")
    for _ in range(repeats):
        start = time.perf_counter()
        fn()
        best = min(best, time.perf_counter() - start)
    return best


def run_benchmarks(size: int) -> dict:
    rng = np.random.default_rng(0)
    img = rng.random((size, size, 3))
    h = np.array([[0.95, 0.08, 12.0], [-0.05, 1.02, 7.0], [1e-5, -2e-5, 1.0]])
    inv = np.linalg.inv(h)

    known = np.ones((size, size), np.uint8)
    # irregular border hole, ~25% of the canvas
    ys, xs = np.mgrid[0:size, 0:size]
    known[(xs + ys) < size // 2] = 0
    known[(xs + ys) > 2 * size - size // 2] = 0

    mask = (rng.random((size, size)) < 0.3).astype(np.uint8)
    taps = gaussian_taps(15)

    results = {
        "backend": active_backend(),
        "size": size,
        "warp_s": _time(lambda: warp_bilinear(img, inv, size, size)),
        "fmm_inpaint_s": _time(lambda: fmm_inpaint(img, known, 3)),
        "dilate_s": _time(lambda: dilate_max_filter(mask, 10)),
        "blur_s": _time(lambda: separable_blur(mask.astype(np.float64), taps)),
    }
    return results


def main() -> int:
    parser = argparse.ArgumentParser(description=__doc__)
    parser.add_argument("--size", type=int, default=384)
    parser.add_argument("--compare", action="store_true")
    parser.add_argument("--json", action="store_true", help="machine output")
    args = parser.parse_args()

    mine = run_benchmarks(args.size)
    if args.json:
        print(json.dumps(mine))
        return 0

    rows = [mine]
    if args.compare:
        env = dict(os.environ)
        env["STITCHFORGE_NUMBA"] = "0" if active_backend() == "numba" else "1"
        out = subprocess.run(
            [sys.executable, __file__, "--size", str(args.size), "--json"],
            env=env,
            capture_output=True,
            text=True,
            check=True,
        )
        rows.append(json.loads(out.stdout))

    kernels = ["warp_s", "fmm_inpaint_s", "dilate_s", "blur_s"]
    print(f"canvas {args.size}x{args.size}, best of 3")
    header = f"{'kernel':<14}" + "".join(f"{r['backend']:>12}" for r in rows)
    if len(rows) == 2:
        header += f"{'speedup':>10}"
    print(header)
    for name in kernels:
        line = f"{name[:-2]:<14}" + "".join(f"{r[name]*1e3:>10.2f}ms" for r in rows)
        if len(rows) == 2 and rows[0][name] > 0:
            line += f"{rows[1][name] / rows[0][name]:>9.1f}x"
        print(line)
    return 0


if __name__ == "__main__":
    sys.exit(main())
