"""Timing comparison of the pure-NumPy kernels against the compiled
extension.

Run from a checkout where the package is installed:

    python3 benchmarks/bench_kernels.py [--size 512] [--window 9] [--repeats 5]
"""

from __future__ import annotations

import argparse
import timeit

import numpy as np

from artaug._kernels import pure

try:
    from artaug._kernels import _core as compiled
except ImportError:
    compiled = None


def _inputs(size: int, seed: int = 99):
    rng = np.random.default_rng(seed)
    gray = rng.integers(0, 256, size=(size, size), dtype=np.uint8)
    smooth = rng.random((size, size))
    for _ in range(3):  # cheap blur: neighbor averaging
        smooth = 0.25 * (
            np.roll(smooth, 1, 0) + np.roll(smooth, -1, 0)
            + np.roll(smooth, 1, 1) + np.roll(smooth, -1, 1)
        )
    gy, gx = np.gradient(smooth * 255.0)
    mag = np.hypot(gx, gy)
    nms = pure.canny_nms(mag, gx, gy)
    blobs = rng.random((size, size)) < 0.35
    return gray, mag, gx, gy, nms, blobs


def main() -> int:
    parser = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    parser.add_argument("--size", type=int, default=512, help="square input side length")
    parser.add_argument("--window", type=int, default=9, help="entropy window")
    parser.add_argument("--repeats", type=int, default=5, help="best-of repetitions")
    args = parser.parse_args()

    gray, mag, gx, gy, nms, blobs = _inputs(args.size)
    low, high = float(np.percentile(mag, 70)), float(np.percentile(mag, 90))

    cases = {
        f"local_entropy ({args.size}x{args.size}, w={args.window})": lambda impl: impl.local_entropy(
            gray, args.window
        ),
        f"canny_nms ({args.size}x{args.size})": lambda impl: impl.canny_nms(mag, gx, gy),
        f"hysteresis ({args.size}x{args.size})": lambda impl: impl.hysteresis(
            nms, mag, low, high
        ),
        f"largest_component_area ({args.size}x{args.size})": lambda impl: impl.largest_component_area(
            blobs
        ),
    }

    def best_ms(fn) -> float:
        times = timeit.repeat(fn, number=1, repeat=args.repeats)
        return min(times) * 1000.0

    name_w = max(len(n) for n in cases)
    if compiled is None:
        print("compiled extension not built; timing the pure kernels only\n")
        print(f"{'kernel':<{name_w}} {'pure ms':>10}")
        for name, call in cases.items():
            print(f"{name:<{name_w}} {best_ms(lambda: call(pure)):>10.2f}")
        return 0

    print(f"{'kernel':<{name_w}} {'pure ms':>10} {'compiled ms':>12} {'speedup':>8}")
    for name, call in cases.items():
        t_pure = best_ms(lambda: call(pure))
        t_comp = best_ms(lambda: call(compiled))
        ratio = t_pure / t_comp if t_comp > 0 else float("inf")
        print(f"{name:<{name_w}} {t_pure:>10.2f} {t_comp:>12.2f} {ratio:>7.1f}x")
    return 0


if __name__ == "__main__":
    raise SystemExit(main())
