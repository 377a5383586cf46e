#!/usr/bin/env python3
"""Benchmark the numba kernels against the pure-numpy fallback.

Micro-benchmarks time both implementations of each row kernel in-process;
the end-to-end comparison runs the same kicked-Ising evolution in a child
process with and without PAULIPROP_NO_NUMBA=1.

Usage:
    python benchmarks/kernel_benchmark.py            # micro + end-to-end
    python benchmarks/kernel_benchmark.py --rows 2000000
    python benchmarks/kernel_benchmark.py --skip-evolve
"""

import argparse
import os
import subprocess
import sys
import time

import numpy as np

from pauliprop import kernels

_EVOLVE_SNIPPET = """
import math, time
import pauliprop as pp
from pauliprop import kernels
kernels.warmup()
topo = pp.builtin_topology("ibm_heavy_hex_127")
obs = pp.PauliSum.from_terms(127, [("Z62", 1.0)])
circ = pp.kicked_ising(topo, T=20, theta_zz=-math.pi/2, theta_x_spec=pp.FixedAngle(0.3))
t0 = time.perf_counter()
final, trace = pp.evolve(circ, obs, {delta})
dt = time.perf_counter() - t0
print(f"path={{'numba' if kernels.USING_NUMBA else 'numpy'}} delta={delta} "
      f"N_max={{trace.n_max}} expectation={{pp.expectation(final):.12f}} time={{dt:.3f}}s")
"""


def _random_rows(rng, rows, words_per_half):
    width = 2 * words_per_half
    bits = rng.integers(0, 2**63, size=(rows, width), dtype=np.int64).astype(np.uint64)
    return np.unique(bits, axis=0)


def _time(fn, *args, reps=5):
    best = float("inf")
    for _ in range(reps):
        t0 = time.perf_counter()
        fn(*args)
        best = min(best, time.perf_counter() - t0)
    return best


def micro(rows: int, words: int) -> None:
    if kernels.numba_impl is None:
        print("numba unavailable (or disabled); micro-benchmark needs both paths")
        return
    rng = np.random.default_rng(42)
    bits = _random_rows(rng, rows, words)
    sigma = _random_rows(rng, 4, words)[0]
    order = kernels.sort_order(bits)
    bits_sorted = np.ascontiguousarray(bits[order])
    queries = bits_sorted[:: max(1, len(bits_sorted) // 100_000)] ^ sigma

    kernels.warmup()
    cases = [
        ("anti_mask", (bits, sigma)),
        ("row_phases", (bits,)),
        ("branch_signs", (bits, sigma, 0)),
        ("find_rows", (bits_sorted, queries)),
        ("lower_bound", (bits_sorted, queries)),
    ]
    print(f"rows={len(bits)}, words/half={words}")
    print(f"{'kernel':<14} {'numpy':>10} {'numba':>10} {'speedup':>9}")
    for name, args in cases:
        kernels.numba_impl[name](*args)  # compile
        t_np = _time(kernels.numpy_impl[name], *args)
        t_nb = _time(kernels.numba_impl[name], *args)
        print(f"{name:<14} {t_np * 1e3:9.2f}ms {t_nb * 1e3:9.2f}ms {t_np / t_nb:8.1f}x")


def end_to_end(delta: float) -> None:
    snippet = _EVOLVE_SNIPPET.format(delta=delta)
    for label, env_flag in (("numba", "0"), ("numpy", "1")):
        env = dict(os.environ, PAULIPROP_NO_NUMBA=env_flag)
        out = subprocess.run(
            [sys.executable, "-c", snippet], env=env, capture_output=True, text=True
        )
        line = out.stdout.strip().splitlines()[-1] if out.stdout.strip() else out.stderr.strip()
        print(f"[{label}] {line}")


def main() -> None:
    parser = argparse.ArgumentParser(description=__doc__)
    parser.add_argument("--rows", type=int, default=500_000)
    parser.add_argument("--words", type=int, default=2, help="64-bit words per z/x half")
    parser.add_argument("--delta", type=float, default=2.0**-13, help="end-to-end threshold")
    parser.add_argument("--skip-evolve", action="store_true")
    args = parser.parse_args()

    micro(args.rows, args.words)
    if not args.skip_evolve:
        print("\nend-to-end kicked-Ising (127q, T=20, theta_x=0.3):")
        end_to_end(args.delta)


if __name__ == "__main__":
    main()
