"""Compare the compiled and pure-python time-stepping kernels.

Runs the same noise through both backends, checks the results agree to
rounding (numpy's vectorized cos and glibc's scalar cos can differ by one
ulp on rare arguments, so bitwise cross-backend equality is not promised;
reruns within one backend are bit-identical), and reports steps/second.

    python benchmarks/kernel_benchmark.py [--batch 256] [--steps 2000]
"""

import argparse
import time

import numpy as np

from rotorengine.kernels import _sde_py

try:
    from rotorengine.kernels import _sde_cy
except ImportError:
    _sde_cy = None


def bench(mod, phi, lz, n, dw, du, dt, repeats=3):
    best = float("inf")
    out = None
    for _ in range(repeats):
        p, l, m = phi.copy(), lz.copy(), n.copy()
        t0 = time.perf_counter()
        mod.advance_block(p, l, m, dw, du, dt, 1.0, 100.0, 1.0, 0.0,
                          True, du is not None)
        best = min(best, time.perf_counter() - t0)
        out = (p, l, m)
    return best, out


def main():
    ap = argparse.ArgumentParser()
    ap.add_argument("--batch", type=int, default=256)
    ap.add_argument("--steps", type=int, default=2000)
    ap.add_argument("--backaction", action="store_true")
    args = ap.parse_args()

    rng = np.random.Generator(np.random.Philox(key=7))
    dt = 1e-4
    phi = rng.normal(np.pi / 2, 0.2, args.batch)
    lz = rng.normal(0.0, 2.0, args.batch)
    n = rng.exponential(1.0, args.batch)
    dw = rng.standard_normal((args.batch, args.steps)) * np.sqrt(dt)
    du = (rng.standard_normal((args.batch, args.steps)) * np.sqrt(dt)
          if args.backaction else None)

    total = args.batch * args.steps
    t_py, out_py = bench(_sde_py, phi, lz, n, dw, du, dt)
    print(f"python backend: {t_py:.3f}s  ({total / t_py:.3e} steps/s)")
    if _sde_cy is None:
        print("cython backend: not built")
        return
    t_cy, out_cy = bench(_sde_cy, phi, lz, n, dw, du, dt)
    print(f"cython backend: {t_cy:.3f}s  ({total / t_cy:.3e} steps/s)")
    print(f"speedup: {t_py / t_cy:.1f}x")
    dev = max(np.max(np.abs(a - b)) for a, b in zip(out_py, out_cy))
    print(f"max state deviation between backends: {dev:.3e}")
    if not dev < 1e-9:
        raise SystemExit(1)


if __name__ == "__main__":
    main()
