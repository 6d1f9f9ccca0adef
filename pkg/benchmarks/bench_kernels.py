"""Compare the compiled and numpy kernel backends.

    python3 benchmarks/bench_kernels.py [--repeat N]

Prints per-call time for every kernel on default-sized inputs (16x16
latents, six mixture components) and an end-to-end sampling run per backend.
"""
import argparse
import os
import subprocess
import sys
import timeit

import numpy as np

from codiff import kernels
from codiff.metrics import SsimParams

E2E = """
import time
from codiff.diffusion import Condition, build_schedule, sample
from codiff.prototypes import default_mixture
from codiff.rng import RngStreams
from codiff import kernels
m, s = default_mixture(), build_schedule()
c = Condition(("apple", "lemon"))
t0 = time.perf_counter()
for i in range({n}):
    sample(s, m, c, (16, 16), RngStreams(i))
print(kernels.BACKEND, (time.perf_counter() - t0) / {n})
"""


def inputs():
    rng = np.random.default_rng(0)
    p = SsimParams()
    x = rng.standard_normal(256)
    codes = rng.integers(0, 256, 256).astype(np.uint16)
    return {
        "mixture_score": (x, rng.standard_normal((6, 256)), np.log(np.full(6, 1 / 6)), rng.uniform(0.1, 1, 6)),
        "ddpm_update": (x, rng.standard_normal(256), 1.05, 0.3, 0.4, rng.standard_normal(256)),
        "ssim_mean": (rng.random((16, 16)), rng.random((16, 16)), p.kernel(), p.c1, p.c2),
        "quantize_codes": (x, -4.0, 4.0, 8),
        "pack_codes": (codes, 8),
        "unpack_codes": (np.packbits(rng.integers(0, 2, 2048).astype(np.uint8)), 256, 8),
    }


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--repeat", type=int, default=2000)
    ap.add_argument("--samples", type=int, default=200)
    args = ap.parse_args()

    backends = {"python": kernels.get_backend("python")}
    if kernels.compiled_available():
        backends["cython"] = kernels.get_backend("cython")
    else:
        print("compiled extension not built; timing the numpy backend only")

    print(f"{'kernel':<16}" + "".join(f"{b + ' us':>14}" for b in backends) + f"{'speedup':>10}")
    for name, call_args in inputs().items():
        times = {}
        for b, mod in backends.items():
            fn = getattr(mod, name)
            times[b] = min(timeit.repeat(lambda: fn(*call_args), number=args.repeat, repeat=3)) / args.repeat * 1e6
        speed = f"{times['python'] / times['cython']:9.1f}x" if "cython" in times else ""
        print(f"{name:<16}" + "".join(f"{times[b]:14.2f}" for b in backends) + f"{speed:>10}")

    print("\nend-to-end sample() at 16x16, T=11 (ms per sample)")
    for b in backends:
        env = dict(os.environ, CODIFF_PURE_PYTHON="1" if b == "python" else "0")
        out = subprocess.run([sys.executable, "-c", E2E.format(n=args.samples)], env=env,
                             capture_output=True, text=True, check=True).stdout.split()
        print(f"  {out[0]:<8} {float(out[1]) * 1e3:8.3f}")


if __name__ == "__main__":
    main()
