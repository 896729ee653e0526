"""Compare the numba and numpy kernel backends.

    python benchmarks/bench_kernels.py [--repeat 20]

Times each kernel on problem sizes from the simulation study (35 x 144)
and the demo data (151 x 156), checks both backends agree, and times one
full robust fit under each backend in a fresh subprocess.
"""
import argparse
import os
import subprocess
import sys
import time

import numpy as np

from rodessa import _kernels

SIZES = {"study": (70, 35, 4, 2), "demo": (176, 151, 6, 7)}

FIT_SNIPPET = """
import time, warnings
import rodessa
from rodessa import EmbeddingSpec, RodessaConfig, irls_fit, load_demo
s = load_demo()
spec = EmbeddingSpec(s.N, 151)
cfg = RodessaConfig(7, seed=1)
irls_fit(s, spec, cfg)  # warm-up: compile and calibrate
t = time.perf_counter()
for _ in range(3):
    irls_fit(s, spec, cfg)
print(rodessa.BACKEND, (time.perf_counter() - t) / 3)
"""


def best_of(fn, repeat):
    times = []
    for _ in range(repeat):
        t = time.perf_counter()
        fn()
        times.append(time.perf_counter() - t)
    return min(times)


def bench(repeat):
    rng = np.random.default_rng(0)
    if _kernels.numba_impl is None:
        print("numba unavailable; only the numpy backend can be timed")
    impls = {"numpy": _kernels.numpy_impl, "numba": _kernels.numba_impl}
    print(f"{'kernel':<14}{'size':<8}{'numpy [ms]':>12}{'numba [ms]':>12}{'speedup':>10}{'max diff':>12}")
    for label, (N, L, p, q) in SIZES.items():
        Ku = N - L + 1
        K = p * Ku
        M = rng.standard_normal((L, K))
        A = rng.standard_normal((L, q))
        W = rng.uniform(0.0, 1.0, (L, K))
        cases = {
            "antidiag_sum": lambda impl: impl.antidiag_sum(M, N, L, Ku, p),
            "wls_solve": lambda impl: impl.wls_solve(A, W, M, 1e-12)[0],
        }
        for name, call in cases.items():
            row = {}
            out = {}
            for backend, impl in impls.items():
                if impl is None:
                    continue
                out[backend] = call(impl)  # also triggers compilation
                row[backend] = best_of(lambda: call(impl), repeat) * 1e3
            diff = (float(np.max(np.abs(out["numpy"] - out["numba"])))
                    if "numba" in out else float("nan"))
            nb = row.get("numba", float("nan"))
            print(f"{name:<14}{label:<8}{row['numpy']:>12.3f}{nb:>12.3f}"
                  f"{row['numpy'] / nb:>10.1f}{diff:>12.2e}")


def bench_fit():
    print("\nfull fit on the demo data (N=176, p=6, L=151, q=7), mean of 3:")
    for flag in ("0", "1"):
        env = dict(os.environ, RODESSA_NUMBA=flag)
        res = subprocess.run([sys.executable, "-c", FIT_SNIPPET], env=env,
                             capture_output=True, text=True, check=True)
        backend, secs = res.stdout.split()
        print(f"  {backend:<6} {float(secs):.3f} s")


if __name__ == "__main__":
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--repeat", type=int, default=20)
    ap.add_argument("--skip-fit", action="store_true")
    args = ap.parse_args()
    bench(args.repeat)
    if not args.skip_fit:
        bench_fit()
