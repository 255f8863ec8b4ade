"""Time the hot loops under the numba backend and the plain-numpy fallback.

    python benchmarks/bench_kernels.py [--T 2000] [--d 10] [--K 2 5] [--repeat 3]

Each backend runs in its own interpreter (the backend is fixed at import
time by SEMIBANDIT_DISABLE_JIT). Compile time is reported separately from
the steady-state timing.
"""
import argparse
import json
import os
import subprocess
import sys

WORKER = r"""
import json, sys, time, timeit
import numpy as np
from semibandit import BACKEND, kernels
from semibandit.environments import Environment

T, d, Ks, repeat = json.loads(sys.argv[1])
out = {"backend": BACKEND, "rows": []}
for K in Ks:
    env = Environment("confounded_sphere", d, K, seed=0)
    b = env.generate(T)
    u = np.random.default_rng(1).random(T)
    draws = np.random.default_rng(2).standard_normal((T, d))
    jobs = {
        "bose_run": lambda: kernels.bose_run(b.features, b.means, b.offsets, u, 1.0, 0.1,
                                             1e-8, 10000, env.theta_star),
        "ridge_run[oful]": lambda: kernels.ridge_run(kernels.KIND_OFUL, b.features, b.means,
                                                     b.offsets, draws[:, :0], 1.0, 1.0, 0.1),
        "ridge_run[thompson]": lambda: kernels.ridge_run(kernels.KIND_THOMPSON, b.features,
                                                         b.means, b.offsets, draws, 1.0, 0.1, 0.1),
    }
    for name, fn in jobs.items():
        t0 = time.perf_counter(); fn(); first = time.perf_counter() - t0
        best = min(timeit.repeat(fn, number=1, repeat=repeat))
        out["rows"].append({"kernel": name, "K": K, "first": first, "best": best})
print(json.dumps(out))
"""


def run_backend(disable, args):
    env = dict(os.environ)
    env.pop("SEMIBANDIT_DISABLE_JIT", None)
    if disable:
        env["SEMIBANDIT_DISABLE_JIT"] = "1"
    payload = json.dumps([args.T, args.d, args.K, args.repeat])
    res = subprocess.run([sys.executable, "-c", WORKER, payload], env=env, check=True,
                         capture_output=True, text=True)
    return json.loads(res.stdout)


def main():
    p = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    p.add_argument("--T", type=int, default=2000)
    p.add_argument("--d", type=int, default=10)
    p.add_argument("--K", type=int, nargs="+", default=[2, 5])
    p.add_argument("--repeat", type=int, default=3)
    args = p.parse_args()

    jit = run_backend(False, args)
    plain = run_backend(True, args)
    print(f"T={args.T} d={args.d}; seconds, best of {args.repeat} (first call in brackets)")
    print(f"{'kernel':<22}{'K':>3}  {'numba':>16}  {'numpy':>16}  {'speedup':>8}")
    for a, b in zip(jit["rows"], plain["rows"]):
        print(f"{a['kernel']:<22}{a['K']:>3}  {a['best']:8.4f} [{a['first']:5.2f}]"
              f"  {b['best']:8.4f} [{b['first']:5.2f}]  {b['best'] / a['best']:7.1f}x")


if __name__ == "__main__":
    main()
