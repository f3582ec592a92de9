"""Compare the numba and numpy kernel backends.

Run with ``python3 benchmarks/bench_kernels.py``. Each kernel is timed in a
fresh interpreter per backend, since the switch is read from the
environment.
"""
import argparse
import os
import subprocess
import sys

SNIPPET = r"""
import time, numpy as np
from jacdet import _kernels
from jacdet.problem import build_driftless
from jacdet.determinant import periodic
from jacdet.flow import fundamental_solution
from jacdet.oracle import assemble_K
p = build_driftless(np.pi ** 2, grid={grid})
dp, g = periodic(p)
fundamental_solution(p, 0.5); assemble_K(dp, g, 16)   # warm-up / compile
def best(f, reps):
    out = []
    for _ in range(reps):
        t = time.perf_counter(); f(); out.append(time.perf_counter() - t)
    return min(out)
rk = best(lambda: fundamental_solution(p, 0.5), {reps})
asm = best(lambda: assemble_K(dp, g, {m}), max(1, {reps} // 5))
print(_kernels.backend_name(), rk, asm)
"""


def run(backend, grid, m, reps):
    env = dict(os.environ)
    if backend == "numpy":
        env["JACDET_DISABLE_NUMBA"] = "1"
    else:
        env.pop("JACDET_DISABLE_NUMBA", None)
    code = SNIPPET.format(grid=grid, m=m, reps=reps)
    out = subprocess.run([sys.executable, "-c", code], env=env, capture_output=True, text=True,
                         check=True).stdout.split()
    return out[0], float(out[1]), float(out[2])


def main(argv=None):
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--grid", type=int, default=1024)
    ap.add_argument("--m", type=int, default=512)
    ap.add_argument("--reps", type=int, default=10)
    args = ap.parse_args(argv)
    rows = [run(b, args.grid, args.m, args.reps) for b in ("numpy", "numba")]
    print(f"{'backend':8s} {'rk4 flow [ms]':>14s} {'assemble_K [ms]':>16s}")
    for name, rk, asm in rows:
        print(f"{name:8s} {1e3 * rk:14.2f} {1e3 * asm:16.2f}")
    base = rows[0]
    for name, rk, asm in rows[1:]:
        print(f"speed-up ({name} vs numpy): rk4 x{base[1] / rk:.1f}, assemble x{base[2] / asm:.1f}")


if __name__ == "__main__":
    main()
