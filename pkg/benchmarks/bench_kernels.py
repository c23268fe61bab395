"""Time the supervised kernel under numba and under the pure-numpy fallback.

Each backend runs in its own interpreter because the backend is fixed at
import time by ``SPCCA_DISABLE_NUMBA``.

    python benchmarks/bench_kernels.py [--repeats N]
"""

import argparse
import json
import os
import subprocess
import sys

WORKER = r"""
import json, sys, time, warnings
import numpy as np
warnings.simplefilter("ignore")
from spcca._backend import BACKEND
from spcca.engine import EngineConfig, fit_one_component
from spcca.matrix import standardize
from spcca.synthetic import generate, planted_scenario

repeats = int(sys.argv[1])
data, design, _ = generate(planted_scenario())
z = [standardize(m) for m in data]
zd = standardize(design.matrix)
cfg = EngineConfig((0.1, 0.1, 0.0))
t0 = time.perf_counter()
fit_one_component(z, zd, cfg)  # includes numba compile or cache load
first = time.perf_counter() - t0
times = []
for _ in range(repeats):
    t0 = time.perf_counter()
    v = fit_one_component(z, zd, cfg)
    times.append(time.perf_counter() - t0)
print(json.dumps({"backend": BACKEND, "first": first, "best": min(times),
                  "median": sorted(times)[len(times) // 2], "objective": v.objective,
                  "iterations": v.iterations_used}))
"""


def run(disable: bool, repeats: int) -> dict:
    env = dict(os.environ)
    env.pop("SPCCA_DISABLE_NUMBA", None)
    if disable:
        env["SPCCA_DISABLE_NUMBA"] = "1"
    out = subprocess.run([sys.executable, "-c", WORKER, str(repeats)], env=env,
                         capture_output=True, text=True, check=True)
    return json.loads(out.stdout)


def main():
    ap = argparse.ArgumentParser(description=__doc__.split("\n")[0])
    ap.add_argument("--repeats", type=int, default=20)
    args = ap.parse_args()
    rows = [run(False, args.repeats), run(True, args.repeats)]
    print(f"{'backend':<8} {'first (s)':>10} {'best (ms)':>10} {'median (ms)':>12} {'objective':>10}")
    for r in rows:
        print(f"{r['backend']:<8} {r['first']:>10.3f} {1e3 * r['best']:>10.2f} "
              f"{1e3 * r['median']:>12.2f} {r['objective']:>10.6f}")
    print(f"speedup (median): {rows[1]['median'] / rows[0]['median']:.1f}x")


if __name__ == "__main__":
    main()
