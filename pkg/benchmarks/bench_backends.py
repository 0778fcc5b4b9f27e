"""Compare the numba and pure-numpy kernel backends.

Each backend runs in its own interpreter because the choice is fixed at import
time by ``MRFABRICS_NO_NUMBA``. Both children time the same workloads on the
head-on scenario and report medians. The parent prints a table and checks that
the two backends agree on the accelerations.

    python3 benchmarks/bench_backends.py [--repeats N] [--horizon K]
"""
from __future__ import annotations

import argparse
import json
import os
import subprocess
import sys
import time
from dataclasses import replace
from pathlib import Path

import numpy as np

ROOT = Path(__file__).resolve().parents[1]
SCENARIO = ROOT / "scenarios" / "head_on.scn"


def _median_ms(fn, repeats):
    fn()  # warm-up, includes JIT compilation on the numba backend
    times = []
    for _ in range(repeats):
        tic = time.perf_counter()
        fn()
        times.append(time.perf_counter() - tic)
    return float(np.median(times) * 1e3)


def child(repeats: int, K: int) -> dict:
    from mrfabrics import kernels
    from mrfabrics.harness import run
    from mrfabrics.multi_robot import Fleet
    from mrfabrics.scenario import load_scenario

    sc = load_scenario(SCENARIO)
    fleet = Fleet(sc.models, sc.static)
    Q, QD = fleet.pack_states([r.start for r in sc.robots])
    QD = QD + 0.1
    packed = fleet.pack_params([r.params(r.goals[0].position) for r in sc.robots])
    short = sc.with_overrides(mode="rf", horizon=K)
    short = replace(short, t_max=0.5)
    out = {
        "backend": kernels.BACKEND,
        "accels_ms": _median_ms(lambda: fleet.accels(Q, QD, packed), repeats),
        "rollout_ms": _median_ms(lambda: fleet.rollout(Q, QD, packed, K, 0.01), repeats),
        "run_0.5s_ms": _median_ms(lambda: run(short, record=False), max(repeats // 50, 3)),
        "qdd": fleet.accels(Q, QD, packed).tolist(),
    }
    return out


def main(argv=None):
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--repeats", type=int, default=300)
    ap.add_argument("--horizon", type=int, default=10)
    ap.add_argument("--child", action="store_true", help=argparse.SUPPRESS)
    args = ap.parse_args(argv)
    if args.child:
        print(json.dumps(child(args.repeats, args.horizon)))
        return 0

    results = {}
    for name, flag in (("numba", "0"), ("numpy", "1")):
        env = dict(os.environ, MRFABRICS_NO_NUMBA=flag)
        proc = subprocess.run(
            [sys.executable, __file__, "--child", "--repeats", str(args.repeats),
             "--horizon", str(args.horizon)],
            env=env, capture_output=True, text=True, check=True)
        results[name] = json.loads(proc.stdout.strip().splitlines()[-1])

    keys = ["accels_ms", "rollout_ms", "run_0.5s_ms"]
    print(f"{'workload':<14} {'numba [ms]':>12} {'numpy [ms]':>12} {'speed-up':>9}")
    for k in keys:
        a, b = results["numba"][k], results["numpy"][k]
        print(f"{k:<14} {a:>12.4f} {b:>12.4f} {b / a:>8.1f}x")
    diff = np.max(np.abs(np.array(results["numba"]["qdd"]) - np.array(results["numpy"]["qdd"])))
    print(f"max |qdd numba - qdd numpy| = {diff:.3e}")
    return 0


if __name__ == "__main__":
    sys.exit(main())
