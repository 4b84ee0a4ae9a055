"""Compare the compiled kernels against the plain-Python fallback.

Each mode runs in a fresh interpreter so the environment flag takes effect
before the kernels are defined::

    python benchmarks/bench_kernels.py            # both modes, summary table
    python benchmarks/bench_kernels.py --mode jit  # one mode, JSON line
"""

import argparse
import json
import os
import subprocess
import sys
import time

CASES = ("closed_loop_1s", "reference_march", "scaled_march")


def _best(fn, repeat):
    best = float("inf")
    for _ in range(repeat):
        t0 = time.perf_counter()
        fn()
        best = min(best, time.perf_counter() - t0)
    return best


def run_mode(repeat):
    from dataclasses import replace

    import numpy as np

    from stsync import NUMBA_ENABLED, table1_path
    from stsync.reference import march_scaled, march_time
    from stsync.scenario import load_scenario
    from stsync.sim import build_reference, run_single

    scn = load_scenario(table1_path())
    veh = scn.vehicles[2]
    params = build_reference(veh, scn.control)
    short = replace(scn.control, t_end=scn.control.Td)

    def closed_loop():
        # 1 s of simulated time: 1000 controller steps
        ctrl = replace(short, Td=1.0, t_end=1.0)
        run_single(veh, scn.target, ctrl, params=params)

    cases = {
        "closed_loop_1s": closed_loop,
        "reference_march": lambda: march_time(params, 200.0, dt=1e-2),
        "scaled_march": lambda: march_scaled(params),
    }
    out = {"numba": NUMBA_ENABLED}
    for name in CASES:
        cases[name]()  # warm-up (compilation or cache load)
        out[name] = _best(cases[name], repeat)
    return out


def main(argv=None):
    p = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    p.add_argument("--mode", choices=("jit", "python"))
    p.add_argument("--repeat", type=int, default=3)
    args = p.parse_args(argv)
    if args.mode:
        print(json.dumps(run_mode(args.repeat)))
        return 0
    rows = {}
    for mode in ("jit", "python"):
        env = dict(os.environ)
        env["STSYNC_DISABLE_NUMBA"] = "1" if mode == "python" else "0"
        res = subprocess.run([sys.executable, __file__, "--mode", mode, "--repeat",
                              str(args.repeat)], env=env, capture_output=True, text=True,
                             check=True)
        rows[mode] = json.loads(res.stdout.strip().splitlines()[-1])
    print(f"{'case':<18}{'jit [s]':>12}{'python [s]':>14}{'speed-up':>11}")
    for name in CASES:
        j, py = rows["jit"][name], rows["python"][name]
        print(f"{name:<18}{j:>12.4g}{py:>14.4g}{py / j:>10.1f}x")
    return 0


if __name__ == "__main__":
    sys.exit(main())
