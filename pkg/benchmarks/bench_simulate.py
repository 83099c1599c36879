"""Time the compiled and pure-Python simulation kernels on the dynamic profile.

    python3 benchmarks/bench_simulate.py [--repeat 5] [--timestep 0.1]
"""
import argparse
import time
import warnings

import numpy as np

from drtecm import kernels, synthetic
from drtecm.errors import DrtEcmWarning
from drtecm.profiles import generate_dynamic_profile
from drtecm.simulate import SimConfig, simulate


def best_of(fn, repeat):
    times = []
    for _ in range(repeat):
        t0 = time.perf_counter()
        result = fn()
        times.append(time.perf_counter() - t0)
    return min(times), result


def main(argv=None):
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--repeat", type=int, default=5)
    ap.add_argument("--timestep", type=float, default=0.1)
    args = ap.parse_args(argv)

    warnings.simplefilter("ignore", DrtEcmWarning)
    model = synthetic.reference_model()
    profile = generate_dynamic_profile([0.1, 0.2, 0.5, 1.0], temperature=20.0)
    steps = int(profile.duration / args.timestep)
    print(f"dynamic profile {profile.duration:.0f} s at T_s = {args.timestep} s: {steps} steps, "
          f"default kernel {kernels.IMPLEMENTATION}")

    results = {}
    for name in ("python", "cython"):
        try:
            kernels.get(name)
        except ImportError:
            print(f"{name:>7}: not available")
            continue
        cfg = SimConfig(timestep=args.timestep, soc0=0.8, constant_temperature=20.0, kernel=name)
        best, res = best_of(lambda: simulate(model, profile, cfg), args.repeat)
        results[name] = (best, res)
        print(f"{name:>7}: {best * 1e3:9.1f} ms  ({steps / best / 1e6:.2f} Msteps/s)")

    if len(results) == 2:
        (tp, rp), (tc, rc) = results["python"], results["cython"]
        same = np.array_equal(rp.terminal_voltage, rc.terminal_voltage)
        print(f"speedup {tp / tc:.1f}x, outputs bit-identical: {same}")


if __name__ == "__main__":
    main()
