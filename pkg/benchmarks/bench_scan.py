"""Time the compiled and NumPy handover scans on the same replication.

    python3 benchmarks/bench_scan.py [--duration 200] [--model straight]
"""
import argparse
import time

import numpy as np

from hetho import scan as scanmod
from hetho.mobility import SimConfig, build_scan_input
from hetho.model import SpeedModel, macro_pico_config


def main():
    p = argparse.ArgumentParser()
    p.add_argument("--duration", type=float, default=200.0)
    p.add_argument("--disk-radius", type=float, default=5000.0)
    p.add_argument("--model", choices=("straight", "rwp"), default="straight")
    p.add_argument("--repeat", type=int, default=3)
    args = p.parse_args()

    cfg = macro_pico_config()
    speed = SpeedModel.uniform(5.0)
    sim = SimConfig(disk_radius=args.disk_radius, duration=args.duration, walking_model=args.model)
    sim = sim.with_time_step(cfg, speed)
    inp, _ = build_scan_input(cfg, sim, speed, 0)
    ue_steps = inp.ue_x.size * inp.n_steps
    print(f"{inp.ue_x.size} UEs x {inp.n_steps} steps = {ue_steps:.3g} UE-steps")

    results = {}
    backends = ["python"] + (["compiled"] if scanmod.compiled_available() else [])
    for name in backends:
        best = np.inf
        for _ in range(args.repeat):
            t0 = time.perf_counter()
            out = scanmod.scan(inp, name)
            best = min(best, time.perf_counter() - t0)
        results[name] = out
        print(f"{name:9s} {best:8.3f} s  {best / ue_steps * 1e9:8.1f} ns/UE-step  events={int(out.counts.sum())}")
    if len(results) == 2:
        a, b = results["python"], results["compiled"]
        same = (
            np.array_equal(a.counts, b.counts)
            and a.in_region_steps == b.in_region_steps
            and np.array_equal(a.residence_tier, b.residence_tier)
            and np.array_equal(a.residence_time, b.residence_time)
            and np.array_equal(a.final_serving, b.final_serving)
        )
        print("outputs identical:", same)


if __name__ == "__main__":
    main()
