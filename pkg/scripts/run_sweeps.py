"""Full (eta0, trust) sweeps for the built-in scenarios, with artifacts.

    python scripts/run_sweeps.py --out results [--samples 324] [--jobs 1] [scenario ...]

Writes results/<scenario>/{samples.csv, report.json, scatter.svg, hist.svg,
trajectory.svg} and prints a summary table. Keep --jobs 1 when runtimes matter:
concurrent solves on a shared core distort them.
"""

import argparse
import time
from pathlib import Path

from flgames import bench
from flgames.ilq_solver import FL
from flgames.scenarios import BUILTINS, resolve


def main():
    p = argparse.ArgumentParser(description=__doc__, formatter_class=argparse.RawDescriptionHelpFormatter)
    p.add_argument("scenarios", nargs="*", default=sorted(BUILTINS))
    p.add_argument("--out", type=Path, default=Path("results"))
    p.add_argument("--samples", type=int, default=324)
    p.add_argument("--jobs", type=int, default=1)
    args = p.parse_args()

    print(f"{'scenario':13s} {'variant':9s} {'success':>8s} {'converged':>9s} {'mean s':>8s} {'std s':>8s} "
          f"{'std/mean':>8s}")
    for name in args.scenarios:
        start = time.perf_counter()
        scenario = resolve(name)
        spec = bench.SweepSpec.for_scenario(name, samples=args.samples)
        report = bench.run_sweep(spec, jobs=args.jobs, scenario=scenario)
        bench.emit_artifacts(report, args.out / name, report.references[FL].trajectory, scenario.lanes)
        for v, rep in report.variants.items():
            if rep.runtime_mean:
                stats = f"{rep.runtime_mean:8.3f} {rep.runtime_std:8.3f} {rep.runtime_std / rep.runtime_mean:8.3f}"
            else:
                stats = f"{'n/a':>8s} {'n/a':>8s} {'n/a':>8s}"
            print(f"{name:13s} {v:9s} {rep.success_fraction:8.3f} {rep.converged_fraction:9.3f} {stats}",
                  flush=True)
        print(f"# {name}: {time.perf_counter() - start:.0f} s", flush=True)


if __name__ == "__main__":
    main()
