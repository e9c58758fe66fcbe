"""Quick coarse-grid comparison of both variants on one scenario.

    python scripts/probe_grid.py intersection --side 5

Prints success count, runtime mean and std/mean over successes, the iteration
count of every sample (eta0-major) and the failure reasons.
"""

import argparse

import numpy as np

from flgames import bench
from flgames.ilq_solver import BASELINE, FL, SolverConfig, solve
from flgames.scenarios import resolve


def main():
    p = argparse.ArgumentParser(description=__doc__, formatter_class=argparse.RawDescriptionHelpFormatter)
    p.add_argument("scenario")
    p.add_argument("--side", type=int, default=5, help="grid points per axis")
    p.add_argument("--qstar", type=float, default=bench.QSTAR)
    args = p.parse_args()

    scenario = resolve(args.scenario)
    spec = bench.SweepSpec.for_scenario(scenario.name, samples=args.side**2)
    for v in (FL, BASELINE):
        ref = bench.make_reference(scenario, v).trajectory
        rows = []
        for eta0, trust in spec.points():
            res = solve(scenario, SolverConfig(variant=v, eta0=eta0, trust=trust))
            q = None if res.trajectory is None else bench.quality(res.trajectory, ref)
            ok = res.converged and q is not None and q <= args.qstar
            rows.append((ok, res.runtime, res.iterations, res.failure, q))
        times = np.array([r[1] for r in rows if r[0]])
        stats = f"mean {times.mean():.2f}s std/mean {times.std() / times.mean():.2f}" if len(times) else "no successes"
        print(f"{v}: {len(times)}/{len(rows)} {stats}")
        print("  iterations", [r[2] for r in rows])
        fails = [(r[3], None if r[4] is None else round(r[4], 2)) for r in rows if not r[0]]
        print("  failures", fails)


if __name__ == "__main__":
    main()
