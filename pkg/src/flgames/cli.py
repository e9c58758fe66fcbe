"""Command-line entry point: ``flgames solve|sweep|reference|plot``."""

from __future__ import annotations

import argparse
import json
import sys
from pathlib import Path

from . import bench, svg
from .errors import ReferenceSolveError, ScenarioError
from .ilq_solver import BASELINE, FL, SolverConfig, solve
from .scenarios import resolve
from .trajectory import Trajectory


def _range(text: str) -> tuple[float, float]:
    try:
        a, b = text.split(":")
        return float(a), float(b)
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected a range 'lo:hi', got {text!r}") from None


def _onoff(text: str) -> bool:
    if text not in ("on", "off"):
        raise argparse.ArgumentTypeError("expected 'on' or 'off'")
    return text == "on"


def _variants(text: str) -> tuple:
    return (FL, BASELINE) if text == "both" else (text,)


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="flgames", description=__doc__)
    sub = p.add_subparsers(dest="command", required=True)

    def common(sp):
        sp.add_argument("--scenario", default="intersection", help="built-in name or scenario file")
        sp.add_argument("--drop-terms", type=_onoff, default=True, metavar="on|off")
        sp.add_argument("--out", type=Path, default=None)

    s = sub.add_parser("solve", help="solve one scenario")
    common(s)
    s.add_argument("--variant", choices=(FL, BASELINE), default=FL)
    s.add_argument("--eta0", type=float, default=0.5)
    s.add_argument("--trust", type=float, default=5.0)

    r = sub.add_parser("reference", help="compute reference equilibria")
    common(r)
    r.add_argument("--variant", choices=(FL, BASELINE, "both"), default="both")

    w = sub.add_parser("sweep", help="(eta0, trust) hyperparameter sweep")
    common(w)
    w.add_argument("--variant", choices=(FL, BASELINE, "both"), default="both")
    w.add_argument("--eta0-range", type=_range, default=None)
    w.add_argument("--trust-range", type=_range, default=None)
    w.add_argument("--samples", type=int, default=324)
    w.add_argument("--mode", choices=("grid", "random"), default="grid")
    w.add_argument("--seed", type=int, default=0)
    w.add_argument("--qstar", type=float, default=bench.QSTAR)
    w.add_argument("--jobs", type=int, default=1)
    w.add_argument("--reference-dir", type=Path, default=None,
                   help="directory holding reference_<variant>.json from the reference command")

    pl = sub.add_parser("plot", help="redraw figures from saved results")
    pl.add_argument("--report", type=Path, default=None)
    pl.add_argument("--trajectory", type=Path, default=None)
    pl.add_argument("--scenario", default=None, help="draw this scenario's lanes under the trajectory")
    pl.add_argument("--out", type=Path, default=Path("."))
    return p


def _cmd_solve(args) -> int:
    scenario = resolve(args.scenario)
    cfg = SolverConfig(eta0=args.eta0, trust=args.trust, variant=args.variant, drop_terms=args.drop_terms)
    result = solve(scenario, cfg)
    summary = {
        "scenario": scenario.name, "variant": args.variant, "eta0": args.eta0, "trust": args.trust,
        "converged": result.converged, "iterations": result.iterations,
        "runtime_s": round(result.runtime, 4), "failure": result.failure,
        "linearizations": result.linearizations,
    }
    print(json.dumps(summary))
    if args.out is not None and result.trajectory is not None:
        args.out.mkdir(parents=True, exist_ok=True)
        result.trajectory.save(args.out / "trajectory.json")
        result.trajectory.save(args.out / "trajectory.csv")
        (args.out / "trajectory.svg").write_text(svg.trajectory_plot(result.trajectory, scenario.lanes))
    return 0 if result.converged else 1


def _cmd_reference(args) -> int:
    scenario = resolve(args.scenario)
    out = args.out or Path(".")
    out.mkdir(parents=True, exist_ok=True)
    for v in _variants(args.variant):
        ref = bench.make_reference(scenario, v, args.drop_terms)
        path = out / f"reference_{v}.json"
        bench.save_reference(ref, path)
        print(f"{v} {ref.sha256} {path}")
    return 0


def _cmd_sweep(args) -> int:
    scenario = resolve(args.scenario)
    kw = dict(variants=_variants(args.variant), samples=args.samples, mode=args.mode, seed=args.seed,
              qstar=args.qstar, drop_terms=args.drop_terms)
    if args.eta0_range is not None:
        kw["eta0_range"] = args.eta0_range
    if args.trust_range is not None:
        kw["trust_range"] = args.trust_range
    if args.reference_dir is not None:
        kw["references"] = {v: str(args.reference_dir / f"reference_{v}.json") for v in kw["variants"]}
    eta, trust = bench.DEFAULT_RANGES.get(scenario.name, bench.DEFAULT_RANGES["intersection"])
    kw.setdefault("eta0_range", eta)
    kw.setdefault("trust_range", trust)
    spec = bench.SweepSpec(scenario=args.scenario, **kw)
    report = bench.run_sweep(spec, jobs=args.jobs, scenario=scenario)
    for v, rep in report.variants.items():
        mean = "n/a" if rep.runtime_mean is None else f"{rep.runtime_mean:.3f} +/- {rep.runtime_std:.3f} s"
        print(f"{v}: success {rep.success_fraction:.3f} converged {rep.converged_fraction:.3f} runtime {mean}")
    if args.out is not None:
        ref = report.references[report.spec.variants[0]].trajectory
        bench.emit_artifacts(report, args.out, ref, scenario.lanes)
    return 0


def _cmd_plot(args) -> int:
    if args.report is None and args.trajectory is None:
        print("plot: give --report and/or --trajectory", file=sys.stderr)
        return 2
    args.out.mkdir(parents=True, exist_ok=True)
    if args.report is not None:
        report = bench.SweepReport.from_json(args.report.read_text())
        (args.out / "scatter.svg").write_text(svg.scatter(report))
        (args.out / "hist.svg").write_text(svg.histograms(report))
    if args.trajectory is not None:
        lanes = resolve(args.scenario).lanes if args.scenario else None
        traj = Trajectory.load(args.trajectory)
        (args.out / "trajectory.svg").write_text(svg.trajectory_plot(traj, lanes))
    return 0


COMMANDS = {"solve": _cmd_solve, "reference": _cmd_reference, "sweep": _cmd_sweep, "plot": _cmd_plot}


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return COMMANDS[args.command](args)
    except (ScenarioError, ReferenceSolveError, ValueError, OSError) as err:
        print(f"error: {err}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
