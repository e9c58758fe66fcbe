"""Hyperparameter sweeps comparing the FL and BASELINE solvers.

A sweep solves one scenario at many (eta0, trust) pairs and scores each
solve by its distance ``q`` to a reference equilibrium computed by the same
variant at vetted settings. A sample succeeds when it converged and
``q <= qstar``.
"""

from __future__ import annotations

import hashlib
import json
import math
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, field
from pathlib import Path
from typing import Optional

import numpy as np

from .errors import ReferenceSolveError
from .ilq_solver import BASELINE, FL, SolverConfig, solve
from .scenarios import Scenario, resolve
from .trajectory import Trajectory

QSTAR = 2.0
# histogram edges as multiples of q*; the last bin is open and also takes
# samples without a finite q
BIN_EDGES = (0.0, 0.25, 0.5, 0.75, 1.0, 2.0, 4.0, 8.0)

DEFAULT_RANGES = {
    "intersection": ((0.1, 0.75), (1.0, 10.0)),
    "roundabout": ((0.1, 1.0), (1.0, 50.0)),
    "overtaking": ((0.1, 1.0), (1.0, 50.0)),
}

# the tightened tolerance needs more iterations than a sweep sample is allowed
REFERENCE_SETTINGS = dict(eta0=0.5, trust=5.0, tolerance=1e-3, max_iterations=500)


def quality(traj: Trajectory, ref: Trajectory) -> float:
    """Largest joint position distance between two trajectories over time."""
    if traj.times.shape != ref.times.shape or not np.allclose(traj.times, ref.times, rtol=0, atol=1e-9):
        raise ValueError("trajectories are sampled on different time grids")
    if tuple(traj.state_dims) != tuple(ref.state_dims):
        raise ValueError("trajectories describe different player sets")
    diff = traj.positions() - ref.positions()
    dist = np.sqrt(np.sum(diff**2, axis=(1, 2)))
    if not np.all(np.isfinite(dist)):
        return math.inf
    return float(np.max(dist))


def trajectory_hash(traj: Trajectory) -> str:
    return hashlib.sha256(traj.to_json().encode()).hexdigest()


@dataclass(frozen=True)
class Reference:
    variant: str
    trajectory: Trajectory
    sha256: str


def make_reference(scenario: Scenario, variant: str, drop_terms: bool = True) -> Reference:
    """Equilibrium used to score sweep samples of ``variant``."""
    cfg = SolverConfig(variant=variant, drop_terms=drop_terms, **REFERENCE_SETTINGS)
    result = solve(scenario, cfg)
    if not result.converged or result.trajectory is None:
        raise ReferenceSolveError(
            f"{variant} reference solve on {scenario.name!r} did not converge ({result.failure}); "
            "review the scenario weights or the reference settings")
    return Reference(variant, result.trajectory, trajectory_hash(result.trajectory))


def save_reference(ref: Reference, path) -> None:
    Path(path).write_text(ref.trajectory.to_json())


def load_reference(path, variant: str, sha256: Optional[str] = None) -> Reference:
    text = Path(path).read_text()
    digest = hashlib.sha256(text.encode()).hexdigest()
    if sha256 is not None and digest != sha256:
        raise ReferenceSolveError(f"reference {path} has hash {digest}, expected {sha256}")
    return Reference(variant, Trajectory.from_json(text), digest)


@dataclass(frozen=True)
class SweepSpec:
    scenario: str = "intersection"
    variants: tuple = (FL, BASELINE)
    eta0_range: tuple = (0.1, 0.75)
    trust_range: tuple = (1.0, 10.0)
    samples: int = 324
    mode: str = "grid"
    seed: int = 0
    qstar: float = QSTAR
    drop_terms: bool = True
    references: Optional[dict] = None     # variant -> reference file; solved fresh when absent
    reference_hashes: Optional[dict] = None

    def __post_init__(self):
        object.__setattr__(self, "variants", tuple(self.variants))
        object.__setattr__(self, "eta0_range", tuple(map(float, self.eta0_range)))
        object.__setattr__(self, "trust_range", tuple(map(float, self.trust_range)))
        for name in ("eta0_range", "trust_range"):
            lo, hi = getattr(self, name)
            if not lo <= hi:
                raise ValueError(f"{name} is empty: {lo} > {hi}")
        if not (0 < self.eta0_range[0] and self.eta0_range[1] <= 1):
            raise ValueError("eta0 values must lie in (0, 1]")
        if not self.trust_range[0] > 0:
            raise ValueError("trust region sizes must be positive")
        if self.samples < 1:
            raise ValueError("a sweep needs at least one sample")
        if not self.qstar > 0:
            raise ValueError("qstar must be positive")
        if self.mode not in ("grid", "random"):
            raise ValueError(f"unknown sampling mode {self.mode!r}")
        if self.mode == "grid" and math.isqrt(self.samples) ** 2 != self.samples:
            raise ValueError("grid mode needs a square sample count")
        for v in self.variants:
            if v not in (FL, BASELINE):
                raise ValueError(f"unknown variant {v!r}")

    @classmethod
    def for_scenario(cls, scenario: str, **kw) -> "SweepSpec":
        eta, trust = DEFAULT_RANGES.get(scenario, DEFAULT_RANGES["intersection"])
        kw.setdefault("eta0_range", eta)
        kw.setdefault("trust_range", trust)
        return cls(scenario=scenario, **kw)

    def points(self) -> list[tuple[float, float]]:
        """The (eta0, trust) pairs, eta0-major in grid mode."""
        if self.mode == "grid":
            m = math.isqrt(self.samples)
            etas = np.linspace(*self.eta0_range, m)
            trusts = np.linspace(*self.trust_range, m)
            return [(float(e), float(t)) for e in etas for t in trusts]
        rng = np.random.default_rng(self.seed)
        etas = rng.uniform(*self.eta0_range, self.samples)
        trusts = rng.uniform(*self.trust_range, self.samples)
        return [(float(e), float(t)) for e, t in zip(etas, trusts)]

    def to_dict(self) -> dict:
        d = asdict(self)
        d["variants"] = list(self.variants)
        d["eta0_range"] = list(self.eta0_range)
        d["trust_range"] = list(self.trust_range)
        return d


@dataclass
class SweepSample:
    index: int
    eta0: float
    trust: float
    variant: str
    converged: bool
    q: Optional[float]
    iterations: int
    runtime_s: float
    failure: Optional[str]
    accepted_steps: int = 0
    step_violations: int = 0      # accepted steps breaking the trust region or entering the singular set
    max_step: float = 0.0
    linearizations: int = 0       # dynamics-system constructions during the solve

    def success(self, qstar: float) -> bool:
        return self.converged and self.q is not None and self.q <= qstar


@dataclass
class VariantReport:
    variant: str
    reference_sha256: str
    samples: list
    qstar: float
    success_fraction: float = 0.0
    converged_fraction: float = 0.0
    histogram: list = field(default_factory=list)
    runtime_mean: Optional[float] = None
    runtime_std: Optional[float] = None

    def __post_init__(self):
        self.refresh()

    def successes(self) -> list:
        return [s for s in self.samples if s.success(self.qstar)]

    def refresh(self) -> None:
        n = len(self.samples)
        ok = self.successes()
        self.success_fraction = len(ok) / n if n else 0.0
        self.converged_fraction = sum(s.converged for s in self.samples) / n if n else 0.0
        self.histogram = histogram([s.q for s in self.samples], self.qstar)
        self.runtime_mean, self.runtime_std = runtime_stats([s.runtime_s for s in ok])


@dataclass
class SweepReport:
    spec: SweepSpec
    variants: dict          # variant -> VariantReport
    references: dict = field(default_factory=dict, repr=False, compare=False)   # not serialized

    def to_dict(self) -> dict:
        out = {"spec": self.spec.to_dict(), "bin_edges": [e * self.spec.qstar for e in BIN_EDGES], "variants": {}}
        for v, rep in self.variants.items():
            out["variants"][v] = {
                "reference_sha256": rep.reference_sha256,
                "success_fraction": rep.success_fraction,
                "converged_fraction": rep.converged_fraction,
                "histogram": rep.histogram,
                "runtime_mean": rep.runtime_mean,
                "runtime_std": rep.runtime_std,
                "samples": [_sample_dict(s) for s in rep.samples],
            }
        return out

    def to_json(self) -> str:
        return json.dumps(_json_safe(self.to_dict()), indent=2, sort_keys=True) + "\n"

    @classmethod
    def from_dict(cls, d: dict) -> "SweepReport":
        spec = SweepSpec(**{k: tuple(v) if isinstance(v, list) else v for k, v in d["spec"].items()})
        variants = {}
        # JSON keys are sorted; restore the spec's variant order
        for v in sorted(d["variants"], key=lambda name: spec.variants.index(name)):
            rep = d["variants"][v]
            samples = [SweepSample(**{k: (math.inf if k == "q" and val == "inf" else val) for k, val in s.items()})
                       for s in rep["samples"]]
            variants[v] = VariantReport(v, rep["reference_sha256"], samples, spec.qstar)
        return cls(spec, variants)

    @classmethod
    def from_json(cls, text: str) -> "SweepReport":
        return cls.from_dict(json.loads(text))


def _sample_dict(s: SweepSample) -> dict:
    return asdict(s)


def _json_safe(obj):
    if isinstance(obj, float) and not math.isfinite(obj):
        return "inf" if obj > 0 else str(obj)
    if isinstance(obj, dict):
        return {k: _json_safe(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_json_safe(v) for v in obj]
    return obj


def histogram(qs, qstar: float) -> list[int]:
    """Counts per bin; edges are ``BIN_EDGES * qstar`` and the last bin is open."""
    edges = np.array([e * qstar if e > 0 else 0.0 for e in BIN_EDGES])
    counts = [0] * len(edges)
    for q in qs:
        if q is None or not math.isfinite(q):
            counts[-1] += 1
        else:
            counts[int(np.searchsorted(edges, q, side="right")) - 1] += 1
    return counts


def runtime_stats(values) -> tuple[Optional[float], Optional[float]]:
    """Mean and population standard deviation; (None, None) for an empty set."""
    if len(values) == 0:
        return None, None
    a = np.asarray(values, dtype=float)
    return float(a.mean()), float(a.std())


def _audit_step(coords, trust: float, linear: bool):
    """Post-hoc check of one accepted step, independent of the solver's own test."""
    def check(old, new) -> tuple[bool, float]:
        dev = float(np.max(np.abs(new.states - old.states)))
        ok = bool(np.isfinite(dev) and dev < trust)
        if linear:
            d = coords.dynamics
            for i, fl in enumerate(coords.players):
                xi = new.states[:, d.state_slice(i)]
                x = np.stack(fl.state_from_linear_components(tuple(xi.T)), -1)
                M, _ = fl.decoupling_matrix(x)
                with np.errstate(all="ignore"):
                    det = np.linalg.det(M)
                    ok &= bool(np.all(np.isfinite(M)) and np.all(np.abs(det) > 0))
                    ok &= not np.any(fl.linear_singular(xi))
        return ok, dev
    return check


def run_sample(args) -> SweepSample:
    index, scenario, variant, eta0, trust, drop_terms, ref = args
    cfg = SolverConfig(eta0=eta0, trust=trust, variant=variant, drop_terms=drop_terms)
    audit = _audit_step(scenario.coords, trust, variant == FL)
    steps = []
    result = solve(scenario, cfg, on_accept=lambda old, new: steps.append((old, new)))
    checks = [audit(old, new) for old, new in steps]
    q = None if result.trajectory is None else quality(result.trajectory, ref)
    return SweepSample(index, eta0, trust, variant, bool(result.converged), q, int(result.iterations),
                       float(result.runtime), result.failure, len(checks),
                       sum(not ok for ok, _ in checks), max((d for _, d in checks), default=0.0),
                       int(result.linearizations))


def run_sweep(spec: SweepSpec, jobs: int = 1, references: Optional[dict] = None,
              scenario: Optional[Scenario] = None) -> SweepReport:
    """Solve every sample; individual failures are recorded, never raised."""
    scenario = scenario if scenario is not None else resolve(spec.scenario)
    refs = dict(references or {})
    for v in spec.variants:
        if v in refs:
            continue
        if spec.references and v in spec.references:
            pinned = (spec.reference_hashes or {}).get(v)
            refs[v] = load_reference(spec.references[v], v, pinned)
        else:
            refs[v] = make_reference(scenario, v, spec.drop_terms)
    points = spec.points()
    variants = {}
    for v in spec.variants:
        tasks = [(i, scenario, v, e, t, spec.drop_terms, refs[v].trajectory) for i, (e, t) in enumerate(points)]
        if jobs > 1:
            with ProcessPoolExecutor(max_workers=jobs) as pool:
                samples = list(pool.map(run_sample, tasks, chunksize=4))
        else:
            samples = [run_sample(t) for t in tasks]
        samples.sort(key=lambda s: s.index)
        variants[v] = VariantReport(v, refs[v].sha256, samples, spec.qstar)
    return SweepReport(spec, variants, refs)


CSV_COLUMNS = ("eta0", "trust", "variant", "converged", "q", "iterations", "runtime_s", "failure")


def samples_csv(report: SweepReport) -> str:
    lines = [",".join(CSV_COLUMNS)]
    for rep in report.variants.values():
        for s in rep.samples:
            q = "" if s.q is None else repr(float(s.q))
            lines.append(",".join([repr(s.eta0), repr(s.trust), s.variant, str(s.converged).lower(), q,
                                   str(s.iterations), repr(s.runtime_s), s.failure or ""]))
    return "\n".join(lines) + "\n"


def emit_artifacts(report: SweepReport, out_dir, trajectory: Optional[Trajectory] = None,
                   lanes: Optional[dict] = None) -> list[Path]:
    """Write samples.csv, report.json, scatter.svg, hist.svg and (given a trajectory) trajectory.svg."""
    from . import svg

    out = Path(out_dir)
    try:
        out.mkdir(parents=True, exist_ok=True)
    except OSError as err:
        raise OSError(f"cannot create output directory {out}: {err}") from err
    files = {
        "samples.csv": samples_csv(report),
        "report.json": report.to_json(),
        "scatter.svg": svg.scatter(report),
        "hist.svg": svg.histograms(report),
    }
    if trajectory is not None:
        files["trajectory.svg"] = svg.trajectory_plot(trajectory, lanes)
    written = []
    for name, text in files.items():
        path = out / name
        try:
            path.write_text(text)
        except OSError as err:
            raise OSError(f"cannot write {path}: {err}") from err
        written.append(path)
    return written
