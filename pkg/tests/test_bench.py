import csv
import io
import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from flgames import bench
from flgames.bench import (QSTAR, SweepReport, SweepSample, SweepSpec, VariantReport, histogram, quality,
                           runtime_stats)
from flgames.errors import ReferenceSolveError
from flgames.cost import ControlEffort, LaneCenter, NominalSpeed, PlayerCost
from flgames.dynamics import BICYCLE6, UNICYCLE4, PlayerDynamics
from flgames.ilq_solver import FL, SolverConfig, solve
from flgames.scenarios import Scenario
from flgames.trajectory import Trajectory


def make_traj(positions, dims=(4,)):
    """Trajectory with the given (K+1, N, 2) positions and random other components."""
    positions = np.asarray(positions, dtype=float)
    K1, N, _ = positions.shape
    rng = np.random.default_rng(0)
    n = sum(dims)
    x = rng.normal(size=(K1, n))
    off = 0
    for i, d in enumerate(dims):
        x[:, off:off + 2] = positions[:, i]
        off += d
    k = 2 * N
    return Trajectory(0.1 * np.arange(K1), x, x.copy(), rng.normal(size=(K1 - 1, k)),
                      rng.normal(size=(K1 - 1, k)), tuple(dims), (2,) * N)


def test_quality_examples():
    p = np.random.default_rng(1).normal(size=(11, 1, 2))
    a = make_traj(p)
    assert quality(a, a) == 0.0
    assert quality(make_traj(p + [3.0, 4.0]), a) == pytest.approx(5.0)
    far = p.copy()
    far[6] += [100.0, 0.0]
    assert quality(make_traj(far), a) >= 100.0
    blown = p.copy()
    blown[3] = np.nan
    assert quality(make_traj(blown), a) == math.inf


def test_quality_joint_norm_over_players():
    p = np.zeros((5, 2, 2))
    q = p.copy()
    q[:, 0] += [3.0, 0.0]
    q[:, 1] += [0.0, 4.0]
    assert quality(make_traj(q, (4, 4)), make_traj(p, (4, 4))) == pytest.approx(5.0)


def test_quality_rejects_mismatched_trajectories():
    a = make_traj(np.zeros((5, 1, 2)))
    with pytest.raises(ValueError):
        quality(a, make_traj(np.zeros((6, 1, 2))))
    with pytest.raises(ValueError):
        quality(make_traj(np.zeros((5, 1, 2)), (6,)), a)


@settings(max_examples=50, deadline=None)
@given(seed=st.integers(0, 2**31 - 1))
def test_quality_ignores_non_position_dimensions(seed):
    rng = np.random.default_rng(seed)
    a = make_traj(rng.normal(size=(8, 2, 2)), (6, 4))
    b = make_traj(rng.normal(size=(8, 2, 2)), (6, 4))
    before = quality(a, b)
    for idx in (2, 3, 4, 5, 8, 9):
        a.x[:, idx] += rng.normal(size=8)
        b.xi[:, idx] += rng.normal(size=8)
    assert quality(a, b) == before


def test_histogram_counts_sum_to_samples():
    qs = [0.0, 0.4, 1.0, 2.0, 3.9, 16.0, 100.0, None, math.inf]
    counts = histogram(qs, QSTAR)
    assert sum(counts) == len(qs)
    assert counts == [2, 0, 1, 0, 2, 0, 0, 4]


@settings(max_examples=50, deadline=None)
@given(qs=st.lists(st.one_of(st.none(), st.floats(0, 1e6)), max_size=50), qstar=st.floats(0.1, 10))
def test_histogram_total_property(qs, qstar):
    assert sum(histogram(qs, qstar)) == len(qs)


def welford(values):
    n, mean, m2 = 0, 0.0, 0.0
    for v in values:
        n += 1
        d = v - mean
        mean += d / n
        m2 += d * (v - mean)
    return mean, math.sqrt(m2 / n)


@settings(max_examples=100, deadline=None)
@given(values=st.lists(st.floats(0.01, 100.0), min_size=1, max_size=200))
def test_runtime_stats_match_streaming_pass(values):
    mean, std = runtime_stats(values)
    m, s = welford(values)
    assert abs(mean - m) <= 1e-12 * max(1.0, abs(m))
    assert abs(std - s) <= 1e-12 * max(1.0, abs(m))


def test_runtime_stats_empty():
    assert runtime_stats([]) == (None, None)


def test_grid_points_are_unique():
    spec = SweepSpec()
    pts = spec.points()
    assert len(pts) == 324 == len(set(pts))
    etas = sorted({e for e, _ in pts})
    trusts = sorted({t for _, t in pts})
    assert len(etas) == len(trusts) == 18
    assert (etas[0], etas[-1], trusts[0], trusts[-1]) == (0.1, 0.75, 1.0, 10.0)


def test_random_points_are_seeded():
    a = SweepSpec(mode="random", samples=50, seed=3).points()
    b = SweepSpec(mode="random", samples=50, seed=3).points()
    c = SweepSpec(mode="random", samples=50, seed=4).points()
    assert a == b != c
    assert all(0.1 <= e <= 0.75 and 1 <= t <= 10 for e, t in a)


@pytest.mark.parametrize("kw", [
    dict(eta0_range=(0.5, 0.4)), dict(trust_range=(2.0, 1.0)), dict(samples=0), dict(qstar=0.0),
    dict(eta0_range=(0.0, 0.5)), dict(eta0_range=(0.5, 1.5)), dict(samples=10), dict(mode="sobol"),
    dict(variants=("newton",)),
])
def test_spec_validation(kw):
    with pytest.raises(ValueError):
        SweepSpec(**kw)


def sample(i, converged, q, runtime=1.0):
    return SweepSample(i, 0.5, 5.0, FL, converged, q, 10, runtime, None if converged else "max_iterations")


def test_infinite_threshold_counts_every_converged_sample():
    samples = [sample(0, True, 50.0), sample(1, False, 1.0), sample(2, True, 0.1), sample(3, True, None)]
    rep = VariantReport(FL, "x", samples, math.inf)
    assert rep.success_fraction == pytest.approx(2 / 4)
    assert sum(rep.histogram) == 4
    samples[3].q = 1e9
    rep.refresh()
    assert rep.success_fraction == rep.converged_fraction == 0.75


def test_statistics_cover_successes_only():
    samples = [sample(0, True, 0.5, 1.0), sample(1, True, 0.5, 3.0), sample(2, True, 9.0, 100.0),
               sample(3, False, 0.1, 50.0)]
    rep = VariantReport(FL, "x", samples, QSTAR)
    assert rep.runtime_mean == 2.0 and rep.runtime_std == 1.0
    assert rep.success_fraction == 0.5


def small_scenario():
    lane = ((-20.0, 0.0), (100.0, 0.0))
    crosswalk = ((10.0, -20.0), (10.0, 40.0))
    players = (PlayerDynamics(BICYCLE6, 2.5), PlayerDynamics(UNICYCLE4))
    costs = [PlayerCost(0, [LaneCenter(lane, 1.0), NominalSpeed(6.0, 2.0), ControlEffort((1.0, 1.0))]),
             PlayerCost(1, [LaneCenter(crosswalk, 1.0), NominalSpeed(1.0, 2.0), ControlEffort((1.0, 1.0))])]
    return Scenario("small", players, [0.0, 1.0, 0.0, 5.0, 0.0, 0.0, 12.0, -8.0, 1.5, 1.0], costs,
                    {"lane": lane, "crosswalk": crosswalk}, horizon=3.0)


@pytest.fixture(scope="module")
def small_report():
    spec = SweepSpec(scenario="small", samples=4, eta0_range=(0.3, 0.9), trust_range=(1.0, 5.0))
    return bench.run_sweep(spec, scenario=small_scenario())


def test_single_sample_sweep_matches_single_solve():
    s = small_scenario()
    spec = SweepSpec(scenario="small", variants=(FL,), samples=1, eta0_range=(0.5, 0.5), trust_range=(5.0, 5.0))
    rep = bench.run_sweep(spec, scenario=s)
    smp = rep.variants[FL].samples[0]
    res = solve(s, SolverConfig(eta0=0.5, trust=5.0))
    assert (smp.eta0, smp.trust) == (0.5, 5.0)
    assert smp.converged == res.converged and smp.iterations == res.iterations
    assert smp.q == quality(res.trajectory, rep.references[FL].trajectory)


def test_sweep_is_deterministic(small_report):
    again = bench.run_sweep(small_report.spec, scenario=small_scenario())
    for v in small_report.variants:
        a, b = small_report.variants[v].samples, again.variants[v].samples
        assert [(s.eta0, s.trust, s.converged, s.q, s.iterations, s.failure) for s in a] == \
               [(s.eta0, s.trust, s.converged, s.q, s.iterations, s.failure) for s in b]


def test_parallel_sweep_matches_serial(small_report):
    par = bench.run_sweep(small_report.spec, jobs=2, scenario=small_scenario())
    for v in small_report.variants:
        assert [(s.index, s.q, s.iterations) for s in par.variants[v].samples] == \
               [(s.index, s.q, s.iterations) for s in small_report.variants[v].samples]


def test_sweep_audits_every_accepted_step(small_report):
    for rep in small_report.variants.values():
        for s in rep.samples:
            assert s.accepted_steps == s.iterations
            assert s.step_violations == 0
            assert s.max_step < s.trust


def test_report_json_round_trip(small_report):
    text = small_report.to_json()
    back = SweepReport.from_json(text)
    assert back.to_json() == text
    assert back.variants[FL].success_fraction == small_report.variants[FL].success_fraction


def test_artifacts(small_report, tmp_path):
    traj = small_report.references[FL].trajectory
    bench.emit_artifacts(small_report, tmp_path / "a", traj, small_scenario().lanes)
    bench.emit_artifacts(SweepReport.from_json(small_report.to_json()), tmp_path / "b", traj,
                         small_scenario().lanes)
    for name in ("samples.csv", "report.json", "scatter.svg", "hist.svg", "trajectory.svg"):
        assert (tmp_path / "a" / name).read_bytes() == (tmp_path / "b" / name).read_bytes(), name
    rows = list(csv.reader(io.StringIO((tmp_path / "a" / "samples.csv").read_text())))
    assert tuple(rows[0]) == bench.CSV_COLUMNS
    assert len(rows) == 1 + sum(len(r.samples) for r in small_report.variants.values())
    assert (tmp_path / "a" / "scatter.svg").read_text().startswith("<svg")


def test_all_success_scatter_is_blue():
    from flgames import svg
    samples = [sample(i, True, 0.1) for i in range(9)]
    rep = SweepReport(SweepSpec(samples=9, variants=(FL,)), {FL: VariantReport(FL, "x", samples, QSTAR)})
    text = svg.scatter(rep)
    assert text.count(svg.BLUE) >= 9 and svg.RED not in text


def test_artifact_errors_name_the_path(small_report, tmp_path):
    blocker = tmp_path / "file"
    blocker.write_text("")
    with pytest.raises(OSError, match=str(blocker)):
        bench.emit_artifacts(small_report, blocker / "out")


def test_reference_round_trip_and_pinning(tmp_path):
    ref = bench.make_reference(small_scenario(), FL)
    path = tmp_path / "ref.json"
    bench.save_reference(ref, path)
    loaded = bench.load_reference(path, FL, ref.sha256)
    assert loaded.trajectory == ref.trajectory
    assert quality(loaded.trajectory, ref.trajectory) == 0.0
    assert bench.make_reference(small_scenario(), FL).sha256 == ref.sha256
    with pytest.raises(ReferenceSolveError, match="hash"):
        bench.load_reference(path, FL, "0" * 64)


def test_reference_failure_is_explicit(monkeypatch):
    monkeypatch.setitem(bench.REFERENCE_SETTINGS, "max_iterations", 1)
    with pytest.raises(ReferenceSolveError, match="review"):
        bench.make_reference(small_scenario(), FL)
