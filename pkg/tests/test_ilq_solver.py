import numpy as np
import pytest

from flgames.cost import ControlEffort, GoalPosition, LaneCenter, NominalSpeed, PlayerCost, Proximity, RouteProgress
from flgames.dynamics import BICYCLE6, UNICYCLE4, PlayerDynamics
from flgames.errors import ScenarioError, SingularityError
from flgames.ilq_solver import (BASELINE, FL, SolverConfig, Strategy, _Problem, rollout, solve, step_toward,
                                zero_strategy)
from flgames.lq_game import AffineStrategy
from flgames.scenarios import Scenario, build_intersection

ROAD = ((-10.0, 0.0), (200.0, 0.0))


def crossing(horizon=4.0):
    """Two bicycles on crossing roads; small enough for quick solves."""
    lanes = {"east": ((-30.0, 0.0), (60.0, 0.0)), "north": ((10.0, -30.0), (10.0, 60.0))}
    players = (PlayerDynamics(BICYCLE6, 2.5), PlayerDynamics(BICYCLE6, 2.5))
    x0 = [0.0, 0.0, 0.0, 5.0, 0.0, 0.0, 10.0, -12.0, np.pi / 2, 5.0, 0.0, 0.0]
    costs = [PlayerCost(i, [LaneCenter(lanes[name], 1.0), NominalSpeed(6.0, 2.0), Proximity(1 - i, 3.0, 20.0),
                            ControlEffort((1.0, 1.0))])
             for i, name in enumerate(("east", "north"))]
    return Scenario("crossing", players, x0, costs, lanes, horizon=horizon)


def one_iteration(scenario, variant):
    p = _Problem(scenario, SolverConfig(variant=variant))
    op = p.rollout(p.initial_strategy())
    return p, op, p.solve_lq(op)


@pytest.mark.parametrize("variant", [FL, BASELINE])
def test_zero_step_reproduces_operating_point(variant):
    p, op, lq = one_iteration(crossing(), variant)
    again = p.rollout(Strategy(op, lq, 0.0))
    assert np.max(np.abs(again.states - op.states)) <= 1e-12
    assert np.max(np.abs(again.controls - op.controls)) <= 1e-12


@pytest.mark.parametrize("variant", [FL, BASELINE])
def test_full_step_applies_affine_feedback(variant):
    p, op, lq = one_iteration(crossing(), variant)
    new = p.rollout(Strategy(op, lq, 1.0))
    for t in range(p.K):
        expected = op.controls[t] - lq.P[t] @ (new.states[t] - op.states[t]) - lq.alpha[t]
        np.testing.assert_array_equal(new.controls[t], expected)


def test_zero_feedforward_always_accepted():
    p, op, lq = one_iteration(crossing(), FL)
    flat = AffineStrategy(lq.P, np.zeros_like(lq.alpha), lq.slices)
    strategy, new, dev = step_toward(p, op, flat)
    assert strategy.eta == p.config.eta0
    assert dev == 0.0


def test_linesearch_shrinks_until_inside_trust_region():
    scenario = crossing()
    p = _Problem(scenario, SolverConfig(trust=0.5, eta0=1.0))
    op = p.rollout(p.initial_strategy())
    lq = p.solve_lq(op)
    full = np.max(np.abs(p.rollout(Strategy(op, lq, 1.0)).states - op.states))
    assert full >= 0.5
    strategy, new, dev = step_toward(p, op, lq)
    assert strategy.eta < 1.0 and dev < 0.5


@pytest.mark.parametrize("variant", [FL, BASELINE])
def test_linearization_counts(variant):
    res = solve(crossing(), SolverConfig(variant=variant))
    assert res.converged
    if variant == FL:
        assert res.linearizations == 1
    else:
        assert res.linearizations >= res.iterations


def test_single_player_native_linear_converges_in_two_iterations():
    players = (PlayerDynamics(UNICYCLE4),)
    costs = [PlayerCost(0, [RouteProgress(ROAD, 3.0, 1.0, 10.0), ControlEffort((1.0, 1.0))])]
    scenario = Scenario("single", players, [0.0, 1.0, 0.3, 2.0], costs, {"road": ROAD}, horizon=5.0)
    res = solve(scenario, SolverConfig(eta0=1.0, trust=100.0, eta_floor=1e-3))
    assert res.converged and res.iterations <= 2


def test_goal_at_start_with_zero_speed_converges_in_one_iteration():
    # speed zero is outside the feedback-linearizable set, so this runs in original coordinates
    players = (PlayerDynamics(UNICYCLE4),)
    costs = [PlayerCost(0, [GoalPosition((0.0, 0.0), 1.0), ControlEffort((1.0, 1.0), "u")])]
    scenario = Scenario("rest", players, [0.0, 0.0, 0.0, 0.5], costs)
    p = _Problem(scenario, SolverConfig(variant=BASELINE), x0=[0.0, 0.0, 0.0, 0.0])
    op = p.rollout(p.initial_strategy())
    lq = p.solve_lq(op)
    strategy, new, dev = step_toward(p, op, lq)
    # the first accepted step already changes nothing, which is the convergence test
    assert dev == 0.0 < p.config.tolerance
    assert np.all(new.controls == 0) and np.all(new.states == 0)


def test_rest_start_rejected_by_singularity_guard():
    players = (PlayerDynamics(UNICYCLE4),)
    with pytest.raises(ScenarioError):
        Scenario("rest", players, [0.0, 0.0, 0.0, 0.0], [PlayerCost(0, [])])
    scenario = Scenario("slow", players, [0.0, 0.0, 0.0, 1.0], [PlayerCost(0, [])])
    with pytest.raises(SingularityError):
        rollout(scenario, zero_strategy(scenario), x0=[0.0, 0.0, 0.0, 0.0])


def test_zero_strategy_rolls_out_constant_velocity():
    players = (PlayerDynamics(UNICYCLE4),)
    scenario = Scenario("coast", players, [1.0, 2.0, np.pi / 4, 2.0], [PlayerCost(0, [])], horizon=3.0)
    op = rollout(scenario, zero_strategy(scenario))
    t = 0.1 * np.arange(31)
    v = np.sqrt(2.0)
    np.testing.assert_allclose(op.states, np.column_stack([1 + v * t, np.full(31, v), 2 + v * t, np.full(31, v)]),
                               atol=1e-12)


def test_solution_respects_feedback_linearization():
    # replaying the converged auxiliary inputs through the nonlinear model stays on the linear trajectory
    scenario = Scenario("fine", crossing().players, crossing().x0, crossing().costs, crossing().lanes,
                        dt=0.01, horizon=3.0)
    res = solve(scenario, SolverConfig())
    assert res.converged
    traj = res.trajectory
    coords, dyn = scenario.coords, scenario.dynamics
    xs = dyn.integrate(np.array(scenario.x0), lambda t, x: coords.fl_control(x, traj.z[t]), 0.01, len(traj.z))
    err = np.max(np.abs(xs[:, [0, 1, 6, 7]] - traj.x[:, [0, 1, 6, 7]]))
    assert err <= 1e-3


@pytest.mark.parametrize("variant", [FL, BASELINE])
def test_accepted_steps_respect_trust_region_and_guards(variant):
    scenario = crossing()
    cfg = SolverConfig(variant=variant, eta0=0.8, trust=2.0)
    coords = scenario.coords
    seen = []

    def audit(old, new):
        seen.append(np.max(np.abs(new.states - old.states)))
        xi = new.states if variant == FL else coords.to_linear_state(new.states)
        assert not np.any(coords.singular_knots(xi))
        assert np.array_equal(new.states[0], old.states[0])

    res = solve(scenario, cfg, on_accept=audit)
    assert seen and max(seen) < cfg.trust
    assert len(seen) == len(res.history)
    assert all(h.max_deviation < cfg.trust for h in res.history)


def test_converged_result_meets_tolerance():
    res = solve(crossing(), SolverConfig())
    assert res.converged and res.failure is None
    assert res.history[-1].change < SolverConfig().tolerance
    assert res.trajectory.x.shape == (41, 12)


def test_solves_are_deterministic():
    a = solve(crossing(), SolverConfig(eta0=0.3, trust=3.0))
    b = solve(crossing(), SolverConfig(eta0=0.3, trust=3.0))
    assert a.trajectory == b.trajectory
    assert a.iterations == b.iterations


def test_failures_are_reported():
    capped = solve(crossing(), SolverConfig(max_iterations=2))
    assert not capped.converged and capped.failure == "max_iterations" and capped.iterations == 2
    assert capped.trajectory is not None
    stuck = solve(crossing(), SolverConfig(trust=1e-4, eta0=0.5))
    assert not stuck.converged and stuck.failure == "linesearch_exhausted"


@pytest.mark.parametrize("kw", [
    dict(eta0=0.0), dict(eta0=1.5), dict(trust=0.0), dict(tolerance=0.0), dict(eta_floor=0.6, eta0=0.5),
    dict(shrink=1.0), dict(variant="newton"),
])
def test_config_validation(kw):
    with pytest.raises(ValueError):
        SolverConfig(**kw)


@pytest.mark.slow
def test_intersection_fl_default_solve():
    res = solve(build_intersection(), SolverConfig(eta0=0.5, trust=5.0))
    assert res.converged
