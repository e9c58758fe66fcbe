import json

import numpy as np
import pytest

from flgames.cost import NominalSpeed, Proximity, RouteProgress, point_at_arclength
from flgames.dynamics import BICYCLE6, UNICYCLE4
from flgames.errors import ScenarioError
from flgames.feedback_linearization import V_MIN
from flgames.ilq_solver import SolverConfig, solve
from flgames.scenarios import BUILTINS, build_intersection, build_overtaking, build_roundabout, load, loads, resolve


def test_intersection_layout():
    s = build_intersection()
    assert [p.kind for p in s.players] == [BICYCLE6, BICYCLE6, UNICYCLE4]
    assert s.dynamics.n == 16
    for i, pc in enumerate(s.costs):
        others = {t.other for t in pc.terms if isinstance(t, Proximity)}
        assert others == set(range(3)) - {i}
    for pc in s.costs[:2]:
        assert any(isinstance(t, NominalSpeed) for t in pc.terms)


@pytest.mark.parametrize("build,N", [(build_roundabout, 4), (build_overtaking, 3)])
def test_route_progress_scenarios(build, N):
    s = build()
    assert s.num_players == N
    assert all(p.kind == BICYCLE6 for p in s.players)
    for pc in s.costs:
        assert any(isinstance(t, RouteProgress) for t in pc.terms)
        assert not any(isinstance(t, NominalSpeed) for t in pc.terms)
        assert pc.mode in ("native-linear", "mixed", "transformed")


def test_roundabout_reference_moves_along_lane():
    s = build_roundabout()
    times = np.linspace(0, s.horizon, 11)
    for pc in s.costs:
        term = next(t for t in pc.terms if isinstance(t, RouteProgress))
        poly = np.array(term.polyline)
        np.testing.assert_allclose(term.reference(times), point_at_arclength(poly, term.s0 + term.v_nominal * times))


def test_roundabout_arc_points_lie_on_circle():
    s = build_roundabout()
    for poly in s.lanes.values():
        r = np.hypot(*np.array(poly[1:-1]).T)
        np.testing.assert_allclose(r, 12.0, atol=1e-5)


def test_overtaking_lanes_are_straight_and_parallel():
    s = build_overtaking()
    ys = set()
    for poly in s.lanes.values():
        p = np.array(poly)
        assert np.all(p[:, 1] == p[0, 1])
        ys.add(p[0, 1])
    assert len(ys) == len(s.lanes) >= 2
    x0 = np.array(s.x0).reshape(3, 6)
    for pc, x in zip(s.costs, x0):
        term = next(t for t in pc.terms if isinstance(t, RouteProgress))
        assert x[3] == term.v_nominal


@pytest.mark.parametrize("name", sorted(BUILTINS))
def test_builtins_start_nonsingular(name):
    s = resolve(name)
    x0 = np.array(s.x0)
    for i, p in enumerate(s.players):
        assert x0[s.dynamics.state_slice(i)][3] >= V_MIN


@pytest.mark.parametrize("name", sorted(BUILTINS))
def test_round_trip_is_byte_identical(name, tmp_path):
    s = resolve(name)
    path = tmp_path / "s.json"
    s.save(path)
    again = load(path)
    assert again == s
    assert again.dumps() == path.read_text()


def test_float_round_trip_is_exact():
    s = build_roundabout()
    again = loads(s.dumps())
    assert again.x0 == s.x0
    assert again.lanes == s.lanes


def doc():
    return json.loads(build_intersection().dumps())


@pytest.mark.parametrize("mutate,path", [
    (lambda d: d["players"][1]["dynamics"].pop("kind"), "players/1/dynamics"),
    (lambda d: d["players"][0]["costs"][0].update(weight="heavy"), "players/0/costs/0/weight"),
    (lambda d: d["players"][2]["costs"][0].update(lane="nowhere"), "players/2/costs/0/lane"),
    (lambda d: d.pop("dt"), "<root>"),
    (lambda d: d["players"][0]["costs"].append({"type": "teleport"}), "players/0/costs/6"),
])
def test_schema_errors_name_the_path(mutate, path):
    d = doc()
    mutate(d)
    with pytest.raises(ScenarioError) as info:
        loads(json.dumps(d))
    assert info.value.path == path
    assert path in str(info.value)


def test_zero_initial_speed_is_an_invariant_error():
    d = doc()
    d["players"][0]["initial_state"][3] = 0.0
    with pytest.raises(ScenarioError) as info:
        loads(json.dumps(d))
    assert info.value.path == "players/0/initial_state"


def test_bad_proximity_partner():
    d = doc()
    d["players"][0]["costs"][3]["other"] = 0
    with pytest.raises(ScenarioError):
        loads(json.dumps(d))


def test_invalid_json():
    with pytest.raises(ScenarioError):
        loads("{not json")


@pytest.mark.slow
@pytest.mark.parametrize("name", sorted(BUILTINS))
def test_builtins_solvable_by_fl(name):
    res = solve(resolve(name), SolverConfig(eta0=0.5, trust=5.0))
    assert res.converged


@pytest.mark.slow
def test_intersection_reference_keeps_clear():
    # at the reference equilibrium no pair comes within the proximity radius
    from flgames.bench import make_reference
    s = build_intersection()
    for variant in ("fl", "baseline"):
        pos = make_reference(s, variant).trajectory.positions()
        for pc in s.costs:
            for term in pc.terms:
                if isinstance(term, Proximity):
                    d = np.linalg.norm(pos[:, pc.player] - pos[:, term.other], axis=1)
                    assert d.min() > term.d_min
