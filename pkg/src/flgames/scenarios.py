"""Benchmark scenarios and their config-file format.

A scenario file is JSON::

    {
      "name": "intersection",
      "dt": 0.1, "horizon": 10.0,
      "lanes": {"north": [[x, y], ...], ...},
      "players": [
        {"dynamics": {"kind": "bicycle6", "L": 2.5},
         "initial_state": [...],
         "costs": [{"type": "lane_center", "lane": "north", "weight": 1.0}, ...]},
        ...
      ]
    }

Lane-based terms (``lane_center``, ``route_progress``) name a lane instead of
repeating its polyline. ``save`` writes a canonical form (sorted keys, fixed
indentation, shortest round-trip floats), so ``save(load(f))`` reproduces a
canonical file byte for byte.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field, fields
from pathlib import Path

import jsonschema
import numpy as np

from .cost import (ControlEffort, GameCost, GoalPosition, LaneCenter, NominalSpeed, PlayerCost, Proximity,
                   RouteProgress, nearest_on_polyline)
from .dynamics import BICYCLE6, UNICYCLE4, MultiPlayerDynamics, PlayerDynamics
from .errors import ScenarioError
from .feedback_linearization import PHI_MAX, V_MIN, JointLinearization

_NUM = {"type": "number"}
_POINT = {"type": "array", "items": _NUM, "minItems": 2, "maxItems": 2}

SCHEMA = {
    "type": "object",
    "required": ["name", "dt", "horizon", "lanes", "players"],
    "additionalProperties": False,
    "properties": {
        "name": {"type": "string"},
        "dt": {"type": "number", "exclusiveMinimum": 0},
        "horizon": {"type": "number", "exclusiveMinimum": 0},
        "v_min": {"type": "number", "exclusiveMinimum": 0},
        "phi_max": {"type": "number", "exclusiveMinimum": 0},
        "lanes": {"type": "object", "additionalProperties": {"type": "array", "items": _POINT, "minItems": 2}},
        "players": {
            "type": "array",
            "minItems": 1,
            "items": {
                "type": "object",
                "required": ["dynamics", "initial_state", "costs"],
                "additionalProperties": False,
                "properties": {
                    "dynamics": {
                        "type": "object",
                        "required": ["kind"],
                        "additionalProperties": False,
                        "properties": {"kind": {"enum": [UNICYCLE4, BICYCLE6]},
                                       "L": {"type": "number", "exclusiveMinimum": 0}},
                    },
                    "initial_state": {"type": "array", "items": _NUM},
                    "costs": {"type": "array", "items": {"type": "object", "required": ["type"]}},
                },
            },
        },
    },
}

_TERM_SCHEMAS = {
    "lane_center": {"required": ["lane", "weight"], "properties": {"lane": {"type": "string"}, "weight": _NUM}},
    "goal_position": {"required": ["point", "weight"],
                      "properties": {"point": _POINT, "weight": _NUM, "activation_time": _NUM}},
    "nominal_speed": {"required": ["v_nominal", "weight"], "properties": {"v_nominal": _NUM, "weight": _NUM}},
    "proximity": {"required": ["other", "weight"],
                  "properties": {"other": {"type": "integer", "minimum": 0}, "d_min": _NUM, "weight": _NUM}},
    "control_effort": {"required": ["weights"],
                       "properties": {"weights": {"type": "array", "items": _NUM}, "space": {"enum": ["u", "z"]}}},
    "route_progress": {"required": ["lane", "v_nominal", "weight"],
                       "properties": {"lane": {"type": "string"}, "v_nominal": _NUM, "weight": _NUM, "s0": _NUM}},
}
_TERM_CLASSES = {
    "lane_center": LaneCenter, "goal_position": GoalPosition, "nominal_speed": NominalSpeed,
    "proximity": Proximity, "control_effort": ControlEffort, "route_progress": RouteProgress,
}
_CLASS_NAMES = {cls: name for name, cls in _TERM_CLASSES.items()}


@dataclass(frozen=True)
class Scenario:
    name: str
    players: tuple            # PlayerDynamics per player
    x0: tuple                 # joint initial state, original coordinates
    costs: tuple              # PlayerCost per player
    lanes: dict = field(default_factory=dict)
    dt: float = 0.1
    horizon: float = 10.0
    v_min: float = V_MIN
    phi_max: float = PHI_MAX

    def __post_init__(self):
        object.__setattr__(self, "players", tuple(self.players))
        object.__setattr__(self, "x0", tuple(float(v) for v in self.x0))
        object.__setattr__(self, "costs", tuple(self.costs))
        object.__setattr__(self, "lanes", {k: tuple(map(tuple, v)) for k, v in self.lanes.items()})
        self.validate()

    def __eq__(self, other):
        if not isinstance(other, Scenario):
            return NotImplemented
        return all(getattr(self, f.name) == getattr(other, f.name) for f in fields(self))

    def __hash__(self):
        return hash((self.name, self.x0))

    @property
    def dynamics(self) -> MultiPlayerDynamics:
        return MultiPlayerDynamics(self.players)

    @property
    def coords(self) -> JointLinearization:
        return JointLinearization(self.dynamics, self.v_min, self.phi_max)

    @property
    def steps(self) -> int:
        return int(round(self.horizon / self.dt))

    @property
    def num_players(self) -> int:
        return len(self.players)

    def game_cost(self) -> GameCost:
        return GameCost(self.costs, self.coords)

    def validate(self) -> None:
        if not self.players:
            raise ScenarioError("a scenario needs at least one player", path="players")
        dyn = self.dynamics
        if len(self.x0) != dyn.n:
            raise ScenarioError(f"initial state has {len(self.x0)} entries, expected {dyn.n}", path="x0")
        if len(self.costs) != len(self.players):
            raise ScenarioError("one cost entry per player is required", path="costs")
        x0 = np.array(self.x0)
        coords = self.coords
        for i, fl in enumerate(coords.players):
            if fl.singular(x0[dyn.state_slice(i)]):
                raise ScenarioError(f"player {i} starts in the singular set (speed below {self.v_min} "
                                    f"or steering beyond {self.phi_max})", path=f"players/{i}/initial_state")
        lane_polys = set(self.lanes.values())
        for i, pc in enumerate(self.costs):
            if pc.player != i:
                raise ScenarioError(f"cost entry {i} belongs to player {pc.player}", path=f"players/{i}/costs")
            for j, term in enumerate(pc.terms):
                where = f"players/{i}/costs/{j}"
                if isinstance(term, Proximity) and not (0 <= term.other < len(self.players) and term.other != i):
                    raise ScenarioError(f"proximity term references invalid player {term.other}", path=where)
                if isinstance(term, (LaneCenter, RouteProgress)) and term.polyline not in lane_polys:
                    raise ScenarioError("lane term references a lane that is not declared", path=where)
                if isinstance(term, ControlEffort) and len(term.weights) != self.players[i].control_dim:
                    raise ScenarioError("control effort needs one weight per input", path=where)

    def lane_name(self, polyline) -> str:
        for name in sorted(self.lanes):
            if self.lanes[name] == polyline:
                return name
        raise ScenarioError("lane not declared")

    # serialization

    def to_dict(self) -> dict:
        dyn = self.dynamics
        players = []
        for i, p in enumerate(self.players):
            d = {"kind": p.kind}
            if p.kind == BICYCLE6:
                d["L"] = p.L
            terms = []
            for term in self.costs[i].terms:
                entry = {"type": _CLASS_NAMES[type(term)]}
                for f in fields(term):
                    v = getattr(term, f.name)
                    if f.name == "polyline":
                        entry["lane"] = self.lane_name(v)
                    elif isinstance(v, tuple):
                        entry[f.name] = list(v)
                    else:
                        entry[f.name] = v
                terms.append(entry)
            players.append({"dynamics": d, "initial_state": list(self.x0[dyn.state_slice(i)]), "costs": terms})
        out = {
            "name": self.name, "dt": self.dt, "horizon": self.horizon,
            "lanes": {k: [list(p) for p in v] for k, v in self.lanes.items()},
            "players": players,
        }
        if self.v_min != V_MIN:
            out["v_min"] = self.v_min
        if self.phi_max != PHI_MAX:
            out["phi_max"] = self.phi_max
        return out

    def dumps(self) -> str:
        return json.dumps(self.to_dict(), indent=2, sort_keys=True) + "\n"

    def save(self, path) -> None:
        Path(path).write_text(self.dumps())


def _schema_error(err: jsonschema.ValidationError, prefix=()) -> ScenarioError:
    path = "/".join(str(p) for p in (*prefix, *err.absolute_path)) or "<root>"
    return ScenarioError(f"{path}: {err.message}", path=path)


def from_dict(doc: dict) -> Scenario:
    try:
        jsonschema.validate(doc, SCHEMA)
    except jsonschema.ValidationError as err:
        raise _schema_error(err) from None
    lanes = doc["lanes"]
    players, x0, costs = [], [], []
    for i, p in enumerate(doc["players"]):
        dyn = p["dynamics"]
        if dyn["kind"] == BICYCLE6 and "L" not in dyn:
            raise ScenarioError(f"players/{i}/dynamics: 'L' is required for bicycle6", path=f"players/{i}/dynamics")
        model = PlayerDynamics(dyn["kind"], float(dyn.get("L", 0.0)))
        if len(p["initial_state"]) != model.state_dim:
            raise ScenarioError(f"players/{i}/initial_state: expected {model.state_dim} entries",
                                path=f"players/{i}/initial_state")
        players.append(model)
        x0.extend(p["initial_state"])
        terms = []
        for j, entry in enumerate(p["costs"]):
            where = f"players/{i}/costs/{j}"
            kind = entry["type"]
            if kind not in _TERM_SCHEMAS:
                raise ScenarioError(f"{where}: unknown cost type {kind!r}", path=where)
            sub = dict(_TERM_SCHEMAS[kind], type="object", additionalProperties=False)
            sub["properties"] = dict(sub["properties"], type={"const": kind})
            try:
                jsonschema.validate(entry, sub)
            except jsonschema.ValidationError as err:
                raise _schema_error(err, ("players", i, "costs", j)) from None
            kwargs = {k: v for k, v in entry.items() if k != "type"}
            if "lane" in kwargs:
                lane = kwargs.pop("lane")
                if lane not in lanes:
                    path = where + "/lane"
                    raise ScenarioError(f"{path}: unknown lane {lane!r}", path=path)
                kwargs["polyline"] = lanes[lane]
            try:
                terms.append(_TERM_CLASSES[kind](**kwargs))
            except ValueError as err:
                raise ScenarioError(f"{where}: {err}", path=where) from None
        costs.append(PlayerCost(i, terms))
    extra = {k: doc[k] for k in ("v_min", "phi_max") if k in doc}
    return Scenario(doc["name"], players, x0, costs, lanes, doc["dt"], doc["horizon"], **extra)


def loads(text: str) -> Scenario:
    try:
        doc = json.loads(text)
    except json.JSONDecodeError as err:
        raise ScenarioError(f"not valid JSON: {err}") from None
    return from_dict(doc)


def load(path) -> Scenario:
    return loads(Path(path).read_text())


def save(scenario: Scenario, path) -> None:
    scenario.save(path)


# built-in benchmarks

CAR_L = 2.5


def _arc(center, radius, a0, a1, num):
    ang = np.linspace(a0, a1, num)
    return [(center[0] + radius * np.cos(a), center[1] + radius * np.sin(a)) for a in ang]


def _round(points, digits=6):
    return [(round(float(x), digits), round(float(y), digits)) for x, y in points]


def _arclength_of(polyline, p) -> float:
    return float(nearest_on_polyline(np.asarray(polyline, dtype=float), np.asarray([p], dtype=float))[3][0])


def build_intersection() -> Scenario:
    """Two cars and a pedestrian at a four-way intersection.

    Car 0 drives north, car 1 comes from the east and turns left to head
    south, the pedestrian walks east on a crosswalk north of the junction.
    Start positions are staggered so that car 0 clears the junction before
    car 1 turns across its path.
    """
    return _intersection()


def _intersection(car0_y=-22.0, car1_x=40.0, ped_x=-12.0, v_car=6.0, v_ped=1.2) -> Scenario:
    lanes = {
        "north": _round([(2.0, -40.0), (2.0, 60.0)]),
        "west_left": _round([(60.0, 2.0), (6.0, 2.0)] + _arc((6.0, -6.0), 8.0, np.pi / 2, np.pi, 10)[1:]
                            + [(-2.0, -60.0)]),
        "crosswalk": _round([(-20.0, 14.0), (20.0, 14.0)]),
    }
    players = (PlayerDynamics(BICYCLE6, CAR_L), PlayerDynamics(BICYCLE6, CAR_L), PlayerDynamics(UNICYCLE4))
    x0 = [2.0, car0_y, np.pi / 2, 5.0, 0.0, 0.0,
          car1_x, 2.0, np.pi, 5.0, 0.0, 0.0,
          ped_x, 14.0, 0.0, 1.0]
    car_effort = (1.0, 1.0)
    costs = (
        PlayerCost(0, [LaneCenter(lanes["north"], 1.0), NominalSpeed(v_car, 4.0),
                       GoalPosition((2.0, 40.0), 0.5, 8.0),
                       Proximity(1, 3.0, 50.0), Proximity(2, 3.0, 50.0), ControlEffort(car_effort)]),
        PlayerCost(1, [LaneCenter(lanes["west_left"], 1.0), NominalSpeed(v_car, 4.0),
                       GoalPosition((-2.0, -30.0), 0.5, 8.0),
                       Proximity(0, 3.0, 50.0), Proximity(2, 3.0, 50.0), ControlEffort(car_effort)]),
        PlayerCost(2, [LaneCenter(lanes["crosswalk"], 1.0), NominalSpeed(v_ped, 4.0),
                       GoalPosition((4.0, 14.0), 0.5, 8.0),
                       Proximity(0, 3.0, 50.0), Proximity(1, 3.0, 50.0), ControlEffort((1.0, 1.0))]),
    )
    return Scenario("intersection", players, x0, costs, lanes)


def _roundabout_lane(entry_deg, radius, spur, sweep_deg, exit_len=40.0):
    psi = np.deg2rad(entry_deg)
    p = radius * np.array([np.cos(psi), np.sin(psi)])
    tangent = np.array([-np.sin(psi), np.cos(psi)])
    start = p - spur * tangent
    # arc vertices come from the 40-point circle, starting at the entry angle
    steps = int(round(sweep_deg / 9.0))
    ring = [(radius * np.cos(np.deg2rad(entry_deg + 9.0 * j)), radius * np.sin(np.deg2rad(entry_deg + 9.0 * j)))
            for j in range(steps + 1)]
    # leave along the final tangent, so the lane outlasts the horizon
    end = np.deg2rad(entry_deg + 9.0 * steps)
    exit_point = np.array(ring[-1]) + exit_len * np.array([-np.sin(end), np.cos(end)])
    return _round([tuple(start)] + ring + [tuple(exit_point)])


def build_roundabout() -> Scenario:
    """Four cars merging into a counter-clockwise roundabout of radius 12 m."""
    return _roundabout()


def _roundabout(radius=12.0, sweep=90.0, starts=(8.0, 14.0, 20.0, 26.0), v_nom=5.0, lane_weight=2.0,
                progress_weight=1.0, effort=(2.0, 2.0), horizon=10.0) -> Scenario:
    entries = (-90.0, 0.0, 90.0, 180.0)
    players = tuple(PlayerDynamics(BICYCLE6, CAR_L) for _ in entries)
    lanes, x0, costs = {}, [], []
    for i, e in enumerate(entries):
        # each lane starts at its car, so RouteProgress runs from arc length zero
        poly = _roundabout_lane(e, radius, starts[i], sweep)
        lanes[f"entry_{i}"] = poly
        d = np.subtract(poly[1], poly[0])
        x0 += [poly[0][0], poly[0][1], float(np.arctan2(d[1], d[0])), v_nom, 0.0, 0.0]
        terms = [RouteProgress(poly, v_nom, progress_weight), LaneCenter(poly, lane_weight), ControlEffort(effort)]
        terms += [Proximity(j, 3.0, 50.0) for j in range(len(entries)) if j != i]
        costs.append(PlayerCost(i, terms))
    return Scenario("roundabout", players, x0, costs, lanes, horizon=horizon)


def build_overtaking() -> Scenario:
    """A fast car pulls into the left lane to pass a slow lead car; a third car trails in the right lane."""
    return _overtaking()


def _overtaking(speeds=(12.0, 7.0, 7.0), starts=((0.0, 0.0), (15.0, 0.0), (-15.0, 0.0)),
                lane_of=("left", "right", "right"), lane_weight=2.0, progress_weight=1.0,
                effort=(2.0, 2.0)) -> Scenario:
    lanes = {
        "right": _round([(-50.0, 0.0), (300.0, 0.0)]),
        "left": _round([(-50.0, 3.5), (300.0, 3.5)]),
    }
    players = tuple(PlayerDynamics(BICYCLE6, CAR_L) for _ in speeds)
    x0, costs = [], []
    for i, v in enumerate(speeds):
        x0 += [starts[i][0], starts[i][1], 0.0, v, 0.0, 0.0]
        poly = lanes[lane_of[i]]
        terms = [RouteProgress(poly, v, progress_weight, _arclength_of(poly, starts[i])),
                 LaneCenter(poly, lane_weight), ControlEffort(effort)]
        terms += [Proximity(j, 3.0, 50.0) for j in range(len(speeds)) if j != i]
        costs.append(PlayerCost(i, terms))
    return Scenario("overtaking", players, x0, costs, lanes)


BUILTINS = {
    "intersection": build_intersection,
    "roundabout": build_roundabout,
    "overtaking": build_overtaking,
}


def resolve(ref: str) -> Scenario:
    """A built-in scenario name or a path to a scenario file."""
    if ref in BUILTINS:
        return BUILTINS[ref]()
    return load(ref)
