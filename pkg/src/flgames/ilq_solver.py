"""Iterative LQ game solver in two variants.

``fl``
    Works in feedback-linearized coordinates (xi, z). The dynamics are the
    exact discrete integrator chains from
    :func:`flgames.feedback_linearization.linear_system`, built once per solve.
``baseline``
    Works in original coordinates (x, u) and re-linearizes the nonlinear
    dynamics about the operating point at every iteration.

Both variants solve the same game: the costs are quadraticized in the
solver's coordinates, the LQ game is solved for affine strategies, and a
backtracking linesearch on the feedforward scale eta keeps every accepted
rollout inside the L-infinity trust region around the operating point.
"""

from __future__ import annotations

import time
from dataclasses import dataclass, field
from typing import Callable, Optional

import numpy as np

from . import lq_game
from .errors import DivergenceError, LinesearchError, LQNoSolutionError, SingularityError, SolverError
from .trajectory import Trajectory

FL = "fl"
BASELINE = "baseline"


@dataclass(frozen=True)
class SolverConfig:
    eta0: float = 0.5
    trust: float = 5.0
    dt: Optional[float] = None          # None: use the scenario's
    horizon: Optional[float] = None
    max_iterations: int = 100
    tolerance: float = 1e-2
    shrink: float = 0.5
    eta_floor: float = 1e-3
    variant: str = FL
    drop_terms: bool = True

    def __post_init__(self):
        if not 0 < self.eta0 <= 1:
            raise ValueError("eta0 must lie in (0, 1]")
        if not self.trust > 0:
            raise ValueError("trust region size must be positive")
        if not self.tolerance > 0:
            raise ValueError("tolerance must be positive")
        if not self.eta_floor < self.eta0:
            raise ValueError("eta_floor must be below eta0")
        if not 0 < self.shrink < 1:
            raise ValueError("shrink factor must lie in (0, 1)")
        if self.variant not in (FL, BASELINE):
            raise ValueError(f"unknown variant {self.variant!r}")


@dataclass
class OperatingPoint:
    """States (K+1, n) and controls (K, k) in the solver's coordinates."""

    states: np.ndarray
    controls: np.ndarray
    iteration: int = 0


@dataclass
class Strategy:
    """Affine strategy about a reference: c = c_ref - P (s - s_ref) - eta alpha."""

    reference: OperatingPoint
    lq: lq_game.AffineStrategy
    eta: float


@dataclass
class StepRecord:
    iteration: int
    eta: float
    max_deviation: float
    nonsingular: Optional[bool]
    change: float


@dataclass
class SolveResult:
    converged: bool
    iterations: int
    trajectory: Optional[Trajectory]
    strategy: Optional[Strategy]
    runtime: float
    failure: Optional[str] = None
    history: list = field(default_factory=list)
    linearizations: int = 0
    variant: str = FL


class _Problem:
    """Scenario data prepared for one variant."""

    def __init__(self, scenario, config: SolverConfig, x0=None):
        self.scenario = scenario
        self.config = config
        self.dt = config.dt or scenario.dt
        horizon = config.horizon or scenario.horizon
        self.K = int(round(horizon / self.dt))
        self.times = self.dt * np.arange(self.K + 1)
        self.dynamics = scenario.dynamics
        self.coords = scenario.coords
        self.cost = scenario.game_cost()
        self.linear = config.variant == FL
        self.slices = tuple(self.dynamics.control_slice(i) for i in range(self.dynamics.num_players))
        self.linearizations = 0
        x0 = np.array(scenario.x0 if x0 is None else x0, dtype=float)
        if self.linear:
            if np.any(self.coords.singular_knots(self.coords.to_linear_state(x0)[None])):
                raise SingularityError("initial state is singular", state=x0, index=0)
            self.s0 = self.coords.to_linear_state(x0)
            system = self.coords.linear_system(self.dt)
            self.linearizations += 1
            self.A = np.broadcast_to(system.A, (self.K,) + system.A.shape)
            self.B = np.broadcast_to(system.B, (self.K,) + system.B.shape)
            self._A1, self._B1 = system.A, system.B
        else:
            self.s0 = x0

    def dynamics_about(self, op: OperatingPoint):
        if self.linear:
            return self.A, self.B
        A, Bs = self.dynamics.linearize(op.states[:-1], op.controls, self.dt)
        self.linearizations += 1
        return A, np.concatenate(Bs, axis=-1)

    def step(self, s, c):
        if self.linear:
            return self._A1 @ s + self._B1 @ c
        return self.dynamics.rk4_step(s, c, self.dt)

    def rollout(self, strategy: Strategy) -> OperatingPoint:
        ref, P, alpha, eta = strategy.reference, strategy.lq.P, strategy.lq.alpha, strategy.eta
        n, k = ref.states.shape[1], ref.controls.shape[1]
        s = np.empty((self.K + 1, n))
        c = np.empty((self.K, k))
        s[0] = self.s0
        ff = ref.controls - eta * alpha
        with np.errstate(all="ignore"):
            for t in range(self.K):
                c[t] = ff[t] - P[t] @ (s[t] - ref.states[t])
                s[t + 1] = self.step(s[t], c[t])
        return OperatingPoint(s, c, ref.iteration + 1)

    def initial_strategy(self) -> Strategy:
        n, k = self.dynamics.n, self.dynamics.k
        ref = OperatingPoint(np.zeros((self.K + 1, n)), np.zeros((self.K, k)))
        lq = lq_game.AffineStrategy(np.zeros((self.K, k, n)), np.zeros((self.K, k)), self.slices)
        return Strategy(ref, lq, 0.0)

    def nonsingular(self, op: OperatingPoint) -> bool:
        return not np.any(self.coords.singular_knots(op.states))

    def quadraticize(self, op: OperatingPoint):
        return self.cost.quadraticize(self.times, op.states, op.controls, linear=self.linear,
                                      drop_terms=self.config.drop_terms, scale=self.dt, terminal=True)

    def solve_lq(self, op: OperatingPoint) -> lq_game.AffineStrategy:
        A, B = self.dynamics_about(op)
        q = self.quadraticize(op)
        return lq_game.solve_arrays(A, B, q.Q, q.l, q.R, q.r, self.slices)

    def trajectory(self, op: OperatingPoint) -> Trajectory:
        d = self.dynamics
        if self.linear:
            xi, z = op.states, op.controls
            x = self.coords.from_linear_state(xi)
            u = self.coords.control_from_linear(xi[:-1], z)
        else:
            x, u = op.states, op.controls
            xi = self.coords.to_linear_state(x)
            z = self.coords.aux_input(x[:-1], u)
        return Trajectory(self.times.copy(), x, xi, u, z, tuple(d.state_dims), tuple(d.control_dims))


def step_toward(problem: _Problem, op: OperatingPoint, lq: lq_game.AffineStrategy,
                eta_start: Optional[float] = None):
    """Backtracking linesearch on eta; returns (strategy, new operating point, max deviation).

    A candidate is accepted when its rollout stays strictly inside the trust
    region at every knot and (FL variant) never enters the singular set.
    """
    cfg = problem.config
    eta = cfg.eta0 if eta_start is None else eta_start
    while eta >= cfg.eta_floor:
        strategy = Strategy(op, lq, eta)
        cand = problem.rollout(strategy)
        dev = np.max(np.abs(cand.states - op.states))
        if np.all(np.isfinite(cand.states)) and dev < cfg.trust:
            if not problem.linear or problem.nonsingular(cand):
                return strategy, cand, float(dev)
        eta *= cfg.shrink
    raise LinesearchError(f"step size fell below {cfg.eta_floor} without satisfying the trust region")


def solve(scenario, config: SolverConfig = SolverConfig(),
          on_accept: Optional[Callable[[OperatingPoint, OperatingPoint], None]] = None) -> SolveResult:
    """Run the iterative LQ game solver on ``scenario``.

    Solver failures (divergence, exhausted linesearch, LQ subproblems without
    a solution, singular rollouts) are reported through ``failure``; the
    trajectory is the last accepted operating point. ``on_accept(old, new)``
    is called for every accepted step, which lets callers audit them.
    """
    start = time.perf_counter()
    problem = _Problem(scenario, config)
    strategy = problem.initial_strategy()
    op = problem.rollout(strategy)
    if not np.all(np.isfinite(op.states)):
        raise DivergenceError("initial rollout is not finite")
    if problem.linear and not problem.nonsingular(op):
        raise SingularityError("initial strategies drive the state into the singular set")

    history = []
    converged = False
    failure = None
    retried = False
    previous = None          # (operating point, LQ strategy) of the last accepted step
    iteration = 0
    while iteration < config.max_iterations:
        iteration += 1
        try:
            lq = problem.solve_lq(op)
        except LQNoSolutionError as err:
            if previous is None or retried:
                failure = err.reason
                break
            # redo the previous step with a halved initial step size
            retried = True
            prev_op, prev_lq = previous
            try:
                strategy, op, dev = step_toward(problem, prev_op, prev_lq, config.eta0 * config.shrink)
            except LinesearchError:
                failure = err.reason
                break
            history.append(StepRecord(iteration, strategy.eta, dev,
                                      problem.nonsingular(op) if problem.linear else None,
                                      float(np.max(np.abs(op.states - prev_op.states)))))
            if on_accept is not None:
                on_accept(prev_op, op)
            continue
        try:
            new_strategy, new_op, dev = step_toward(problem, op, lq)
        except LinesearchError as err:
            failure = err.reason
            break
        change = float(np.max(np.abs(new_op.states - op.states)))
        history.append(StepRecord(iteration, new_strategy.eta, dev,
                                  problem.nonsingular(new_op) if problem.linear else None, change))
        if on_accept is not None:
            on_accept(op, new_op)
        previous = (op, lq)
        strategy, op = new_strategy, new_op
        if change < config.tolerance:
            converged = True
            break
    else:
        failure = "max_iterations"

    try:
        traj = problem.trajectory(op)
    except SolverError:
        traj = None
    return SolveResult(converged, iteration, traj, strategy, time.perf_counter() - start, failure,
                       history, problem.linearizations, config.variant)


def rollout(scenario, strategy: Strategy, x0=None, config: SolverConfig = SolverConfig()) -> OperatingPoint:
    """Roll a strategy out in the variant's coordinates.

    ``x0`` (original coordinates) overrides the scenario's initial state.
    """
    problem = _Problem(scenario, config, x0)
    op = problem.rollout(strategy)
    if not np.all(np.isfinite(op.states)):
        bad = int(np.argmax(~np.all(np.isfinite(op.states), axis=1)))
        raise DivergenceError(f"non-finite state at knot {bad}", index=bad)
    if problem.linear and not problem.nonsingular(op):
        bad = int(np.argmax(problem.coords.singular_knots(op.states)))
        raise SingularityError(f"rollout enters the singular set at knot {bad}", index=bad)
    return op


def zero_strategy(scenario, config: SolverConfig = SolverConfig()) -> Strategy:
    return _Problem(scenario, config).initial_strategy()
