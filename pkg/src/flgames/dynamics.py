"""Control-affine player models, RK4 rollouts and Jacobian linearization.

Joint state and control vectors are the concatenation of the players'
blocks in player order. Player models are decoupled, so every joint
quantity is assembled blockwise.

State layouts::

    unicycle4: (p_x, p_y, theta, v)            controls (w, a)
    bicycle6:  (p_x, p_y, theta, v, phi, a)    controls (omega, kappa)
"""

from __future__ import annotations

from dataclasses import dataclass, field
from functools import cached_property
from typing import Callable, Sequence, Union

import numpy as np

from .errors import DimensionError, DivergenceError

UNICYCLE4 = "unicycle4"
BICYCLE6 = "bicycle6"

_DIMS = {UNICYCLE4: (4, 2), BICYCLE6: (6, 2)}


@dataclass(frozen=True)
class PlayerDynamics:
    kind: str
    L: float = 0.0

    def __post_init__(self):
        if self.kind not in _DIMS:
            raise ValueError(f"unknown dynamics kind {self.kind!r}")
        if self.kind == BICYCLE6 and not self.L > 0:
            raise ValueError("bicycle6 requires inter-axle distance L > 0")

    @property
    def state_dim(self) -> int:
        return _DIMS[self.kind][0]

    @property
    def control_dim(self) -> int:
        return _DIMS[self.kind][1]

    def derivative(self, x: np.ndarray, u: np.ndarray) -> np.ndarray:
        """Continuous-time derivative; works on (..., state_dim) batches."""
        theta, v = x[..., 2], x[..., 3]
        c, s = np.cos(theta), np.sin(theta)
        if self.kind == UNICYCLE4:
            return np.stack([v * c, v * s, u[..., 0], u[..., 1]], axis=-1)
        phi, a = x[..., 4], x[..., 5]
        return np.stack([v * c, v * s, v * np.tan(phi) / self.L, a, u[..., 0], u[..., 1]], axis=-1)

    def jacobians(self, x: np.ndarray, u: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
        """Continuous Jacobians (df/dx + d(g u)/dx, g) for (..., state_dim) batches."""
        d = self.state_dim
        batch = x.shape[:-1]
        theta, v = x[..., 2], x[..., 3]
        c, s = np.cos(theta), np.sin(theta)
        A = np.zeros(batch + (d, d))
        A[..., 0, 2] = -v * s
        A[..., 0, 3] = c
        A[..., 1, 2] = v * c
        A[..., 1, 3] = s
        B = np.zeros(batch + (d, 2))
        if self.kind == UNICYCLE4:
            B[..., 2, 0] = 1.0
            B[..., 3, 1] = 1.0
        else:
            phi = x[..., 4]
            t = np.tan(phi)
            A[..., 2, 3] = t / self.L
            A[..., 2, 4] = v * (1.0 + t * t) / self.L
            A[..., 3, 5] = 1.0
            B[..., 4, 0] = 1.0
            B[..., 5, 1] = 1.0
        return A, B


ControlInput = Union[np.ndarray, Callable[[int, np.ndarray], np.ndarray]]


@dataclass(frozen=True)
class MultiPlayerDynamics:
    players: tuple[PlayerDynamics, ...]
    _groups: dict = field(init=False, repr=False, compare=False)

    def __post_init__(self):
        object.__setattr__(self, "players", tuple(self.players))
        if not self.players:
            raise ValueError("at least one player is required")
        groups: dict = {}
        for i, p in enumerate(self.players):
            key = (p.kind, p.L)
            xs, us = groups.setdefault(key, ([], []))
            xs.append(np.arange(self.state_offsets[i], self.state_offsets[i] + p.state_dim))
            us.append(np.arange(self.control_offsets[i], self.control_offsets[i] + p.control_dim))
        object.__setattr__(self, "_groups", {
            key: (PlayerDynamics(*key), np.array(xs), np.array(us)) for key, (xs, us) in groups.items()
        })

    @property
    def num_players(self) -> int:
        return len(self.players)

    @cached_property
    def state_dims(self) -> list[int]:
        return [p.state_dim for p in self.players]

    @cached_property
    def control_dims(self) -> list[int]:
        return [p.control_dim for p in self.players]

    @cached_property
    def state_offsets(self) -> list[int]:
        return list(np.cumsum([0] + self.state_dims[:-1]))

    @cached_property
    def control_offsets(self) -> list[int]:
        return list(np.cumsum([0] + self.control_dims[:-1]))

    @property
    def n(self) -> int:
        return sum(self.state_dims)

    @property
    def k(self) -> int:
        return sum(self.control_dims)

    def state_slice(self, i: int) -> slice:
        o = self.state_offsets[i]
        return slice(o, o + self.players[i].state_dim)

    def control_slice(self, i: int) -> slice:
        o = self.control_offsets[i]
        return slice(o, o + self.players[i].control_dim)

    def split_state(self, x: np.ndarray) -> list[np.ndarray]:
        return [x[..., self.state_slice(i)] for i in range(self.num_players)]

    def split_control(self, u: np.ndarray) -> list[np.ndarray]:
        return [u[..., self.control_slice(i)] for i in range(self.num_players)]

    def _check(self, x, u):
        if x.shape[-1] != self.n or u.shape[-1] != self.k:
            raise DimensionError(
                f"expected state dim {self.n} and control dim {self.k}, got {x.shape[-1]} and {u.shape[-1]}")

    def derivative(self, x: np.ndarray, u: np.ndarray) -> np.ndarray:
        x = np.asarray(x, dtype=float)
        u = np.asarray(u, dtype=float)
        self._check(x, u)
        out = np.empty(np.broadcast_shapes(x.shape[:-1], u.shape[:-1]) + (self.n,))
        for model, xi, ui in self._groups.values():
            out[..., xi] = model.derivative(x[..., xi], u[..., ui])
        return out

    def jacobians(self, x: np.ndarray, u: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
        """Joint continuous Jacobians, block diagonal over players."""
        x = np.asarray(x, dtype=float)
        u = np.asarray(u, dtype=float)
        self._check(x, u)
        batch = x.shape[:-1]
        A = np.zeros(batch + (self.n, self.n))
        B = np.zeros(batch + (self.n, self.k))
        for i, p in enumerate(self.players):
            sx, su = self.state_slice(i), self.control_slice(i)
            Ai, Bi = p.jacobians(x[..., sx], u[..., su])
            A[..., sx, sx] = Ai
            B[..., sx, su] = Bi
        return A, B

    def linearize(self, x: np.ndarray, u: np.ndarray, dt: float) -> tuple[np.ndarray, list[np.ndarray]]:
        """Forward-Euler discretized linearization: A = I + dt A_c, B_i = dt g_i."""
        Ac, Bc = self.jacobians(x, u)
        A = np.eye(self.n) + dt * Ac
        B = dt * Bc
        return A, [B[..., self.control_slice(i)] for i in range(self.num_players)]

    def rk4_step(self, x: np.ndarray, u: np.ndarray, dt: float) -> np.ndarray:
        """One RK4 step with the control held constant."""
        f = self.derivative
        k1 = f(x, u)
        k2 = f(x + 0.5 * dt * k1, u)
        k3 = f(x + 0.5 * dt * k2, u)
        k4 = f(x + dt * k3, u)
        return x + (dt / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4)

    def integrate(self, x0: np.ndarray, controls: ControlInput, dt: float, steps: int) -> np.ndarray:
        """Fixed-step RK4 rollout; returns (steps + 1, n) states.

        ``controls`` is either a (steps, k) array held constant over each step
        or a callable ``controls(step, x)`` evaluated at every RK4 stage.
        """
        if not dt > 0:
            raise ValueError("dt must be positive")
        x0 = np.asarray(x0, dtype=float)
        if x0.shape != (self.n,):
            raise DimensionError(f"expected initial state of dim {self.n}, got shape {x0.shape}")
        if callable(controls):
            ctrl = controls
        else:
            controls = np.asarray(controls, dtype=float)
            if controls.shape[0] < steps or (steps and controls.shape[1] != self.k):
                raise DimensionError(f"need ({steps}, {self.k}) controls, got {controls.shape}")
            ctrl = lambda t, x: controls[t]
        xs = np.empty((steps + 1, self.n))
        xs[0] = x0
        f = self.derivative
        x = x0
        with np.errstate(over="ignore", invalid="ignore"):
            for t in range(steps):
                k1 = f(x, ctrl(t, x))
                x2 = x + 0.5 * dt * k1
                k2 = f(x2, ctrl(t, x2))
                x3 = x + 0.5 * dt * k2
                k3 = f(x3, ctrl(t, x3))
                x4 = x + dt * k3
                k4 = f(x4, ctrl(t, x4))
                x = x + (dt / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4)
                if not np.all(np.isfinite(x)):
                    raise DivergenceError(f"non-finite state at step {t + 1}", index=t + 1)
                xs[t + 1] = x
        return xs


def make_dynamics(players: Sequence[PlayerDynamics]) -> MultiPlayerDynamics:
    return MultiPlayerDynamics(tuple(players))
