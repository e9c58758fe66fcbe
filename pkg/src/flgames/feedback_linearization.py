"""Feedback linearization of the unicycle and bicycle models.

Both models are full-state feedback linearizable in the outputs (p_x, p_y).
The linearized state stacks each output with its derivatives::

    unicycle4: xi = (p_x, p_x', p_y, p_y')                 relative degrees (2, 2)
    bicycle6:  xi = (p_x, p_x', p_x'', p_y, p_y', p_y'')   relative degrees (3, 3)

and the auxiliary input is z = (p_x^(r), p_y^(r)).

The coordinate maps are written once over scalar components so they run on
numpy arrays and on :class:`flgames._jet.Jet` (for derivatives) alike.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from math import factorial

import numpy as np

from . import _jet as J
from .dynamics import BICYCLE6, UNICYCLE4, MultiPlayerDynamics, PlayerDynamics
from .errors import SingularityError

V_MIN = 0.1
PHI_MAX = 1.4


def _unicycle_to_state(px, vx, py, vy):
    return (px, py, J.atan2(vy, vx), J.sqrt(vx * vx + vy * vy))


def _unicycle_control(px, vx, py, vy, zx, zy):
    V = vx * vx + vy * vy
    w = (vx * zy - vy * zx) / V
    a = (vx * zx + vy * zy) / J.sqrt(V)
    return (w, a)


def _unicycle_to_linear(px, py, theta, v):
    return (px, v * J.cos(theta), py, v * J.sin(theta))


def _unicycle_aux(px, py, theta, v, w, a):
    c, s = J.cos(theta), J.sin(theta)
    return (-(v * s) * w + c * a, (v * c) * w + s * a)


def _bicycle_to_state(L, px, vx, ax, py, vy, ay):
    V = vx * vx + vy * vy
    v = J.sqrt(V)
    X = vx * ay - vy * ax
    D = vx * ax + vy * ay
    return (px, py, J.atan2(vy, vx), v, J.arctan(L * X / (V * v)), D / v)


def _bicycle_control(L, px, vx, ax, py, vy, ay, zx, zy):
    # closed form of M^-1(x) (z - m(x)) written in linearized coordinates
    V = vx * vx + vy * vy
    v = J.sqrt(V)
    X = vx * ay - vy * ax
    D = vx * ax + vy * ay
    C = vx * zy - vy * zx
    P = vx * zx + vy * zy
    omega = L * (V * v) * (C - 3.0 * D * X / V) / (V * V * V + (L * L) * (X * X))
    kappa = P / v + X * X / (V * v)
    return (omega, kappa)


def _bicycle_to_linear(L, px, py, theta, v, phi, a):
    c, s = J.cos(theta), J.sin(theta)
    k = J.tan(phi) / L
    v2k = v * v * k
    return (px, v * c, a * c - v2k * s, py, v * s, a * s + v2k * c)


def _bicycle_aux(L, px, py, theta, v, phi, a, omega, kappa):
    c, s = J.cos(theta), J.sin(theta)
    t = J.tan(phi)
    k = t / L
    gain = v * v * (1.0 + t * t) / L
    drift_a = 3.0 * a * v * k
    drift_b = v * v * v * k * k
    zx = -(gain * s) * omega + c * kappa - drift_a * s - drift_b * c
    zy = (gain * c) * omega + s * kappa + drift_a * c - drift_b * s
    return (zx, zy)


def _components(a: np.ndarray):
    return tuple(a[..., j] for j in range(a.shape[-1]))


@dataclass(frozen=True)
class FeedbackLinearization:
    dynamics: PlayerDynamics
    v_min: float = V_MIN
    phi_max: float = PHI_MAX

    def __post_init__(self):
        if not self.v_min > 0:
            raise ValueError("v_min must be positive")
        if not self.phi_max < np.pi / 2:
            raise ValueError("phi_max must be below pi/2")

    @property
    def kind(self) -> str:
        return self.dynamics.kind

    @property
    def relative_degrees(self) -> tuple[int, int]:
        return (2, 2) if self.kind == UNICYCLE4 else (3, 3)

    @property
    def linear_dim(self) -> int:
        return sum(self.relative_degrees)

    @property
    def position_indices(self) -> tuple[int, int]:
        """Indices of (p_x, p_y) inside the linearized state."""
        return (0, self.relative_degrees[0])

    # component-level maps (numpy or Jet)

    def state_from_linear_components(self, xi):
        if self.kind == UNICYCLE4:
            return _unicycle_to_state(*xi)
        return _bicycle_to_state(self.dynamics.L, *xi)

    def control_from_linear_components(self, xi, z):
        if self.kind == UNICYCLE4:
            return _unicycle_control(*xi, *z)
        return _bicycle_control(self.dynamics.L, *xi, *z)

    def linear_from_state_components(self, x):
        if self.kind == UNICYCLE4:
            return _unicycle_to_linear(*x)
        return _bicycle_to_linear(self.dynamics.L, *x)

    def aux_from_control_components(self, x, u):
        if self.kind == UNICYCLE4:
            return _unicycle_aux(*x, *u)
        return _bicycle_aux(self.dynamics.L, *x, *u)

    # array-level API

    def singular(self, x: np.ndarray) -> np.ndarray:
        """True where the state is inside the guarded singular set."""
        x = np.asarray(x, dtype=float)
        bad = ~(x[..., 3] >= self.v_min)
        if self.kind == BICYCLE6:
            bad |= ~(np.abs(x[..., 4]) <= self.phi_max)
        return bad

    def linear_singular(self, xi: np.ndarray) -> np.ndarray:
        """Singular-set test evaluated directly on linearized states."""
        xi = np.asarray(xi, dtype=float)
        r = self.relative_degrees[0]
        vx, vy = xi[..., 1], xi[..., r + 1]
        speed = np.hypot(vx, vy)
        bad = ~(speed >= self.v_min)
        if self.kind == BICYCLE6:
            with np.errstate(divide="ignore", invalid="ignore"):
                X = vx * xi[..., 5] - vy * xi[..., 2]
                phi = np.arctan(self.dynamics.L * X / speed**3)
            bad |= ~(np.abs(phi) <= self.phi_max)
        return bad

    def _guard(self, x):
        bad = self.singular(x)
        if np.any(bad):
            raise SingularityError(f"{self.kind} state is singular (v < {self.v_min} or |phi| > {self.phi_max})",
                                   state=np.array(x))

    def decoupling_matrix(self, x: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
        """(M(x), m(x)) with [y_1^(r_1), y_2^(r_2)] = M(x) u + m(x)."""
        x = np.asarray(x, dtype=float)
        th, v = x[..., 2], x[..., 3]
        c, s = np.cos(th), np.sin(th)
        if self.kind == UNICYCLE4:
            M = np.stack([np.stack([-v * s, c], -1), np.stack([v * c, s], -1)], -2)
            return M, np.zeros(x.shape[:-1] + (2,))
        L, phi, a = self.dynamics.L, x[..., 4], x[..., 5]
        t = np.tan(phi)
        gain = v * v * (1 + t * t) / L
        M = np.stack([np.stack([-gain * s, c], -1), np.stack([gain * c, s], -1)], -2)
        m = np.stack(_bicycle_aux(L, x[..., 0], x[..., 1], th, v, phi, a, 0.0, 0.0), -1)
        return M, m

    def decoupling(self, x: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
        """(M^-1(x), m(x)); raises SingularityError inside the guarded set."""
        x = np.asarray(x, dtype=float)
        self._guard(x)
        th, v = x[..., 2], x[..., 3]
        c, s = np.cos(th), np.sin(th)
        if self.kind == UNICYCLE4:
            Minv = np.stack([np.stack([-s / v, c / v], -1), np.stack([c, s], -1)], -2)
            return Minv, np.zeros(x.shape[:-1] + (2,))
        L, phi = self.dynamics.L, x[..., 4]
        cos2 = np.cos(phi) ** 2
        g = L * cos2 / (v * v)
        Minv = np.stack([np.stack([-g * s, g * c], -1), np.stack([c, s], -1)], -2)
        return Minv, self.decoupling_matrix(x)[1]

    def fl_control(self, x: np.ndarray, z: np.ndarray) -> np.ndarray:
        Minv, m = self.decoupling(x)
        return np.einsum("...ij,...j->...i", Minv, np.asarray(z, dtype=float) - m)

    def to_linear_state(self, x: np.ndarray) -> np.ndarray:
        x = np.asarray(x, dtype=float)
        return np.stack(self.linear_from_state_components(_components(x)), -1)

    def from_linear_state(self, xi: np.ndarray) -> np.ndarray:
        xi = np.asarray(xi, dtype=float)
        if np.any(self.linear_singular(xi)):
            raise SingularityError(f"{self.kind} linearized state maps into the singular set", state=np.array(xi))
        return np.stack(self.state_from_linear_components(_components(xi)), -1)

    def aux_input(self, x: np.ndarray, u: np.ndarray) -> np.ndarray:
        """z = M(x) u + m(x)."""
        x = np.asarray(x, dtype=float)
        u = np.asarray(u, dtype=float)
        return np.stack(self.aux_from_control_components(_components(x), _components(u)), -1)

    def control_from_linear(self, xi: np.ndarray, z: np.ndarray) -> np.ndarray:
        """u(lambda(xi), z) evaluated in linearized coordinates."""
        xi = np.asarray(xi, dtype=float)
        z = np.asarray(z, dtype=float)
        return np.stack(self.control_from_linear_components(_components(xi), _components(z)), -1)


def integrator_chain(r: int, dt: float) -> tuple[np.ndarray, np.ndarray]:
    """Exact zero-order-hold discretization of an r-fold integrator."""
    A = np.zeros((r, r))
    for i in range(r):
        for j in range(i, r):
            A[i, j] = dt ** (j - i) / factorial(j - i)
    B = np.array([dt ** (r - i) / factorial(r - i) for i in range(r)])
    return A, B


@dataclass(frozen=True)
class LinearSystem:
    """Iteration-independent discrete linear dynamics xi+ = A xi + sum_i B_i z_i."""

    dt: float
    player_A: tuple
    player_B: tuple
    A: np.ndarray
    B: np.ndarray
    control_slices: tuple

    @property
    def Bs(self) -> list[np.ndarray]:
        return [self.B[:, s] for s in self.control_slices]

    def step(self, xi: np.ndarray, z: np.ndarray) -> np.ndarray:
        return self.A @ xi + self.B @ z


def player_linear_system(fl: FeedbackLinearization, dt: float) -> tuple[np.ndarray, np.ndarray]:
    d = fl.linear_dim
    A = np.zeros((d, d))
    B = np.zeros((d, 2))
    o = 0
    for j, r in enumerate(fl.relative_degrees):
        Ar, Br = integrator_chain(r, dt)
        A[o:o + r, o:o + r] = Ar
        B[o:o + r, j] = Br
        o += r
    return A, B


def linear_system(fls, dt: float) -> LinearSystem:
    if not dt > 0:
        raise ValueError("dt must be positive")
    blocks = [player_linear_system(fl, dt) for fl in fls]
    n = sum(b[0].shape[0] for b in blocks)
    k = sum(b[1].shape[1] for b in blocks)
    A = np.zeros((n, n))
    B = np.zeros((n, k))
    slices = []
    o, c = 0, 0
    for Ai, Bi in blocks:
        d, ki = Bi.shape
        A[o:o + d, o:o + d] = Ai
        B[o:o + d, c:c + ki] = Bi
        slices.append(slice(c, c + ki))
        o, c = o + d, c + ki
    return LinearSystem(dt, tuple(b[0] for b in blocks), tuple(b[1] for b in blocks), A, B, tuple(slices))


@dataclass(frozen=True)
class JointLinearization:
    """Per-player feedback linearizations assembled over the joint state."""

    dynamics: MultiPlayerDynamics
    v_min: float = V_MIN
    phi_max: float = PHI_MAX
    players: tuple = field(init=False)

    def __post_init__(self):
        object.__setattr__(self, "players", tuple(
            FeedbackLinearization(p, self.v_min, self.phi_max) for p in self.dynamics.players))

    def linear_system(self, dt: float) -> LinearSystem:
        return linear_system(self.players, dt)

    def position_indices(self) -> list[tuple[int, int]]:
        """Joint indices of each player's (p_x, p_y) in the linearized layout."""
        out = []
        for i, fl in enumerate(self.players):
            o = self.dynamics.state_offsets[i]
            ix, iy = fl.position_indices
            out.append((o + ix, o + iy))
        return out

    def _map_state(self, arr, fn):
        d = self.dynamics
        return np.concatenate([fn(fl, arr[..., d.state_slice(i)]) for i, fl in enumerate(self.players)], -1)

    def to_linear_state(self, x: np.ndarray) -> np.ndarray:
        return self._map_state(np.asarray(x, dtype=float), lambda fl, a: fl.to_linear_state(a))

    def from_linear_state(self, xi: np.ndarray) -> np.ndarray:
        return self._map_state(np.asarray(xi, dtype=float), lambda fl, a: fl.from_linear_state(a))

    def fl_control(self, x: np.ndarray, z: np.ndarray) -> np.ndarray:
        d = self.dynamics
        return np.concatenate([fl.fl_control(x[..., d.state_slice(i)], z[..., d.control_slice(i)])
                               for i, fl in enumerate(self.players)], -1)

    def control_from_linear(self, xi: np.ndarray, z: np.ndarray) -> np.ndarray:
        d = self.dynamics
        return np.concatenate([fl.control_from_linear(xi[..., d.state_slice(i)], z[..., d.control_slice(i)])
                               for i, fl in enumerate(self.players)], -1)

    def aux_input(self, x: np.ndarray, u: np.ndarray) -> np.ndarray:
        d = self.dynamics
        return np.concatenate([fl.aux_input(x[..., d.state_slice(i)], u[..., d.control_slice(i)])
                               for i, fl in enumerate(self.players)], -1)

    def singular_knots(self, xi: np.ndarray) -> np.ndarray:
        """Boolean mask over leading axes: any player singular at that knot."""
        d = self.dynamics
        bad = np.zeros(xi.shape[:-1], dtype=bool)
        for i, fl in enumerate(self.players):
            bad |= fl.linear_singular(xi[..., d.state_slice(i)])
        return bad
