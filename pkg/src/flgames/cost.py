"""Running costs, their transformed evaluation and quadraticization.

Each cost term declares the quantities it reads as references
``(player, space, index)``:

* ``"pos"``: position (p_x, p_y), identical in both coordinate systems
* ``"x"`` / ``"u"``: original state and control components
* ``"xi"`` / ``"z"``: linearized state and auxiliary input components

A term supplies value, gradient and Hessian in its own arguments. The
arguments are in turn expressed as :class:`~flgames._jet.Jet` objects over
the solver's decision variables (``(xi_j, z_j)`` in linearized coordinates,
``(x_j, u_j)`` in original ones), and the two are combined with the chain
rule. Only the players a term touches take part, so the joint Hessians
inherit the block-diagonal structure of the coordinate maps.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Sequence

import numpy as np

from ._jet import Jet, value
from .feedback_linearization import JointLinearization

MU = 1e-4

ORIGINAL = "original"
LINEAR = "linear"


# polyline geometry

def _segments(polyline: np.ndarray):
    a = polyline[:-1]
    d = polyline[1:] - a
    return a, d, np.einsum("si,si->s", d, d)


def nearest_on_polyline(polyline: np.ndarray, p: np.ndarray):
    """Nearest point on the polyline for each row of ``p`` (T, 2).

    Returns (projection, segment index, interior flag, arc length). Ties go to
    the earlier segment.
    """
    a, d, dd = _segments(polyline)
    rel = p[:, None, :] - a[None, :, :]
    t_raw = np.einsum("tsi,si->ts", rel, d) / dd
    t = np.clip(t_raw, 0.0, 1.0)
    proj = a[None] + t[..., None] * d[None]
    dist2 = np.sum((p[:, None, :] - proj) ** 2, axis=-1)
    seg = np.argmin(dist2, axis=1)
    rows = np.arange(len(p))
    lengths = np.sqrt(dd)
    cum = np.concatenate([[0.0], np.cumsum(lengths)])
    arc = cum[seg] + t[rows, seg] * lengths[seg]
    interior = (t_raw[rows, seg] > 0.0) & (t_raw[rows, seg] < 1.0)
    return proj[rows, seg], seg, interior, arc


def point_at_arclength(polyline: np.ndarray, s: np.ndarray) -> np.ndarray:
    """Points at arc lengths ``s``; beyond either end the end segment is extended."""
    s = np.atleast_1d(np.asarray(s, dtype=float))
    a, d, dd = _segments(polyline)
    lengths = np.sqrt(dd)
    cum = np.concatenate([[0.0], np.cumsum(lengths)])
    seg = np.clip(np.searchsorted(cum, s, side="right") - 1, 0, len(lengths) - 1)
    frac = (s - cum[seg]) / lengths[seg]
    return a[seg] + frac[:, None] * d[seg]


def polyline_length(polyline: np.ndarray) -> float:
    return float(np.sum(np.sqrt(_segments(polyline)[2])))


def _as_polyline(points) -> np.ndarray:
    arr = np.asarray(points, dtype=float)
    if arr.ndim != 2 or arr.shape[1] != 2 or arr.shape[0] < 2:
        raise ValueError("a polyline needs at least two 2-D points")
    return arr


# cost terms

@dataclass(frozen=True)
class LaneCenter:
    polyline: tuple
    weight: float

    def __post_init__(self):
        object.__setattr__(self, "polyline", tuple(map(tuple, _as_polyline(self.polyline))))
        _check_weight(self.weight)

    def refs(self, i, dims):
        return [(i, "pos", 0), (i, "pos", 1)]

    def derivatives(self, times, args):
        poly = np.asarray(self.polyline)
        proj, seg, interior, _ = nearest_on_polyline(poly, args)
        diff = args - proj
        w = self.weight
        val = w * np.sum(diff**2, axis=1)
        grad = 2.0 * w * diff
        a, d, dd = _segments(poly)
        n = np.stack([-d[:, 1], d[:, 0]], -1) / np.sqrt(dd)[:, None]
        nn = n[seg]
        hess = np.where(interior[:, None, None], nn[:, :, None] * nn[:, None, :], np.eye(2)[None]) * (2.0 * w)
        return val, grad, hess


@dataclass(frozen=True)
class GoalPosition:
    point: tuple
    weight: float
    activation_time: float = 0.0

    def __post_init__(self):
        object.__setattr__(self, "point", tuple(float(c) for c in self.point))
        _check_weight(self.weight)

    def refs(self, i, dims):
        return [(i, "pos", 0), (i, "pos", 1)]

    def derivatives(self, times, args):
        on = (np.asarray(times) >= self.activation_time).astype(float)
        diff = args - np.asarray(self.point)
        w = self.weight * on
        val = w * np.sum(diff**2, axis=1)
        grad = 2.0 * w[:, None] * diff
        hess = 2.0 * w[:, None, None] * np.eye(2)[None]
        return val, grad, hess


@dataclass(frozen=True)
class NominalSpeed:
    v_nominal: float
    weight: float

    def __post_init__(self):
        _check_weight(self.weight)

    def refs(self, i, dims):
        return [(i, "x", 3)]

    def derivatives(self, times, args):
        e = args[:, 0] - self.v_nominal
        w = self.weight
        return w * e * e, (2.0 * w * e)[:, None], np.full((len(e), 1, 1), 2.0 * w)


@dataclass(frozen=True)
class Proximity:
    other: int
    d_min: float = 3.0
    weight: float = 1.0

    def __post_init__(self):
        if not self.d_min > 0:
            raise ValueError("proximity d_min must be positive")
        _check_weight(self.weight)

    def refs(self, i, dims):
        return [(i, "pos", 0), (i, "pos", 1), (self.other, "pos", 0), (self.other, "pos", 1)]

    def derivatives(self, times, args):
        delta = args[:, :2] - args[:, 2:]
        r = np.maximum(np.linalg.norm(delta, axis=1), 1e-9)
        gap = np.maximum(self.d_min - r, 0.0)
        w = self.weight
        e = delta / r[:, None]
        val = w * gap * gap
        g = -2.0 * w * gap[:, None] * e
        ee = e[:, :, None] * e[:, None, :]
        h = 2.0 * w * (gap > 0)[:, None, None] * ee - (2.0 * w * gap / r)[:, None, None] * (np.eye(2)[None] - ee)
        grad = np.concatenate([g, -g], axis=1)
        hess = np.block([[h, -h], [-h, h]])
        return val, grad, hess


@dataclass(frozen=True)
class ControlEffort:
    weights: tuple
    space: str = "z"

    def __post_init__(self):
        object.__setattr__(self, "weights", tuple(float(w) for w in self.weights))
        for w in self.weights:
            _check_weight(w)
        if self.space not in ("z", "u"):
            raise ValueError("control effort space must be 'z' or 'u'")

    def refs(self, i, dims):
        return [(i, self.space, j) for j in range(len(self.weights))]

    def derivatives(self, times, args):
        w = np.asarray(self.weights)
        val = np.sum(w * args**2, axis=1)
        return val, 2.0 * w * args, np.broadcast_to(np.diag(2.0 * w), (len(args),) + (len(w),) * 2)


@dataclass(frozen=True)
class RouteProgress:
    """Pull toward the lane point a distance ``v_nominal * t`` past arc length ``s0``."""

    polyline: tuple
    v_nominal: float
    weight: float
    s0: float = 0.0

    def __post_init__(self):
        object.__setattr__(self, "polyline", tuple(map(tuple, _as_polyline(self.polyline))))
        _check_weight(self.weight)

    def refs(self, i, dims):
        r = dims[i]
        return [(i, "xi", 0), (i, "xi", r)]

    def reference(self, times) -> np.ndarray:
        s = self.s0 + self.v_nominal * np.asarray(times, dtype=float)
        return point_at_arclength(np.asarray(self.polyline), s)

    def derivatives(self, times, args):
        diff = args - self.reference(times)
        w = self.weight
        val = w * np.sum(diff**2, axis=1)
        return val, 2.0 * w * diff, np.broadcast_to(2.0 * w * np.eye(2), (len(args), 2, 2))


TERM_TYPES = {
    "lane_center": LaneCenter,
    "goal_position": GoalPosition,
    "nominal_speed": NominalSpeed,
    "proximity": Proximity,
    "control_effort": ControlEffort,
    "route_progress": RouteProgress,
}

NATIVE_LINEAR = (RouteProgress,)


def _check_weight(w):
    if not w >= 0:
        raise ValueError(f"cost weights must be non-negative, got {w}")


def _uses_control(refs) -> bool:
    return any(space in ("u", "z") for _, space, _ in refs)


@dataclass(frozen=True)
class PlayerCost:
    player: int
    terms: tuple

    def __post_init__(self):
        object.__setattr__(self, "terms", tuple(self.terms))

    @property
    def mode(self) -> str:
        linear = [isinstance(t, NATIVE_LINEAR) or getattr(t, "space", None) == "z" for t in self.terms]
        if all(linear):
            return "native-linear"
        return "transformed" if not any(linear) else "mixed"


@dataclass
class QuadraticApprox:
    """Per-player quadratic models, batched over knots.

    l: (N, T, n), Q: (N, T, n, n), R: (N, T, k, k) block diagonal with
    blocks R_ij, r: (N, T, k).
    """

    l: np.ndarray
    Q: np.ndarray
    R: np.ndarray
    r: np.ndarray
    control_slices: tuple = ()

    def R_block(self, i, j):
        s = self.control_slices[j]
        return self.R[i][:, s, s]

    def r_block(self, i, j):
        return self.r[i][:, self.control_slices[j]]


class _PlayerPoint:
    """Lazy per-player components over a batch of knots.

    ``linear`` selects which pair, (xi, z) or (x, u), are the independent
    variables. With ``jets`` the components carry derivatives w.r.t. them.
    """

    def __init__(self, fl, state, control, linear, jets):
        self.fl = fl
        self.d = state.shape[1]
        self.linear = linear
        if jets:
            vars_ = Jet.variables(np.concatenate([state, control], axis=1))
        else:
            vars_ = [state[:, j] for j in range(state.shape[1])] + [control[:, j] for j in range(control.shape[1])]
        self._cache = {}
        own_s, own_c = tuple(vars_[:self.d]), tuple(vars_[self.d:])
        if linear:
            self._cache["xi"], self._cache["z"] = own_s, own_c
            r = fl.relative_degrees[0]
            self._cache["pos"] = (own_s[0], own_s[r])
        else:
            self._cache["x"], self._cache["u"] = own_s, own_c
            self._cache["pos"] = (own_s[0], own_s[1])

    def get(self, space):
        if space not in self._cache:
            c = self._cache
            fl = self.fl
            if space == "x":
                c["x"] = fl.state_from_linear_components(c["xi"])
            elif space == "u":
                c["u"] = fl.control_from_linear_components(c["xi"], c["z"])
            elif space == "xi":
                c["xi"] = fl.linear_from_state_components(c["x"])
            elif space == "z":
                c["z"] = fl.aux_from_control_components(c["x"], c["u"])
        return self._cache[space]


class GameCost:
    """All players' running costs for one game."""

    def __init__(self, player_costs: Sequence[PlayerCost], coords: JointLinearization):
        self.player_costs = tuple(player_costs)
        self.coords = coords
        self.dynamics = coords.dynamics
        self._rel = [fl.relative_degrees[0] for fl in coords.players]
        self.terms = [[(t, t.refs(pc.player, self._rel)) for t in pc.terms] for pc in self.player_costs]

    @property
    def num_players(self):
        return len(self.player_costs)

    def _points(self, state, control, linear, jets):
        d = self.dynamics
        return [_PlayerPoint(fl, state[:, d.state_slice(j)], control[:, d.control_slice(j)], linear, jets)
                for j, fl in enumerate(self.coords.players)]

    def _term_values(self, times, points, terminal_mask):
        out = np.zeros((self.num_players, len(times)))
        for i, terms in enumerate(self.terms):
            for term, refs in terms:
                args = np.stack([value(points[j].get(space)[idx]) for j, space, idx in refs], axis=1)
                val = term.derivatives(times, args)[0]
                if _uses_control(refs):
                    val = val * terminal_mask
                out[i] += val
        return out

    def _prepare(self, t, state, control):
        times = np.atleast_1d(np.asarray(t, dtype=float))
        state = np.atleast_2d(np.asarray(state, dtype=float))
        if control is None:
            control = np.zeros((state.shape[0], self.dynamics.k))
            mask = np.zeros(len(times))
        else:
            control = np.atleast_2d(np.asarray(control, dtype=float))
            mask = np.ones(len(times))
        if len(times) == 1 and state.shape[0] > 1:
            times = np.full(state.shape[0], times[0])
        return times, state, control, mask

    def evaluate(self, t, x, u=None) -> np.ndarray:
        """Per-player running cost in original coordinates.

        ``u=None`` evaluates only the state-dependent terms (terminal knot).
        Returns (N,) for a single knot or (N, T) for a batch.
        """
        single = np.asarray(x).ndim == 1
        times, x, u, mask = self._prepare(t, x, u)
        out = self._term_values(times, self._points(x, u, False, False), mask)
        return out[:, 0] if single else out

    def evaluate_transformed(self, t, xi, z=None) -> np.ndarray:
        single = np.asarray(xi).ndim == 1
        times, xi, z, mask = self._prepare(t, xi, z)
        out = self._term_values(times, self._points(xi, z, True, False), mask)
        return out[:, 0] if single else out

    def total(self, times, state, control, linear: bool, dt: float) -> np.ndarray:
        """Discretized objective: dt * sum over knots, controls absent at the last knot."""
        padded = np.vstack([control, np.zeros((1, control.shape[1]))])
        mask = np.ones(len(times))
        mask[-1] = 0.0
        vals = self._term_values(np.asarray(times, dtype=float), self._points(state, padded, linear, False), mask)
        return dt * vals.sum(axis=1)

    def quadraticize(self, times, state, control, *, linear: bool = True, drop_terms: bool = False,
                     regularize: bool = True, scale: float = 1.0, terminal: bool = False,
                     mu: float = MU) -> QuadraticApprox:
        """Quadratic models of every player's cost about (state, control).

        ``state`` has one row per knot. ``control`` has the same number of rows,
        or one fewer when ``terminal`` is set, in which case the last knot only
        gets state-dependent terms.
        """
        times = np.asarray(times, dtype=float)
        state = np.asarray(state, dtype=float)
        control = np.asarray(control, dtype=float)
        T = state.shape[0]
        mask = np.ones(T)
        if terminal:
            control = np.vstack([control, np.zeros((1, control.shape[1]))])
            mask[-1] = 0.0
        dyn = self.dynamics
        n, k, N = dyn.n, dyn.k, self.num_players
        points = self._points(state, control, linear, True)
        drop = drop_terms and linear
        l = np.zeros((N, T, n))
        Q = np.zeros((N, T, n, n))
        r = np.zeros((N, T, k))
        R = np.zeros((N, T, k, k))

        # decision-variable layout of each player: state dims then control dims
        cols = []
        for j in range(dyn.num_players):
            s, c = dyn.state_slice(j), dyn.control_slice(j)
            cols.append(np.concatenate([np.arange(s.start, s.stop), n + np.arange(c.start, c.stop)]))

        for i, terms in enumerate(self.terms):
            for term, refs in terms:
                involved = sorted({j for j, _, _ in refs})
                offs = {}
                m_tot = 0
                for j in involved:
                    offs[j] = m_tot
                    m_tot += len(cols[j])
                p = len(refs)
                G = np.zeros((T, p, m_tot))
                G_h = np.zeros((T, p, m_tot))
                jets = []
                for a, (j, space, idx) in enumerate(refs):
                    jet = points[j].get(space)[idx]
                    jets.append(jet)
                    o, mj = offs[j], len(cols[j])
                    G[:, a, o:o + mj] = jet.grad
                    G_h[:, a, o:o + mj] = jet.grad
                    if drop and space == "u":
                        G_h[:, a, o:o + points[j].d] = 0.0
                args = np.stack([jt.val for jt in jets], axis=1)
                val, g, H = term.derivatives(times, args)
                w = mask if _uses_control(refs) else np.ones(T)
                w = w * scale
                g = g * w[:, None]
                H = H * w[:, None, None]
                grad = (g[:, None, :] @ G)[:, 0]
                hess = np.swapaxes(G_h, 1, 2) @ (H @ G_h)
                for a, (j, space, idx) in enumerate(refs):
                    o, mj = offs[j], len(cols[j])
                    h2 = jets[a].hess
                    if drop and space == "u":
                        h2 = h2.copy()
                        d = points[j].d
                        h2[:, :d, :] = 0.0
                        h2[:, :, :d] = 0.0
                    hess[:, o:o + mj, o:o + mj] += g[:, a, None, None] * h2
                idx_all = np.concatenate([cols[j] for j in involved])
                is_state = idx_all < n
                si, ci = idx_all[is_state], idx_all[~is_state] - n
                l[i][:, si] += grad[:, is_state]
                Q[i][:, si[:, None], si[None, :]] += hess[:, is_state][:, :, is_state]
                if ci.size:
                    r[i][:, ci] += grad[:, ~is_state]
                    # keep only each player's own control block
                    for j in involved:
                        c = dyn.control_slice(j)
                        sel = (~is_state) & (idx_all - n >= c.start) & (idx_all - n < c.stop)
                        if sel.any():
                            cj = idx_all[sel] - n
                            R[i][:, cj[:, None], cj[None, :]] += hess[:, sel][:, :, sel]

        Q = 0.5 * (Q + np.swapaxes(Q, -1, -2))
        R = 0.5 * (R + np.swapaxes(R, -1, -2))
        approx = QuadraticApprox(l, Q, R, r, tuple(dyn.control_slice(j) for j in range(dyn.num_players)))
        if regularize:
            regularize_approx(approx, mu)
        return approx


def regularize_approx(approx: QuadraticApprox, mu: float = MU) -> QuadraticApprox:
    """Shift each Q_i to be PSD and floor each R_ii at mu I, in place."""
    N, T, n, _ = approx.Q.shape
    lam_min = np.linalg.eigvalsh(approx.Q)[..., 0]
    shift = np.maximum(0.0, -lam_min)
    approx.Q += shift[..., None, None] * np.eye(n)
    for i, s in enumerate(approx.control_slices):
        idx = np.arange(s.start, s.stop)
        approx.R[i][:, idx, idx] += mu
    return approx
