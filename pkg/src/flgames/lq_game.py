"""Feedback Nash solution of finite-horizon discrete-time LQ games.

Deviation dynamics and costs, for players i = 1..N::

    dx+ = A dx + sum_j B_j du_j
    cost_i = sum_t [ 1/2 dx'Q_i dx + l_i'dx + sum_j (1/2 du_j'R_ij du_j + r_ij'du_j) ]
             + 1/2 dx_T'Q_i(T) dx_T + l_i(T)'dx_T

Strategies are affine, du_i = -P_i dx - alpha_i, and are found by the backward
coupled Riccati recursion (Basar & Olsder, Corollary 6.1), with the players'
first-order conditions at each step stacked into one linear solve.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Optional, Sequence

import numpy as np

from .errors import LQNoSolutionError

COND_LIMIT = 1e12


@dataclass
class LQGameStage:
    """Data of one time step. For the terminal stage only Q and l are read."""

    Q: list
    l: list
    A: Optional[np.ndarray] = None
    B: Optional[list] = None
    R: Optional[list] = None
    r: Optional[list] = None


@dataclass
class AffineStrategy:
    """Joint gains P (H, k, n) and feedforwards alpha (H, k); player i owns rows ``slices[i]``."""

    P: np.ndarray
    alpha: np.ndarray
    slices: tuple

    @property
    def horizon(self) -> int:
        return self.P.shape[0]

    def gain(self, i: int, t: int) -> np.ndarray:
        return self.P[t, self.slices[i]]

    def feedforward(self, i: int, t: int) -> np.ndarray:
        return self.alpha[t, self.slices[i]]

    def copy(self) -> "AffineStrategy":
        return AffineStrategy(self.P.copy(), self.alpha.copy(), self.slices)


def control_slices(dims: Sequence[int]) -> tuple:
    offs = np.cumsum([0] + list(dims))
    return tuple(slice(int(offs[i]), int(offs[i + 1])) for i in range(len(dims)))


def stack_stages(stages: Sequence[LQGameStage]):
    """Convert per-stage data into the batched arrays used by :func:`solve_arrays`."""
    *steps, last = stages
    N = len(last.Q)
    dims = [b.shape[1] for b in steps[0].B]
    k = sum(dims)
    sl = control_slices(dims)
    A = np.array([s.A for s in steps], dtype=float)
    B = np.array([np.concatenate(s.B, axis=1) for s in steps], dtype=float)
    Q = np.array([[s.Q[i] for s in stages] for i in range(N)], dtype=float)
    l = np.array([[s.l[i] for s in stages] for i in range(N)], dtype=float)
    H = len(steps)
    R = np.zeros((N, H, k, k))
    r = np.zeros((N, H, k))
    for t, s in enumerate(steps):
        for i in range(N):
            for j in range(N):
                R[i, t, sl[j], sl[j]] = s.R[i][j]
                if s.r is not None:
                    r[i, t, sl[j]] = s.r[i][j]
    return A, B, Q, l, R, r, sl


def solve(stages: Sequence[LQGameStage]) -> AffineStrategy:
    """Solve the game given ``H + 1`` stages, the last holding terminal costs."""
    return solve_arrays(*stack_stages(stages))


def solve_arrays(A, B, Q, l, R, r, slices, record: Optional[list] = None) -> AffineStrategy:
    """Batched solve.

    A (H, n, n); B (H, n, k) joint; Q (N, H+1, n, n); l (N, H+1, n);
    R (N, H, k, k) with block (j, j) = R_ij; r (N, H, k).
    Raises LQNoSolutionError when the coupled gain system is singular.
    If ``record`` is a list, the value terms (Z, zeta) of every step are appended to it.
    """
    H, n, _ = A.shape
    k = B.shape[2]
    Z = Q[:, H].copy()
    zeta = l[:, H].copy()
    P_all = np.empty((H, k, n))
    a_all = np.empty((H, k))
    S = np.empty((k, k))
    Y = np.empty((k, n + 1))
    own = [(s, np.arange(s.start, s.stop)) for s in slices]
    for t in range(H - 1, -1, -1):
        At, Bt = A[t], B[t]
        ZB = Z @ Bt                                  # (N, n, k)
        ZA = Z @ At                                  # (N, n, n)
        for i, (s, idx) in enumerate(own):
            Bi_T = Bt[:, s].T
            S[s] = Bi_T @ ZB[i]
            S[s, s] += R[i, t][s, s]
            Y[s, :n] = Bi_T @ ZA[i]
            Y[s, n] = Bi_T @ zeta[i] + r[i, t, s]
        if np.linalg.cond(S) > COND_LIMIT:
            raise LQNoSolutionError(f"coupled gain system is singular at step {t}", step=t)
        sol = np.linalg.solve(S, Y)
        P, alpha = sol[:, :n], sol[:, n]
        P_all[t] = P
        a_all[t] = alpha
        F = At - Bt @ P
        beta = -Bt @ alpha
        RP = R[:, t] @ P                             # (N, k, n)
        Z_new = Q[:, t] + P.T @ RP + F.T @ Z @ F
        zeta_new = (l[:, t] + (R[:, t] @ alpha - r[:, t]) @ P
                    + (zeta + Z @ beta) @ F)
        Z = 0.5 * (Z_new + np.swapaxes(Z_new, 1, 2))
        zeta = zeta_new
        if record is not None:
            record.append((Z.copy(), zeta.copy()))
    return AffineStrategy(P_all, a_all, tuple(slices))


def closed_loop_rollout(A, B, strategy: AffineStrategy, dx0) -> tuple[np.ndarray, np.ndarray]:
    """Simulate dx+ = A dx + B du with du = -P dx - alpha; returns (dx (H+1, n), du (H, k))."""
    A = np.asarray(A, dtype=float)
    B = np.asarray(B, dtype=float)
    H = strategy.horizon
    n = A.shape[-1]
    dx = np.empty((H + 1, n))
    du = np.empty((H, strategy.P.shape[1]))
    dx[0] = dx0
    for t in range(H):
        du[t] = -strategy.P[t] @ dx[t] - strategy.alpha[t]
        dx[t + 1] = A[t] @ dx[t] + B[t] @ du[t]
    return dx, du


def player_costs(Q, l, R, r, dx, du) -> np.ndarray:
    """Each player's total quadratic cost along a deviation trajectory."""
    state = 0.5 * np.einsum("tn,itnm,tm->i", dx, Q, dx) + np.einsum("itn,tn->i", l, dx)
    ctrl = 0.5 * np.einsum("tk,itkj,tj->i", du, R, du) + np.einsum("itk,tk->i", r, du)
    return state + ctrl
