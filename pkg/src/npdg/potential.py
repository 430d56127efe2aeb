"""Exact and near potential surrogates for two-player LQ games.

A potential surrogate replaces the game by a single optimal-control
problem whose input-gradient matches every player's own-input Hamiltonian
gradient.  When the match is only approximate, the differential distance
quantifies the gap and a computable bound limits how far the surrogate's
closed-loop trajectory can drift from the game's.
"""

from dataclasses import dataclass

import numpy as np
import scipy.linalg

from .errors import ShapeMismatch
from .lqgame import TOL_LIN, TOL_RIC, simulate_closed_loop, solve_lqr
from .validation import as_vector, check_pd, check_psd, check_shape, check_square, check_time_grid, freeze


@dataclass(frozen=True)
class PotentialGame:
    """Single-agent surrogate (Qp, Rp) with its Riccati solution and gain."""

    dynamics: object
    Qp: np.ndarray
    Rp: np.ndarray
    Pp: np.ndarray
    K: np.ndarray
    Acp: np.ndarray

    def __init__(self, dynamics, Qp, Rp, Pp, K=None, Acp=None):
        n = dynamics.state_dim
        m = dynamics.total_input_dim
        Qp = check_psd(check_shape(Qp, (n, n), "Qp"), "Qp")
        Rp = check_pd(check_shape(Rp, (m, m), "Rp"), "Rp")
        Pp = check_shape(Pp, (n, n), "Pp")
        Pp = 0.5 * (Pp + Pp.T)
        B = dynamics.B_stacked
        if K is None:
            K = np.linalg.solve(Rp, B.T @ Pp)
        K = check_shape(K, (m, n), "K")
        if Acp is None:
            Acp = dynamics.A - B @ K
        Acp = check_shape(Acp, (n, n), "Acp")
        object.__setattr__(self, "dynamics", dynamics)
        object.__setattr__(self, "Qp", freeze(Qp))
        object.__setattr__(self, "Rp", freeze(Rp))
        object.__setattr__(self, "Pp", freeze(Pp))
        object.__setattr__(self, "K", freeze(K))
        object.__setattr__(self, "Acp", freeze(Acp))

    @classmethod
    def from_weights(cls, dynamics, Qp, Rp):
        """Build the surrogate by solving its Riccati equation."""
        Pp, K = solve_lqr(dynamics.A, dynamics.B_stacked, Qp, Rp)
        return cls(dynamics, Qp, Rp, Pp, K=K)

    def are_residual(self):
        """Frobenius norm of the surrogate's algebraic Riccati equation."""
        A = self.dynamics.A
        B = self.dynamics.B_stacked
        res = A.T @ self.Pp + self.Pp @ A + self.Qp - self.Pp @ B @ np.linalg.solve(
            self.Rp, B.T @ self.Pp
        )
        return float(np.linalg.norm(res))

    def gain_residual(self):
        B = self.dynamics.B_stacked
        return float(np.linalg.norm(self.Rp @ self.K - B.T @ self.Pp))

    def validate(self, tol_ric=TOL_RIC, tol_lin=TOL_LIN):
        if self.are_residual() > tol_ric:
            raise ShapeMismatch(
                f"surrogate Riccati residual {self.are_residual():.3e} exceeds {tol_ric}"
            )
        if self.gain_residual() > tol_lin:
            raise ShapeMismatch("surrogate gain is inconsistent with Rp, Pp")
        return self

    def player_gains(self):
        """Rows of the stacked gain split per player."""
        return tuple(
            self.K[self.dynamics.input_slice(p)] for p in self.dynamics.players
        )

    def simulate(self, x0, times):
        return simulate_closed_loop(self.Acp, x0, times, gains=self.player_gains())


def exact_pdg_residual(game, nash, pot):
    """Coefficient mismatches that must vanish for an exact potential game.

    For each player returns ``(input_weight_residual, costate_residual)``:
    the i-block row of Rp against the player's own input weight embedded at
    its own columns (zero elsewhere), and ``B_i^T (Pp - P_i)``.  Both being
    zero makes the surrogate's input gradient identical to the player's for
    every state and input.
    """
    dyn = game.dynamics
    B = dyn.B_stacked
    out = {}
    for idx, player in enumerate(dyn.players):
        rows = dyn.input_slice(player)
        target = np.zeros((dyn.input_dims[idx], dyn.total_input_dim))
        target[:, rows] = game.costs[idx].R_own
        r_weights = float(np.linalg.norm(pot.Rp[rows, :] - target))
        r_costate = float(np.linalg.norm(dyn.B[idx].T @ (pot.Pp - nash.P[idx])))
        out[player] = (r_weights, r_costate)
    return out


def differential_distance(game, nash, pot, traj):
    """Per-player time series of the input-gradient gap along ``traj``.

    sigma_i(t) = || (Rp u + B_i^T Pp x) - (R_ii u_i + B_i^T P_i x) ||_2
    evaluated at every sample, plus the max over players and time.
    """
    dyn = game.dynamics
    x = traj.states
    u = traj.stacked_inputs()
    if u.shape[1] != dyn.total_input_dim:
        raise ShapeMismatch("trajectory inputs do not match the game")
    series = {}
    overall = 0.0
    for idx, player in enumerate(dyn.players):
        rows = dyn.input_slice(player)
        grad_pot = u @ pot.Rp[rows, :].T + x @ (dyn.B[idx].T @ pot.Pp).T
        grad_game = u[:, rows] @ game.costs[idx].R_own.T + x @ (
            dyn.B[idx].T @ nash.P[idx]
        ).T
        sigma = np.linalg.norm(grad_pot - grad_game, axis=1)
        series[player] = sigma
        overall = max(overall, float(sigma.max()))
    return series, overall


def npdg_distance_bound(nash, pot, x_max, delta):
    """Closed-form near-potential test: max_i ||B_i^T (Pp - P_i)||_2 * x_max < delta."""
    if x_max < 0:
        raise ShapeMismatch("x_max must be nonnegative")
    dyn = pot.dynamics
    bound = 0.0
    for idx in range(len(dyn.players)):
        gap = np.linalg.norm(dyn.B[idx].T @ (pot.Pp - nash.P[idx]), 2)
        bound = max(bound, float(gap))
    bound *= x_max
    return bound, bound < delta


def csme(Ac_star, Acp):
    """Spectral-norm error between the two closed-loop state matrices."""
    Ac_star = check_square(Ac_star, "Ac_star")
    Acp = check_shape(Acp, Ac_star.shape, "Acp")
    return float(np.linalg.norm(Ac_star - Acp, 2))


def deviation_bound(delta, B, Acp, x0, times):
    """Trajectory-deviation bound eps(t) = ||exp(Acp t) x0|| (e^{2||B|| delta t} - 1)."""
    if delta < 0:
        raise ShapeMismatch("delta must be nonnegative")
    B = np.atleast_2d(np.asarray(B, dtype=float))
    Acp = check_square(Acp, "Acp")
    x0 = as_vector(x0, "x0")
    times = check_time_grid(times)
    norm_b = np.linalg.norm(B, 2)
    flow = simulate_closed_loop(Acp, x0, times).states
    decay = np.linalg.norm(flow, axis=1)
    growth = np.expm1(2.0 * norm_b * delta * (times - times[0]))
    return decay * growth


@dataclass(frozen=True)
class NpdgCertificate:
    """Evidence that a game is near-potential with respect to a surrogate.

    Distances are measured along both the game's and the surrogate's
    closed-loop trajectories from the same initial state; the certificate
    is valid when the worst distance stays below delta.  Window distances
    cover consecutive 1 s spans so decaying-distance behaviour over long
    horizons can be checked.
    """

    delta: float
    per_player_distance: dict
    x_max: float
    bound_value: float
    norm_B: float
    epsilon: np.ndarray
    trajectory_gap: np.ndarray
    lemma2_violations: int
    window_distances: tuple
    window_monotone_violations: tuple
    times: np.ndarray

    @property
    def max_distance(self):
        return max(self.per_player_distance.values())

    @property
    def is_valid(self):
        return self.max_distance < self.delta

    def to_dict(self):
        return {
            "delta": self.delta,
            "per_player_distance": dict(self.per_player_distance),
            "x_max": self.x_max,
            "bound_value": self.bound_value,
            "lemma2_violations": self.lemma2_violations,
            "window_distances": list(self.window_distances),
            "window_monotone_violations": list(self.window_monotone_violations),
        }


def certify_npdg(game, nash, pot, x0, times, delta, window=1.0):
    """Measure all near-potential diagnostics for one (game, surrogate) pair."""
    times = check_time_grid(times)
    x0 = as_vector(x0, "x0")
    dyn = game.dynamics

    traj_game = simulate_closed_loop(nash.A_c, x0, times, gains=nash.K)
    traj_pot = pot.simulate(x0, times)

    sigma_game, _ = differential_distance(game, nash, pot, traj_game)
    sigma_pot, _ = differential_distance(game, nash, pot, traj_pot)
    per_player = {
        p: float(max(sigma_game[p].max(), sigma_pot[p].max()))
        for p in dyn.players
    }
    sigma_all = np.maximum(
        np.max(np.stack([sigma_game[p] for p in dyn.players]), axis=0),
        np.max(np.stack([sigma_pot[p] for p in dyn.players]), axis=0),
    )

    x_max = float(
        max(
            np.linalg.norm(traj_game.states, axis=1).max(),
            np.linalg.norm(traj_pot.states, axis=1).max(),
        )
    )
    bound_value, _ = npdg_distance_bound(nash, pot, x_max, delta)

    eps = deviation_bound(delta, dyn.B_stacked, pot.Acp, x0, times)
    gap = np.linalg.norm(traj_pot.states - traj_game.states, axis=1)
    violations = int(np.sum(gap > eps + 1e-12))

    rel = times - times[0]
    n_windows = max(1, int(np.ceil(rel[-1] / window))) if rel[-1] > 0 else 1
    window_distances = []
    for w in range(n_windows):
        mask = (rel >= w * window) & (rel <= (w + 1) * window)
        window_distances.append(float(sigma_all[mask].max()) if mask.any() else 0.0)
    monotone_violations = tuple(
        w
        for w in range(len(window_distances) - 1)
        if window_distances[w] < window_distances[w + 1] - 1e-12
    )

    return NpdgCertificate(
        delta=float(delta),
        per_player_distance=per_player,
        x_max=x_max,
        bound_value=float(bound_value),
        norm_B=float(np.linalg.norm(dyn.B_stacked, 2)),
        epsilon=freeze(eps),
        trajectory_gap=freeze(gap),
        lemma2_violations=violations,
        window_distances=tuple(window_distances),
        window_monotone_violations=monotone_violations,
        times=freeze(times),
    )
