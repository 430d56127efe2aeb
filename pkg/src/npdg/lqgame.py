"""Two-player LQ differential games: Nash equilibria and closed-loop simulation.

The game is a shared linear plant driven by one input channel per player,
with each player minimizing an infinite-horizon quadratic cost.  Feedback
Nash equilibria are computed from the coupled algebraic Riccati equations
by best-response iteration, and closed loops are simulated with the exact
matrix-exponential flow.
"""

from dataclasses import dataclass, field

import numpy as np
import scipy.linalg

from .errors import IndefiniteWeight, NoConvergence, NonStabilizable, ShapeMismatch
from .validation import (
    as_vector,
    check_pd,
    check_psd,
    check_shape,
    check_square,
    check_symmetric,
    check_time_grid,
    freeze,
)

TOL_RIC = 1e-8
TOL_LIN = 1e-8
HURWITZ_MARGIN = 1e-9

DEFAULT_PLAYERS = ("a", "h")


@dataclass(frozen=True)
class LtiGameDynamics:
    """Shared LTI plant ``xdot = A x + sum_i B_i u_i``."""

    A: np.ndarray
    B: tuple
    players: tuple = DEFAULT_PLAYERS

    def __init__(self, A, B, players=DEFAULT_PLAYERS):
        A = check_square(A, "A")
        n = A.shape[0]
        players = tuple(players)
        if len(players) != len(B):
            raise ShapeMismatch("one input matrix per player is required")
        mats = []
        for label, Bi in zip(players, B):
            Bi = np.atleast_2d(np.asarray(Bi, dtype=float))
            if Bi.shape[0] != n:
                raise ShapeMismatch(
                    f"B[{label}] must have {n} rows, got {Bi.shape[0]}"
                )
            mats.append(freeze(Bi))
        object.__setattr__(self, "A", freeze(A))
        object.__setattr__(self, "B", tuple(mats))
        object.__setattr__(self, "players", players)

    @property
    def state_dim(self):
        return self.A.shape[0]

    @property
    def input_dims(self):
        return tuple(Bi.shape[1] for Bi in self.B)

    @property
    def total_input_dim(self):
        return sum(self.input_dims)

    @property
    def B_stacked(self):
        """Column-concatenated input matrix ``[B_a, B_h]``."""
        return np.hstack(self.B)

    def player_index(self, player):
        try:
            return self.players.index(player)
        except ValueError:
            raise ShapeMismatch(f"unknown player {player!r}") from None

    def input_slice(self, player):
        """Slice of the stacked input vector owned by ``player``."""
        idx = self.player_index(player)
        start = sum(self.input_dims[:idx])
        return slice(start, start + self.input_dims[idx])


@dataclass(frozen=True)
class PlayerCost:
    """Quadratic cost of one player: state weight Q and input blocks R[j]."""

    owner: str
    Q: np.ndarray
    R: dict

    def __init__(self, owner, Q, R):
        Q = check_psd(Q, f"Q[{owner}]")
        blocks = {}
        for label, block in R.items():
            block = np.atleast_2d(np.asarray(block, dtype=float))
            if label == owner:
                block = check_pd(block, f"R[{owner},{owner}]")
            else:
                block = check_psd(block, f"R[{owner},{label}]")
            blocks[label] = freeze(block)
        if owner not in blocks:
            raise ShapeMismatch(f"cost of player {owner!r} lacks its own R block")
        object.__setattr__(self, "owner", owner)
        object.__setattr__(self, "Q", freeze(Q))
        object.__setattr__(self, "R", blocks)

    @property
    def R_own(self):
        return self.R[self.owner]


@dataclass(frozen=True)
class DifferentialGame:
    """Plant plus one quadratic cost per player."""

    dynamics: LtiGameDynamics
    costs: tuple

    def __init__(self, dynamics, costs):
        costs = tuple(costs)
        if len(costs) != len(dynamics.players):
            raise ShapeMismatch("one cost per player is required")
        n = dynamics.state_dim
        dims = dynamics.input_dims
        for idx, (label, cost) in enumerate(zip(dynamics.players, costs)):
            if cost.owner != label:
                raise ShapeMismatch(
                    f"cost #{idx} is owned by {cost.owner!r}, expected {label!r}"
                )
            check_shape(cost.Q, (n, n), f"Q[{label}]")
            for jdx, other in enumerate(dynamics.players):
                if other in cost.R:
                    check_shape(
                        cost.R[other], (dims[jdx], dims[jdx]), f"R[{label},{other}]"
                    )
        object.__setattr__(self, "dynamics", dynamics)
        object.__setattr__(self, "costs", costs)

    def cost(self, player):
        return self.costs[self.dynamics.player_index(player)]

    def cross_weight(self, player, other):
        """R[player, other], defaulting to zeros when the block is absent."""
        cost = self.cost(player)
        if other in cost.R:
            return cost.R[other]
        p = self.dynamics.input_dims[self.dynamics.player_index(other)]
        return np.zeros((p, p))


@dataclass(frozen=True)
class NashSolution:
    """Feedback Nash equilibrium: Riccati solutions, gains, closed loop."""

    P: tuple
    K: tuple
    A_c: np.ndarray

    def __init__(self, P, K, A_c):
        object.__setattr__(self, "P", tuple(freeze(np.asarray(p, float)) for p in P))
        object.__setattr__(self, "K", tuple(freeze(np.atleast_2d(k)) for k in K))
        object.__setattr__(self, "A_c", freeze(check_square(A_c, "A_c")))

    @property
    def K_stacked(self):
        return np.vstack(self.K)


@dataclass(frozen=True)
class Trajectory:
    """Sampled states and per-player inputs on a strictly increasing grid."""

    times: np.ndarray
    states: np.ndarray
    inputs: tuple = ()

    def __init__(self, times, states, inputs=()):
        times = check_time_grid(times)
        states = np.atleast_2d(np.asarray(states, dtype=float))
        if states.shape[0] != times.size:
            raise ShapeMismatch("states and times must have equal length")
        inputs = tuple(np.atleast_2d(np.asarray(u, dtype=float)) for u in inputs)
        for u in inputs:
            if u.shape[0] != times.size:
                raise ShapeMismatch("inputs and times must have equal length")
        object.__setattr__(self, "times", freeze(times))
        object.__setattr__(self, "states", freeze(states))
        object.__setattr__(self, "inputs", tuple(freeze(u) for u in inputs))

    def __len__(self):
        return self.times.size

    @property
    def state_dim(self):
        return self.states.shape[1]

    @property
    def end_state(self):
        return self.states[-1]

    def stacked_inputs(self):
        if not self.inputs:
            raise ShapeMismatch("trajectory carries no inputs")
        return np.hstack(self.inputs)


def default_grid(t_end=10.0, dt=0.04):
    """Uniform grid [0, t_end] at 25 Hz by default."""
    steps = int(round(t_end / dt))
    return np.linspace(0.0, steps * dt, steps + 1)


def _is_hurwitz(A, margin=HURWITZ_MARGIN):
    return np.max(np.linalg.eigvals(A).real) < -margin


def solve_lqr(A, B, Q, R):
    """Solve the single-agent algebraic Riccati equation.

    Returns (P, K) with A^T P + P A + Q - P B R^-1 B^T P = 0 and
    K = R^-1 B^T P; A - B K is verified Hurwitz.
    """
    A = check_square(A, "A")
    B = check_shape(np.atleast_2d(B), (A.shape[0], np.atleast_2d(B).shape[1]), "B")
    Q = check_psd(Q, "Q")
    R = check_pd(R, "R")
    try:
        P = scipy.linalg.solve_continuous_are(A, B, Q, R)
    except (np.linalg.LinAlgError, ValueError) as exc:
        # Q = 0 with stable A admits the trivial solution but can trip the
        # Hamiltonian solver on some builds.
        if np.allclose(Q, 0) and _is_hurwitz(A, margin=0.0):
            P = np.zeros_like(A)
        else:
            raise NonStabilizable(f"Riccati solve failed: {exc}") from exc
    P = 0.5 * (P + P.T)
    K = np.linalg.solve(R, B.T @ P)
    residual = np.linalg.norm(A.T @ P + P @ A + Q - P @ B @ K)
    if residual > max(TOL_RIC, TOL_RIC * np.linalg.norm(P)):
        raise NonStabilizable(f"Riccati residual {residual:.3e} too large")
    if not _is_hurwitz(A - B @ K, margin=0.0):
        raise NonStabilizable("closed loop A - B K is not Hurwitz")
    return P, K


def closed_loop_matrix(dynamics, gains):
    """A - sum_i B_i K_i for the given per-player feedback gains."""
    Ac = dynamics.A.copy()
    if len(gains) != len(dynamics.B):
        raise ShapeMismatch("one gain per player is required")
    for Bi, Ki, p in zip(dynamics.B, gains, dynamics.input_dims):
        Ki = check_shape(np.atleast_2d(Ki), (p, dynamics.state_dim), "K")
        Ac = Ac - Bi @ Ki
    return Ac


def coupled_riccati_residuals(game, nash):
    """Per-player Frobenius residual of the coupled Riccati equations."""
    dyn = game.dynamics
    Ac = nash.A_c
    residuals = {}
    for idx, player in enumerate(dyn.players):
        cost = game.costs[idx]
        acc = Ac.T @ nash.P[idx] + nash.P[idx] @ Ac + cost.Q
        for jdx, other in enumerate(dyn.players):
            Rij = game.cross_weight(player, other)
            acc = acc + nash.K[jdx].T @ Rij @ nash.K[jdx]
        residuals[player] = float(np.linalg.norm(acc))
    return residuals


def solve_coupled_riccati(game, tol=TOL_RIC, max_iter=300):
    """Feedback Nash equilibrium of a two-player LQ game.

    Best-response iteration: hold the other player's gain fixed, solve the
    resulting single-agent Riccati equation, repeat until the coupled
    residuals drop below ``tol``.  Initialized from the per-player
    decoupled LQR solutions.
    """
    dyn = game.dynamics
    n = dyn.state_dim
    n_players = len(dyn.players)

    P = [np.zeros((n, n)) for _ in range(n_players)]
    K = [np.zeros((p, n)) for p in dyn.input_dims]
    solo_failed = []
    for idx in range(n_players):
        cost = game.costs[idx]
        try:
            P[idx], K[idx] = solve_lqr(dyn.A, dyn.B[idx], cost.Q, cost.R_own)
        except NonStabilizable:
            solo_failed.append(idx)
    if solo_failed:
        # a player's solo problem can be unstabilizable even though the
        # joint plant is; seed those players from a stacked LQR instead
        Q_joint = sum(cost.Q for cost in game.costs)
        R_joint = scipy.linalg.block_diag(*(c.R_own for c in game.costs))
        try:
            _, K_joint = solve_lqr(dyn.A, dyn.B_stacked, Q_joint, R_joint)
        except NonStabilizable as exc:
            raise NonStabilizable(
                f"no stabilizing initialization found: {exc}"
            ) from exc
        offsets = np.cumsum((0,) + dyn.input_dims)
        for idx in solo_failed:
            K[idx] = K_joint[offsets[idx] : offsets[idx + 1]]

    def best_response(idx):
        cost = game.costs[idx]
        A_eff = dyn.A.copy()
        Q_eff = cost.Q.copy()
        for jdx, other in enumerate(dyn.players):
            if jdx == idx:
                continue
            A_eff = A_eff - dyn.B[jdx] @ K[jdx]
            Rij = game.cross_weight(dyn.players[idx], other)
            Q_eff = Q_eff + K[jdx].T @ Rij @ K[jdx]
        Q_eff = 0.5 * (Q_eff + Q_eff.T)
        return solve_lqr(A_eff, dyn.B[idx], Q_eff, cost.R_own)

    last_residual = np.inf
    for iteration in range(1, max_iter + 1):
        for idx in range(n_players):
            try:
                P[idx], K[idx] = best_response(idx)
            except (NonStabilizable, IndefiniteWeight) as exc:
                raise NonStabilizable(
                    f"best-response solve failed for player "
                    f"{dyn.players[idx]!r} at iteration {iteration}: {exc}"
                ) from exc
        Ac = closed_loop_matrix(dyn, K)
        trial = NashSolution(P=P, K=K, A_c=Ac)
        residual = max(coupled_riccati_residuals(game, trial).values())
        if residual <= 0.1 * tol or (
            residual <= tol and abs(last_residual - residual) <= 0.01 * tol
        ):
            if not _is_hurwitz(Ac):
                raise NonStabilizable("converged closed loop is not Hurwitz")
            return trial
        last_residual = residual
    raise NoConvergence(
        f"coupled Riccati iteration did not converge "
        f"(residual {last_residual:.3e} after {max_iter} sweeps)",
        iterations=max_iter,
        residual=last_residual,
    )


def simulate_closed_loop(A_c, x0, times, gains=None):
    """Exact flow of ``xdot = A_c x`` sampled on ``times``.

    States are propagated with the matrix exponential per grid step (no
    forward-Euler error).  When ``gains`` are supplied, per-player inputs
    ``u_i = -K_i x`` are attached to the trajectory.
    """
    A_c = check_square(A_c, "A_c")
    x0 = as_vector(x0, "x0")
    if x0.size != A_c.shape[0]:
        raise ShapeMismatch("x0 does not match A_c")
    times = check_time_grid(times)

    states = np.empty((times.size, x0.size))
    states[0] = x0
    step_cache = {}
    for k in range(1, times.size):
        dt = times[k] - times[k - 1]
        key = round(dt, 12)
        if key not in step_cache:
            step_cache[key] = scipy.linalg.expm(A_c * dt)
        states[k] = step_cache[key] @ states[k - 1]

    inputs = ()
    if gains is not None:
        inputs = tuple(-states @ np.atleast_2d(K).T for K in gains)
    return Trajectory(times=times, states=states, inputs=inputs)


def player_hamiltonian_gradient(game, nash, x, u, player):
    """Gradient of player ``player``'s Hamiltonian in its own input.

    Evaluates R_ii u_i + B_i^T P_i x with the costate lambda_i = P_i x;
    ``u`` is the stacked input vector of all players.
    """
    dyn = game.dynamics
    idx = dyn.player_index(player)
    x = as_vector(x, "x")
    u = as_vector(u, "u")
    if x.size != dyn.state_dim:
        raise ShapeMismatch("x does not match the state dimension")
    if u.size != dyn.total_input_dim:
        raise ShapeMismatch("u must be the stacked input of all players")
    u_own = u[dyn.input_slice(player)]
    cost = game.costs[idx]
    return cost.R_own @ u_own + dyn.B[idx].T @ nash.P[idx] @ x
