"""Cooperation state, extended system, and the FISC/LISC nested designs.

The cooperation state reconstructs the human-controlled (non-measurable)
states as a linear map of both agents' inputs, derived from the potential
surrogate's optimality conditions.  The limited-information controller is
an LQR on an extended system that replaces those states by the
reconstruction, tuned so its inputs track a full-information reference.
"""

from dataclasses import dataclass, field

import numpy as np
import scipy.linalg
import scipy.optimize

from .errors import (
    InnerSolverFailed,
    LqrFailed,
    NoDescent,
    NonStabilizable,
    ShapeMismatch,
    SingularPencil,
)
from .lqgame import (
    DifferentialGame,
    NashSolution,
    PlayerCost,
    Trajectory,
    default_grid,
    simulate_closed_loop,
    solve_coupled_riccati,
)
from .validation import as_vector, check_shape, check_square, freeze

PINV_TOL = 1e-9


@dataclass(frozen=True)
class StatePartition:
    """Split of the state vector into measurable and non-measurable indices."""

    measurable: tuple
    nonmeasurable: tuple

    def __init__(self, measurable, nonmeasurable):
        measurable = tuple(int(i) for i in measurable)
        nonmeasurable = tuple(int(i) for i in nonmeasurable)
        if set(measurable) & set(nonmeasurable):
            raise ShapeMismatch("measurable and nonmeasurable indices overlap")
        n = len(measurable) + len(nonmeasurable)
        if set(measurable) | set(nonmeasurable) != set(range(n)):
            raise ShapeMismatch("partition must cover indices 0..n-1 exactly")
        object.__setattr__(self, "measurable", measurable)
        object.__setattr__(self, "nonmeasurable", nonmeasurable)

    @property
    def k(self):
        return len(self.nonmeasurable)

    def check_block_structure(self, A, tol=1e-9):
        """The non-measurable states must not drive the measurable ones."""
        A = check_square(A, "A")
        block = A[np.ix_(self.measurable, self.nonmeasurable)]
        if np.abs(block).max() > tol:
            raise ShapeMismatch(
                "dynamics couple non-measurable states into measurable ones"
            )


@dataclass(frozen=True)
class CooperationStateDesign:
    """Reconstruction weights x_kappa = Xi_a u_a + Xi_h u_h."""

    Xi_a: np.ndarray
    Xi_h: np.ndarray
    sign_variant: str
    consistency_residual: float
    pinv_residual: float

    def __post_init__(self):
        object.__setattr__(self, "Xi_a", freeze(np.atleast_2d(self.Xi_a)))
        object.__setattr__(self, "Xi_h", freeze(np.atleast_2d(self.Xi_h)))


def cooperation_state_matrix(pot, sign="corrected"):
    """Coefficient matrix M of the input-to-state relation M x = -Pp B u.

    The corrected variant uses the standard adjoint sign and satisfies the
    relation exactly along the surrogate's closed loop (it equals the
    quadratic Riccati term); the printed variant flips the A^T Pp term and
    is kept selectable for comparison.
    """
    A = pot.dynamics.A
    if sign == "corrected":
        return pot.Pp @ A + pot.Qp + A.T @ pot.Pp
    if sign == "printed":
        return pot.Pp @ A + pot.Qp - A.T @ pot.Pp
    raise ShapeMismatch(f"unknown sign variant {sign!r}")


def derive_cooperation_state(pot, partition, sign="corrected", x0=None, times=None):
    """Cooperation-state weights from the surrogate's optimality conditions.

    Expresses the state as x = -M^+ Pp B u via the Moore-Penrose inverse
    and keeps the non-measurable rows, split by input columns.  Reports
    the worst-case residual of M x + Pp B u along the surrogate's Nash
    closed loop as a diagnostic of the sign variant.
    """
    dyn = pot.dynamics
    partition.check_block_structure(dyn.A)
    M = cooperation_state_matrix(pot, sign=sign)
    rank = int(np.linalg.matrix_rank(M))
    if rank < partition.k:
        raise SingularPencil(
            f"cooperation-state matrix rank {rank} below the "
            f"{partition.k} non-measurable states",
            effective_rank=rank,
        )
    M_pinv = np.linalg.pinv(M)
    pinv_residual = float(np.linalg.norm(M @ M_pinv @ M - M))
    if pinv_residual > PINV_TOL * max(1.0, np.linalg.norm(M)):
        raise SingularPencil(
            f"pseudoinverse contract violated (residual {pinv_residual:.3e})",
            effective_rank=rank,
        )
    B = dyn.B_stacked
    G = -M_pinv @ (pot.Pp @ B)
    rows = list(partition.nonmeasurable)
    Xi_a = G[np.ix_(rows, range(*_span(dyn, 0)))]
    Xi_h = G[np.ix_(rows, range(*_span(dyn, 1)))]

    if times is None:
        times = default_grid()
    if x0 is None:
        n = dyn.state_dim
        x0 = np.ones(n) / np.sqrt(n)
    traj = pot.simulate(x0, times)
    u = traj.stacked_inputs()
    resid = traj.states @ M.T + u @ (pot.Pp @ B).T
    consistency = float(np.linalg.norm(resid, axis=1).max())

    return CooperationStateDesign(
        Xi_a=Xi_a,
        Xi_h=Xi_h,
        sign_variant=sign,
        consistency_residual=consistency,
        pinv_residual=pinv_residual,
    )


def _span(dyn, idx):
    start = sum(dyn.input_dims[:idx])
    return start, start + dyn.input_dims[idx]


@dataclass(frozen=True)
class ExtendedSystem:
    """Design model with state [x_m, u_a, x_kappa] driven by input rates."""

    Ae: np.ndarray
    Be_a: np.ndarray
    Be_h: np.ndarray
    partition: StatePartition
    Xi: CooperationStateDesign

    def __post_init__(self):
        object.__setattr__(self, "Ae", freeze(self.Ae))
        object.__setattr__(self, "Be_a", freeze(self.Be_a))
        object.__setattr__(self, "Be_h", freeze(self.Be_h))

    @property
    def dim(self):
        return self.Ae.shape[0]


def build_extended_system(dynamics, partition, Xi):
    """Assemble the extended design model around the cooperation state.

    Block pattern: the measurable subsystem keeps its dynamics and sees
    u_a as a state, the u_a row is a pure integrator of the design input
    du_a, and x_kappa is driven by the input rates through the Xi weights.
    """
    partition.check_block_structure(dynamics.A)
    n = dynamics.state_dim
    k = partition.k
    n_m = n - k
    p_a, p_h = dynamics.input_dims
    meas = list(partition.measurable)
    if Xi.Xi_a.shape != (k, p_a) or Xi.Xi_h.shape != (k, p_h):
        raise ShapeMismatch("cooperation-state weights do not match the partition")

    A_m = dynamics.A[np.ix_(meas, meas)]
    B_a_m = dynamics.B[0][meas, :]
    dim = n_m + p_a + k
    Ae = np.zeros((dim, dim))
    Ae[:n_m, :n_m] = A_m
    Ae[:n_m, n_m : n_m + p_a] = B_a_m
    Be_a = np.vstack([np.zeros((n_m, p_a)), np.eye(p_a), Xi.Xi_a])
    Be_h = np.vstack([np.zeros((n_m, p_h)), np.zeros((p_a, p_h)), Xi.Xi_h])
    return ExtendedSystem(Ae=Ae, Be_a=Be_a, Be_h=Be_h, partition=partition, Xi=Xi)


def extended_lqr(ext, Q, R):
    """LQR gain for the extended system, designed on its controllable subspace.

    The cooperation-state block is only partially controllable through the
    single design input, so the Riccati equation is solved on the reduced
    controllable coordinates and the gain is lifted back (zero feedback on
    the uncontrollable complement, which is marginally stable by
    construction).
    """
    dim = ext.dim
    Q = check_shape(Q, (dim, dim), "Q_LI")
    R = np.atleast_2d(np.asarray(R, dtype=float))
    ctrb = np.hstack(
        [np.linalg.matrix_power(ext.Ae, i) @ ext.Be_a for i in range(dim)]
    )
    U, s, _ = np.linalg.svd(ctrb, full_matrices=True)
    rank = int(np.sum(s > 1e-10 * max(1.0, s[0] if s.size else 0.0)))
    if rank == 0:
        raise LqrFailed("extended system has no controllable subspace")
    basis = U[:, :rank]
    Ar = basis.T @ ext.Ae @ basis
    Br = basis.T @ ext.Be_a
    Qr = basis.T @ Q @ basis
    Qr = 0.5 * (Qr + Qr.T)
    try:
        Pr = scipy.linalg.solve_continuous_are(Ar, Br, Qr, R)
    except (np.linalg.LinAlgError, ValueError) as exc:
        raise LqrFailed(f"extended Riccati solve failed: {exc}") from exc
    Kr = np.linalg.solve(R, Br.T @ Pr)
    if np.max(np.linalg.eigvals(Ar - Br @ Kr).real) >= 0:
        raise LqrFailed("reduced closed loop is not Hurwitz")
    return Kr @ basis.T


@dataclass
class LiscController:
    """Limited-information controller with its input integrator state.

    Runtime use touches only measurable quantities: the measurable states,
    the controller's own input, and the measured human input.
    """

    K_LI: np.ndarray
    Xi: CooperationStateDesign
    Q_LI: np.ndarray
    R_LI: np.ndarray
    u_current: np.ndarray = field(default=None)
    _udot_prev: np.ndarray = field(default=None, repr=False)

    def __post_init__(self):
        self.K_LI = np.atleast_2d(np.asarray(self.K_LI, dtype=float))
        p_a = self.Xi.Xi_a.shape[1]
        if self.u_current is None:
            self.u_current = np.zeros(p_a)
        self.u_current = np.asarray(self.u_current, dtype=float).reshape(p_a)

    def reset(self):
        self.u_current = np.zeros_like(self.u_current)
        self._udot_prev = None


def lisc_control_step(ctrl, x_m, u_h_measured, dt):
    """One controller update at rate 1/dt; returns the new automation input.

    Builds the cooperation state from the current inputs, evaluates the
    input-rate law on the extended state, and integrates trapezoidally.
    """
    if dt <= 0:
        raise ShapeMismatch("dt must be positive")
    x_m = as_vector(x_m, "x_m")
    u_h = as_vector(u_h_measured, "u_h")
    x_kappa = ctrl.Xi.Xi_a @ ctrl.u_current + ctrl.Xi.Xi_h @ u_h
    x_e = np.concatenate([x_m, ctrl.u_current, x_kappa])
    udot = -ctrl.K_LI @ x_e
    prev = udot if ctrl._udot_prev is None else ctrl._udot_prev
    ctrl.u_current = ctrl.u_current + 0.5 * dt * (prev + udot)
    ctrl._udot_prev = udot
    return ctrl.u_current.copy()


def lisc_loop_matrix(dynamics, partition, ctrl, human_gain):
    """State matrix of the plant + human + LISC loop on [x, u_a]."""
    n = dynamics.state_dim
    p_a, p_h = dynamics.input_dims
    n_m = n - partition.k
    human_gain = check_shape(np.atleast_2d(human_gain), (p_h, n), "K_h")
    E_m = np.zeros((n_m, n))
    for row, idx in enumerate(partition.measurable):
        E_m[row, idx] = 1.0
    S_x = np.vstack([E_m, np.zeros((p_a, n)), -ctrl.Xi.Xi_h @ human_gain])
    S_u = np.vstack([np.zeros((n_m, p_a)), np.eye(p_a), ctrl.Xi.Xi_a])
    return np.block(
        [
            [dynamics.A - dynamics.B[1] @ human_gain, dynamics.B[0]],
            [-ctrl.K_LI @ S_x, -ctrl.K_LI @ S_u],
        ]
    )


def simulate_lisc_closed_loop(dynamics, partition, ctrl, human_gain, x0, times):
    """Exact closed loop of plant + human feedback + LISC integrator.

    The automation input is an additional state driven by the rate law, so
    the loop stays LTI and can be propagated with the matrix exponential.
    """
    n = dynamics.state_dim
    human_gain = np.atleast_2d(human_gain)
    x0 = as_vector(x0, "x0")
    Az = lisc_loop_matrix(dynamics, partition, ctrl, human_gain)
    z0 = np.concatenate([x0, np.zeros(dynamics.input_dims[0])])
    z = simulate_closed_loop(Az, z0, times).states
    states = z[:, :n]
    u_a = z[:, n:]
    u_h = -states @ human_gain.T
    return Trajectory(times=times, states=states, inputs=(u_a, u_h))


def simulate_lisc_sampled(dynamics, partition, ctrl, human_gain, x0, times):
    """Sampled-data run: plant in continuous time, controller at 1/dt.

    The automation input is held between controller updates (zero-order
    hold) while the plant and the human's feedback evolve exactly.  This
    is the deployment model; designs must stay faithful to the exact loop
    under it, otherwise their gains are too stiff for the controller rate.
    """
    times = np.asarray(times, dtype=float)
    n = dynamics.state_dim
    p_a, p_h = dynamics.input_dims
    human_gain = np.atleast_2d(human_gain)
    A_h = dynamics.A - dynamics.B[1] @ human_gain
    # exact ZOH discretization per unique step via the augmented exponential
    cache = {}

    def step_matrices(dt):
        key = round(dt, 12)
        if key not in cache:
            aug = np.zeros((n + p_a, n + p_a))
            aug[:n, :n] = A_h
            aug[:n, n:] = dynamics.B[0]
            phi = scipy.linalg.expm(aug * dt)
            cache[key] = (phi[:n, :n], phi[:n, n:])
        return cache[key]

    meas = list(partition.measurable)
    runtime = LiscController(K_LI=ctrl.K_LI, Xi=ctrl.Xi, Q_LI=ctrl.Q_LI, R_LI=ctrl.R_LI)
    states = np.empty((times.size, n))
    u_a = np.empty((times.size, p_a))
    states[0] = np.asarray(x0, dtype=float)
    u_a[0] = runtime.u_current
    for k in range(1, times.size):
        dt = times[k] - times[k - 1]
        x_prev = states[k - 1]
        u_h_prev = -human_gain @ x_prev
        u_cmd = lisc_control_step(runtime, x_prev[meas], u_h_prev, dt)
        Ad, Bd = step_matrices(dt)
        states[k] = Ad @ x_prev + Bd @ u_cmd
        u_a[k] = u_cmd
        if not np.all(np.isfinite(states[k])) or np.abs(states[k]).max() > 1e12:
            raise LqrFailed("sampled-data loop diverged")
    return Trajectory(
        times=times, states=states, inputs=(u_a, -states @ human_gain.T)
    )


def lisc_global_cost(dynamics, partition, ctrl, human_gain, Q_g, R_g, x0):
    """Infinite-horizon global cost of the limited-information loop.

    The loop state is [x, u_a]; the stacked input is recovered from it, so
    the quadratic global integrand is a single Lyapunov solve away.
    """
    n = dynamics.state_dim
    p_a, p_h = dynamics.input_dims
    Az = lisc_loop_matrix(dynamics, partition, ctrl, human_gain)
    if np.max(np.linalg.eigvals(Az).real) >= 0:
        raise LqrFailed("limited-information loop is unstable")
    U = np.zeros((p_a + p_h, n + p_a))
    U[:p_a, n:] = np.eye(p_a)
    U[p_a:, :n] = -np.atleast_2d(human_gain)
    C = np.zeros((n, n + p_a))
    C[:, :n] = np.eye(n)
    W = C.T @ Q_g @ C + U.T @ R_g @ U
    X = scipy.linalg.solve_continuous_lyapunov(Az.T, -(W + W.T) / 2.0)
    z0 = np.concatenate([as_vector(x0, "x0"), np.zeros(p_a)])
    return 0.5 * float(z0 @ X @ z0)


@dataclass(frozen=True)
class FiscDesign:
    """Automation cost recovered by the global-objective outer optimization."""

    theta: np.ndarray
    Q_FI: np.ndarray
    R_FI: dict
    K_FI: np.ndarray
    global_cost_value: float
    game: DifferentialGame
    nash: NashSolution
    history: tuple

    def __post_init__(self):
        object.__setattr__(self, "theta", freeze(np.asarray(self.theta, float)))
        object.__setattr__(self, "Q_FI", freeze(self.Q_FI))
        object.__setattr__(self, "K_FI", freeze(np.atleast_2d(self.K_FI)))

    @property
    def human_gain(self):
        return self.nash.K[1]


def _theta_to_cost(theta, n, p_a, p_h, players=("a", "h")):
    """Diagonal automation cost from the parameter vector.

    Entries are reflected into the nonnegative orthant (|.|) so the
    simplex search never stalls on a clipping plateau; the own-input
    weight keeps a small floor for definiteness.
    """
    theta = np.asarray(theta, dtype=float)
    if theta.size != n + p_a + p_h:
        raise ShapeMismatch(f"theta must have {n + p_a + p_h} entries")
    q = np.abs(theta[:n])
    r_own = np.maximum(np.abs(theta[n : n + p_a]), 1e-3)
    r_cross = np.abs(theta[n + p_a :])
    return PlayerCost(
        players[0],
        np.diag(q),
        {players[0]: np.diag(r_own), players[1]: np.diag(r_cross)},
    )


def global_cost_value(game, nash, Q_g, R_g, eval_states=None):
    """Infinite-horizon global cost on the Nash closed loop.

    With u = -K x the cost from x0 is x0^T X x0 / 2 for the Lyapunov
    solution X.  The value is averaged over ``eval_states`` (rows);
    without them it averages over the canonical basis, i.e.
    trace(X) / (2 n).
    """
    K = nash.K_stacked
    W = Q_g + K.T @ R_g @ K
    X = scipy.linalg.solve_continuous_lyapunov(nash.A_c.T, -(W + W.T) / 2.0)
    if eval_states is None:
        return float(np.trace(X)) / (2.0 * game.dynamics.state_dim)
    states = np.atleast_2d(np.asarray(eval_states, dtype=float))
    return float(np.mean(np.einsum("ij,jk,ik->i", states, X, states))) / 2.0


def _nelder_mead(fun, x0, max_restarts=3, maxfev=400, tol=1e-9):
    best_x = np.asarray(x0, dtype=float)
    best_f = fun(best_x)
    for _ in range(max_restarts):
        out = scipy.optimize.minimize(
            fun,
            best_x,
            method="Nelder-Mead",
            options={"maxfev": maxfev, "xatol": 1e-8, "fatol": 1e-10},
        )
        if out.fun < best_f - tol * max(1.0, abs(best_f)):
            best_x, best_f = out.x, float(out.fun)
        else:
            if out.fun < best_f:
                best_x, best_f = out.x, float(out.fun)
            break
    return best_x, best_f


def design_fisc(dynamics, human_cost, global_weights, theta0, maxfev=300, design_tol=1e-6, eval_states=None):
    """Automation weights minimizing the global cost on the Nash closed loop.

    Inner problem: the coupled Riccati solve for each candidate theta;
    failed candidates are rejected with a large penalty.  Outer problem:
    derivative-free simplex descent with restarts, so the best-so-far
    objective is monotone by construction.

    Scaling a player's cost leaves the equilibrium unchanged, so theta has
    an exact flat direction; the returned design is normalized to unit
    own-input weight norm, which also keeps the identification stage's
    eigenvalue floor and scaling guard mutually satisfiable.
    """
    Q_g, R_g = global_weights
    n = dynamics.state_dim
    p_a, p_h = dynamics.input_dims
    history = []
    penalty = 1e9

    def objective(theta):
        try:
            auto_cost = _theta_to_cost(theta, n, p_a, p_h, dynamics.players)
            game = DifferentialGame(dynamics, (auto_cost, human_cost))
            nash = solve_coupled_riccati(game, tol=design_tol)
            value = global_cost_value(game, nash, Q_g, R_g, eval_states)
        except Exception:
            value = penalty
        history.append(min(value, history[-1]) if history else value)
        return value

    theta_star, best = _nelder_mead(objective, theta0, maxfev=maxfev)
    if best >= penalty:
        raise NoDescent("no candidate admitted a Nash solution")

    # canonical scale: own-input weight norm matched to the other player's,
    # floored at one; keeps the identification's eigenvalue floor and
    # scaling guard jointly satisfiable
    target_norm = max(
        [1.0] + [np.linalg.norm(c.R_own, 2) for c in (human_cost,)]
    )
    trial_cost = _theta_to_cost(theta_star, n, p_a, p_h, dynamics.players)
    kappa = target_norm / np.linalg.norm(trial_cost.R_own, 2)
    theta_norm = np.abs(np.asarray(theta_star, dtype=float)) * kappa
    auto_cost = _theta_to_cost(theta_norm, n, p_a, p_h, dynamics.players)
    game = DifferentialGame(dynamics, (auto_cost, human_cost))
    try:
        nash = solve_coupled_riccati(game)
    except NonStabilizable as exc:
        raise InnerSolverFailed(f"final theta rejected: {exc}") from exc
    return FiscDesign(
        theta=theta_norm,
        Q_FI=auto_cost.Q,
        R_FI=dict(auto_cost.R),
        K_FI=nash.K[0],
        global_cost_value=global_cost_value(game, nash, Q_g, R_g, eval_states),
        game=game,
        nash=nash,
        history=tuple(history),
    )


def input_mismatch(reference, candidate, skip_initial=1):
    """Discrete L2 distance between the automation inputs of two runs.

    The first ``skip_initial`` samples are excluded by default: the
    limited-information integrator is required to start at zero, so its
    value at t0 is fixed by the invariant rather than by the design.
    """
    u_ref = reference.inputs[0]
    u_cand = candidate.inputs[0]
    if u_ref.shape != u_cand.shape:
        raise ShapeMismatch("trajectories are not on the same grid")
    k = int(skip_initial)
    return float(np.sqrt(np.mean(np.sum((u_ref[k:] - u_cand[k:]) ** 2, axis=1))))


def design_lisc(
    dynamics,
    partition,
    ext,
    human_gain,
    reference,
    weights0=None,
    maxfev=400,
    global_weights=None,
    global_reference=None,
    global_slack=0.1,
    settle_time=1.0,
):
    """LISC weights minimizing the input mismatch to the FISC reference.

    Each candidate weighting is turned into an extended-system LQR gain
    and scored by simulating the limited-information loop from the
    reference's initial state; failed LQR candidates incur a penalty.
    The mismatch is measured from ``settle_time`` onwards: the integrator
    must start at zero while the reference law reacts instantly, so the
    catch-up window is fixed by structure, not by the weights.  When the
    global weights and the reference's global cost are supplied,
    candidates degrading the global objective beyond ``global_slack`` are
    penalized, keeping the nested problem's outer constraint in force.
    Returns the controller plus a design report with the monotone
    best-so-far objective trace.
    """
    dim = ext.dim
    p_a = dynamics.input_dims[0]
    x0 = reference.states[0]
    times = reference.times
    if weights0 is None:
        weights0 = np.ones(dim + p_a)
    weights0 = np.asarray(weights0, dtype=float)
    if weights0.size != dim + p_a:
        raise ShapeMismatch(f"weights must have {dim + p_a} entries")
    history = []
    penalty = 1e9
    skip = max(1, int(np.searchsorted(times, times[0] + settle_time)))
    ref_norm = float(np.sqrt(np.mean(np.sum(reference.inputs[0][skip:] ** 2, axis=1))))

    def controller_for(w):
        Q = np.diag(w[:dim])
        R = np.diag(w[dim:])
        K = extended_lqr(ext, Q, R)
        return LiscController(K_LI=K, Xi=ext.Xi, Q_LI=Q, R_LI=R)

    def objective_w(w):
        try:
            ctrl = controller_for(w)
            # score the exact loop and the sampled-data loop jointly so the
            # returned gains track the reference and stay implementable at
            # the controller rate
            exact = simulate_lisc_closed_loop(
                dynamics, partition, ctrl, human_gain, x0, times
            )
            sampled = simulate_lisc_sampled(
                dynamics, partition, ctrl, human_gain, x0, times
            )
            value = max(
                input_mismatch(reference, exact, skip_initial=skip),
                input_mismatch(reference, sampled, skip_initial=skip),
            )
            if global_weights is not None and global_reference is not None:
                cost = lisc_global_cost(
                    dynamics, partition, ctrl, human_gain, *global_weights, x0
                )
                excess = max(0.0, cost / global_reference - (1.0 + global_slack))
                value += 10.0 * ref_norm * excess
        except Exception:
            value = penalty
        history.append(min(value, history[-1]) if history else value)
        return value

    # weights act multiplicatively over several decades, so search in
    # log space; candidates stay positive by construction
    def objective(log_w):
        return objective_w(10.0 ** np.asarray(log_w))

    log_star, best = _nelder_mead(
        objective, np.log10(np.maximum(weights0, 1e-8)), maxfev=maxfev
    )
    if best >= penalty:
        raise NoDescent("no candidate weighting produced a stabilizing design")

    ctrl = controller_for(10.0**log_star)
    traj = simulate_lisc_closed_loop(dynamics, partition, ctrl, human_gain, x0, times)
    mismatch = input_mismatch(reference, traj, skip_initial=skip)
    full = input_mismatch(reference, traj, skip_initial=1)
    full_norm = float(np.sqrt(np.mean(np.sum(reference.inputs[0][1:] ** 2, axis=1))))
    info = {
        "mismatch": mismatch,
        "relative_mismatch": mismatch / ref_norm if ref_norm > 0 else 0.0,
        "full_mismatch": full,
        "full_relative_mismatch": full / full_norm if full_norm > 0 else 0.0,
        "settle_samples": skip,
        "history": tuple(history),
        "weights": freeze(10.0 ** np.asarray(log_star, dtype=float)),
    }
    return ctrl, info
