"""Vehicle-manipulator scenario: plant, ground-truth human, noise, metrics.

A four-state path-tracking model in path-relative coordinates: lateral and
orientation errors of the manipulator (human-controlled, not measured) and
of the vehicle (automation-controlled, measured).  Scenarios pit one of
three automation controllers (non-cooperative, full-information,
limited-information) against a fixed human feedback law obtained from the
full-information game's Nash solution.
"""

from dataclasses import dataclass, field, asdict

import numpy as np

from .errors import Infeasible, InvalidParams, MissingDesign, ShapeMismatch
from .identify import estimate_feedback_gains, find_smallest_feasible_delta
from .lisc import (
    StatePartition,
    build_extended_system,
    derive_cooperation_state,
    design_fisc,
    design_lisc,
    simulate_lisc_closed_loop,
)
from .lqgame import (
    DifferentialGame,
    PlayerCost,
    Trajectory,
    closed_loop_matrix,
    simulate_closed_loop,
)
from .lqgame import LtiGameDynamics
from .potential import certify_npdg
from .validation import as_vector, freeze

VM_STATE_NAMES = ("d_m", "dalpha", "d_v", "dtheta")
VM_INPUT_NAMES = ("delta", "adot", "alphadot")

# ground-truth human weights (manipulator-focused operator)
HUMAN_Q_DIAG = (4.5, 1.0, 0.5, 0.5)
HUMAN_R_DIAG = (0.0, 1.05, 0.9)
# global design weights used for the full-information synthesis
GLOBAL_Q_DIAG = (5.5, 0.5, 1.25, 0.85)
GLOBAL_R_DIAG = (1.0, 1.45, 1.35)
# initial parameter vector of the full-information outer optimization
THETA0 = (5.0, 0.1, 1.0, 0.9, 0.1, 0.0, 0.0)
# vehicle-only baseline gain acting on (d_v, dtheta)
K_NC = (1.1, 3.2)

# geometry defaults; assumptions, not identified values (the tracked
# machine's exact dimensions are not part of this model); calibrated so
# the designed game admits a potential surrogate at the default distance
DEFAULT_V = 1.2
DEFAULT_L = 2.5
DEFAULT_A_E = 3.0
DEFAULT_ALPHA_E = 0.3

DEFAULT_X0 = (0.04, 0.0125, 0.04, 0.015)


@dataclass(frozen=True)
class VmParams:
    """Geometry and speed of the vehicle-manipulator."""

    v: float = DEFAULT_V
    L: float = DEFAULT_L
    a_e: float = DEFAULT_A_E
    alpha_e: float = DEFAULT_ALPHA_E

    def __post_init__(self):
        if self.v <= 0 or self.L <= 0 or self.a_e <= 0:
            raise InvalidParams("v, L and a_e must be positive")


def build_vm_model(params, variant="kinematic"):
    """Four-state LTI model with steering and manipulator-rate inputs.

    State order (d_m, dalpha, d_v, dtheta).  The kinematic variant couples
    the vehicle's lateral error to its heading error (d_v' = v * dtheta);
    the printed variant instead places v on the d_v diagonal, which leaves
    d_v unforced and exponentially divergent, and is kept selectable for
    comparison runs only.
    """
    if not isinstance(params, VmParams):
        params = VmParams(**params)
    v, L, a_e, alpha_e = params.v, params.L, params.a_e, params.alpha_e
    A = np.zeros((4, 4))
    A[1, 1] = -1.0
    if variant == "kinematic":
        A[2, 3] = v
    elif variant == "printed":
        A[2, 2] = v
    else:
        raise InvalidParams(f"unknown A-matrix variant {variant!r}")
    B_a = np.array([[L * v], [0.0], [0.0], [v]])
    B_h = np.array(
        [
            [np.sin(alpha_e), 0.0],
            [a_e * np.cos(alpha_e), 1.0],
            [0.0, 0.0],
            [0.0, 0.0],
        ]
    )
    return LtiGameDynamics(A, [B_a, B_h])


def vm_partition():
    """Vehicle states measurable, manipulator states not."""
    return StatePartition(measurable=(2, 3), nonmeasurable=(0, 1))


def human_cost(Q_diag=HUMAN_Q_DIAG, R_diag=HUMAN_R_DIAG):
    """Ground-truth human cost; the zero first R entry is the cross block
    on the automation's input, the own-input block must stay definite."""
    R = np.asarray(R_diag, dtype=float)
    return PlayerCost(
        "h",
        np.diag(Q_diag),
        {"h": np.diag(R[1:]), "a": np.atleast_2d(R[0])},
    )


def global_weights(Q_diag=GLOBAL_Q_DIAG, R_diag=GLOBAL_R_DIAG):
    return np.diag(Q_diag), np.diag(R_diag)


@dataclass
class ScenarioConfig:
    """Complete description of one simulation run (JSON round-trippable)."""

    vm: VmParams = field(default_factory=VmParams)
    controller: str = "FISC"
    human_Q: tuple = HUMAN_Q_DIAG
    human_R: tuple = HUMAN_R_DIAG
    global_Q: tuple = GLOBAL_Q_DIAG
    global_R: tuple = GLOBAL_R_DIAG
    theta0: tuple = THETA0
    x0: tuple = DEFAULT_X0
    t_end: float = 10.0
    dt: float = 0.04
    snr_db: float = None
    seed: int = 0
    variant: str = "kinematic"
    cs_sign: str = "corrected"
    box_floor: str = "unit"
    delta: float = 0.05
    identify: bool = False
    allow_design: bool = True
    resets: tuple = ()

    def __post_init__(self):
        if isinstance(self.vm, dict):
            self.vm = VmParams(**self.vm)
        if self.controller not in ("NC", "FISC", "LISC"):
            raise InvalidParams(f"unknown controller {self.controller!r}")
        if self.dt <= 0 or self.t_end <= 0:
            raise InvalidParams("t_end and dt must be positive")
        self.x0 = tuple(float(v) for v in self.x0)
        self.resets = tuple(
            (float(t), tuple(float(v) for v in x)) for t, x in self.resets
        )

    def grid(self):
        steps = int(round(self.t_end / self.dt))
        return np.linspace(0.0, steps * self.dt, steps + 1)

    def dynamics(self):
        return build_vm_model(self.vm, self.variant)

    def human_cost(self):
        return human_cost(self.human_Q, self.human_R)

    def global_weights(self):
        return np.diag(self.global_Q), np.diag(self.global_R)

    def to_dict(self):
        out = asdict(self)
        out["vm"] = asdict(self.vm)
        out["resets"] = [[t, list(x)] for t, x in self.resets]
        return out

    @classmethod
    def from_dict(cls, data):
        data = dict(data)
        if "vm" in data and isinstance(data["vm"], dict):
            data["vm"] = VmParams(**data["vm"])
        if "resets" in data:
            data["resets"] = tuple((t, tuple(x)) for t, x in data["resets"])
        return cls(**data)


@dataclass(frozen=True)
class Metrics:
    """Scenario summary: tracking error plus near-potential diagnostics."""

    rmse_dm: float
    max_dd: float = 0.0
    traj_dev: float = 0.0
    delta_feasible: float = 0.0

    def to_dict(self):
        return asdict(self)


def manipulator_rmse(traj):
    """Root mean square of the manipulator's lateral error over all samples."""
    return float(np.sqrt(np.mean(traj.states[:, 0] ** 2)))


def add_awgn(traj, snr_db, seed):
    """Add white Gaussian noise to every state channel at the given SNR.

    Noise variance per channel equals the channel's mean square power
    scaled by 10^(-snr/10); identically zero channels stay noise-free.
    Deterministic for a fixed seed.  Inputs are left untouched.
    """
    if not np.isfinite(snr_db):
        raise ShapeMismatch("snr_db must be finite")
    rng = np.random.default_rng(seed)
    power = np.mean(traj.states**2, axis=0)
    sigma = np.sqrt(power * 10.0 ** (-snr_db / 10.0))
    noise = rng.normal(size=traj.states.shape) * sigma
    return Trajectory(
        times=traj.times, states=traj.states + noise, inputs=traj.inputs
    )


def nc_gain_full(dynamics, gains=K_NC):
    """Vehicle-only feedback padded with zeros on the manipulator states."""
    K = np.zeros((dynamics.input_dims[0], dynamics.state_dim))
    K[0, 2] = gains[0]
    K[0, 3] = gains[1]
    return K


def design_vm_fisc(config):
    """Full-information design for the scenario's weights.

    The global cost is evaluated from the scenario's initial state; a
    basis-averaged evaluation rewards equilibria that neglect the
    manipulator states the scenario actually excites.
    """
    return design_fisc(
        config.dynamics(),
        config.human_cost(),
        config.global_weights(),
        config.theta0,
        eval_states=[config.x0],
    )


def design_vm_lisc(config, fisc, identification=None):
    """Full limited-information chain: identify, derive CS, tune weights."""
    dynamics = config.dynamics()
    grid = config.grid()
    if identification is None:
        identification = identify_vm(config, fisc)[1]
    pot = identification.pot
    partition = vm_partition()
    xi = derive_cooperation_state(
        pot, partition, sign=config.cs_sign, x0=np.asarray(config.x0), times=grid
    )
    ext = build_extended_system(dynamics, partition, xi)
    reference = simulate_closed_loop(
        fisc.nash.A_c, np.asarray(config.x0), grid, gains=fisc.nash.K
    )
    ctrl, info = design_lisc(
        dynamics,
        partition,
        ext,
        fisc.human_gain,
        reference,
        global_weights=config.global_weights(),
        global_reference=fisc.global_cost_value,
    )
    return ctrl, info, identification


def identification_trajectory(config, fisc, t_record=100.0, reset_period=2.5):
    """Excitation-rich run of the Nash loop for gain regression.

    A single decay from one initial state is too ill-conditioned to
    regress gains from noisy data, so a longer record is collected
    (about 2.5 k samples at the controller rate) with periodic state
    resets cycling through signed coordinate directions, mimicking a
    tracking task with changing references.  Fully deterministic.
    """
    x0 = np.asarray(config.x0, dtype=float)
    n = x0.size
    scale = float(np.linalg.norm(x0))
    steps_per_segment = max(2, int(round(reset_period / config.dt)))
    n_segments = max(1, int(round(t_record / reset_period)))
    segments = []
    t_start = 0.0
    x_start = x0
    for seg in range(n_segments):
        grid = t_start + config.dt * np.arange(steps_per_segment + 1)
        segments.append(
            simulate_closed_loop(fisc.nash.A_c, x_start, grid, gains=fisc.nash.K)
        )
        t_start = grid[-1]
        direction = np.zeros(n)
        direction[seg % n] = 1.0 if (seg // n) % 2 == 0 else -1.0
        x_start = scale * direction
    return _stitch(segments)


def scenario_x_max(config, fisc):
    """Peak state magnitude of the noiseless Nash run on the default grid."""
    traj = simulate_closed_loop(
        fisc.nash.A_c, np.asarray(config.x0), config.grid(), gains=fisc.nash.K
    )
    return float(np.linalg.norm(traj.states, axis=1).max())


def identify_vm(config, fisc, snr_db=None, seed=None, delta_grid=None):
    """Measure the designed game and identify its potential surrogate.

    Regresses the gains from the excitation-rich record (optionally
    corrupted by state noise) and finds the smallest feasible distance on
    the grid.  The distance constraint uses the peak state magnitude of
    the scenario's own noiseless run.  Returns the gain estimate and the
    identification result.
    """
    traj = identification_trajectory(config, fisc)
    measured = traj
    if snr_db is not None:
        measured = add_awgn(traj, snr_db, seed if seed is not None else config.seed)
    gains = estimate_feedback_gains(measured, players=fisc.game.dynamics.players)
    x_max = scenario_x_max(config, fisc)
    grid = [config.delta] if delta_grid is None else delta_grid
    result = find_smallest_feasible_delta(
        fisc.game,
        fisc.nash,
        gains,
        x_max,
        grid=grid,
        refine=False,
        box_floor=config.box_floor,
    )
    return gains, result


def _segment_grids(config):
    """Split the scenario grid at the configured reset times."""
    grid = config.grid()
    if not config.resets:
        return [(grid, np.asarray(config.x0))]
    cuts = []
    for t_reset, x_reset in config.resets:
        idx = int(np.argmin(np.abs(grid - t_reset)))
        if idx == 0 or idx >= grid.size - 1:
            raise InvalidParams("reset times must lie inside the grid")
        cuts.append((idx, np.asarray(x_reset, dtype=float)))
    cuts.sort()
    segments = []
    start = 0
    x_cur = np.asarray(config.x0, dtype=float)
    for idx, x_reset in cuts:
        segments.append((grid[start : idx + 1], x_cur))
        start = idx
        x_cur = x_reset
    segments.append((grid[start:], x_cur))
    return segments


def _stitch(segment_trajs):
    """Concatenate segments; at a boundary the later segment's (post-jump)
    sample wins."""
    times = []
    states = []
    inputs = []
    last = len(segment_trajs) - 1
    for idx, traj in enumerate(segment_trajs):
        keep = slice(None) if idx == last else slice(None, -1)
        times.append(traj.times[keep])
        states.append(traj.states[keep])
        inputs.append([u[keep] for u in traj.inputs])
    merged_inputs = tuple(
        np.vstack([seg[i] for seg in inputs]) for i in range(len(inputs[0]))
    )
    return Trajectory(
        times=np.concatenate(times),
        states=np.vstack(states),
        inputs=merged_inputs,
    )


def run_scenario(config, fisc=None, lisc=None):
    """Simulate the configured controller against the ground-truth human.

    Always reports the manipulator RMSE; when ``config.identify`` is set
    (and the run is excited), the identification pipeline adds the
    differential-distance metrics.
    """
    dynamics = config.dynamics()
    x0 = np.asarray(config.x0, dtype=float)
    if fisc is None:
        fisc = design_vm_fisc(config)
    human_gain = fisc.human_gain
    partition = vm_partition()

    segment_trajs = []
    if config.controller == "NC":
        gains = (nc_gain_full(dynamics), human_gain)
        A_cl = closed_loop_matrix(dynamics, gains)
        for grid, x_start in _segment_grids(config):
            segment_trajs.append(simulate_closed_loop(A_cl, x_start, grid, gains=gains))
    elif config.controller == "FISC":
        for grid, x_start in _segment_grids(config):
            segment_trajs.append(
                simulate_closed_loop(fisc.nash.A_c, x_start, grid, gains=fisc.nash.K)
            )
    else:
        if lisc is None:
            if not config.allow_design:
                raise MissingDesign(
                    "LISC scenario without a designed controller"
                )
            lisc, _, _ = design_vm_lisc(config, fisc)
        u_a_carry = np.zeros(dynamics.input_dims[0])
        for grid, x_start in _segment_grids(config):
            traj = _simulate_lisc_segment(
                dynamics, partition, lisc, human_gain, x_start, u_a_carry, grid
            )
            u_a_carry = traj.inputs[0][-1]
            segment_trajs.append(traj)

    traj = _stitch(segment_trajs) if len(segment_trajs) > 1 else segment_trajs[0]
    rmse = manipulator_rmse(traj)

    if not config.identify or not np.any(x0):
        return traj, Metrics(rmse_dm=rmse)

    try:
        gains, result = identify_vm(
            config, fisc, snr_db=config.snr_db, seed=config.seed
        )
    except Infeasible:
        return traj, Metrics(rmse_dm=rmse, delta_feasible=float("nan"))
    cert = certify_npdg(
        fisc.game,
        fisc.nash,
        result.pot,
        x0,
        config.grid(),
        result.delta_used,
    )
    return traj, Metrics(
        rmse_dm=rmse,
        max_dd=cert.max_distance,
        traj_dev=float(cert.trajectory_gap.max()),
        delta_feasible=result.delta_used,
    )


def _simulate_lisc_segment(dynamics, partition, ctrl, human_gain, x0, u_a0, times):
    """LISC closed loop with a carried-over input integrator state."""
    n = dynamics.state_dim
    p_a = dynamics.input_dims[0]
    n_m = n - partition.k
    E_m = np.zeros((n_m, n))
    for row, idx in enumerate(partition.measurable):
        E_m[row, idx] = 1.0
    S_x = np.vstack([E_m, np.zeros((p_a, n)), -ctrl.Xi.Xi_h @ human_gain])
    S_u = np.vstack([np.zeros((n_m, p_a)), np.eye(p_a), ctrl.Xi.Xi_a])
    Az = np.block(
        [
            [dynamics.A - dynamics.B[1] @ human_gain, dynamics.B[0]],
            [-ctrl.K_LI @ S_x, -ctrl.K_LI @ S_u],
        ]
    )
    z0 = np.concatenate([x0, np.asarray(u_a0, dtype=float).reshape(p_a)])
    z = simulate_closed_loop(Az, z0, times).states
    states = z[:, :n]
    return Trajectory(
        times=times,
        states=states,
        inputs=(z[:, n:], -states @ human_gain.T),
    )


def sweep_seed(base_seed, snr_db, repetition):
    """Documented seed-splitting rule for sweep fan-out: one independent
    stream per (snr, repetition) pair derived from the manifest seed."""
    return np.random.SeedSequence(
        [int(base_seed), int(round(snr_db * 1000)), int(repetition)]
    )


def noise_sweep(config, snr_list, seeds, delta_grid, fisc=None):
    """Identification robustness table across noise levels.

    For every (snr, seed): simulate the Nash loop, corrupt the states,
    estimate gains, identify at the smallest feasible distance from the
    grid, and measure the surrogate's distances.  Returns one aggregate
    row per SNR (medians over seeds) plus the per-run rows.
    """
    if not snr_list or not seeds or not delta_grid:
        raise ShapeMismatch("sweep inputs must be nonempty")
    if fisc is None:
        fisc = design_vm_fisc(config)
    x0 = np.asarray(config.x0)
    grid = config.grid()
    runs = []
    for snr_db in snr_list:
        for rep in seeds:
            seed = sweep_seed(config.seed, snr_db, rep)
            try:
                gains, result = identify_vm(
                    config, fisc, snr_db=snr_db, seed=seed, delta_grid=delta_grid
                )
            except Infeasible:
                runs.append(
                    {
                        "snr_db": float(snr_db),
                        "seed": int(rep),
                        "max_dd": float("nan"),
                        "traj_dev": float("nan"),
                        "delta": float("nan"),
                    }
                )
                continue
            cert = certify_npdg(
                fisc.game, fisc.nash, result.pot, x0, grid, result.delta_used
            )
            runs.append(
                {
                    "snr_db": float(snr_db),
                    "seed": int(rep),
                    "max_dd": cert.max_distance,
                    "traj_dev": float(cert.trajectory_gap.max()),
                    "delta": result.delta_used,
                }
            )
    table = []
    for snr_db in snr_list:
        rows = [r for r in runs if r["snr_db"] == float(snr_db)]
        feasible = [r for r in rows if np.isfinite(r["delta"])]
        table.append(
            {
                "snr_db": float(snr_db),
                "median_max_dd": float(
                    np.median([r["max_dd"] for r in feasible])
                )
                if feasible
                else float("nan"),
                "median_traj_dev": float(
                    np.median([r["traj_dev"] for r in feasible])
                )
                if feasible
                else float("nan"),
                "delta": float(np.median([r["delta"] for r in feasible]))
                if feasible
                else float("nan"),
                "n_infeasible": len(rows) - len(feasible),
            }
        )
    return table, runs
