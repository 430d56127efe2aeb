"""Near-potential differential games and limited-information shared control.

Building blocks: two-player LQ game solvers (coupled Riccati), potential
surrogates with distance certificates, LMI-style surrogate identification
from trajectories, cooperation-state controller synthesis, and a
vehicle-manipulator benchmark scenario.
"""

__version__ = "0.1.0"

from .errors import (
    IndefiniteWeight,
    Infeasible,
    InnerSolverFailed,
    InvalidParams,
    LqrFailed,
    MissingDesign,
    NoConvergence,
    NoDescent,
    NonStabilizable,
    NpdgError,
    RankDeficient,
    ShapeMismatch,
    SingularPencil,
    SolverStalled,
)
from .lqgame import (
    DifferentialGame,
    LtiGameDynamics,
    NashSolution,
    PlayerCost,
    Trajectory,
    closed_loop_matrix,
    coupled_riccati_residuals,
    default_grid,
    player_hamiltonian_gradient,
    simulate_closed_loop,
    solve_coupled_riccati,
    solve_lqr,
)
from .potential import (
    NpdgCertificate,
    PotentialGame,
    certify_npdg,
    csme,
    deviation_bound,
    differential_distance,
    exact_pdg_residual,
    npdg_distance_bound,
)
from .identify import (
    FeedbackGainEstimator,
    GainEstimate,
    IdentificationResult,
    NpdgIdentifier,
    check_identification,
    estimate_feedback_gains,
    find_smallest_feasible_delta,
    identify_npdg,
)
from .lisc import (
    CooperationStateDesign,
    ExtendedSystem,
    FiscDesign,
    LiscController,
    StatePartition,
    build_extended_system,
    derive_cooperation_state,
    design_fisc,
    design_lisc,
    extended_lqr,
    lisc_control_step,
    simulate_lisc_closed_loop,
    simulate_lisc_sampled,
)
from .vmsim import (
    Metrics,
    ScenarioConfig,
    VmParams,
    add_awgn,
    build_vm_model,
    manipulator_rmse,
    noise_sweep,
    run_scenario,
    vm_partition,
)
