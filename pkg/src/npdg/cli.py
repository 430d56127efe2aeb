"""Command-line pipeline: design, identify, simulate, sweep, verify.

Exit codes: 0 success, 2 configuration or input error, 3 numerical
failure (the message names the failing stage or constraint).  Every
command appends a record to <out>/manifest.jsonl listing its outputs.
"""

import argparse
import json
import sys
import time
from pathlib import Path

import numpy as np

from . import __version__
from .errors import (
    Infeasible,
    InvalidParams,
    LqrFailed,
    MissingDesign,
    NoConvergence,
    NoDescent,
    NonStabilizable,
    NpdgError,
    ShapeMismatch,
    SingularPencil,
    SolverStalled,
)
from .fileio import load_json, read_trajectory_csv, save_json, write_csv, write_trajectory_csv
from .identify import (
    GainEstimate,
    check_identification,
    estimate_feedback_gains,
    find_smallest_feasible_delta,
    identify_npdg,
)
from .lisc import (
    LiscController,
    build_extended_system,
    cooperation_state_matrix,
    derive_cooperation_state,
    design_lisc,
    extended_lqr,
)
from .lqgame import (
    DifferentialGame,
    NashSolution,
    Trajectory,
    coupled_riccati_residuals,
    simulate_closed_loop,
)
from .lisc import _theta_to_cost
from .potential import PotentialGame, certify_npdg, npdg_distance_bound
from .vmsim import (
    Metrics,
    ScenarioConfig,
    VM_INPUT_NAMES,
    VM_STATE_NAMES,
    design_vm_fisc,
    noise_sweep,
    run_scenario,
    vm_partition,
)

USER_ERRORS = (InvalidParams, ShapeMismatch, FileNotFoundError, KeyError, json.JSONDecodeError, ValueError)
NUMERIC_ERRORS = (
    NonStabilizable,
    NoConvergence,
    Infeasible,
    SolverStalled,
    NoDescent,
    LqrFailed,
    SingularPencil,
    MissingDesign,
)


def _load_config(args):
    if args.config:
        config = ScenarioConfig.from_dict(load_json(args.config))
    else:
        config = ScenarioConfig()
    if getattr(args, "seed", None) is not None:
        config.seed = args.seed
    if getattr(args, "snr", None) is not None and not isinstance(args.snr, list):
        config.snr_db = args.snr
    if getattr(args, "delta", None) is not None:
        config.delta = args.delta
    if getattr(args, "variant", None):
        config.variant = args.variant
    if getattr(args, "cs_sign", None):
        config.cs_sign = args.cs_sign
    return config


def _manifest(out_dir, command, args, outputs, started):
    record = {
        "command": command,
        "config": args.config or "<defaults>",
        "seed": getattr(args, "seed", None),
        "version": __version__,
        "out_dir": str(out_dir),
        "outputs": sorted(outputs),
        "duration_s": round(time.monotonic() - started, 3),
    }
    with open(Path(out_dir) / "manifest.jsonl", "a") as fh:
        fh.write(json.dumps(record, sort_keys=True) + "\n")


def _out_dir(args):
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    return out


def _fisc_to_dict(config, fisc, x_max):
    return {
        "config": config.to_dict(),
        "theta": fisc.theta,
        "Q_FI": fisc.Q_FI,
        "R_FI_own": fisc.R_FI["a"],
        "R_FI_cross": fisc.R_FI["h"],
        "K_FI": fisc.K_FI,
        "K_h": fisc.human_gain,
        "P_a": fisc.nash.P[0],
        "P_h": fisc.nash.P[1],
        "A_c": fisc.nash.A_c,
        "J_g": fisc.global_cost_value,
        "x_max": x_max,
    }


def _game_from_fisc(data):
    config = ScenarioConfig.from_dict(data["config"])
    dynamics = config.dynamics()
    n = dynamics.state_dim
    p_a, p_h = dynamics.input_dims
    auto = _theta_to_cost(np.asarray(data["theta"]), n, p_a, p_h, dynamics.players)
    game = DifferentialGame(dynamics, (auto, config.human_cost()))
    nash = NashSolution(
        P=(np.asarray(data["P_a"]), np.asarray(data["P_h"])),
        K=(np.asarray(data["K_FI"]), np.asarray(data["K_h"])),
        A_c=np.asarray(data["A_c"]),
    )
    return config, game, nash


def cmd_design_fisc(args):
    started = time.monotonic()
    config = _load_config(args)
    out = _out_dir(args)
    fisc = design_vm_fisc(config)
    grid = config.grid()
    traj = simulate_closed_loop(fisc.nash.A_c, np.asarray(config.x0), grid, gains=fisc.nash.K)
    x_max = float(np.linalg.norm(traj.states, axis=1).max())
    save_json(out / "fisc.json", _fisc_to_dict(config, fisc, x_max))
    write_trajectory_csv(
        out / "fisc_trajectory.csv", traj, VM_STATE_NAMES, VM_INPUT_NAMES
    )
    _manifest(out, "design-fisc", args, ["fisc.json", "fisc_trajectory.csv"], started)
    return 0


def cmd_identify_npdg(args):
    started = time.monotonic()
    out = _out_dir(args)
    data = load_json(args.game)
    config, game, nash = _game_from_fisc(data)
    if args.seed is not None:
        config.seed = args.seed
    dynamics = game.dynamics
    traj = read_trajectory_csv(args.traj, dynamics.state_dim, dynamics.input_dims)
    if len(traj) < dynamics.state_dim:
        raise ShapeMismatch("trajectory has too few samples")
    gains = estimate_feedback_gains(traj, players=dynamics.players)
    x_max = float(data["x_max"])
    if args.delta is not None:
        result = identify_npdg(game, nash, gains, args.delta, x_max)
    else:
        result = find_smallest_feasible_delta(game, nash, gains, x_max)
    cert = certify_npdg(
        game, nash, result.pot, np.asarray(config.x0), config.grid(), result.delta_used
    )
    save_json(
        out / "npdg.json",
        {
            "Qp": result.pot.Qp,
            "Rp": result.pot.Rp,
            "Pp": result.pot.Pp,
            "K": result.pot.K,
            "beta": result.beta,
            "delta": result.delta_used,
            "x_max": result.x_max,
            "Khat": result.khat,
            "residuals": check_identification(result, game, nash),
            "certificate": cert.to_dict(),
        },
    )
    _manifest(out, "identify-npdg", args, ["npdg.json"], started)
    return 0


def _pot_from_file(game, data):
    return PotentialGame(
        game.dynamics,
        np.asarray(data["Qp"]),
        np.asarray(data["Rp"]),
        np.asarray(data["Pp"]),
    )


def cmd_design_lisc(args):
    started = time.monotonic()
    out = _out_dir(args)
    fisc_data = load_json(args.fisc)
    npdg_data = load_json(args.npdg)
    config, game, nash = _game_from_fisc(fisc_data)
    if args.cs_sign:
        config.cs_sign = args.cs_sign
    pot = _pot_from_file(game, npdg_data)
    partition = vm_partition()
    grid = config.grid()
    x0 = np.asarray(config.x0)
    xi = derive_cooperation_state(pot, partition, sign=config.cs_sign, x0=x0, times=grid)
    ext = build_extended_system(game.dynamics, partition, xi)
    reference = simulate_closed_loop(nash.A_c, x0, grid, gains=nash.K)
    ctrl, info = design_lisc(
        game.dynamics, partition, ext, nash.K[1], reference
    )
    save_json(
        out / "lisc.json",
        {
            "Xi_a": xi.Xi_a,
            "Xi_h": xi.Xi_h,
            "K_LI": ctrl.K_LI,
            "Q_LI": ctrl.Q_LI,
            "R_LI": ctrl.R_LI,
            "theta": fisc_data["theta"],
            "K_FI": fisc_data["K_FI"],
            "cs_sign": config.cs_sign,
            "consistency_residual": xi.consistency_residual,
            "pinv_residual": xi.pinv_residual,
            "mismatch": info["mismatch"],
            "relative_mismatch": info["relative_mismatch"],
        },
    )
    _manifest(out, "design-lisc", args, ["lisc.json"], started)
    return 0


def _lisc_from_file(data):
    from .lisc import CooperationStateDesign

    xi = CooperationStateDesign(
        Xi_a=np.asarray(data["Xi_a"]),
        Xi_h=np.asarray(data["Xi_h"]),
        sign_variant=data.get("cs_sign", "corrected"),
        consistency_residual=float(data.get("consistency_residual", 0.0)),
        pinv_residual=float(data.get("pinv_residual", 0.0)),
    )
    return LiscController(
        K_LI=np.asarray(data["K_LI"]),
        Xi=xi,
        Q_LI=np.asarray(data["Q_LI"]),
        R_LI=np.asarray(data["R_LI"]),
    )


def cmd_simulate(args):
    started = time.monotonic()
    config = _load_config(args)
    out = _out_dir(args)
    fisc = None
    lisc = None
    if args.fisc:
        _, game, nash = _game_from_fisc(load_json(args.fisc))
        from .lisc import FiscDesign, global_cost_value

        data = load_json(args.fisc)
        fisc = FiscDesign(
            theta=np.asarray(data["theta"]),
            Q_FI=np.asarray(data["Q_FI"]),
            R_FI={"a": np.asarray(data["R_FI_own"]), "h": np.asarray(data["R_FI_cross"])},
            K_FI=np.asarray(data["K_FI"]),
            global_cost_value=float(data["J_g"]),
            game=game,
            nash=nash,
            history=(),
        )
    if args.lisc:
        lisc = _lisc_from_file(load_json(args.lisc))
    traj, metrics = run_scenario(config, fisc=fisc, lisc=lisc)
    write_trajectory_csv(
        out / "trajectory.csv", traj, VM_STATE_NAMES, VM_INPUT_NAMES
    )
    m = metrics.to_dict()
    write_csv(out / "metrics.csv", sorted(m), [[m[k] for k in sorted(m)]])
    _manifest(out, "simulate", args, ["trajectory.csv", "metrics.csv"], started)
    return 0


def cmd_sweep(args):
    started = time.monotonic()
    config = _load_config(args)
    out = _out_dir(args)
    snr_list = args.snr if isinstance(args.snr, list) else [5.0, 10.0, 20.0, 30.0]
    seeds = list(range(args.n_seeds))
    delta_grid = args.delta_grid or [0.01, 0.02, 0.05, 0.1, 0.15, 0.2, 0.3, 0.5]
    fisc = None
    if args.fisc:
        _, game, nash = _game_from_fisc(load_json(args.fisc))
        from .lisc import FiscDesign

        data = load_json(args.fisc)
        fisc = FiscDesign(
            theta=np.asarray(data["theta"]),
            Q_FI=np.asarray(data["Q_FI"]),
            R_FI={"a": np.asarray(data["R_FI_own"]), "h": np.asarray(data["R_FI_cross"])},
            K_FI=np.asarray(data["K_FI"]),
            global_cost_value=float(data["J_g"]),
            game=game,
            nash=nash,
            history=(),
        )
    table, runs = noise_sweep(config, snr_list, seeds, delta_grid, fisc=fisc)
    write_csv(
        out / "sweep.csv",
        ["snr_db", "median_max_dd", "median_traj_dev", "delta", "n_infeasible"],
        [
            [r["snr_db"], r["median_max_dd"], r["median_traj_dev"], r["delta"], r["n_infeasible"]]
            for r in table
        ],
    )
    write_csv(
        out / "sweep_runs.csv",
        ["snr_db", "seed", "max_dd", "traj_dev", "delta"],
        [[r["snr_db"], r["seed"], r["max_dd"], r["traj_dev"], r["delta"]] for r in runs],
    )
    _manifest(out, "sweep", args, ["sweep.csv", "sweep_runs.csv"], started)
    return 0


def cmd_verify(args):
    started = time.monotonic()
    failures = []

    fisc_data = load_json(args.fisc)
    config, game, nash = _game_from_fisc(fisc_data)
    residuals = coupled_riccati_residuals(game, nash)
    for player, value in residuals.items():
        if value > 1e-8:
            failures.append(f"coupled Riccati residual[{player}] = {value:.3e} > 1e-8")
    if np.max(np.linalg.eigvals(nash.A_c).real) >= -1e-9:
        failures.append("closed loop A_c is not Hurwitz")

    if args.npdg:
        npdg_data = load_json(args.npdg)
        pot = _pot_from_file(game, npdg_data)
        from .identify import IdentificationResult

        result = IdentificationResult(
            pot=pot,
            beta=float(npdg_data["beta"]),
            constraint_residuals={},
            delta_used=float(npdg_data["delta"]),
            x_max=float(npdg_data["x_max"]),
            khat=np.asarray(npdg_data["Khat"]),
        )
        for name, value in check_identification(result, game, nash).items():
            if value > 1e-6:
                failures.append(f"identification residual {name} = {value:.3e} > 1e-6")
        if pot.are_residual() > 1e-8:
            failures.append(f"surrogate Riccati residual {pot.are_residual():.3e} > 1e-8")
        cert = certify_npdg(
            game, nash, pot, np.asarray(config.x0), config.grid(), result.delta_used
        )
        if cert.lemma2_violations:
            failures.append(
                f"trajectory-deviation bound violated at {cert.lemma2_violations} samples"
            )

        if args.lisc:
            lisc_data = load_json(args.lisc)
            partition = vm_partition()
            sign = lisc_data.get("cs_sign", "corrected")
            xi = derive_cooperation_state(
                pot, partition, sign=sign, x0=np.asarray(config.x0), times=config.grid()
            )
            if not np.allclose(xi.Xi_a, np.asarray(lisc_data["Xi_a"]), atol=1e-8):
                failures.append("stored Xi_a does not match the recomputed value")
            if xi.pinv_residual > 1e-9:
                failures.append(f"pseudoinverse contract residual {xi.pinv_residual:.3e} > 1e-9")
            if sign == "corrected" and xi.consistency_residual > 1e-6:
                failures.append(
                    f"cooperation-state consistency residual {xi.consistency_residual:.3e} > 1e-6"
                )

    for line in failures:
        print(f"FAIL: {line}")
    if not failures:
        print("verify: all checks passed")
    if args.out:
        out = _out_dir(args)
        save_json(out / "verify.json", {"failures": failures})
        _manifest(out, "verify", args, ["verify.json"], started)
    return 3 if failures else 0


def _float_list(text):
    return [float(v) for v in text.split(",") if v.strip()]


def build_parser():
    parser = argparse.ArgumentParser(
        prog="npdg",
        description="Near-potential game identification and shared-control design",
    )
    parser.add_argument("--version", action="version", version=__version__)
    sub = parser.add_subparsers(dest="command", required=True)

    def common(p, out_required=True):
        p.add_argument("--config", help="scenario JSON file (defaults used if omitted)")
        p.add_argument("--seed", type=int, default=None)
        p.add_argument("--out", required=out_required, help="output directory")
        p.add_argument("--variant", choices=["kinematic", "printed"], default=None)
        p.add_argument("--cs-sign", dest="cs_sign", choices=["corrected", "printed"], default=None)

    p = sub.add_parser("design-fisc", help="design the full-information controller")
    common(p)
    p.set_defaults(func=cmd_design_fisc)

    p = sub.add_parser("identify-npdg", help="identify a potential surrogate from a trajectory")
    common(p)
    p.add_argument("--game", required=True, help="fisc.json describing the designed game")
    p.add_argument("--traj", required=True, help="trajectory CSV")
    p.add_argument("--delta", type=float, default=None, help="fixed distance (smallest feasible when omitted)")
    p.set_defaults(func=cmd_identify_npdg)

    p = sub.add_parser("design-lisc", help="design the limited-information controller")
    common(p)
    p.add_argument("--fisc", required=True)
    p.add_argument("--npdg", required=True)
    p.set_defaults(func=cmd_design_lisc)

    p = sub.add_parser("simulate", help="run one scenario")
    common(p)
    p.add_argument("--fisc", default=None)
    p.add_argument("--lisc", default=None)
    p.add_argument("--snr", type=float, default=None)
    p.add_argument("--delta", type=float, default=None)
    p.set_defaults(func=cmd_simulate)

    p = sub.add_parser("sweep", help="noise-robustness table")
    common(p)
    p.add_argument("--fisc", default=None)
    p.add_argument("--snr", type=_float_list, default=None, help="comma-separated SNR list in dB")
    p.add_argument("--n-seeds", type=int, default=10)
    p.add_argument("--delta-grid", type=_float_list, default=None)
    p.set_defaults(func=cmd_sweep)

    p = sub.add_parser("verify", help="replay invariants on stored artifacts")
    common(p, out_required=False)
    p.add_argument("--fisc", required=True)
    p.add_argument("--npdg", default=None)
    p.add_argument("--lisc", default=None)
    p.set_defaults(func=cmd_verify)

    return parser


def main(argv=None):
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except USER_ERRORS as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except NUMERIC_ERRORS as exc:
        print(f"numerical failure: {type(exc).__name__}: {exc}", file=sys.stderr)
        return 3
    except NpdgError as exc:
        print(f"numerical failure: {type(exc).__name__}: {exc}", file=sys.stderr)
        return 3


if __name__ == "__main__":
    sys.exit(main())
