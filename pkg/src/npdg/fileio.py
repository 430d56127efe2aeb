"""Deterministic readers/writers for trajectories and result files.

All numeric output uses a fixed format so repeated runs with the same
seed produce byte-identical files.
"""

import json

import numpy as np

from .errors import ShapeMismatch
from .lqgame import Trajectory

FLOAT_FMT = "{:.12e}"


def _fmt(value):
    return FLOAT_FMT.format(float(value))


def write_csv(path, header, rows):
    with open(path, "w") as fh:
        fh.write(",".join(header) + "\n")
        for row in rows:
            fh.write(",".join(_fmt(v) for v in row) + "\n")


def trajectory_header(n, input_dims, state_names=None, input_names=None, players=("a", "h")):
    if state_names is None:
        state_names = [f"x{i + 1}" for i in range(n)]
    if input_names is None:
        input_names = []
        for label, p in zip(players, input_dims):
            input_names.extend(f"u_{label}{j + 1}" for j in range(p))
    return ["t"] + list(state_names) + list(input_names)


def write_trajectory_csv(path, traj, state_names=None, input_names=None, players=("a", "h")):
    n = traj.state_dim
    input_dims = tuple(u.shape[1] for u in traj.inputs)
    header = trajectory_header(n, input_dims, state_names, input_names, players)
    blocks = [traj.times.reshape(-1, 1), traj.states] + list(traj.inputs)
    write_csv(path, header, np.hstack(blocks))


def read_trajectory_csv(path, state_dim, input_dims):
    """Positional parse: t, states, then one block of columns per player."""
    with open(path) as fh:
        lines = [line for line in fh.read().splitlines()[1:] if line.strip()]
    if not lines:
        raise ShapeMismatch(f"trajectory file {path} contains no samples")
    data = np.array([[float(v) for v in line.split(",")] for line in lines])
    expected = 1 + state_dim + sum(input_dims)
    if data.shape[1] != expected:
        raise ShapeMismatch(
            f"trajectory file has {data.shape[1]} columns, expected {expected}"
        )
    times = data[:, 0]
    states = data[:, 1 : 1 + state_dim]
    inputs = []
    offset = 1 + state_dim
    for p in input_dims:
        inputs.append(data[:, offset : offset + p])
        offset += p
    return Trajectory(times=times, states=states, inputs=tuple(inputs))


def _jsonable(obj):
    if isinstance(obj, np.ndarray):
        return obj.tolist()
    if isinstance(obj, (np.floating, np.integer)):
        return obj.item()
    if isinstance(obj, dict):
        return {k: _jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_jsonable(v) for v in obj]
    return obj


def save_json(path, obj):
    with open(path, "w") as fh:
        json.dump(_jsonable(obj), fh, indent=2, sort_keys=True)
        fh.write("\n")


def load_json(path):
    with open(path) as fh:
        return json.load(fh)
