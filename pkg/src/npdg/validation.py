"""Input validation helpers shared across modules.

All checks operate on plain numpy arrays and raise the package's typed
errors, so solver code can assume clean inputs.
"""

import numpy as np

from .errors import IndefiniteWeight, ShapeMismatch

TOL_PSD = 1e-9
TOL_PD = 1e-9


def as_matrix(value, name="matrix"):
    """Return ``value`` as a float 2-d array, rejecting anything else."""
    arr = np.asarray(value, dtype=float)
    if arr.ndim != 2:
        raise ShapeMismatch(f"{name} must be 2-d, got shape {arr.shape}")
    if not np.all(np.isfinite(arr)):
        raise ShapeMismatch(f"{name} contains non-finite entries")
    return arr


def as_vector(value, name="vector"):
    arr = np.asarray(value, dtype=float).reshape(-1)
    if not np.all(np.isfinite(arr)):
        raise ShapeMismatch(f"{name} contains non-finite entries")
    return arr


def check_square(mat, name="matrix"):
    mat = as_matrix(mat, name)
    if mat.shape[0] != mat.shape[1]:
        raise ShapeMismatch(f"{name} must be square, got {mat.shape}")
    return mat


def check_shape(mat, shape, name="matrix"):
    mat = as_matrix(mat, name)
    if mat.shape != tuple(shape):
        raise ShapeMismatch(f"{name} must have shape {tuple(shape)}, got {mat.shape}")
    return mat


def check_symmetric(mat, name="matrix", tol=1e-8):
    mat = check_square(mat, name)
    if np.linalg.norm(mat - mat.T) > tol * max(1.0, np.linalg.norm(mat)):
        raise ShapeMismatch(f"{name} is not symmetric")
    return 0.5 * (mat + mat.T)


def check_psd(mat, name="matrix", tol=TOL_PSD):
    """Symmetrize and verify eigenvalues >= -tol."""
    mat = check_symmetric(mat, name)
    eigs = np.linalg.eigvalsh(mat)
    if eigs.min() < -tol:
        raise IndefiniteWeight(
            f"{name} must be positive semidefinite, min eigenvalue {eigs.min():.3e}"
        )
    return mat


def check_pd(mat, name="matrix", tol=TOL_PD):
    """Symmetrize and verify eigenvalues > tol."""
    mat = check_symmetric(mat, name)
    eigs = np.linalg.eigvalsh(mat)
    if eigs.min() <= tol:
        raise IndefiniteWeight(
            f"{name} must be positive definite, min eigenvalue {eigs.min():.3e}"
        )
    return mat


def check_time_grid(times, name="times"):
    times = as_vector(times, name)
    if times.size < 1:
        raise ShapeMismatch(f"{name} must be nonempty")
    if times.size > 1 and np.any(np.diff(times) <= 0):
        raise ShapeMismatch(f"{name} must be strictly increasing")
    return times


def freeze(arr):
    """Mark an array read-only so shared values cannot be mutated in place."""
    arr = np.ascontiguousarray(arr, dtype=float)
    arr.flags.writeable = False
    return arr
