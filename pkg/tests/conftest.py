import numpy as np
import pytest
import scipy.linalg

from npdg import DifferentialGame, LtiGameDynamics, PlayerCost


def hurwitz_matrix(rng, k, margin=0.5):
    M = rng.normal(size=(k, k))
    shift = max(np.linalg.eigvals(M).real.max(), 0.0) + margin
    return M - shift * np.eye(k)


def psd_matrix(rng, k, floor=1.0):
    C = rng.normal(size=(k, k))
    return C @ C.T / k + floor * np.eye(k)


def make_decoupled_game(rng, na=2, nh=2, pa=1, ph=2):
    """Two independent LQR problems packaged as one game.

    Block-diagonal plant, disjoint input/state supports, zero cross
    weights; per-block weights keep unit eigenvalue floors so the exact
    potential surrogate lies inside the identification's eigenvalue box.
    """
    A = scipy.linalg.block_diag(hurwitz_matrix(rng, na), hurwitz_matrix(rng, nh))
    Ba = np.vstack([rng.normal(size=(na, pa)), np.zeros((nh, pa))])
    Bh = np.vstack([np.zeros((na, ph)), rng.normal(size=(nh, ph))])
    Qa = scipy.linalg.block_diag(psd_matrix(rng, na), np.zeros((nh, nh)))
    Qh = scipy.linalg.block_diag(np.zeros((na, na)), psd_matrix(rng, nh))
    dynamics = LtiGameDynamics(A, [Ba, Bh])
    costs = (
        PlayerCost("a", Qa, {"a": psd_matrix(rng, pa), "h": np.zeros((ph, ph))}),
        PlayerCost("h", Qh, {"h": psd_matrix(rng, ph), "a": np.zeros((pa, pa))}),
    )
    return DifferentialGame(dynamics, costs)


def make_random_game(rng, n=4, pa=1, ph=2, coupling=0.2):
    """Random stabilizable two-player game with moderate coupling."""
    A = rng.normal(size=(n, n)) / np.sqrt(n)
    Ba = rng.normal(size=(n, pa))
    Bh = rng.normal(size=(n, ph))
    Qa = psd_matrix(rng, n, floor=0.1)
    Qh = psd_matrix(rng, n, floor=0.1)
    dynamics = LtiGameDynamics(A, [Ba, Bh])
    costs = (
        PlayerCost(
            "a",
            Qa,
            {"a": psd_matrix(rng, pa), "h": coupling * psd_matrix(rng, ph, floor=0.0)},
        ),
        PlayerCost(
            "h",
            Qh,
            {"h": psd_matrix(rng, ph), "a": coupling * psd_matrix(rng, pa, floor=0.0)},
        ),
    )
    return DifferentialGame(dynamics, costs)


def exact_surrogate_weights(game):
    """Potential weights of a decoupled game: summed Q, block-diagonal R."""
    Qp = sum(cost.Q for cost in game.costs)
    Rp = scipy.linalg.block_diag(*(cost.R_own for cost in game.costs))
    return Qp, Rp


@pytest.fixture
def rng():
    return np.random.default_rng(20260809)


@pytest.fixture(scope="session")
def vm_config():
    from npdg import ScenarioConfig

    return ScenarioConfig()


@pytest.fixture(scope="session")
def vm_fisc(vm_config):
    from npdg.vmsim import design_vm_fisc

    return design_vm_fisc(vm_config)


@pytest.fixture(scope="session")
def vm_identified(vm_config, vm_fisc):
    from npdg.vmsim import identify_vm

    gains, result = identify_vm(vm_config, vm_fisc)
    return gains, result


@pytest.fixture(scope="session")
def vm_lisc(vm_config, vm_fisc, vm_identified):
    from npdg.vmsim import design_vm_lisc

    ctrl, info, _ = design_vm_lisc(vm_config, vm_fisc, identification=vm_identified[1])
    return ctrl, info
