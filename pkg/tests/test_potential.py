import numpy as np
import pytest

from npdg import (
    DifferentialGame,
    PlayerCost,
    PotentialGame,
    ShapeMismatch,
    certify_npdg,
    csme,
    default_grid,
    deviation_bound,
    differential_distance,
    exact_pdg_residual,
    npdg_distance_bound,
    simulate_closed_loop,
    solve_coupled_riccati,
)
from conftest import exact_surrogate_weights, make_decoupled_game, make_random_game


@pytest.fixture
def decoupled(rng):
    game = make_decoupled_game(rng)
    nash = solve_coupled_riccati(game)
    pot = PotentialGame.from_weights(game.dynamics, *exact_surrogate_weights(game))
    return game, nash, pot


class TestPotentialGame:
    def test_from_weights_satisfies_riccati(self, decoupled):
        _, _, pot = decoupled
        assert pot.are_residual() <= 1e-8
        assert pot.gain_residual() <= 1e-8
        pot.validate()

    def test_rejects_indefinite_weights(self, rng):
        game = make_random_game(rng)
        n = game.dynamics.state_dim
        m = game.dynamics.total_input_dim
        from npdg import IndefiniteWeight

        with pytest.raises(IndefiniteWeight):
            PotentialGame(game.dynamics, -np.eye(n), np.eye(m), np.eye(n))


class TestExactPdgResidual:
    def test_decoupled_construction_is_exact(self, decoupled):
        game, nash, pot = decoupled
        residuals = exact_pdg_residual(game, nash, pot)
        for r_weights, r_costate in residuals.values():
            assert r_weights <= 1e-8
            assert r_costate <= 1e-8

    def test_mismatched_surrogate_flagged(self, rng):
        # replicate player a's data into the surrogate: player h cannot match
        game = make_decoupled_game(rng)
        nash = solve_coupled_riccati(game)
        import scipy.linalg

        Rp = scipy.linalg.block_diag(
            game.costs[0].R_own, np.eye(game.dynamics.input_dims[1])
        )
        pot = PotentialGame.from_weights(
            game.dynamics, game.costs[0].Q + 1e-3 * np.eye(4), Rp
        )
        residuals = exact_pdg_residual(game, nash, pot)
        assert max(residuals["h"]) > 1e-3


class TestDifferentialDistance:
    def test_exact_surrogate_zero_distance(self, decoupled):
        game, nash, pot = decoupled
        x0 = np.ones(game.dynamics.state_dim)
        traj = simulate_closed_loop(nash.A_c, x0, default_grid(5.0), gains=nash.K)
        series, overall = differential_distance(game, nash, pot, traj)
        assert overall <= 1e-8
        for sigma in series.values():
            assert sigma.max() <= 1e-8

    def test_origin_trajectory_zero(self, decoupled):
        game, nash, pot = decoupled
        traj = simulate_closed_loop(nash.A_c, np.zeros(4), default_grid(2.0), gains=nash.K)
        _, overall = differential_distance(game, nash, pot, traj)
        assert overall == 0.0

    def test_perturbed_surrogate_positive(self, decoupled, rng):
        game, nash, pot = decoupled
        perturbed = PotentialGame(
            game.dynamics, pot.Qp, pot.Rp, pot.Pp + 0.05 * np.eye(4)
        )
        x0 = rng.normal(size=4)
        traj = simulate_closed_loop(nash.A_c, x0, default_grid(2.0), gains=nash.K)
        _, overall = differential_distance(game, nash, perturbed, traj)
        assert overall > 1e-4


class TestDistanceBound:
    def test_exact_surrogate_zero_bound(self, decoupled):
        _, nash, pot = decoupled
        bound, is_npdg = npdg_distance_bound(nash, pot, x_max=2.0, delta=1e-6)
        assert bound <= 1e-8
        assert is_npdg

    def test_zero_x_max(self, decoupled):
        game, nash, pot = decoupled
        perturbed = PotentialGame(game.dynamics, pot.Qp, pot.Rp, pot.Pp + np.eye(4))
        bound, _ = npdg_distance_bound(nash, perturbed, x_max=0.0, delta=0.1)
        assert bound == 0.0

    def test_negative_x_max_rejected(self, decoupled):
        _, nash, pot = decoupled
        with pytest.raises(ShapeMismatch):
            npdg_distance_bound(nash, pot, x_max=-1.0, delta=0.1)


class TestCsme:
    def test_identical(self):
        A = np.eye(3)
        assert csme(A, A) == 0.0

    def test_diagonal_difference(self):
        assert csme(np.diag([0.3, 0.0]), np.zeros((2, 2))) == pytest.approx(0.3)

    def test_matches_power_iteration(self, rng):
        X = rng.normal(size=(4, 4))
        Y = rng.normal(size=(4, 4))
        D = X - Y
        # power iteration on D^T D
        v = rng.normal(size=4)
        for _ in range(500):
            v = D.T @ (D @ v)
            v /= np.linalg.norm(v)
        sigma = np.linalg.norm(D @ v)
        assert csme(X, Y) == pytest.approx(sigma, abs=1e-9)


class TestDeviationBound:
    def test_zero_delta(self, rng):
        eps = deviation_bound(0.0, rng.normal(size=(3, 2)), -np.eye(3), np.ones(3), default_grid(2.0))
        assert np.allclose(eps, 0.0)

    def test_zero_at_initial_time(self, rng):
        eps = deviation_bound(0.1, rng.normal(size=(3, 2)), -np.eye(3), np.ones(3), default_grid(2.0))
        assert eps[0] == 0.0

    def test_scalar_closed_form(self):
        eps = deviation_bound(0.1, [[1.0]], [[-1.0]], [1.0], [0.0, 1.0])
        assert eps[-1] == pytest.approx(np.exp(-1.0) * np.expm1(0.2), abs=1e-12)

    def test_nondecreasing_in_delta(self, rng):
        B = rng.normal(size=(3, 2))
        Acp = -np.eye(3) + 0.1 * rng.normal(size=(3, 3))
        x0 = rng.normal(size=3)
        grid = default_grid(5.0)
        prev = deviation_bound(0.01, B, Acp, x0, grid)
        for delta in (0.02, 0.05, 0.1, 0.3):
            cur = deviation_bound(delta, B, Acp, x0, grid)
            assert np.all(cur >= prev - 1e-12)
            prev = cur


class TestCertificate:
    def test_exact_surrogate_certificate(self, decoupled, rng):
        game, nash, pot = decoupled
        x0 = rng.normal(size=4)
        cert = certify_npdg(game, nash, pot, x0, default_grid(5.0), delta=1e-6)
        assert cert.is_valid
        assert cert.max_distance <= 1e-9
        assert cert.lemma2_violations == 0
        assert cert.bound_value < 1e-6
        assert not cert.window_monotone_violations

    def test_report_round_trip(self, decoupled, rng):
        game, nash, pot = decoupled
        cert = certify_npdg(game, nash, pot, rng.normal(size=4), default_grid(3.0), delta=0.05)
        record = cert.to_dict()
        assert set(record) >= {
            "delta",
            "per_player_distance",
            "x_max",
            "bound_value",
            "lemma2_violations",
        }


class TestScalingInvariance:
    def test_cost_scaling_preserves_gains(self, rng):
        # scaling one player's cost leaves its equilibrium gain unchanged
        game = make_random_game(rng)
        nash = solve_coupled_riccati(game)
        kappa = 3.7
        scaled_cost = PlayerCost(
            "a",
            kappa * game.costs[0].Q,
            {label: kappa * block for label, block in game.costs[0].R.items()},
        )
        scaled = DifferentialGame(game.dynamics, (scaled_cost, game.costs[1]))
        nash_scaled = solve_coupled_riccati(scaled)
        assert np.allclose(nash.K[0], nash_scaled.K[0], atol=1e-9)
        assert np.allclose(nash.K[1], nash_scaled.K[1], atol=1e-9)
        assert np.allclose(nash_scaled.P[0], kappa * nash.P[0], atol=1e-7)
