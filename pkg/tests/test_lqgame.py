import numpy as np
import pytest

from npdg import (
    DifferentialGame,
    IndefiniteWeight,
    LtiGameDynamics,
    NonStabilizable,
    PlayerCost,
    ShapeMismatch,
    closed_loop_matrix,
    coupled_riccati_residuals,
    default_grid,
    player_hamiltonian_gradient,
    simulate_closed_loop,
    solve_coupled_riccati,
    solve_lqr,
)
from conftest import make_decoupled_game, make_random_game


def riccati_residual(A, B, Q, R, P):
    return np.linalg.norm(
        A.T @ P + P @ A + Q - P @ B @ np.linalg.solve(R, B.T @ P)
    )


class TestSolveLqr:
    def test_scalar_quadratic_root(self):
        # -2P + 1 - P^2 = 0 has the stabilizing root sqrt(2) - 1
        A, B, Q, R = [[-1.0]], [[1.0]], [[1.0]], [[1.0]]
        P, K = solve_lqr(A, B, Q, R)
        assert P[0, 0] == pytest.approx(np.sqrt(2.0) - 1.0, abs=1e-10)
        assert K[0, 0] == pytest.approx(np.sqrt(2.0) - 1.0, abs=1e-10)
        assert riccati_residual(np.array(A), np.array(B), np.array(Q), np.array(R), P) < 1e-10

    def test_zero_cost_stable_plant(self, rng):
        A = np.array([[-1.0, 0.4], [0.0, -2.0]])
        B = rng.normal(size=(2, 1))
        P, K = solve_lqr(A, B, np.zeros((2, 2)), np.eye(1))
        assert np.allclose(P, 0.0, atol=1e-12)
        assert np.allclose(K, 0.0, atol=1e-12)

    def test_integrator(self):
        # 1 - P^2 = 0 for A = 0
        P, K = solve_lqr([[0.0]], [[1.0]], [[1.0]], [[1.0]])
        assert P[0, 0] == pytest.approx(1.0, abs=1e-10)
        assert K[0, 0] == pytest.approx(1.0, abs=1e-10)

    def test_residual_oracle_random(self, rng):
        for _ in range(10):
            A = rng.normal(size=(3, 3))
            B = rng.normal(size=(3, 2))
            C = rng.normal(size=(3, 3))
            Q = C @ C.T
            R = np.eye(2) + 0.1 * np.outer(*(rng.normal(size=(2, 2))))
            R = 0.5 * (R + R.T) + np.eye(2)
            P, K = solve_lqr(A, B, Q, R)
            assert riccati_residual(A, B, Q, R, P) < 1e-8
            assert np.linalg.eigvals(A - B @ K).real.max() < 0

    def test_indefinite_weight_rejected(self):
        with pytest.raises(IndefiniteWeight):
            solve_lqr([[0.0]], [[1.0]], [[1.0]], [[-1.0]])
        with pytest.raises(IndefiniteWeight):
            solve_lqr([[0.0]], [[1.0]], [[-1.0]], [[1.0]])

    def test_unstabilizable_rejected(self):
        # unstable mode out of reach of the input
        A = np.diag([1.0, -1.0])
        B = np.array([[0.0], [1.0]])
        with pytest.raises(NonStabilizable):
            solve_lqr(A, B, np.eye(2), np.eye(1))


class TestCoupledRiccati:
    def test_decoupled_game_matches_per_block_lqr(self, rng):
        game = make_decoupled_game(rng, na=2, nh=2, pa=1, ph=2)
        nash = solve_coupled_riccati(game)
        A = game.dynamics.A
        # player a's block problem
        Pa_blk, Ka_blk = solve_lqr(
            A[:2, :2], game.dynamics.B[0][:2], game.costs[0].Q[:2, :2], game.costs[0].R_own
        )
        Ph_blk, Kh_blk = solve_lqr(
            A[2:, 2:], game.dynamics.B[1][2:], game.costs[1].Q[2:, 2:], game.costs[1].R_own
        )
        assert np.allclose(nash.P[0][:2, :2], Pa_blk, atol=1e-8)
        assert np.allclose(nash.P[0][2:, 2:], 0.0, atol=1e-8)
        assert np.allclose(nash.P[1][2:, 2:], Ph_blk, atol=1e-8)
        assert np.allclose(nash.K[0][:, :2], Ka_blk, atol=1e-8)
        assert np.allclose(nash.K[1][:, 2:], Kh_blk, atol=1e-8)

    def test_zero_costs_stable_plant(self, rng):
        from conftest import hurwitz_matrix

        A = hurwitz_matrix(rng, 3)
        dynamics = LtiGameDynamics(A, [rng.normal(size=(3, 1)), rng.normal(size=(3, 2))])
        costs = (
            PlayerCost("a", np.zeros((3, 3)), {"a": np.eye(1), "h": np.zeros((2, 2))}),
            PlayerCost("h", np.zeros((3, 3)), {"h": np.eye(2), "a": np.zeros((1, 1))}),
        )
        nash = solve_coupled_riccati(DifferentialGame(dynamics, costs))
        assert np.allclose(nash.P[0], 0.0, atol=1e-10)
        assert np.allclose(nash.K[1], 0.0, atol=1e-10)
        assert np.allclose(nash.A_c, A, atol=1e-10)

    def test_random_games_residual_and_stability(self, rng):
        for _ in range(20):
            game = make_random_game(rng)
            nash = solve_coupled_riccati(game)
            residuals = coupled_riccati_residuals(game, nash)
            assert max(residuals.values()) <= 1e-8
            assert np.linalg.eigvals(nash.A_c).real.max() < -1e-9
            for P in nash.P:
                assert np.linalg.norm(P - P.T) <= 1e-10

    def test_gain_consistency(self, rng):
        game = make_random_game(rng)
        nash = solve_coupled_riccati(game)
        for idx, player in enumerate(game.dynamics.players):
            expected = np.linalg.solve(
                game.costs[idx].R_own, game.dynamics.B[idx].T @ nash.P[idx]
            )
            assert np.allclose(nash.K[idx], expected, atol=1e-8)


class TestClosedLoopMatrix:
    def test_zero_gains(self, rng):
        game = make_random_game(rng)
        gains = [np.zeros((p, 4)) for p in game.dynamics.input_dims]
        assert np.allclose(closed_loop_matrix(game.dynamics, gains), game.dynamics.A)

    def test_scalar_arithmetic(self):
        dynamics = LtiGameDynamics([[0.0]], [[[1.0]], [[1.0]]])
        Ac = closed_loop_matrix(dynamics, [[[1.0]], [[1.0]]])
        assert Ac[0, 0] == pytest.approx(-2.0)

    def test_shape_mismatch(self, rng):
        game = make_random_game(rng)
        with pytest.raises(ShapeMismatch):
            closed_loop_matrix(game.dynamics, [np.zeros((1, 3)), np.zeros((2, 4))])


class TestSimulateClosedLoop:
    def test_zero_matrix_constant(self):
        traj = simulate_closed_loop(np.zeros((2, 2)), [1.0, -2.0], [0.0, 0.5, 1.0])
        assert np.allclose(traj.states, [[1.0, -2.0]] * 3)

    def test_scalar_decay(self):
        traj = simulate_closed_loop([[-1.0]], [1.0], [0.0, 1.0])
        assert traj.states[-1, 0] == pytest.approx(np.exp(-1.0), abs=1e-12)

    def test_diagonal_modes(self):
        traj = simulate_closed_loop(np.diag([-1.0, -2.0]), [1.0, 1.0], [0.0, 0.5])
        assert traj.states[-1] == pytest.approx([np.exp(-0.5), np.exp(-1.0)], abs=1e-12)

    def test_semigroup_property(self, rng):
        A = rng.normal(size=(3, 3))
        x0 = rng.normal(size=3)
        full = simulate_closed_loop(A, x0, [0.0, 0.7, 1.9])
        first = simulate_closed_loop(A, x0, [0.0, 0.7])
        second = simulate_closed_loop(A, first.end_state, [0.0, 1.2])
        assert np.allclose(full.end_state, second.end_state, atol=1e-9)

    def test_inputs_attached(self, rng):
        game = make_random_game(rng)
        nash = solve_coupled_riccati(game)
        traj = simulate_closed_loop(nash.A_c, rng.normal(size=4), default_grid(2.0), gains=nash.K)
        assert len(traj.inputs) == 2
        assert np.allclose(traj.inputs[0], -traj.states @ nash.K[0].T)

    def test_grid_must_increase(self):
        with pytest.raises(ShapeMismatch):
            simulate_closed_loop(np.zeros((1, 1)), [1.0], [0.0, 1.0, 0.5])


class TestHamiltonianGradient:
    def test_zero_at_origin(self, rng):
        game = make_random_game(rng)
        nash = solve_coupled_riccati(game)
        grad = player_hamiltonian_gradient(game, nash, np.zeros(4), np.zeros(3), "a")
        assert np.allclose(grad, 0.0)

    def test_stationary_at_equilibrium_inputs(self, rng):
        game = make_random_game(rng)
        nash = solve_coupled_riccati(game)
        traj = simulate_closed_loop(nash.A_c, rng.normal(size=4), default_grid(3.0), gains=nash.K)
        u = traj.stacked_inputs()
        for k in range(0, len(traj), 10):
            for player in game.dynamics.players:
                grad = player_hamiltonian_gradient(game, nash, traj.states[k], u[k], player)
                assert np.linalg.norm(grad) <= 1e-8

    def test_suboptimal_input_closed_form(self, rng):
        # u_i = -(1 + eps) K_i x gives gradient -eps B_i^T P_i x
        game = make_random_game(rng)
        nash = solve_coupled_riccati(game)
        x = rng.normal(size=4)
        eps = 0.1
        u = np.concatenate([-(1.0 + eps) * (K @ x) for K in nash.K])
        for idx, player in enumerate(game.dynamics.players):
            grad = player_hamiltonian_gradient(game, nash, x, u, player)
            expected = -eps * game.dynamics.B[idx].T @ nash.P[idx] @ x
            assert np.allclose(grad, expected, atol=1e-10)


class TestTypes:
    def test_dynamics_validation(self, rng):
        with pytest.raises(ShapeMismatch):
            LtiGameDynamics(np.eye(3), [np.zeros((2, 1)), np.zeros((3, 1))])

    def test_cost_owner_required(self):
        with pytest.raises(ShapeMismatch):
            PlayerCost("a", np.eye(2), {"h": np.eye(1)})

    def test_arrays_immutable(self, rng):
        game = make_random_game(rng)
        with pytest.raises(ValueError):
            game.dynamics.A[0, 0] = 1.0

    def test_player_lookup(self, rng):
        game = make_random_game(rng)
        assert game.dynamics.player_index("h") == 1
        assert game.dynamics.input_slice("h") == slice(1, 3)
        with pytest.raises(ShapeMismatch):
            game.dynamics.player_index("x")
