"""Gain estimation from trajectories and LMI-constrained surrogate identification.

The inverse problem recovers a potential surrogate (Qp, Rp, Pp) for a
measured game: a condition-number bound beta is minimized subject to the
surrogate Riccati/gain equalities, an eigenvalue box I <= blkdiag(Qp, Rp)
<= beta I, the near-potential distance bound, and the input-weight
scaling guard.  Problem sizes are tiny (n <= 10), so feasibility is
decided by alternating projections between the affine equality set and
the spectral constraints, with a bisection on beta around that oracle.
"""

from dataclasses import dataclass

import numpy as np
import scipy.linalg
from sklearn.base import BaseEstimator

from .errors import Infeasible, RankDeficient, ShapeMismatch, SolverStalled
from .lqgame import DEFAULT_PLAYERS
from .potential import PotentialGame, npdg_distance_bound
from .validation import as_matrix, freeze

TOL_SDP = 1e-6
RTOL_BETA = 1e-3
BETA_CAP = 1e9


@dataclass(frozen=True)
class GainEstimate:
    """Stacked feedback gain recovered from trajectory data."""

    Khat: np.ndarray
    per_player: dict
    residual: dict
    sample_count: int
    effective_rank: int

    def __post_init__(self):
        object.__setattr__(self, "Khat", freeze(self.Khat))


def _lstsq_gain(states, inputs, rcond=None):
    """Least-squares solve of u ~= -K x; returns (K, rms_residual, rank)."""
    sol, _, rank, _ = np.linalg.lstsq(states, -inputs, rcond=rcond)
    K = sol.T
    fit = inputs + states @ K.T
    rms = float(np.sqrt(np.mean(np.sum(fit**2, axis=1))))
    return K, rms, int(rank)


def estimate_feedback_gains(traj, players=DEFAULT_PLAYERS):
    """Per-player OLS estimate of the feedback law u_i = -K_i x.

    Raises RankDeficient when the state samples do not span the state
    space, reporting the effective rank.
    """
    states = traj.states
    n = states.shape[1]
    rank = int(np.linalg.matrix_rank(states))
    if rank < n:
        raise RankDeficient(
            f"state samples span only {rank} of {n} dimensions",
            effective_rank=rank,
        )
    if not traj.inputs:
        raise ShapeMismatch("trajectory carries no inputs to regress on")
    per_player = {}
    residual = {}
    blocks = []
    for label, inputs in zip(players, traj.inputs):
        K_i, rms, _ = _lstsq_gain(states, inputs)
        per_player[label] = freeze(K_i)
        residual[label] = rms
        blocks.append(K_i)
    return GainEstimate(
        Khat=np.vstack(blocks),
        per_player=per_player,
        residual=residual,
        sample_count=states.shape[0],
        effective_rank=rank,
    )


class FeedbackGainEstimator(BaseEstimator):
    """sklearn-style regressor for a linear state-feedback law u = -K x.

    fit(X, U) with X of shape (n_samples, n_states) and U of shape
    (n_samples, n_inputs); the recovered gain is ``gain_``.
    """

    def __init__(self, rcond=None):
        self.rcond = rcond

    def fit(self, X, U):
        X = as_matrix(np.atleast_2d(X), "X")
        U = as_matrix(np.atleast_2d(U), "U")
        if X.shape[0] != U.shape[0]:
            raise ShapeMismatch("X and U must have the same number of samples")
        rank = int(np.linalg.matrix_rank(X))
        if rank < X.shape[1]:
            raise RankDeficient(
                f"state samples span only {rank} of {X.shape[1]} dimensions",
                effective_rank=rank,
            )
        self.gain_, self.residual_, self.rank_ = _lstsq_gain(X, U, rcond=self.rcond)
        self.n_features_in_ = X.shape[1]
        return self

    def predict(self, X):
        X = as_matrix(np.atleast_2d(X), "X")
        return -X @ self.gain_.T


@dataclass(frozen=True)
class IdentificationResult:
    """Identified surrogate plus the certificate inputs used to accept it."""

    pot: PotentialGame
    beta: float
    constraint_residuals: dict
    delta_used: float
    x_max: float
    khat: np.ndarray

    def __post_init__(self):
        object.__setattr__(self, "khat", freeze(self.khat))


class _SymBasis:
    """Orthonormal coordinates for symmetric matrices (Frobenius isometry)."""

    def __init__(self, n):
        ii, jj = np.triu_indices(n)
        self.n = n
        self.ii = ii
        self.jj = jj
        self.scale = np.where(ii == jj, 1.0, np.sqrt(2.0))
        self.dim = ii.size

    def to_coef(self, M):
        return M[self.ii, self.jj] * self.scale

    def from_coef(self, c):
        M = np.zeros((self.n, self.n))
        vals = c / self.scale
        M[self.ii, self.jj] = vals
        M[self.jj, self.ii] = vals
        return M

    def matrices(self):
        for k in range(self.dim):
            e = np.zeros(self.dim)
            e[k] = 1.0
            yield self.from_coef(e)


def _eig_clip(M, lo, hi):
    w, V = np.linalg.eigh(M)
    w = np.clip(w, lo, hi)
    return (V * w) @ V.T


def _clip_singular(D, radius):
    U, s, Vt = np.linalg.svd(D, full_matrices=False)
    return (U * np.minimum(s, radius)) @ Vt


class _IdentifyWorkspace:
    """Per-identification precomputation for the projection oracle.

    Variables are the coefficients of (Pp, Qp, Rp) in orthonormal
    symmetric bases.  The affine equality set (surrogate Riccati identity
    in symmetrized form plus the gain equation) is cached as a nullspace
    projector; spectral constraints are handled by eigenvalue and
    singular-value clipping.
    """

    def __init__(self, game, nash, khat, x_max, tol=TOL_SDP):
        dyn = game.dynamics
        self.dyn = dyn
        self.n = dyn.state_dim
        self.m = dyn.total_input_dim
        self.khat = as_matrix(khat, "Khat")
        if self.khat.shape != (self.m, self.n):
            raise ShapeMismatch(
                f"Khat must have shape {(self.m, self.n)}, got {self.khat.shape}"
            )
        self.x_max = float(x_max)
        self.tol = tol
        self.bp = _SymBasis(self.n)
        self.br = _SymBasis(self.m)
        self.np_ = self.bp.dim
        self.nr = self.br.dim
        self.total = 2 * self.np_ + self.nr

        A = dyn.A
        B = dyn.B_stacked
        # own-input weight norms of the original game, for the scaling guard
        self.r_norms = {
            p: float(np.linalg.norm(game.costs[i].R_own, 2))
            for i, p in enumerate(dyn.players)
        }
        self.c_f = min(self.r_norms.values())
        # costate-match targets per player
        self.targets = [dyn.B[i].T @ nash.P[i] for i in range(len(dyn.players))]

        rows_b = []
        rows_c = []
        for E in self.bp.matrices():
            M = A.T @ E + E @ A
            PBK = E @ B @ self.khat
            M = M - 0.5 * (PBK + PBK.T)
            rows_b.append(self.bp.to_coef(M))
            rows_c.append((B.T @ E).ravel())
        Mb_P = np.array(rows_b).T
        Mc_P = np.array(rows_c).T
        Mb_Q = np.eye(self.np_)
        Mc_R = np.array([(-G @ self.khat).ravel() for G in self.br.matrices()]).T
        M_aff = np.block(
            [
                [Mb_P, Mb_Q, np.zeros((self.np_, self.nr))],
                [Mc_P, np.zeros((self.m * self.n, self.np_)), Mc_R],
            ]
        )
        # generous rank cutoff: near-null directions must live in the
        # nullspace or the projector pins them to amplified noise
        self.null_basis = scipy.linalg.null_space(M_aff, rcond=1e-10)

        # maps coef(P) -> vec(B_i^T P), one per player, for ball corrections
        self.psi = []
        for i in range(len(dyn.players)):
            cols = [
                (dyn.B[i].T @ E).ravel() for E in self.bp.matrices()
            ]
            self.psi.append(np.array(cols).T)
        self._psi_pinv = {}
        self._pinned = None

    # -- packing ---------------------------------------------------------

    def pack(self, P, Q, R):
        return np.concatenate(
            [self.bp.to_coef(P), self.bp.to_coef(Q), self.br.to_coef(R)]
        )

    def unpack(self, s):
        P = self.bp.from_coef(s[: self.np_])
        Q = self.bp.from_coef(s[self.np_ : 2 * self.np_])
        R = self.br.from_coef(s[2 * self.np_ :])
        return P, Q, R

    # -- projections ------------------------------------------------------

    def project_affine(self, s):
        return self.null_basis @ (self.null_basis.T @ s)

    def project_pinned(self, s):
        """Projection onto the affine set with the ball centers pinned.

        Imposes B_i^T P = B_i^T P_i as equalities on top of the Riccati and
        gain equations; exact for noiseless data and a fast route to a
        feasible point whenever the pinned slice intersects the box.
        """
        if self._pinned is None:
            V = self.null_basis
            G = np.vstack(self.psi) @ V[: self.np_]
            rhs = np.concatenate([t.ravel() for t in self.targets])
            z_part, *_ = np.linalg.lstsq(G, rhs, rcond=1e-9)
            self._pinned = (z_part, scipy.linalg.null_space(G, rcond=1e-9))
        z_part, VG = self._pinned
        z = self.null_basis.T @ s
        z = z_part + VG @ (VG.T @ (z - z_part))
        return self.null_basis @ z

    def project_ball(self, s, radius):
        if not np.isfinite(radius):
            return s
        P, _, _ = self.unpack(s)
        selected = []
        targets = []
        for i, psi in enumerate(self.psi):
            D = self.dyn.B[i].T @ P - self.targets[i]
            if np.linalg.norm(D, 2) > radius:
                selected.append(i)
                targets.append((_clip_singular(D, radius) - D).ravel())
        if not selected:
            return s
        key = tuple(selected)
        if key not in self._psi_pinv:
            self._psi_pinv[key] = np.linalg.pinv(
                np.vstack([self.psi[i] for i in selected])
            )
        dp = self._psi_pinv[key] @ np.concatenate(targets)
        out = s.copy()
        out[: self.np_] += dp
        return out

    def project_box(self, s, beta):
        P, Q, R = self.unpack(s)
        Q = _eig_clip(Q, 1.0, beta)
        R = _eig_clip(R, 1.0, beta)
        # scaling guard: some eigenvalue of Rp must not exceed min_i ||R_ii||
        w, V = np.linalg.eigh(R)
        if w[0] > self.c_f:
            w[0] = self.c_f
            R = (V * w) @ V.T
        return self.pack(P, Q, R)

    # -- feasibility ------------------------------------------------------

    def violations(self, s, beta, radius):
        """Normalized worst violation; feasible when <= 1.

        Eigenvalue constraints are measured against an absolute tolerance,
        the distance ball against a tolerance proportional to its radius so
        the final bound stays strictly inside delta at any scale.
        """
        P, Q, R = self.unpack(s)
        wq = np.linalg.eigvalsh(Q)
        wr = np.linalg.eigvalsh(R)
        box_tol = 0.1 * self.tol
        score = max(0.0, 1.0 - min(wq[0], wr[0])) / box_tol
        score = max(score, max(0.0, max(wq[-1], wr[-1]) - beta) / box_tol)
        score = max(score, max(0.0, wr[0] - self.c_f) / box_tol)
        if np.isfinite(radius):
            ball_tol = 1e-3 * radius
            for i in range(len(self.psi)):
                gap = np.linalg.norm(self.dyn.B[i].T @ P - self.targets[i], 2)
                score = max(score, max(0.0, gap - radius) / ball_tol)
        return score

    def initial_point(self):
        """Affine-feasible point closest (LS) to the costate-match targets."""
        vp = self.null_basis[: self.np_]
        design = np.vstack(self.psi) @ vp
        rhs = np.concatenate([t.ravel() for t in self.targets])
        z, *_ = np.linalg.lstsq(design, rhs, rcond=1e-9)
        return self.null_basis @ z

    def _batch_unpack(self, Z):
        """Reconstruct (P, Q, R) stacks from nullspace coordinates (rows)."""
        S = Z @ self.null_basis.T
        out = []
        for basis, sl in (
            (self.bp, slice(0, self.np_)),
            (self.bp, slice(self.np_, 2 * self.np_)),
            (self.br, slice(2 * self.np_, None)),
        ):
            coef = S[:, sl] / basis.scale
            M = np.zeros((Z.shape[0], basis.n, basis.n))
            M[:, basis.ii, basis.jj] = coef
            M[:, basis.jj, basis.ii] = coef
            out.append(M)
        return out

    def scan(self, beta, radius, rng, centers, sigmas, n_per=2500):
        """Directional search over the affine nullspace for a feasible point.

        The affine set is a linear subspace, so every candidate is a
        direction u times a scale t; eigenvalue windows in t come in
        closed form and only surviving directions pay for the spectral
        ball checks.  Returns the sampled point of smallest beta, or None.
        """
        d = self.null_basis.shape[1]
        best = None
        for center in centers:
            center = center / np.linalg.norm(center)
            for sigma in sigmas:
                U = center[None] + sigma * rng.normal(size=(n_per, d))
                U /= np.linalg.norm(U, axis=1, keepdims=True)
                U = np.vstack([center, U])
                P, Q, R = self._batch_unpack(U)
                wq = np.linalg.eigvalsh(Q)
                wr = np.linalg.eigvalsh(R)
                lo_q, hi_q = wq[:, 0], wq[:, -1]
                lo_r, hi_r = wr[:, 0], wr[:, -1]
                valid = (lo_q > 1e-14) & (lo_r > 1e-14)
                t_lo = np.maximum(1.0 / np.where(valid, lo_q, 1.0),
                                  1.0 / np.where(valid, lo_r, 1.0))
                t_hi = np.minimum(self.c_f / np.where(valid, lo_r, 1.0),
                                  np.minimum(beta / np.where(valid, hi_q, 1.0),
                                             beta / np.where(valid, hi_r, 1.0)))
                valid &= t_hi > t_lo
                if not valid.any():
                    continue
                margin = 1e-9
                for idx in np.flatnonzero(valid):
                    ts = np.linspace(t_lo[idx] * (1 + margin), t_hi[idx] * (1 - margin), 12)
                    for t in ts:
                        cand_beta = t * max(hi_q[idx], hi_r[idx])
                        if best is not None and cand_beta >= best[0]:
                            break
                        ok = all(
                            np.linalg.norm(t * self.psi_mat(i, P[idx]) - self.targets[i], 2)
                            <= radius * (1.0 - 1e-6)
                            for i in range(len(self.psi))
                        )
                        if ok:
                            point = t * (self.null_basis @ U[idx])
                            if best is None or cand_beta < best[0]:
                                best = (cand_beta, point)
                            break
        return None if best is None else best[1]

    def psi_mat(self, i, P):
        return self.dyn.B[i].T @ P

    def scan_free(self, beta, radius, rng, centers, sigmas, n_per=2500):
        """Directional search without the unit eigenvalue floor.

        Feasibility per direction is scale-free (condition number of the
        weight block at most beta) plus the guard ceiling and the ball;
        returns the point of smallest condition number found, or None.
        """
        d = self.null_basis.shape[1]
        best = None
        for center in centers:
            center = center / np.linalg.norm(center)
            for sigma in sigmas:
                U = center[None] + sigma * rng.normal(size=(n_per, d))
                U /= np.linalg.norm(U, axis=1, keepdims=True)
                U = np.vstack([center, U])
                P, Q, R = self._batch_unpack(U)
                wq = np.linalg.eigvalsh(Q)
                wr = np.linalg.eigvalsh(R)
                lo = np.minimum(wq[:, 0], wr[:, 0])
                hi = np.maximum(wq[:, -1], wr[:, -1])
                valid = lo > 1e-14
                cond = np.where(valid, hi / np.where(valid, lo, 1.0), np.inf)
                valid &= cond <= beta
                if not valid.any():
                    continue
                order = np.flatnonzero(valid)[np.argsort(cond[np.flatnonzero(valid)])]
                for idx in order:
                    if best is not None and cond[idx] >= best[0]:
                        break
                    t_guard = self.c_f / wr[idx, 0]
                    D = [self.psi_mat(i, P[idx]) for i in range(len(self.psi))]
                    a = sum(np.sum(m * m) for m in D)
                    b = sum(np.sum(m * c) for m, c in zip(D, self.targets))
                    t_star = b / a if a > 0 else t_guard
                    for t in np.unique(np.clip([t_star, t_guard, 0.5 * t_guard], 1e-12, t_guard)):
                        ok = all(
                            np.linalg.norm(t * D[i] - self.targets[i], 2)
                            <= radius * (1.0 - 1e-6)
                            for i in range(len(self.psi))
                        )
                        if ok:
                            best = (float(cond[idx]), t * (self.null_basis @ U[idx]))
                            break
        return None if best is None else best[1]

    def oracle_free(self, beta, radius, warm=None):
        """Feasibility oracle for the condition-number reading of the box."""
        rng = np.random.default_rng(1789)
        centers = [self.null_basis.T @ self.project_affine(self.initial_point())]
        sigmas = (0.01, 0.04, 0.12, 0.35)
        if warm is not None:
            warm_z = self.null_basis.T @ warm
            if np.linalg.norm(warm_z) > 0:
                centers.insert(0, warm_z)
                sigmas = (0.005, 0.02, 0.08, 0.25)
        return self.scan_free(beta, radius, rng, centers, sigmas)

    def _run_splitting(self, start, proj_a, proj_b, beta, radius, budget, stall_limit):
        """Douglas-Rachford iteration between two projection maps.

        Returns the first affine-side candidate meeting the feasibility
        score, or None when the score stops improving (infeasible verdict).
        """
        z = proj_a(start)
        best = np.inf
        stall = 0
        for _ in range(budget):
            xb = proj_b(z)
            cand = proj_a(xb)
            score = self.violations(cand, beta, radius)
            if score <= 1.0:
                return cand
            if score < best * (1.0 - 1e-3):
                best = score
                stall = 0
            else:
                stall += 1
                if stall > stall_limit:
                    return None
            z = z + proj_a(2.0 * xb - z) - xb
        return None

    def oracle(self, beta, radius, warm=None, max_cycles=4000, stall_limit=150):
        """Feasibility oracle for fixed (beta, radius); a point or None.

        Phases: the pinned slice (exact for noiseless gain data), the full
        ball formulation via Douglas-Rachford, a directional scan of the
        nullspace (which handles the regimes where the eigenvalue floor,
        the scaling guard, and the ball interact), and plain alternating
        projections as a last resort.
        """
        start = self.initial_point() if warm is None else warm
        if np.isfinite(radius):
            cand = self._run_splitting(
                start,
                self.project_pinned,
                lambda s: self.project_box(s, beta),
                beta,
                radius,
                budget=min(500, max_cycles),
                stall_limit=60,
            )
            if cand is not None:
                return cand
        cand = self._run_splitting(
            start,
            self.project_affine,
            lambda s: self.project_box(self.project_ball(s, radius), beta),
            beta,
            radius,
            budget=max_cycles,
            stall_limit=stall_limit,
        )
        if cand is not None:
            return cand
        rng = np.random.default_rng(1789)
        centers = [self.null_basis.T @ self.project_affine(self.initial_point())]
        sigmas = (0.01, 0.04, 0.12, 0.35)
        if warm is not None:
            warm_z = self.null_basis.T @ warm
            if np.linalg.norm(warm_z) > 0:
                centers.insert(0, warm_z)
                sigmas = (0.005, 0.02, 0.08, 0.25)
        cand = self.scan(beta, radius, rng, centers, sigmas)
        if cand is not None:
            return cand
        # plain alternating projections as a conservative fallback
        s = self.project_affine(start)
        best = np.inf
        stall = 0
        for _ in range(max_cycles):
            score = self.violations(s, beta, radius)
            if score <= 1.0:
                return s
            if score < best * (1.0 - 1e-3):
                best = score
                stall = 0
            else:
                stall += 1
                if stall > stall_limit:
                    return None
            s = self.project_box(self.project_ball(s, radius), beta)
            s = self.project_affine(s)
        return None


def _radius(delta, x_max):
    # slack keeps the returned bound strictly below delta
    slack = 1.0 - 1e-3
    if x_max <= 0.0:
        return np.inf
    return delta * slack / x_max


def _khat_of(gains):
    return gains.Khat if isinstance(gains, GainEstimate) else as_matrix(gains, "Khat")


def _solver_residuals(ws, s, beta, delta):
    P, Q, R = ws.unpack(s)
    A, B = ws.dyn.A, ws.dyn.B_stacked
    wq = np.linalg.eigvalsh(Q)
    wr = np.linalg.eigvalsh(R)
    bound = max(
        np.linalg.norm(ws.dyn.B[i].T @ P - ws.targets[i], 2)
        for i in range(len(ws.psi))
    ) * ws.x_max
    rp_inv_norm = 1.0 / wr[0]
    return {
        "riccati_26b": float(
            np.linalg.norm(A.T @ P + P @ A + Q - P @ B @ ws.khat)
        ),
        "gain_26c": float(np.linalg.norm(B.T @ P - R @ ws.khat)),
        "box_lower_26d": float(max(0.0, 1.0 - min(wq[0], wr[0]))),
        "box_upper_26d": float(max(0.0, max(wq[-1], wr[-1]) - beta)),
        "distance_26e": float(max(0.0, bound - delta)),
        "scaling_26f": float(
            max(
                max(0.0, 1.0 - rp_inv_norm * nrm)
                for nrm in ws.r_norms.values()
            )
        ),
    }


def identify_npdg(
    game,
    nash,
    gains,
    delta,
    x_max,
    tol=TOL_SDP,
    beta_rtol=RTOL_BETA,
    max_cycles=4000,
    box_floor="unit",
):
    """Identify a near-potential surrogate for a measured game.

    Minimizes the condition-number bound beta by bisection over the
    feasibility oracle.  Raises Infeasible when no surrogate exists
    within distance ``delta`` (callers should enlarge delta and retry).

    ``box_floor`` selects the eigenvalue-box reading: "unit" is the
    printed form I <= blkdiag(Qp, Rp) <= beta I; "free" treats beta as a
    pure condition-number bound with unconstrained positive scale, which
    is what the printed identified matrices themselves satisfy and what
    keeps heavily noise-attenuated gain estimates identifiable.
    """
    if delta <= 0:
        raise ShapeMismatch("delta must be positive")
    if box_floor not in ("unit", "free"):
        raise ShapeMismatch(f"unknown box_floor {box_floor!r}")
    khat = _khat_of(gains)
    ws = _IdentifyWorkspace(game, nash, khat, x_max, tol=tol)
    if box_floor == "unit" and ws.c_f < 1.0 - tol:
        raise Infeasible(
            "scaling guard conflicts with the unit eigenvalue floor: "
            f"min own-input weight norm {ws.c_f:.3e} < 1",
            delta=delta,
        )
    radius = _radius(delta, x_max)
    solve = ws.oracle if box_floor == "unit" else ws.oracle_free

    point = solve(BETA_CAP, radius)
    if point is None:
        raise Infeasible(
            f"identification infeasible at delta={delta:g}", delta=delta
        )

    def beta_of(s):
        _, Q, R = ws.unpack(s)
        wq = np.linalg.eigvalsh(Q)
        wr = np.linalg.eigvalsh(R)
        top = max(float(wq[-1]), float(wr[-1]))
        if box_floor == "unit":
            return max(1.0, top)
        return top / min(float(wq[0]), float(wr[0]))

    hi = beta_of(point)
    lo = 1.0
    best_point = point
    while hi - lo > beta_rtol * hi:
        mid = 0.5 * (lo + hi)
        candidate = solve(mid, radius, warm=best_point)
        if candidate is not None:
            hi = min(mid, beta_of(candidate))
            best_point = candidate
        else:
            lo = mid

    P, Q, R = ws.unpack(best_point)
    beta = beta_of(best_point)
    pot = PotentialGame(game.dynamics, Q, R, P)
    bound, ok = npdg_distance_bound(nash, pot, x_max, delta)
    if not ok:
        raise SolverStalled(
            f"accepted point violates the distance bound ({bound:.3e} >= {delta:g})"
        )
    residuals = _solver_residuals(ws, best_point, beta, delta)
    return IdentificationResult(
        pot=pot,
        beta=beta,
        constraint_residuals=residuals,
        delta_used=float(delta),
        x_max=float(x_max),
        khat=khat,
    )


def is_feasible(game, nash, gains, delta, x_max, tol=TOL_SDP, max_cycles=4000, box_floor="unit"):
    """Cheap feasibility probe at the beta cap (no condition minimization)."""
    khat = _khat_of(gains)
    ws = _IdentifyWorkspace(game, nash, khat, x_max, tol=tol)
    radius = _radius(delta, x_max)
    if box_floor == "free":
        return ws.oracle_free(BETA_CAP, radius) is not None
    if ws.c_f < 1.0 - tol:
        return False
    return ws.oracle(BETA_CAP, radius, max_cycles=max_cycles) is not None


def default_delta_grid():
    """Geometric sweep 0.01 * 2^k used when no grid is supplied."""
    return [0.01 * 2.0**k for k in range(9)]


def find_smallest_feasible_delta(
    game, nash, gains, x_max, grid=None, refine=True, tol=TOL_SDP, box_floor="unit"
):
    """Smallest distance in ``grid`` admitting a surrogate, then identify there.

    Sweeps the grid in ascending order; optionally refines once by
    bisection between the last infeasible and first feasible values.
    """
    grid = sorted(default_delta_grid() if grid is None else grid)
    last_bad = None
    for delta in grid:
        if is_feasible(game, nash, gains, delta, x_max, tol=tol, box_floor=box_floor):
            if refine and last_bad is not None:
                mid = 0.5 * (last_bad + delta)
                if is_feasible(game, nash, gains, mid, x_max, tol=tol, box_floor=box_floor):
                    delta = mid
            return identify_npdg(
                game, nash, gains, delta, x_max, tol=tol, box_floor=box_floor
            )
        last_bad = delta
    raise Infeasible(
        f"no feasible delta in grid up to {grid[-1]:g}", delta=grid[-1]
    )


def check_identification(result, game, nash):
    """Recompute every identification constraint independently of the solver.

    Returns named residuals; all should stay below the acceptance
    tolerance for a solver-produced result.
    """
    dyn = game.dynamics
    pot = result.pot
    A, B = dyn.A, dyn.B_stacked
    khat = result.khat
    blockdiag = scipy.linalg.block_diag(pot.Qp, pot.Rp)
    eigs = np.linalg.eigvalsh(blockdiag)
    bound, _ = npdg_distance_bound(nash, pot, result.x_max, result.delta_used)
    rp_inv = np.linalg.norm(np.linalg.inv(pot.Rp), 2)
    guard = 0.0
    for idx, player in enumerate(dyn.players):
        nrm = np.linalg.norm(game.costs[idx].R_own, 2)
        guard = max(guard, 1.0 - rp_inv * nrm)
    return {
        "riccati_26b": float(
            np.linalg.norm(A.T @ pot.Pp + pot.Pp @ A + pot.Qp - pot.Pp @ B @ khat)
        ),
        "gain_26c": float(np.linalg.norm(B.T @ pot.Pp - pot.Rp @ khat)),
        "box_lower_26d": float(max(0.0, 1.0 - eigs[0])),
        "box_upper_26d": float(max(0.0, eigs[-1] - result.beta)),
        "distance_26e": float(max(0.0, bound - result.delta_used)),
        "scaling_26f": float(max(0.0, guard)),
    }


class NpdgIdentifier(BaseEstimator):
    """Estimator-style front end for the surrogate identification.

    Parameters mirror identify_npdg; fit() accepts the game, its Nash
    solution, and either a GainEstimate or a trajectory to regress on.
    """

    def __init__(self, delta=0.05, tol=TOL_SDP, beta_rtol=RTOL_BETA, max_cycles=4000):
        self.delta = delta
        self.tol = tol
        self.beta_rtol = beta_rtol
        self.max_cycles = max_cycles

    def fit(self, game, nash, gains=None, traj=None, x_max=None):
        if gains is None:
            if traj is None:
                raise ShapeMismatch("either gains or a trajectory is required")
            gains = estimate_feedback_gains(traj, players=game.dynamics.players)
        if x_max is None:
            if traj is None:
                raise ShapeMismatch("x_max is required when no trajectory is given")
            x_max = float(np.linalg.norm(traj.states, axis=1).max())
        self.result_ = identify_npdg(
            game,
            nash,
            gains,
            self.delta,
            x_max,
            tol=self.tol,
            beta_rtol=self.beta_rtol,
            max_cycles=self.max_cycles,
        )
        self.potential_ = self.result_.pot
        self.beta_ = self.result_.beta
        return self
