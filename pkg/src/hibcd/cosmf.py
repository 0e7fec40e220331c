"""Coupled structured matrix factorization for hyperspectral super-resolution.

Fits ``X = A S`` to a multispectral image ``Y_M ~ F X`` and a hyperspectral
image ``Y_H ~ X G`` by minimizing

    f(A, S) = 1/2 ||Y_M - F A S||_F^2 + 1/2 ||Y_H - A S G||_F^2

with ``A`` in ``[0, 1]^{M x N}`` and ``S`` either column-stochastic
("plain") or with every abundance map of nuclear norm at most ``tau_i``
("nnc"). ``G`` is only ever applied through its neighborhoods.
"""

from dataclasses import dataclass, field

import numpy as np

from hibcd import engine, proxlo
from hibcd.engine import FPG, FW, BlockProblem, BlockSpec, ExtrapolationSchedule, StopRule
from hibcd.linalg import (
    SAFETY_FACTOR,
    apply_G,
    apply_Gt,
    lambda_max_GtG,
    lambda_max_sym,
    power_iteration_lambda_max,
    simplex_null_basis,
)

PLAIN = "plain"
NNC = "nnc"


def _sqnorm(X):
    return float(np.vdot(X, X))


class CosmfProblem:
    """Data and constraint variant of one CoSMF instance.

    ``theta_G = lambda_max(G^T G)`` and ``theta_F = lambda_max(F F^T)`` are
    computed once here, by the power method (times ``SAFETY_FACTOR``) or,
    with ``dense_eig=True``, by a dense symmetric eigensolver.
    """

    def __init__(self, Y_M, Y_H, F, G, N, variant=PLAIN, tau=None, dense_eig=False):
        self.Y_M = np.ascontiguousarray(Y_M, dtype=float)
        self.Y_H = np.ascontiguousarray(Y_H, dtype=float)
        self.F = np.ascontiguousarray(F, dtype=float)
        self.G = G
        self.N = int(N)
        self.variant = variant.lower()
        M_M, M = self.F.shape
        if self.variant not in (PLAIN, NNC):
            raise ValueError(f"unknown variant {variant!r}")
        if self.Y_M.shape != (M_M, G.L):
            raise ValueError(f"Y_M has shape {self.Y_M.shape}, expected {(M_M, G.L)}")
        if self.Y_H.shape != (M, G.L_H):
            raise ValueError(f"Y_H has shape {self.Y_H.shape}, expected {(M, G.L_H)}")
        if not 1 <= self.N < min(M, G.L):
            raise ValueError(f"model order N={N} must satisfy 1 <= N < min(M, L)")
        if self.variant == NNC:
            if tau is None:
                raise ValueError("the nnc variant needs radii tau")
            self.tau = np.broadcast_to(np.asarray(tau, dtype=float), (self.N,)).copy()
            if np.any(self.tau <= 0):
                raise ValueError("radii tau must be positive")
            self.Psi = np.eye(self.N)
        else:
            if self.N < 2:
                raise ValueError("the plain variant needs N >= 2")
            self.tau = None
            self.Psi = simplex_null_basis(self.N)
        self.dense_eig = dense_eig
        if dense_eig:
            self.theta_G = lambda_max_GtG(G, dense=True)
            self.theta_F = lambda_max_sym(self.F @ self.F.T)
        else:
            self.theta_G = SAFETY_FACTOR * lambda_max_GtG(G)
            FFt = self.F @ self.F.T
            self.theta_F = SAFETY_FACTOR * power_iteration_lambda_max(FFt, M_M, tol=1e-12,
                                                                      v0=np.ones(M_M))

    @property
    def M(self):
        return self.F.shape[1]

    @property
    def M_M(self):
        return self.F.shape[0]

    @property
    def L(self):
        return self.G.L

    @property
    def L_H(self):
        return self.G.L_H

    @property
    def image_shape(self):
        """``(L_x, L_y)``."""
        return self.G.L_x, self.G.L_y

    def _check(self, A, S):
        if np.shape(A) != (self.M, self.N) or np.shape(S) != (self.N, self.L):
            raise ValueError(f"A, S have shapes {np.shape(A)}, {np.shape(S)}; "
                             f"expected {(self.M, self.N)}, {(self.N, self.L)}")

    # -- smooth part ---------------------------------------------------------

    def residuals(self, A, S, SG=None):
        """``(F A, F A S - Y_M, S G, A S G - Y_H)``."""
        if SG is None:
            SG = apply_G(S, self.G)
        FA = self.F @ A
        R_M = FA @ S - self.Y_M
        R_H = A @ SG - self.Y_H
        return FA, R_M, SG, R_H

    def objective(self, A, S, SG=None):
        self._check(A, S)
        _, R_M, _, R_H = self.residuals(A, S, SG)
        return 0.5 * (_sqnorm(R_M) + _sqnorm(R_H))

    def value_and_grad_S(self, A, S, SG=None):
        FA, R_M, _, R_H = self.residuals(A, S, SG)
        g = FA.T @ R_M + apply_Gt(A.T @ R_H, self.G)
        return 0.5 * (_sqnorm(R_M) + _sqnorm(R_H)), g

    def value_and_grad_A(self, A, S, SG=None):
        FA, R_M, SG, R_H = self.residuals(A, S, SG)
        g = self.F.T @ (R_M @ S.T) + R_H @ SG.T
        return 0.5 * (_sqnorm(R_M) + _sqnorm(R_H)), g

    def grad_S(self, A, S):
        self._check(A, S)
        return self.value_and_grad_S(A, S)[1]

    def grad_A(self, A, S):
        self._check(A, S)
        return self.value_and_grad_A(A, S)[1]

    # -- step sizes ----------------------------------------------------------

    def stepsize_S_raw(self, A):
        """``lambda_max(B^T (theta_G I + F^T F) B)`` with ``B = A Psi``."""
        B = A @ self.Psi
        FB = self.F @ B
        return lambda_max_sym(self.theta_G * (B.T @ B) + FB.T @ FB)

    def stepsize_S(self, A, delta):
        return max(delta, self.stepsize_S_raw(A))

    def stepsize_A_raw(self, S, SG=None):
        """``lambda_max(theta_F S S^T + (S G)(S G)^T)``."""
        if SG is None:
            SG = apply_G(S, self.G)
        return lambda_max_sym(self.theta_F * (S @ S.T) + SG @ SG.T)

    def stepsize_A(self, S, delta, SG=None):
        return max(delta, self.stepsize_A_raw(S, SG))

    def curvature_S(self, A, D):
        """``||A D G||^2 + ||F A D||^2``."""
        return _sqnorm(A @ apply_G(D, self.G)) + _sqnorm((self.F @ A) @ D)

    def curvature_A(self, S, D, SG=None):
        """``||F D S||^2 + ||D S G||^2``."""
        if SG is None:
            SG = apply_G(S, self.G)
        return _sqnorm((self.F @ D) @ S) + _sqnorm(D @ SG)

    def fw_gamma_S(self, A, S, D, delta):
        """Adaptive FW step size for ``S`` along ``D = LO(grad_S) - S``."""
        if not np.any(D):
            return 0.0
        num = -float(np.vdot(self.grad_S(A, S), D))
        den = self.curvature_S(A, D) + delta * _sqnorm(D)
        return min(1.0, max(0.0, num / den))

    def fw_gamma_A(self, S, A, D, delta):
        """FW step size for ``A``; mirrors :meth:`fw_gamma_S` with the roles swapped."""
        if not np.any(D):
            return 0.0
        num = -float(np.vdot(self.grad_A(A, S), D))
        den = self.curvature_A(S, D) + delta * _sqnorm(D)
        return min(1.0, max(0.0, num / den))

    # -- constraint sets -----------------------------------------------------

    def prox_A(self, Z):
        return proxlo.prox_box01(Z)

    def lo_A(self, grad):
        return proxlo.lo_box01(grad)

    def prox_S(self, Z):
        if self.variant == PLAIN:
            return proxlo.prox_colwise_simplex(Z)
        return proxlo.prox_rowwise_nuclear(Z, self.tau, *self.image_shape)

    def lo_S(self, grad, warm=None, tol=1e-9, max_iter=300):
        if self.variant == PLAIN:
            return proxlo.lo_colwise_simplex(grad)
        return proxlo.lo_rowwise_nuclear(grad, self.tau, *self.image_shape, warm=warm,
                                         tol=tol, max_iter=max_iter)

    def feasible_A(self, A, tol=1e-9):
        return bool(np.all(A >= -tol) and np.all(A <= 1 + tol))

    def feasible_S(self, S, tol=1e-9):
        if self.variant == PLAIN:
            return proxlo.simplex_feasible(S, tol)
        return proxlo.rowwise_nuclear_feasible(S, self.tau, *self.image_shape, tol=tol)


class CosmfBlocks(BlockProblem):
    """Engine adapter: block 0 is ``A``, block 1 is ``S``.

    ``S G`` is cached against the identity of the ``S`` array; the engine
    never mutates blocks in place.
    """

    n_blocks = 2

    def __init__(self, problem, lo_tol=1e-6):
        self.p = problem
        self.lo_tol = lo_tol
        self.warm = proxlo.WarmStartStore()
        self._gap_warm = proxlo.WarmStartStore()
        self._sg_src = None
        self._sg = None

    def _SG(self, S):
        if S is not self._sg_src:
            self._sg = apply_G(S, self.p.G)
            self._sg_src = S
        return self._sg

    def value(self, x):
        A, S = x
        return self.p.objective(A, S, self._SG(S))

    def value_and_grad(self, i, x):
        A, S = x
        if i == 0:
            return self.p.value_and_grad_A(A, S, self._SG(S))
        return self.p.value_and_grad_S(A, S, self._SG(S))

    def prox(self, i, v, beta):
        return self.p.prox_A(v) if i == 0 else self.p.prox_S(v)

    def lo(self, i, grad):
        if i == 0:
            return self.p.lo_A(grad)
        return self.p.lo_S(grad, self.warm, tol=self.lo_tol)

    def lo_exact(self, i, grad):
        if i == 0:
            return self.p.lo_A(grad)
        return self.p.lo_S(grad, self._gap_warm, tol=1e-10, max_iter=2000)

    def stepsize(self, i, x):
        A, S = x
        if i == 0:
            return self.p.stepsize_A_raw(S, self._SG(S))
        return self.p.stepsize_S_raw(A)

    def curvature(self, i, x, d):
        A, S = x
        if i == 0:
            return self.p.curvature_A(S, d, self._SG(S))
        return self.p.curvature_S(A, d)

    def is_feasible(self, i, xi):
        return self.p.feasible_A(xi) if i == 0 else self.p.feasible_S(xi)


UNIFORM = "uniform"
DATA_DRIVEN = "data"


def _farthest_angle_columns(X, n):
    """Greedy pick of ``n`` columns maximizing the smallest pairwise angle."""
    norms = np.linalg.norm(X, axis=0)
    U = X / np.where(norms > 0, norms, 1.0)
    chosen = [int(np.argmax(norms))]
    # cosine of the angle to the nearest chosen column
    near = U.T @ U[:, chosen[0]]
    for _ in range(n - 1):
        near_c = np.where(norms > 0, near, np.inf)
        near_c[chosen] = np.inf
        j = int(np.argmin(near_c))
        chosen.append(j)
        near = np.maximum(near, U.T @ U[:, j])
    return chosen


def init(problem, strategy=DATA_DRIVEN, seed=0):
    """Feasible starting factors ``(A0, S0)``.

    ``"uniform"``: ``A0`` i.i.d. uniform on ``[0, 1]``. ``"data"``: the
    columns of ``A0`` are ``N`` spectrally distant pixels of the bicubic
    upsampling of ``Y_H``, clipped to ``[0, 1]``. ``S0`` has every column
    equal to ``1/N``; for the nnc variant rows are shrunk into their balls.
    """
    from hibcd.metrics import naive_interpolation

    rng = np.random.default_rng(seed)
    N = problem.N
    if strategy == UNIFORM:
        A0 = rng.uniform(size=(problem.M, N))
    elif strategy == DATA_DRIVEN:
        G = problem.G
        Xi = np.clip(naive_interpolation(problem.Y_H, G.L_x, G.L_y, G.factor), 0.0, 1.0)
        A0 = Xi[:, _farthest_angle_columns(Xi, N)].copy()
    else:
        raise ValueError(f"unknown init strategy {strategy!r}")
    S0 = np.full((N, problem.L), 1.0 / N)
    if problem.variant == NNC:
        # each row is rank one with nuclear norm sqrt(L) / N
        nrm = np.sqrt(problem.L) / N
        S0 *= np.minimum(1.0, problem.tau / nrm)[:, None]
    return A0, S0


@dataclass
class SolveConfig:
    """Solver knobs. ``delta_*=None`` picks ``max(1e-6 * beta_0, 1e-12)``.

    ``lo_tol`` is the power-method residual tolerance of the nuclear LO used
    inside FW steps; the gap diagnostic always uses a tight one.
    """

    init: str = DATA_DRIVEN
    delta_A: float = None
    delta_S: float = None
    repeats_A: int = 1
    repeats_S: int = 1
    extrapolation: str = "fista"
    alpha_cap: float = 0.9999
    alpha_const: float = 0.0
    obj_tol: float = 1e-4
    max_iter: int = 3000
    gap_tol: float = None
    track_gap: bool = True
    lo_tol: float = 1e-6


@dataclass
class CosmfSolution:
    A: np.ndarray
    S: np.ndarray
    X_hat: np.ndarray
    trace: engine.SolverTrace
    rules: tuple = (FPG, FW)
    variant: str = PLAIN
    deltas: tuple = field(default=(None, None))

    @property
    def objective(self):
        return self.trace.records[-1].objective if self.trace.records else self.trace.initial_objective

    @property
    def iterations(self):
        return len(self.trace)


def default_deltas(problem, A0, S0):
    dA = max(1e-6 * problem.stepsize_A_raw(S0), 1e-12)
    dS = max(1e-6 * problem.stepsize_S_raw(A0), 1e-12)
    return dA, dS


def solve(problem, rule_A=FPG, rule_S=FW, config=None, seed=0, x0=None, callback=None):
    """Run the hybrid scheme on a CoSMF instance, updating ``A`` then ``S``."""
    cfg = config or SolveConfig()
    if x0 is None:
        A0, S0 = init(problem, cfg.init, seed)
    else:
        A0, S0 = (np.array(b, dtype=float) for b in x0)
    auto_A, auto_S = default_deltas(problem, A0, S0)
    dA = cfg.delta_A if cfg.delta_A is not None else auto_A
    dS = cfg.delta_S if cfg.delta_S is not None else auto_S
    blocks = [
        BlockSpec(rule_A, cfg.repeats_A, dA, 0.0, alpha_cap=cfg.alpha_cap),
        BlockSpec(rule_S, cfg.repeats_S, dS, 0.0, alpha_cap=cfg.alpha_cap),
    ]
    schedule = ExtrapolationSchedule(cfg.extrapolation, cfg.alpha_cap, cfg.alpha_const)
    stop = StopRule(cfg.obj_tol, cfg.max_iter, cfg.gap_tol)
    (A, S), trace = engine.run(CosmfBlocks(problem, cfg.lo_tol), blocks, [A0, S0], schedule, stop,
                               track_gap=cfg.track_gap, callback=callback)
    return CosmfSolution(A, S, A @ S, trace, (blocks[0].rule, blocks[1].rule),
                         problem.variant, (dA, dS))
