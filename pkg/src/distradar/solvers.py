"""CADMM and SADMM reconstruction engines plus the shared numerics.

Both engines optimize

    sum_q (mu/2)*||y_q - A_q x_q||^2 + lambda*||x_G||_1

over nonnegative magnitude images, differing only in the coupling
constraint: consensus ties every local image to the global one
(x_q = x_G for all q), sharing ties their sum (sum_q x_q = x_G).
Local updates are closed forms solved with conjugate gradient; global
updates are LASSO-like problems solved with an accelerated proximal
gradient (which coincides with an analytic soft-threshold here and is
cross-checked against it in the tests).

All sums over clusters use a fixed ascending-q order so results are bit
reproducible regardless of scheduling.
"""

import math
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

import numpy as np

CADMM = "cadmm"
SADMM = "sadmm"


class NumericalError(RuntimeError):
    """Raised when an inner solve receives non-finite inputs."""


@dataclass
class SolverConfig:
    mu: float = 1.0
    lam: float = 1.0  # l1 weight on the global image
    beta: float = 1.0  # augmented Lagrangian parameter
    eps_abs: float = 1e-2
    eps_rel: float = 1e-2
    max_outer_iters: int = 100
    cg_max_iters: int = 50
    cg_tol: float = 1e-6
    prox_max_iters: int = 200
    prox_tol: float = 1e-8
    method: str = CADMM

    def __post_init__(self):
        for name in ("mu", "lam", "beta", "eps_abs", "eps_rel", "cg_tol", "prox_tol"):
            if getattr(self, name) <= 0:
                raise ValueError(f"{name} must be positive")
        if self.max_outer_iters < 1:
            raise ValueError("max_outer_iters must be >= 1")
        if self.cg_max_iters < 1 or self.prox_max_iters < 1:
            raise ValueError("inner iteration budgets must be >= 1")
        if self.method not in (CADMM, SADMM):
            raise ValueError(f"unknown method {self.method!r}")


@dataclass
class IterationRecord:
    iteration: int
    primal_norm: float
    dual_norm: float
    eps_pri: float
    eps_dual: float
    wall_ms: float


@dataclass
class SolverState:
    local_images: np.ndarray  # (Q, N), nonnegative
    global_image: np.ndarray  # (N,), nonnegative
    dual: np.ndarray  # (Q*N,) for CADMM, (N,) for SADMM
    iter: int = 0
    residual_log: list = field(default_factory=list)


@dataclass
class ReconstructionResult:
    state: SolverState
    termination: str  # "converged" | "max_iters"
    objective_history: list


def cg_solve(op, mu, beta, rhs, cg_max_iters, cg_tol):
    """Conjugate gradient solve of (mu*A^H A + beta*I) v = rhs from v = 0.

    Stops when the residual norm drops below cg_tol*||rhs||, or when the
    iteration budget runs out. The system matrix is Hermitian positive
    definite for mu, beta > 0.
    """
    rhs = np.asarray(rhs, dtype=complex)
    if not np.all(np.isfinite(rhs.view(float))):
        raise NumericalError("cg_solve: non-finite right-hand side")
    v = np.zeros_like(rhs)
    r = rhs.copy()
    rhs_norm = np.linalg.norm(rhs)
    if rhs_norm == 0:
        return v
    p = r.copy()
    rs = np.vdot(r, r).real
    tol = cg_tol * rhs_norm
    for _ in range(cg_max_iters):
        if np.sqrt(rs) <= tol:
            break
        ap = mu * op.normal_apply(p) + beta * p
        alpha = rs / np.vdot(p, ap).real
        v += alpha * p
        r -= alpha * ap
        rs_new = np.vdot(r, r).real
        p = r + (rs_new / rs) * p
        rs = rs_new
    return v


def accelerated_prox_gradient(grad, lipschitz, lam, n, max_iters, tol):
    """FISTA for min_z f(z) + lam*||z||_1 over z >= 0, started at zero.

    grad evaluates the gradient of the smooth part f; lipschitz bounds its
    Lipschitz constant. The prox of lam*||.||_1 restricted to the
    nonnegative orthant is the one-sided soft-threshold.
    """
    step = 1.0 / lipschitz
    z = np.zeros(n)
    y = z.copy()
    t = 1.0
    for _ in range(max_iters):
        z_new = np.maximum(y - step * grad(y) - lam * step, 0.0)
        t_new = (1 + math.sqrt(1 + 4 * t * t)) / 2
        y = z_new + ((t - 1) / t_new) * (z_new - z)
        delta = np.linalg.norm(z_new - z)
        z, t = z_new, t_new
        if delta <= tol * max(1.0, np.linalg.norm(z)):
            break
    return z


def local_update_cadmm(op, y, x_global, sigma_q, cfg):
    """Closed-form local image update of the consensus engine.

    Solves (mu*A^H A + beta*I) v = mu*A^H y + beta*x_G - sigma_q with CG,
    then projects onto the real nonnegative orthant.
    """
    rhs = cfg.mu * op.adjoint(y) + cfg.beta * x_global - sigma_q
    v = cg_solve(op, cfg.mu, cfg.beta, rhs, cfg.cg_max_iters, cfg.cg_tol)
    return np.maximum(v.real, 0.0)


def local_update_sadmm(op, y, x_global, x_bar_prev, x_q_prev, sigma, cfg):
    """Closed-form local image update of the sharing engine.

    The right-hand side replaces beta*x_G with
    beta*(x_G - (x_bar_prev - x_q_prev)), the sum of the other clusters'
    previous images entering through x_bar_prev.
    """
    rhs = (cfg.mu * op.adjoint(y)
           + cfg.beta * (x_global - (x_bar_prev - x_q_prev)) - sigma)
    v = cg_solve(op, cfg.mu, cfg.beta, rhs, cfg.cg_max_iters, cfg.cg_tol)
    return np.maximum(v.real, 0.0)


def _sum_ascending(vectors):
    # fixed reduction order for bit reproducibility
    acc = np.zeros_like(vectors[0])
    for v in vectors:
        acc = acc + v
    return acc


def global_update_cadmm(local_images, sigma, cfg):
    """Global image update of the consensus engine via FISTA.

    Minimizes lam*||z||_1 - (sum_q sigma_q)^T z + (beta/2)*sum_q||x_q - z||^2
    over z >= 0. The dual-term sign follows the augmented Lagrangian; the
    minimizer equals the soft-threshold
    max((beta*sum_q x_q + sum_q sigma_q)/(Q*beta) - lam/(Q*beta), 0).
    """
    local_images = np.asarray(local_images)
    q_count, n = local_images.shape
    x_sum = _sum_ascending(list(local_images))
    sigma_sum = _sum_ascending(list(sigma.reshape(q_count, n)))
    lin = cfg.beta * x_sum + sigma_sum

    def grad(z):
        return q_count * cfg.beta * z - lin

    return accelerated_prox_gradient(grad, q_count * cfg.beta, cfg.lam, n,
                                     cfg.prox_max_iters, cfg.prox_tol)


def global_update_sadmm(x_bar, sigma, cfg):
    """Global image update of the sharing engine via FISTA.

    Minimizes lam*||z||_1 + (beta/2)*||z - x_bar||^2 - sigma^T z over
    z >= 0; equals max(x_bar + sigma/beta - lam/beta, 0).
    """
    n = x_bar.size

    def grad(z):
        return cfg.beta * (z - x_bar) - sigma

    return accelerated_prox_gradient(grad, cfg.beta, cfg.lam, n,
                                     cfg.prox_max_iters, cfg.prox_tol)


def dual_update(method, local_images, x_global_new, sigma, cfg):
    """Dual ascent step; returns the updated dual variable.

    CADMM: sigma_q += beta*(x_q - x_G) per cluster slice.
    SADMM: sigma += beta*(sum_q x_q - x_G).
    """
    local_images = np.asarray(local_images)
    if method == CADMM:
        q_count, n = local_images.shape
        return sigma + cfg.beta * (local_images.reshape(q_count * n)
                                   - np.tile(x_global_new, q_count))
    x_bar = _sum_ascending(list(local_images))
    return sigma + cfg.beta * (x_bar - x_global_new)


def residuals_and_tolerances(method, x_global_prev, state, cfg):
    """Primal/dual residual norms and their feasibility tolerances.

    The dual residual is beta*(x_G_new - x_G_prev) for both methods. The
    primal residual is the stacked consensus gap for CADMM and the sharing
    gap sum_q x_q - x_G for SADMM; tolerances combine eps_abs and eps_rel
    with the method's own norms.
    """
    local = np.asarray(state.local_images)
    q_count, n = local.shape
    x_global = state.global_image
    dual_norm = np.linalg.norm(cfg.beta * (x_global - x_global_prev))
    if method == CADMM:
        primal = local.reshape(q_count * n) - np.tile(x_global, q_count)
        primal_norm = np.linalg.norm(primal)
        eps_pri = (math.sqrt(q_count * n) * cfg.eps_abs
                   + cfg.eps_rel * max(np.linalg.norm(local),
                                       math.sqrt(q_count) * np.linalg.norm(x_global)))
        eps_dual = (math.sqrt(q_count * n) * cfg.eps_abs
                    + cfg.eps_rel * np.linalg.norm(state.dual))
    else:
        x_bar = _sum_ascending(list(local))
        primal_norm = np.linalg.norm(x_bar - x_global)
        eps_pri = (math.sqrt(n) * cfg.eps_abs
                   + cfg.eps_rel * max(np.linalg.norm(x_bar),
                                       np.linalg.norm(x_global)))
        eps_dual = (math.sqrt(n) * cfg.eps_abs
                    + cfg.eps_rel * np.linalg.norm(state.dual))
    return float(primal_norm), float(dual_norm), float(eps_pri), float(eps_dual)


def _objective(operators, measurements, local_images, x_global, cfg):
    acc = 0.0
    for op, y, x_q in zip(operators, measurements, local_images):
        r = y - op.apply(x_q.astype(complex))
        acc += (cfg.mu / 2) * float(np.vdot(r, r).real)
    return acc + cfg.lam * float(np.sum(np.abs(x_global)))


def run(method, operators, measurements, cfg, threads=1, on_iteration=None):
    """Full ADMM loop for either method.

    Starts from all-zero primal and dual variables. Each outer iteration
    performs local updates (reading only iteration-k shared state), the
    global update, the dual update, and the stopping check. Local updates
    may run on a thread pool; results are collected in cluster order, so
    the iterates do not depend on the schedule. on_iteration, when given,
    receives the SolverState after every outer iteration.
    """
    if len(operators) != len(measurements):
        raise ValueError("need exactly one measurement vector per operator")
    if len(operators) == 0:
        raise ValueError("need at least one cluster")
    q_count = len(operators)
    n = operators[0].grid.n_pixels
    local = np.zeros((q_count, n))
    x_global = np.zeros(n)
    dual = np.zeros(q_count * n if method == CADMM else n)
    state = SolverState(local, x_global, dual)
    objective_history = []
    termination = "max_iters"
    pool = ThreadPoolExecutor(max_workers=threads) if threads > 1 else None
    try:
        for k in range(cfg.max_outer_iters):
            t0 = time.perf_counter()
            if method == CADMM:
                def one(q):
                    return local_update_cadmm(
                        operators[q], measurements[q], x_global,
                        dual[q * n:(q + 1) * n], cfg)
            else:
                x_bar_prev = _sum_ascending(list(local))

                def one(q):
                    return local_update_sadmm(
                        operators[q], measurements[q], x_global,
                        x_bar_prev, local[q], dual, cfg)
            if pool is not None:
                new_local = list(pool.map(one, range(q_count)))
            else:
                new_local = [one(q) for q in range(q_count)]
            local = np.stack(new_local)
            if method == CADMM:
                x_global_new = global_update_cadmm(local, dual, cfg)
            else:
                x_global_new = global_update_sadmm(_sum_ascending(list(local)),
                                                   dual, cfg)
            dual = dual_update(method, local, x_global_new, dual, cfg)
            x_global_prev, x_global = x_global, x_global_new
            state = SolverState(local, x_global, dual, iter=k + 1,
                                residual_log=state.residual_log)
            primal, dual_res, eps_pri, eps_dual = residuals_and_tolerances(
                method, x_global_prev, state, cfg)
            wall_ms = (time.perf_counter() - t0) * 1e3
            state.residual_log.append(IterationRecord(
                k + 1, primal, dual_res, eps_pri, eps_dual, wall_ms))
            objective_history.append(
                _objective(operators, measurements, local, x_global, cfg))
            if on_iteration is not None:
                on_iteration(state)
            if primal <= eps_pri and dual_res <= eps_dual:
                termination = "converged"
                break
    finally:
        if pool is not None:
            pool.shutdown()
    return ReconstructionResult(state, termination, objective_history)


def _power_iteration_sq_norm(op, iters=30):
    # largest eigenvalue of x -> Re(A^H A x) on real vectors; deterministic
    # all-ones start
    x = np.ones(op.grid.n_pixels)
    lam = 0.0
    for _ in range(iters):
        y = op.normal_apply(x.astype(complex)).real
        lam = np.linalg.norm(y)
        if lam == 0:
            return 1.0
        x = y / lam
    return float(lam)


def composite_baseline(operators, measurements, lambda_c, max_iters=500, tol=1e-8):
    """Per-cluster sparse reconstruction fused by pixel-wise maximum.

    Each cluster solves min ||y_q - A_q x||^2 + lambda_c*||x||_1 over
    nonnegative real x with FISTA; the fused image is the element-wise
    maximum across clusters.
    """
    if len(operators) == 0:
        raise ValueError("need at least one cluster")
    if len(operators) != len(measurements):
        raise ValueError("need exactly one measurement vector per operator")
    images = []
    for op, y in zip(operators, measurements):
        lipschitz = 2.0 * _power_iteration_sq_norm(op) * 1.05
        ahy = op.adjoint(y)

        def grad(x):
            return 2.0 * (op.normal_apply(x.astype(complex)) - ahy).real

        images.append(accelerated_prox_gradient(
            grad, lipschitz, lambda_c, op.grid.n_pixels, max_iters, tol))
    fused = images[0]
    for img in images[1:]:
        fused = np.maximum(fused, img)
    return fused
