"""Per-load-step nonlinear solution: Newton-Raphson with cubic backtracking
line search, inner solves by Jacobi-preconditioned conjugate gradient."""
from __future__ import annotations

import logging
from dataclasses import dataclass, field

import numpy as np
import scipy.sparse as sp

from .assembly import AssemblyContext, assemble_jacobian, assemble_residual
from .plasticity import stress_update_batch

log = logging.getLogger(__name__)

__all__ = ["NewtonConfig", "LinearSolverConfig", "NewtonIteration", "NewtonResult",
           "cg_solve", "newton_solve", "update_history_at_nodes"]


@dataclass(frozen=True)
class NewtonConfig:
    abs_tol: float = 1e-12
    rel_tol: float = 1e-12
    max_iters: int = 50
    ls_sufficient_decrease: float = 1e-4
    ls_min_step: float = 1e-8

    def __post_init__(self):
        if self.abs_tol <= 0 or self.rel_tol <= 0:
            raise ValueError("tolerances must be positive")


@dataclass(frozen=True)
class LinearSolverConfig:
    rel_tol: float = 1e-12
    max_iters_factor: int = 10            # iteration cap = factor * n


@dataclass
class NewtonIteration:
    step: int
    iteration: int
    residual_norm: float
    omega: float
    cg_iters: int
    floor_accepted: bool = False


@dataclass
class NewtonResult:
    converged: bool
    u: np.ndarray
    history: tuple                        # (alpha, eps_p) arrays at history DOFs
    iterations: list
    residual_norm: float
    initial_residual_norm: float


class CgBreakdownError(RuntimeError):
    pass


def cg_solve(matrix: sp.spmatrix, rhs: np.ndarray, config: LinearSolverConfig | None = None,
             x0: np.ndarray | None = None) -> tuple[np.ndarray, int]:
    """Jacobi-preconditioned conjugate gradient to ||Ax - b|| <= rel_tol ||b||.

    Returns (solution, iteration count). Raises on indefiniteness or
    non-convergence within 10 n iterations.
    """
    config = config or LinearSolverConfig()
    n = rhs.shape[0]
    bnorm = float(np.linalg.norm(rhs))
    if bnorm == 0.0:
        return np.zeros(n), 0
    diag = np.asarray(matrix.diagonal()).ravel()
    if np.any(diag <= 0.0):
        raise CgBreakdownError("non-positive diagonal entry; matrix is not SPD")
    inv_diag = 1.0 / diag

    x = np.zeros(n) if x0 is None else x0.copy()
    r = rhs - matrix @ x
    z = inv_diag * r
    p = z.copy()
    rz = float(r @ z)
    max_iters = config.max_iters_factor * n
    for it in range(1, max_iters + 1):
        ap = matrix @ p
        pap = float(p @ ap)
        if pap <= 0.0:
            raise CgBreakdownError(f"p^T A p = {pap:.3e} <= 0 at iteration {it}; "
                                   "matrix not positive definite")
        alpha = rz / pap
        x += alpha * p
        r -= alpha * ap
        rnorm = float(np.linalg.norm(r))
        if rnorm <= config.rel_tol * bnorm:
            return x, it
        z = inv_diag * r
        rz_new = float(r @ z)
        p = z + (rz_new / rz) * p
        rz = rz_new
    raise CgBreakdownError(
        f"CG did not converge in {max_iters} iterations; final ||r||/||b|| = "
        f"{float(np.linalg.norm(rhs - matrix @ x)) / bnorm:.3e}")


def _cubic_backtrack(f0: float, g0: float, trials: list[tuple[float, float]],
                     lo_factor: float = 0.1, hi_factor: float = 0.5) -> float:
    """Next step length from quadratic (first backtrack) or cubic
    interpolation of the merit 0.5||r||^2 (Dennis-Schnabel)."""
    w1, f1 = trials[-1]
    if len(trials) == 1:
        denom = 2.0 * (f1 - f0 - g0 * w1)
        w = -g0 * w1 * w1 / denom if denom > 0 else hi_factor * w1
    else:
        w2, f2 = trials[-2]
        r1 = f1 - f0 - g0 * w1
        r2 = f2 - f0 - g0 * w2
        det = w1 * w1 * w2 * w2 * (w1 - w2)
        a = (w2 * w2 * r1 - w1 * w1 * r2) / det
        b = (-w2 ** 3 * r1 + w1 ** 3 * r2) / det
        if a == 0.0:
            w = -g0 / (2.0 * b) if b != 0 else hi_factor * w1
        else:
            disc = b * b - 3.0 * a * g0
            w = (-b + np.sqrt(max(disc, 0.0))) / (3.0 * a)
    return float(min(max(w, lo_factor * w1), hi_factor * w1))


def newton_solve(ctx: AssemblyContext, u_initial: np.ndarray, hist_values,
                 load_factor: float, step: int = 0,
                 newton: NewtonConfig | None = None,
                 linear: LinearSolverConfig | None = None) -> NewtonResult:
    """Newton-Raphson with cubic backtracking on 0.5||r||^2.

    ``hist_values`` is the converged history of the previous load step; it is
    held fixed during the iteration and the returned history is recomputed
    once at the history-node locations from the converged displacement.
    """
    newton = newton or NewtonConfig()
    linear = linear or LinearSolverConfig()
    u = u_initial.copy()
    iterations: list[NewtonIteration] = []

    r = assemble_residual(ctx, u, hist_values, load_factor)
    r0_norm = float(np.linalg.norm(r))
    rnorm = r0_norm
    log.info("newton step=%d iter=0 rnorm=%.6e", step, rnorm)
    if rnorm <= newton.abs_tol:
        return NewtonResult(True, u, update_history_at_nodes(ctx, u, hist_values, load_factor),
                            iterations, rnorm, r0_norm)

    for it in range(1, newton.max_iters + 1):
        system = assemble_jacobian(ctx, u, hist_values, load_factor)
        delta, cg_iters = cg_solve(system.matrix, system.rhs, linear)

        f0 = 0.5 * rnorm * rnorm
        g0 = -2.0 * f0                     # directional derivative for the Newton step
        omega = 1.0
        trials: list[tuple[float, float]] = []
        floor_accepted = False
        while True:
            r_try = assemble_residual(ctx, u + omega * delta, hist_values, load_factor)
            rnorm_try = float(np.linalg.norm(r_try))
            if rnorm_try <= (1.0 - newton.ls_sufficient_decrease * omega) * rnorm:
                break
            trials.append((omega, 0.5 * rnorm_try * rnorm_try))
            omega_next = _cubic_backtrack(f0, g0, trials)
            if omega_next < newton.ls_min_step:
                omega = newton.ls_min_step
                r_try = assemble_residual(ctx, u + omega * delta, hist_values, load_factor)
                rnorm_try = float(np.linalg.norm(r_try))
                floor_accepted = True
                log.warning("newton step=%d iter=%d line search hit floor omega=%.2e",
                            step, it, omega)
                break
            omega = omega_next

        u = u + omega * delta
        r = r_try
        rnorm = rnorm_try
        iterations.append(NewtonIteration(step, it, rnorm, omega, cg_iters, floor_accepted))
        log.info("newton step=%d iter=%d rnorm=%.6e omega=%.4f cg_iters=%d",
                 step, it, rnorm, omega, cg_iters)
        if rnorm <= newton.abs_tol or rnorm <= newton.rel_tol * r0_norm:
            new_hist = update_history_at_nodes(ctx, u, hist_values, load_factor)
            return NewtonResult(True, u, new_hist, iterations, rnorm, r0_norm)

    log.error("newton step=%d failed to converge in %d iterations (rnorm=%.3e)",
              step, newton.max_iters, rnorm)
    return NewtonResult(False, u, hist_values, iterations, rnorm, r0_norm)


def update_history_at_nodes(ctx: AssemblyContext, u_free: np.ndarray, hist_values,
                            load_factor: float):
    """Recompute (alpha, eps_p) at the history DOF locations from the converged
    displacement; in the aggregated flavor cut-cell DOFs are then derived from
    their root cells via the constraints."""
    disc = ctx.disc
    hist = disc.history
    alpha_old, ep_old = hist_values
    alpha_new = alpha_old.copy()
    ep_new = ep_old.copy()
    u_full = ctx.expand(u_free, load_factor)

    space = disc.space
    from .quadtree import cell_geometry
    from .spaces import GAUSS2
    ref = np.array([(gx, gy) for gy in GAUSS2 for gx in GAUSS2])
    from .assembly import _b_matrices, _vector_dofs

    cells = [c for c in hist.cells
             if hist.flavor == "standard" or disc.classes[c] == "interior"]
    if cells:
        levels: dict[int, list] = {}
        for c in cells:
            levels.setdefault(c.level, []).append(c)
        for level, group in sorted(levels.items()):
            h = space.mesh.side / (1 << level)
            b = _b_matrices(ref, np.full(4, h))                  # (4, 4, 8)
            rows = _vector_dofs(np.stack([space.cell_nodes[c] for c in group]))
            eps = np.einsum("qck,mk->mqc", b, u_full[rows]).reshape(-1, 4)
            dofs = np.stack([hist.cell_dofs[c] for c in group]).reshape(-1)
            a_prev = np.maximum(alpha_old[dofs], 0.0)
            _, _, a_up, ep_up, _ = stress_update_batch(eps, a_prev, ep_old[dofs],
                                                       ctx.problem.material)
            alpha_new[dofs] = a_up
            ep_new[dofs] = ep_up
    hist.apply_constraints(alpha_new[:, None])
    hist.apply_constraints(ep_new)
    return alpha_new, ep_new
