"""Outer Krylov iterations for the saddle system.

Three methods, all preconditioned by H = diag(H_A, H_S):

  * pu_solve   -- Uzawa: CG on the Schur complement equation S_eps p = g,
                  preconditioned by H_S; one S_eps application (hence one
                  H_A) per iteration.
  * pl_solve   -- three-term Lanczos recurrence on the indefinite saddle
                  system; one saddle apply and one H apply per iteration.
  * pcg_k_solve-- CG on the squared operator K = A_eps H A_eps; two saddle
                  applies and two H applies per iteration.

Each solver records its stopping-norm history and the operation counts that
make up the cost tables.  For the homogeneous benchmark runs (F = 0) the
stopping norms are exactly the error norms that the convergence theory bounds
(S_eps-norm for PU, K-norm for PL and PCG), so CG optimality makes the
recorded sequences non-increasing.
"""

from __future__ import annotations

import dataclasses
import time

import numpy as np

from .assembly import InclusionBlocks, SaddleOperator
from .mesh import ParameterError
from .precond import (BlockPreconditioner, OpCounter, ReferenceSchurSolver,
                      SolverBreakdownError)

# relative slack granted to rounding before a "nonnegative" quadratic form
# or a monotone norm sequence is declared broken
NORM_GUARD = 1e-12


class OperatorContractError(RuntimeError):
    """A quadratic form that must be nonnegative came out negative."""


class MaxIterationsError(RuntimeError):
    """Iteration budget exhausted before the stopping test was met."""


def random_guess(size: int, seed: int) -> np.ndarray:
    """Deterministic random initial guess, uniform on [-1, 1]."""
    gen = np.random.Generator(np.random.Philox(seed))
    return gen.uniform(-1.0, 1.0, size)


def _guarded_sqrt(value: float, scale: float, what: str) -> float:
    if value < -NORM_GUARD * max(scale, 1.0):
        raise OperatorContractError(
            f"{what} evaluated to {value:.3e}; the operator lost definiteness")
    return float(np.sqrt(max(value, 0.0)))


@dataclasses.dataclass(eq=False)
class SolverReport:
    method: str
    iterations: int
    converged: bool
    norms: np.ndarray          # stopping-norm history, norms[0] at k=0
    a_applies: int
    ha_applies: int
    wall_time: float
    u: np.ndarray | None = None
    p: np.ndarray | None = None
    stop_rule: str = ""

    @property
    def total_applies(self) -> int:
        return self.a_applies + self.ha_applies

    @property
    def final_ratio(self) -> float:
        if self.norms[0] == 0.0:
            return 0.0
        return float(self.norms[-1] / self.norms[0])

    def is_monotone(self, rel_tol: float = NORM_GUARD) -> bool:
        scale = self.norms[0]
        return bool(np.all(np.diff(self.norms) <= rel_tol * max(scale, 1.0)))


def _finish(method, norms, converged, iters, counter, t0, u=None, p=None,
            stop_rule=""):
    return SolverReport(method=method, iterations=iters, converged=converged,
                        norms=np.asarray(norms), a_applies=counter.a,
                        ha_applies=counter.ha, wall_time=time.perf_counter() - t0,
                        u=u, p=p, stop_rule=stop_rule)


def _split_rhs(op, F, g_tags):
    """Normalize right-hand side input to (fbar, gbar, g_tags)."""
    if F is None:
        return np.zeros(op.N), np.zeros(op.n), None
    F = np.asarray(F, dtype=float)
    if F.shape != (op.size,):
        raise ParameterError(f"right-hand side must have length {op.size}")
    return F[:op.N], F[op.N:], g_tags


def _rhs_tags(op, z_tags, gbar, g_tags):
    """Tags of rho = A_eps z - F: subtract the gbar tags from the z tags.

    With (B_D + Q) x = gbar, the pair (x, x) tags gbar exactly, so untagged
    constraint data costs one reference solve at setup.
    """
    bd0, q0 = z_tags
    if not np.any(gbar):
        return bd0, q0
    if g_tags is None:
        x = ReferenceSchurSolver(op.blocks).solve(gbar)
        g_tags = (x, x)
    return bd0 - g_tags[0], q0 - g_tags[1]


def pu_solve(op: SaddleOperator, precond: BlockPreconditioner, F=None,
             g_tags=None, p0=None, delta: float = 1e-6, max_iter: int = 1000,
             counter: OpCounter | None = None) -> SolverReport:
    """Preconditioned Uzawa: CG on S_eps p = B H_A fbar - gbar.

    S_eps = Sig B_D + Q + B A^{-1} B^T is applied through one H_A call per
    iteration; H_S applications ride on the residual tags.  The homogeneous
    benchmark (F = 0) stops on the S_eps-norm of the iterate, which equals
    the error norm; otherwise the H_S-weighted residual norm is used.
    """
    t0 = time.perf_counter()
    counter = counter if counter is not None else OpCounter()
    blocks = op.blocks
    N, n = op.N, op.n
    fbar, gbar, g_tags = _split_rhs(op, F, g_tags)
    homogeneous = not (np.any(fbar) or np.any(gbar))
    p = np.zeros(n) if p0 is None else np.asarray(p0, dtype=float).copy()

    # r0 = S_eps p0 - (B H_A fbar - gbar), assembled from one H_A call with
    # tags r = B_D u_pre + Q q_pre carried along the whole iteration
    top = np.zeros(N)
    top[:n] = blocks.B_D @ p
    top -= fbar
    w = precond.a_inv.apply(top, counter)
    u_pre = blocks.eps_node * p + w[:n]
    q_pre = p.copy()
    if np.any(gbar):
        if g_tags is not None:
            u_pre = u_pre + g_tags[0]
            q_pre = q_pre + g_tags[1]
        else:
            # untagged constraint data: one reference solve at setup only;
            # (B_D + Q) x = gbar makes (x, x) an exact tag pair for gbar
            x = ReferenceSchurSolver(blocks).solve(gbar)
            u_pre = u_pre + x
            q_pre = q_pre + x
    r = blocks.B_D @ u_pre + blocks.apply_q(q_pre)

    if homogeneous:
        stop_rule = "iterate-S-norm"
        norm0 = _guarded_sqrt(r @ p, 1.0, "initial S-norm")
    else:
        stop_rule = "preconditioned-residual"
        hs_r = precond.schur.apply_tagged(u_pre, q_pre)
        norm0 = _guarded_sqrt(r @ hs_r, 1.0, "initial residual norm")
    norms = [norm0]
    scale = norm0 * norm0

    def current_norm():
        if homogeneous:
            return _guarded_sqrt(r @ p, scale, "S-norm of iterate")
        hs = precond.schur.apply_tagged(u_pre, q_pre)
        return _guarded_sqrt(r @ hs, scale, "residual norm")

    def recover_u():
        rhs = fbar.copy()
        rhs[:n] -= blocks.B_D @ p
        return precond.a_inv.apply(rhs, counter)

    if norm0 == 0.0:
        return _finish("pu", norms, True, 0, counter, t0, recover_u(), p,
                       stop_rule)

    xi = np.zeros(n)
    s = np.zeros(n)
    s_denom = 1.0
    for k in range(1, max_iter + 1):
        hs_r = precond.schur.apply_tagged(u_pre, q_pre)
        if k == 1:
            xi = hs_r
        else:
            alpha = (hs_r @ s) / s_denom
            xi = hs_r - alpha * xi
        # S_eps xi via one H_A call; tags (s_u_pre, xi)
        top = np.zeros(N)
        top[:n] = blocks.B_D @ xi
        w = precond.a_inv.apply(top, counter)
        s_u_pre = blocks.eps_node * xi + w[:n]
        s = blocks.B_D @ s_u_pre + blocks.apply_q(xi)
        s_denom = s @ xi
        if s_denom <= 0.0:
            raise SolverBreakdownError(
                f"Uzawa direction lost S-positivity at iteration {k}")
        beta = (r @ xi) / s_denom
        p -= beta * xi
        r -= beta * s
        u_pre -= beta * s_u_pre
        q_pre -= beta * xi
        norms.append(current_norm())
        if norms[-1] <= delta * norm0:
            return _finish("pu", norms, True, k, counter, t0, recover_u(), p,
                           stop_rule)
    raise MaxIterationsError(
        f"PU did not reach {delta:g} within {max_iter} iterations "
        f"(ratio {norms[-1] / norm0:.3e})")


def pl_solve(op: SaddleOperator, precond: BlockPreconditioner, F=None,
             g_tags=None, z0=None, delta: float = 1e-6, max_iter: int = 2000,
             counter: OpCounter | None = None) -> SolverReport:
    """Preconditioned Lanczos on the indefinite saddle system.

    Three-term recurrence with exact coefficient formulas; the products
    t_k = A_eps xi_k are advanced by the same recurrence so each iteration
    costs one saddle apply (for w = A_eps u_{k-1}) and one H apply.
    Stopping norm: H-weighted residual, which equals the K-norm of the error.
    """
    t0 = time.perf_counter()
    counter = counter if counter is not None else OpCounter()
    z = (np.zeros(op.size) if z0 is None
         else np.asarray(z0, dtype=float).copy())
    fbar, gbar, g_tags = _split_rhs(op, F, g_tags)

    rho = op.apply(z, counter)
    rho[:op.N] -= fbar
    rho[op.N:] -= gbar
    bd0, q0 = _rhs_tags(op, precond.source_tags(z), gbar, g_tags)
    v = precond.apply_to_image(rho, bd0, q0, counter)

    norm0 = _guarded_sqrt(rho @ v, 1.0, "initial K-norm")
    norms = [norm0]
    scale = norm0 * norm0
    if norm0 == 0.0:
        return _finish("pl", norms, True, 0, counter, t0,
                       z[:op.N], z[op.N:], "K-norm")

    xi = v.copy()
    t = op.apply(xi, counter)
    bd, q = precond.source_tags(xi)
    u = precond.apply_to_image(t, bd, q, counter)

    xi_prev = np.zeros_like(xi)
    t_prev = np.zeros_like(t)
    u_prev = np.zeros_like(u)
    tu_prev = 1.0

    for k in range(1, max_iter + 1):
        tu = t @ u
        if tu <= 0.0:
            raise SolverBreakdownError(
                f"Lanczos direction lost K-positivity at iteration {k}")
        beta = (rho @ u) / tu
        z -= beta * xi
        rho -= beta * t
        v -= beta * u
        norms.append(_guarded_sqrt(rho @ v, scale, "K-norm of residual"))
        if norms[-1] <= delta * norm0:
            return _finish("pl", norms, True, k, counter, t0,
                           z[:op.N], z[op.N:], "K-norm")

        w = op.apply(u, counter)
        alpha = (w @ u) / tu
        xi_next = u - alpha * xi
        t_next = w - alpha * t
        if k >= 2:
            gamma = (w @ u_prev) / tu_prev
            xi_next -= gamma * xi_prev
            t_next -= gamma * t_prev
        xi_prev, xi = xi, xi_next
        t_prev, t = t, t_next
        u_prev = u
        tu_prev = tu
        bd, q = precond.source_tags(xi)
        u = precond.apply_to_image(t, bd, q, counter)
    raise MaxIterationsError(
        f"PL did not reach {delta:g} within {max_iter} iterations "
        f"(ratio {norms[-1] / norm0:.3e})")


def pcg_k_solve(op: SaddleOperator, precond: BlockPreconditioner, F=None,
                g_tags=None, z0=None, delta: float = 1e-6,
                max_iter: int = 2000,
                counter: OpCounter | None = None) -> SolverReport:
    """CG on the squared operator K = A_eps H A_eps, right side A_eps H F.

    The saddle residual rho = A_eps z - F and its preconditioned image
    v = H rho ride along the recurrences, so the K-norm of the error,
    sqrt(rho . v), is available at no extra cost and decreases monotonically
    by CG optimality.
    """
    t0 = time.perf_counter()
    counter = counter if counter is not None else OpCounter()
    z = (np.zeros(op.size) if z0 is None
         else np.asarray(z0, dtype=float).copy())
    fbar, gbar, g_tags = _split_rhs(op, F, g_tags)

    rho = op.apply(z, counter)
    rho[:op.N] -= fbar
    rho[op.N:] -= gbar
    bd0, q0 = _rhs_tags(op, precond.source_tags(z), gbar, g_tags)
    v = precond.apply_to_image(rho, bd0, q0, counter)

    norm0 = _guarded_sqrt(rho @ v, 1.0, "initial K-norm")
    norms = [norm0]
    scale = norm0 * norm0
    if norm0 == 0.0:
        return _finish("pcg_k", norms, True, 0, counter, t0,
                       z[:op.N], z[op.N:], "K-norm")

    # residual of the squared system: rK = K z - G = A_eps v
    rK = op.apply(v, counter)
    eta = precond.apply_to_image(rK, *precond.source_tags(v), counter)

    xi = np.zeros_like(z)
    kxi = np.zeros_like(z)
    kxi_denom = 1.0
    for k in range(1, max_iter + 1):
        if k == 1:
            xi = eta
        else:
            alpha = (eta @ kxi) / kxi_denom
            xi = eta - alpha * xi
        t = op.apply(xi, counter)
        s = precond.apply_to_image(t, *precond.source_tags(xi), counter)
        kxi = op.apply(s, counter)
        kxi_denom = kxi @ xi
        if kxi_denom <= 0.0:
            raise SolverBreakdownError(
                f"PCG direction lost K-positivity at iteration {k}")
        beta = (rK @ xi) / kxi_denom
        z -= beta * xi
        rK -= beta * kxi
        rho -= beta * t
        v -= beta * s
        norms.append(_guarded_sqrt(rho @ v, scale, "K-norm of error"))
        if norms[-1] <= delta * norm0:
            return _finish("pcg_k", norms, True, k, counter, t0,
                           z[:op.N], z[op.N:], "K-norm")
        eta = precond.apply_to_image(rK, *precond.source_tags(v), counter)
    raise MaxIterationsError(
        f"PCG-K did not reach {delta:g} within {max_iter} iterations "
        f"(ratio {norms[-1] / norm0:.3e})")


def cg_solve(A, b, precond=None, x0=None, delta: float = 1e-6,
             max_iter: int = 5000,
             counter: OpCounter | None = None) -> SolverReport:
    """Plain (optionally preconditioned) CG on the SPD stiffness block.

    Homogeneous systems (b = 0) stop on the A-norm of the iterate, which is
    the error norm; otherwise on the 2-norm of the residual relative to b.
    """
    t0 = time.perf_counter()
    counter = counter if counter is not None else OpCounter()
    b = np.zeros(A.shape[0]) if b is None else np.asarray(b, dtype=float)
    x = (np.zeros(A.shape[0]) if x0 is None
         else np.asarray(x0, dtype=float).copy())
    apply_m = (lambda r: r) if precond is None else precond
    homogeneous = not np.any(b)

    r = b - A @ x
    counter.a += 1
    if homogeneous:
        stop_rule = "iterate-A-norm"
        norm0 = _guarded_sqrt(-(x @ r), 1.0, "initial A-norm")
    else:
        stop_rule = "residual-2-norm"
        norm0 = float(np.linalg.norm(r))
    norms = [norm0]
    scale = norm0 * norm0
    if norm0 == 0.0:
        return _finish("cg", norms, True, 0, counter, t0, x, None, stop_rule)

    z = apply_m(r)
    pdir = z.copy()
    rz = r @ z
    for k in range(1, max_iter + 1):
        Ap = A @ pdir
        counter.a += 1
        pAp = pdir @ Ap
        if pAp <= 0.0:
            raise SolverBreakdownError(
                f"CG direction lost A-positivity at iteration {k}")
        step = rz / pAp
        x += step * pdir
        r -= step * Ap
        if homogeneous:
            norms.append(_guarded_sqrt(-(x @ r), scale, "A-norm of iterate"))
        else:
            norms.append(float(np.linalg.norm(r)))
        if norms[-1] <= delta * norm0:
            return _finish("cg", norms, True, k, counter, t0, x, None,
                           stop_rule)
        z = apply_m(r)
        rz_new = r @ z
        pdir = z + (rz_new / rz) * pdir
        rz = rz_new
    raise MaxIterationsError(
        f"CG did not reach {delta:g} within {max_iter} iterations "
        f"(ratio {norms[-1] / norm0:.3e})")


def evaluate_norm(kind: str, vec: np.ndarray, A=None,
                  op: SaddleOperator | None = None,
                  precond: BlockPreconditioner | None = None,
                  counter: OpCounter | None = None) -> float:
    """Elliptic norms used by the stopping criteria.

    kind 'A': sqrt(v . A v) for v on the interior nodes.
    kind 'S': sqrt(p . S_eps p) for p on the inclusion nodes (uses the H_A
              of `precond`, exact in verification runs).
    kind 'K': sqrt((A_eps v) . H (A_eps v)) for a full saddle vector.
    """
    counter = counter if counter is not None else OpCounter()
    v = np.asarray(vec, dtype=float)
    if kind == "A":
        if A is None:
            raise ParameterError("kind 'A' needs the stiffness matrix")
        return _guarded_sqrt(v @ (A @ v), v @ v, "A-norm")
    if kind == "S":
        if op is None or precond is None:
            raise ParameterError("kind 'S' needs the saddle operator and "
                                 "preconditioner")
        blocks = op.blocks
        top = np.zeros(op.N)
        top[:op.n] = blocks.B_D @ v
        w = precond.a_inv.apply(top, counter)
        s = blocks.B_D @ (blocks.eps_node * v + w[:op.n]) + blocks.apply_q(v)
        return _guarded_sqrt(v @ s, v @ v, "S-norm")
    if kind == "K":
        if op is None or precond is None:
            raise ParameterError("kind 'K' needs the saddle operator and "
                                 "preconditioner")
        img = op.apply(v, counter)
        hv = precond.apply_to_image(img, *precond.source_tags(v), counter)
        return _guarded_sqrt(img @ hv, v @ v, "K-norm")
    raise ParameterError(f"unknown norm kind {kind!r}")
