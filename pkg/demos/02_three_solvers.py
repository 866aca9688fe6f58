"""The three preconditioned solvers on one high-contrast instance.

Runs preconditioned Uzawa (CG on the Schur complement), preconditioned
Lanczos on the indefinite saddle system, and CG on the squared operator,
all with the same block preconditioner, and prints iteration counts,
operator application totals, and the tail of each convergence history.
"""

import numpy as np

from saddleprec import (
    build_mesh, place_periodic, assign_epsilon, build_problem,
    build_block_preconditioner, assemble_load,
    pu_solve, pl_solve, pcg_k_solve, random_guess,
)

M, k, eps, delta = 32, 2, 1e-6, 1e-6
mesh = build_mesh(M)
layout = assign_epsilon(place_periodic(mesh, k), "uniform", epsilon=eps)
ordering, A, blocks, op = build_problem(mesh, layout)
precond = build_block_preconditioner(A, blocks)   # exact H_A

print(f"M={M}, k={k}, eps={eps:g}, m={blocks.m} inclusions, "
      f"dim={op.size}, delta={delta:g}\n")

# homogeneous benchmark: random start, exact solution zero, so the stopping
# norm is the actual error norm
reports = [
    pu_solve(op, precond, p0=random_guess(op.n, 0), delta=delta),
    pl_solve(op, precond, z0=random_guess(op.size, 0), delta=delta),
    pcg_k_solve(op, precond, z0=random_guess(op.size, 0), delta=delta),
]
print(f"{'method':8s} {'iters':>5s} {'A applies':>9s} {'H_A applies':>11s} "
      f"{'final ratio':>12s}  stop rule")
for rep in reports:
    print(f"{rep.method:8s} {rep.iterations:5d} {rep.a_applies:9d} "
          f"{rep.ha_applies:11d} {rep.final_ratio:12.2e}  {rep.stop_rule}")

print("\nlast five norm ratios per method:")
for rep in reports:
    tail = rep.norms[-5:] / rep.norms[0]
    print(f"  {rep.method:7s} " + " ".join(f"{t:.2e}" for t in tail))

# inhomogeneous solve: f = 1, then cross-check the two Krylov solutions
F = np.zeros(op.size)
F[:op.N] = assemble_load(mesh, 1.0, ordering)
z_pl = pl_solve(op, precond, F=F, delta=1e-10)
z_k = pcg_k_solve(op, precond, F=F, delta=1e-10)
gap = np.abs(z_pl.u - z_k.u).max() / np.abs(z_pl.u).max()
print(f"\nf = 1: PL {z_pl.iterations} iters, PCG-K {z_k.iterations} iters, "
      f"u agreement {gap:.2e}")
