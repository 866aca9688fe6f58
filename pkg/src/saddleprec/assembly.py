"""P1 finite element assembly for the inclusion problem.

Builds the Dirichlet stiffness matrix on interior nodes, the per-inclusion
Neumann stiffness and mass blocks, the rank-one averaging blocks, and the
indefinite block operator

    [ A     B^T          ]
    [ B    -(Sig B_D + Q)]

acting on (u, p), where B = [B_D 0] restricts to the inclusion nodes, Sig
scales each inclusion block by its parameter eps_s and Q is the block
rank-one averaging term.  All matrices are assembled in the system ordering
given by an OrderingMap (inclusion nodes first, grouped per inclusion).
"""

from __future__ import annotations

import dataclasses

import numpy as np
import scipy.io
import scipy.sparse as sp

from .mesh import (InclusionLayout, OrderingMap, ParameterError,
                   StructuredMesh, build_ordering)

# element stiffness for the two triangle shapes (ll, lr, ur) and (ll, ur, ul);
# constant P1 gradients make them independent of h
_K_LOWER = 0.5 * np.array([[1.0, -1.0, 0.0],
                           [-1.0, 2.0, -1.0],
                           [0.0, -1.0, 1.0]])
_K_UPPER = 0.5 * np.array([[1.0, 0.0, -1.0],
                           [0.0, 1.0, -1.0],
                           [-1.0, -1.0, 2.0]])
# consistent mass kernel, to be scaled by the triangle area
_MASS = np.array([[2.0, 1.0, 1.0],
                  [1.0, 2.0, 1.0],
                  [1.0, 1.0, 2.0]]) / 12.0


class AssemblyError(RuntimeError):
    """Assembled operator violates a structural requirement."""


def _element_batches(n_tri: int):
    """Per-triangle element matrices, alternating lower/upper shape."""
    K = np.empty((n_tri, 3, 3))
    K[0::2] = _K_LOWER
    K[1::2] = _K_UPPER
    return K


def assemble_stiffness(mesh: StructuredMesh, ordering: OrderingMap | None = None,
                       cell_weights: np.ndarray | None = None) -> sp.csr_matrix:
    """Dirichlet P1 stiffness matrix on the interior nodes.

    Parameters
    ----------
    mesh : StructuredMesh
    ordering : OrderingMap, optional
        If given, rows/columns use the system ordering; otherwise the natural
        row-major interior ordering.
    cell_weights : ndarray, optional
        Piecewise-constant coefficient per cell (both triangles of a cell get
        the same weight).  Defaults to 1.

    Returns
    -------
    csr_matrix, shape (N, N) with N = (M-1)**2.
    """
    N = mesh.n_interior
    tri = mesh.triangles
    K = _element_batches(tri.shape[0])
    if cell_weights is not None:
        w = np.asarray(cell_weights, dtype=float)[mesh.tri_cells]
        K = K * w[:, None, None]

    idx = mesh.interior_index[tri]                      # (nt, 3), -1 on boundary
    if ordering is not None:
        sysmap = np.where(idx >= 0, ordering.perm[np.clip(idx, 0, None)], -1)
    else:
        sysmap = idx

    rows = np.repeat(sysmap, 3, axis=1).ravel()
    cols = np.tile(sysmap, (1, 3)).ravel()
    vals = K.reshape(-1)
    keep = (rows >= 0) & (cols >= 0)
    A = sp.coo_matrix((vals[keep], (rows[keep], cols[keep])), shape=(N, N))
    return A.tocsr()


def assemble_sigma_matrix(mesh: StructuredMesh, layout: InclusionLayout,
                          ordering: OrderingMap | None = None) -> sp.csr_matrix:
    """Stiffness matrix of the original problem with sigma = 1 + 1/eps_s
    inside inclusion s and sigma = 1 elsewhere."""
    weights = np.ones(mesh.M * mesh.M)
    for inc, eps in zip(layout.inclusions, layout.eps):
        weights[inc.cell_ids] = 1.0 + 1.0 / eps
    return assemble_stiffness(mesh, ordering, cell_weights=weights)


def _assemble_local(k: int, h: float):
    """Neumann stiffness and consistent mass on one k x k cell inclusion,
    nodes in row-major order."""
    side = k + 1
    ns = side * side
    B = np.zeros((ns, ns))
    Mm = np.zeros((ns, ns))
    area = 0.5 * h * h
    for cy in range(k):
        for cx in range(k):
            ll = cy * side + cx
            lower = (ll, ll + 1, ll + side + 1)
            upper = (ll, ll + side + 1, ll + side)
            for nodes, Ke in ((lower, _K_LOWER), (upper, _K_UPPER)):
                for a in range(3):
                    for b in range(3):
                        B[nodes[a], nodes[b]] += Ke[a, b]
                        Mm[nodes[a], nodes[b]] += area * _MASS[a, b]
    return B, Mm


@dataclasses.dataclass(frozen=True, eq=False)
class RankOneBlock:
    """Rank-one averaging block q = (1/d^2) m m^T for one inclusion.

    weights is the mass-matrix row-sum vector m_s (integrals of the nodal
    basis functions over the inclusion) and d^2 = sum(weights) its area.
    The block is applied through its factors and never formed densely.
    """

    weights: np.ndarray
    d: float

    def apply(self, p: np.ndarray) -> np.ndarray:
        return self.weights * (self.weights @ p / (self.d * self.d))

    def apply_projector(self, p: np.ndarray) -> np.ndarray:
        """Oblique projector onto the constant vector along weights."""
        return np.full_like(p, self.weights @ p / (self.d * self.d))


@dataclasses.dataclass(frozen=True, eq=False)
class InclusionBlocks:
    """Shared per-inclusion matrices in system ordering.

    Every inclusion of a layout has the same local geometry, so one Neumann
    stiffness block B_loc, one mass block M_loc and one weight vector serve
    all of them; only eps varies per inclusion.
    """

    k: int
    ns: int
    m: int
    h: float
    d: float
    eps: np.ndarray        # (m,)
    offsets: np.ndarray    # (m+1,)
    B_loc: np.ndarray      # (ns, ns) Neumann stiffness, kernel = constants
    M_loc: np.ndarray      # (ns, ns) consistent mass
    weights: np.ndarray    # (ns,) = M_loc @ 1
    B_D: sp.csr_matrix     # (n, n) block diagonal of B_loc
    M_D: sp.csr_matrix     # (n, n) block diagonal of M_loc

    @property
    def n(self) -> int:
        return self.m * self.ns

    @property
    def eps_node(self) -> np.ndarray:
        return np.repeat(self.eps, self.ns)

    @property
    def rank_one(self) -> RankOneBlock:
        return RankOneBlock(weights=self.weights, d=self.d)

    def apply_q(self, w: np.ndarray) -> np.ndarray:
        """Global averaging term Q w (block rank-one, applied via factors)."""
        W = w.reshape(self.m, self.ns)
        dots = W @ self.weights / (self.d * self.d)
        return (dots[:, None] * self.weights[None, :]).ravel()

    def apply_projector(self, w: np.ndarray) -> np.ndarray:
        """Blockwise projector onto constants along the mass weights."""
        W = w.reshape(self.m, self.ns)
        dots = W @ self.weights / (self.d * self.d)
        return np.repeat(dots, self.ns)

    def q_sparse(self) -> sp.csr_matrix:
        q = np.outer(self.weights, self.weights) / (self.d * self.d)
        return sp.kron(sp.identity(self.m, format="csr"), sp.csr_matrix(q),
                       format="csr")


def assemble_inclusion_blocks(mesh: StructuredMesh, layout: InclusionLayout,
                              ordering: OrderingMap) -> InclusionBlocks:
    """Neumann stiffness, mass and averaging data for every inclusion."""
    if layout.m == 0:
        raise AssemblyError("layout has no inclusions")
    B_loc, M_loc = _assemble_local(layout.k, mesh.h)
    weights = M_loc @ np.ones(M_loc.shape[0])
    d = layout.d
    if not np.isclose(weights.sum(), d * d, rtol=1e-12):
        raise AssemblyError("mass weights do not sum to the inclusion area")
    eye = sp.identity(layout.m, format="csr")
    B_D = sp.kron(eye, sp.csr_matrix(B_loc), format="csr")
    M_D = sp.kron(eye, sp.csr_matrix(M_loc), format="csr")
    return InclusionBlocks(k=layout.k, ns=layout.nodes_per_inclusion,
                           m=layout.m, h=mesh.h, d=d,
                           eps=np.asarray(layout.eps, dtype=float).copy(),
                           offsets=ordering.offsets.copy(),
                           B_loc=B_loc, M_loc=M_loc, weights=weights,
                           B_D=B_D, M_D=M_D)


@dataclasses.dataclass(frozen=True, eq=False)
class SaddleOperator:
    """Matrix-free application of the indefinite block operator."""

    A: sp.csr_matrix
    blocks: InclusionBlocks
    N: int
    n: int

    @property
    def size(self) -> int:
        return self.N + self.n

    def apply(self, z: np.ndarray, counter=None) -> np.ndarray:
        """Apply the block operator to z = (v, w)."""
        if z.shape != (self.size,):
            raise ParameterError(
                f"operand has shape {z.shape}, operator expects ({self.size},)")
        v = z[:self.N]
        w = z[self.N:]
        bw = self.blocks.B_D @ w
        top = self.A @ v
        top[:self.n] += bw
        bottom = (self.blocks.B_D @ v[:self.n]
                  - self.blocks.eps_node * bw
                  - self.blocks.apply_q(w))
        if counter is not None:
            counter.a += 1
        return np.concatenate((top, bottom))

    def schur_preimages(self, z: np.ndarray):
        """Factor tags of the lower block of apply(z).

        Returns (bd_pre, q_pre) with  lower = B_D bd_pre + Q q_pre, which is
        what the O(n) inverse of (B_D + Q) consumes.
        """
        w = z[self.N:]
        bd_pre = z[:self.n] - self.blocks.eps_node * w
        return bd_pre, -w

    def to_sparse(self) -> sp.csr_matrix:
        """Explicit sparse form, mainly for export and dense oracles."""
        n, N = self.n, self.N
        B = sp.hstack([self.blocks.B_D,
                       sp.csr_matrix((n, N - n))], format="csr")
        C = (self.blocks.B_D.multiply(
                np.repeat(self.blocks.eps, self.blocks.ns)[:, None])
             + self.blocks.q_sparse())
        return sp.bmat([[self.A, B.T], [B, -C]], format="csr")


def build_saddle_operator(A: sp.csr_matrix,
                          blocks: InclusionBlocks) -> SaddleOperator:
    N = A.shape[0]
    n = blocks.n
    if n > N:
        raise AssemblyError("more inclusion nodes than interior nodes")
    return SaddleOperator(A=A, blocks=blocks, N=N, n=n)


def build_problem(mesh: StructuredMesh, layout: InclusionLayout):
    """Convenience: ordering, stiffness, blocks and operator in one call."""
    ordering = build_ordering(layout)
    A = assemble_stiffness(mesh, ordering)
    blocks = assemble_inclusion_blocks(mesh, layout, ordering)
    return ordering, A, blocks, build_saddle_operator(A, blocks)


def assemble_load(mesh: StructuredMesh, f,
                  ordering: OrderingMap | None = None) -> np.ndarray:
    """Load vector with one-point barycentric quadrature per triangle.

    f may be a number or a callable f(x, y) accepting arrays.
    """
    tri = mesh.triangles
    coords = mesh.node_coords(tri.ravel()).reshape(tri.shape[0], 3, 2)
    bary = coords.mean(axis=1)
    if callable(f):
        vals = np.asarray(f(bary[:, 0], bary[:, 1]), dtype=float)
        if vals.shape != (tri.shape[0],):
            vals = np.broadcast_to(vals, (tri.shape[0],)).astype(float)
    elif isinstance(f, (int, float, np.floating, np.integer)):
        vals = np.full(tri.shape[0], float(f))
    else:
        raise ParameterError(f"load must be a number or callable, got {type(f)!r}")

    area = 0.5 * mesh.h * mesh.h
    contrib = np.repeat(vals * area / 3.0, 3)
    idx = mesh.interior_index[tri.ravel()]
    keep = idx >= 0
    out = np.zeros(mesh.n_interior)
    np.add.at(out, idx[keep], contrib[keep])
    if ordering is not None:
        out = ordering.to_system(out)
    return out


def recover_p_from_u(u: np.ndarray, blocks: InclusionBlocks) -> np.ndarray:
    """Per-inclusion pressure recovered from a converged primal solution.

    p_s = (u|_s - c_s)/eps_s with c_s the mass-weighted mean of u over the
    inclusion, so each block of p has zero weighted mean.
    """
    U = u[:blocks.n].reshape(blocks.m, blocks.ns)
    c = U @ blocks.weights / (blocks.d * blocks.d)
    P = (U - c[:, None]) / blocks.eps[:, None]
    return P.ravel()


def write_matrix_market(path, matrix, comment: str = "") -> None:
    """Export a symmetric sparse matrix in Matrix Market coordinate form."""
    scipy.io.mmwrite(path, sp.coo_matrix(matrix), comment=comment,
                     field="real", symmetry="symmetric")
