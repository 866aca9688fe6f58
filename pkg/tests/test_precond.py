import numpy as np
import pytest

from saddleprec import (
    SchurPreconditioner, ReferenceSchurSolver, ExactAInverse,
    DiagonalAInverse, InnerCgAInverse, make_a_preconditioner,
    build_block_preconditioner, OpCounter,
    build_mesh, ContractViolationError, ParameterError,
    SolverBreakdownError,
)

from conftest import make_problem, make_exact_precond


# ---------------------------------------------------------------------------
# weighted mean projector acting inside the Schur preconditioner


def _projector_matrix(blocks):
    return np.column_stack([blocks.apply_projector(col)
                            for col in np.eye(blocks.n)])


def test_projector_reproduces_block_constants(prob8):
    blocks = prob8.blocks
    e = np.zeros(blocks.n)
    e[:blocks.ns] = 1.0
    np.testing.assert_allclose(blocks.apply_projector(e), e, atol=1e-14)


def test_projector_annihilates_weighted_mean_free_vectors(prob8):
    blocks = prob8.blocks
    rng = np.random.default_rng(0)
    v = rng.standard_normal(blocks.n)
    V = v.reshape(blocks.m, blocks.ns)
    V -= np.outer(V @ blocks.weights / blocks.d ** 2,
                  np.ones(blocks.ns))       # remove weighted means blockwise
    np.testing.assert_allclose(blocks.apply_projector(V.ravel()), 0.0,
                               atol=1e-13)


def test_projector_idempotent_and_self_adjoint_in_mass_inner_product(prob8):
    blocks = prob8.blocks
    P = _projector_matrix(blocks)
    np.testing.assert_allclose(P @ P, P, atol=1e-14)
    MD = blocks.M_D.toarray()
    np.testing.assert_allclose(MD @ P, (MD @ P).T, atol=1e-13)


# ---------------------------------------------------------------------------
# tagged O(n) application against the factorized reference


def test_tagged_apply_matches_reference_on_random_images(prob8):
    blocks = prob8.blocks
    schur = SchurPreconditioner(blocks)
    ref = ReferenceSchurSolver(blocks)
    rng = np.random.default_rng(11)
    for _ in range(100):
        a = rng.standard_normal(blocks.n)
        b = rng.standard_normal(blocks.n)
        image = blocks.B_D @ a + blocks.apply_q(b)
        fast = schur.apply_tagged(a, b)
        direct = ref.solve(image)
        scale = max(1.0, np.abs(direct).max())
        assert np.abs(fast - direct).max() <= 1e-12 * scale


def test_tagged_apply_is_inverse_of_schur_sum(prob8):
    blocks = prob8.blocks
    schur = SchurPreconditioner(blocks)
    rng = np.random.default_rng(3)
    x = rng.standard_normal(blocks.n)
    # x = B_D a with a = x, plus Q b with b = x: image of (x, x) is S x
    image = schur.apply_tagged(x, x)
    np.testing.assert_allclose(image, x, atol=1e-13)


def test_block_constant_images(prob8):
    blocks = prob8.blocks
    schur = SchurPreconditioner(blocks)
    e = np.zeros(blocks.n)
    e[:blocks.ns] = 1.0
    np.testing.assert_allclose(schur.apply_bd_image(e), 0.0, atol=1e-14)
    np.testing.assert_allclose(schur.apply_q_image(e), e, atol=1e-14)


def test_untagged_apply_is_rejected(prob8):
    schur = SchurPreconditioner(prob8.blocks)
    with pytest.raises(ContractViolationError):
        schur.apply(np.zeros(prob8.blocks.n))


def test_reference_solver_basics(prob8):
    blocks = prob8.blocks
    ref = ReferenceSchurSolver(blocks)
    e = np.zeros(blocks.n)
    e[:blocks.ns] = 1.0
    m_img = np.zeros(blocks.n)
    m_img[:blocks.ns] = blocks.weights
    np.testing.assert_allclose(ref.solve(m_img), e, atol=1e-12)
    np.testing.assert_array_equal(ref.solve(np.zeros(blocks.n)),
                                  np.zeros(blocks.n))
    rng = np.random.default_rng(8)
    x = rng.standard_normal(blocks.n)
    image = blocks.B_D @ x + blocks.apply_q(x)
    np.testing.assert_allclose(ref.solve(image), x, atol=1e-12)


# ---------------------------------------------------------------------------
# interior-block preconditioners


def test_exact_a_inverse_round_trip(prob16):
    A = prob16.A
    ha = ExactAInverse(A)
    assert ha.kind == "exact"
    rng = np.random.default_rng(5)
    r = rng.standard_normal(A.shape[0])
    np.testing.assert_allclose(A @ ha.apply(r), r, atol=1e-12)
    np.testing.assert_array_equal(ha.apply(np.zeros(A.shape[0])),
                                  np.zeros(A.shape[0]))


def test_diagonal_a_inverse(prob8):
    A = prob8.A
    ha = DiagonalAInverse(A)
    assert ha.kind == "diagonal"
    r = np.ones(A.shape[0])
    np.testing.assert_allclose(ha.apply(r), 1.0 / A.diagonal())


def test_inner_cg_defaults_hit_target_reduction():
    # twelve fixed ILU-preconditioned steps on the largest working mesh
    from saddleprec import assemble_stiffness
    mesh = build_mesh(256)
    A = assemble_stiffness(mesh)
    ha = InnerCgAInverse(A)
    assert ha.kind == "cg" and ha.steps == 12
    rng = np.random.default_rng(17)
    r = rng.standard_normal(A.shape[0])
    x = ha.apply(r)
    import scipy.sparse.linalg as spla
    exact = spla.splu(A.tocsc()).solve(r)
    e = exact - x
    num = float(e @ (A @ e)) ** 0.5
    den = float(exact @ r) ** 0.5        # ||exact||_A
    assert num / den <= 1e-7


def test_inner_cg_counter_and_zero_input(prob16):
    ha = InnerCgAInverse(prob16.A)
    counter = OpCounter()
    out = ha.apply(np.zeros(prob16.A.shape[0]), counter=counter)
    np.testing.assert_array_equal(out, np.zeros(prob16.A.shape[0]))
    r = np.ones(prob16.A.shape[0])
    counter = OpCounter()
    ha.apply(r, counter=counter)
    assert 1 <= counter.a <= ha.steps
    assert counter.ha == 1


def test_make_a_preconditioner_dispatch(prob8):
    assert make_a_preconditioner(prob8.A, "exact").kind == "exact"
    assert make_a_preconditioner(prob8.A, "diagonal").kind == "diagonal"
    hcg = make_a_preconditioner(prob8.A, "cg", steps=5, drop_tol=1e-2,
                                fill_factor=8.0)
    assert hcg.kind == "cg" and hcg.steps == 5
    with pytest.raises(ParameterError):
        make_a_preconditioner(prob8.A, "amg")


def test_op_counter_totals():
    c = OpCounter()
    c.a += 3
    c.ha += 2
    assert c.total == 5
    snap = c.snapshot()
    c.a += 1
    assert snap == (3, 2) and c.total == 6


# ---------------------------------------------------------------------------
# assembled block preconditioner


def test_block_preconditioner_wiring(prob8):
    pre = build_block_preconditioner(prob8.A, prob8.blocks)
    assert pre.N == prob8.op.N and pre.n == prob8.op.n
    assert pre.a_inv.kind == "exact"
    pre_cg = build_block_preconditioner(prob8.A, prob8.blocks, ha_kind="cg",
                                        steps=4)
    assert pre_cg.a_inv.kind == "cg" and pre_cg.a_inv.steps == 4


def test_source_tags_reproduce_lower_block(prob8):
    op, blocks = prob8.op, prob8.blocks
    pre = make_exact_precond(prob8)
    rng = np.random.default_rng(21)
    z = rng.standard_normal(op.size)
    a, b = pre.source_tags(z)
    image = blocks.B_D @ a + blocks.apply_q(b)
    np.testing.assert_allclose(image, op.apply(z)[op.N:], atol=1e-12)


def test_apply_to_image_counts_operations(prob8):
    pre = make_exact_precond(prob8)
    op = prob8.op
    rng = np.random.default_rng(2)
    z = rng.standard_normal(op.size)
    image = op.apply(z)
    a, b = op.schur_preimages(z)
    counter = OpCounter()
    out = pre.apply_to_image(image, a, b, counter=counter)
    assert out.shape == (op.size,)
    assert counter.ha == 1 and counter.a == 0
