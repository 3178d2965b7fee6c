import numpy as np
import pytest

from gdrom.assemble import (QUAD_POINTS, QUAD_WEIGHTS, assemble_operators,
                            convection_apply, convection_matrix, p1_basis, p2_basis)
from gdrom.mesh import generate_rect_mesh
from gdrom.spaces import build_spaces

from conftest import zero_trace_field


def test_dof_counts_2x2(unit_square_2):
    _, spaces, _ = unit_square_2
    assert spaces.n_scalar == 25     # 9 vertices + 16 edges
    assert spaces.n_u == 50
    assert spaces.n_p == 9


def test_mass_sum_partition_of_unity(unit_square_2):
    # sum of all entries = integral of (sum_i N_i)^2 per component = d * |Omega|
    _, _, ops = unit_square_2
    assert ops.mass.sum() == pytest.approx(2.0, abs=1e-12)


def test_stiffness_kills_constants(unit_square_4):
    _, spaces, ops = unit_square_4
    r = ops.stiffness @ np.ones(spaces.n_u)
    assert np.abs(r).max() < 1e-12


def test_reference_mass_matrix_closed_form():
    """Element mass matrix on one reference triangle vs exact integration."""
    sympy = pytest.importorskip("sympy")
    x, y = sympy.symbols("x y")
    l0, l1, l2 = 1 - x - y, x, y
    basis = [l0 * (2 * l0 - 1), l1 * (2 * l1 - 1), l2 * (2 * l2 - 1),
             4 * l0 * l1, 4 * l1 * l2, 4 * l2 * l0]
    exact = np.empty((6, 6))
    for i in range(6):
        for j in range(i, 6):
            v = sympy.integrate(sympy.integrate(basis[i] * basis[j], (y, 0, 1 - x)),
                                (x, 0, 1))
            exact[i, j] = exact[j, i] = float(v)
    vals = p2_basis(QUAD_POINTS)
    quad = np.einsum("q,iq,jq->ij", QUAD_WEIGHTS, vals, vals)
    assert np.abs(quad - exact).max() < 1e-14


def test_divergence_against_quadrature_oracle(unit_square_2):
    """(div u, q_i) for u = (x, 0) against an independent quadrature rule."""
    mesh, spaces, ops = unit_square_2
    u = np.concatenate([spaces.velocity_nodes[:, 0], np.zeros(spaces.n_scalar)])
    got = ops.divergence @ u

    # degree-2 midpoint rule, exact for the (linear) integrand div u * q
    mids = np.array([[0.5, 0.0], [0.5, 0.5], [0.0, 0.5]])
    wts = np.full(3, 1.0 / 6.0)
    pb = p1_basis(mids)
    oracle = np.zeros(spaces.n_p)
    for tri in mesh.triangles:
        p = mesh.vertices[tri]
        det = abs((p[1, 0] - p[0, 0]) * (p[2, 1] - p[0, 1])
                  - (p[2, 0] - p[0, 0]) * (p[1, 1] - p[0, 1]))
        for i in range(3):
            oracle[tri[i]] += np.sum(wts * pb[i] * 1.0) * det  # div(x, 0) = 1
    # compare after removing the mean (the pressure space is zero-mean)
    got_zm = got - ops.pressure_int * (ops.pressure_int @ got) / (ops.pressure_int @ ops.pressure_int)
    orc_zm = oracle - ops.pressure_int * (ops.pressure_int @ oracle) / (ops.pressure_int @ ops.pressure_int)
    assert np.abs(got_zm - orc_zm).max() < 1e-12


def test_grad_div_psd_and_symmetry(unit_square_2):
    _, _, ops = unit_square_2
    gd = ops.grad_div.toarray()
    assert np.abs(gd - gd.T).max() < 1e-14
    assert np.linalg.eigvalsh(gd).min() > -1e-12


def test_mass_positive_definite_on_free_dofs(unit_square_2):
    _, spaces, ops = unit_square_2
    free = ~spaces.dirichlet_mask
    m = ops.mass.toarray()[np.ix_(free, free)]
    assert np.linalg.eigvalsh(m).min() > 0


def test_convection_skew_symmetry(unit_square_4):
    _, spaces, ops = unit_square_4
    rng = np.random.default_rng(11)
    for _ in range(10):
        w = zero_trace_field(spaces, rng)
        v = zero_trace_field(spaces, rng)
        phi = zero_trace_field(spaces, rng)
        bvv = convection_apply(ops, w, v, v)
        assert abs(bvv) < 1e-12 * max(1.0, ops.norm_l2(w) * ops.norm_grad(v)**2)
        anti = convection_apply(ops, w, v, phi) + convection_apply(ops, w, phi, v)
        assert abs(anti) < 1e-12 * max(1.0, ops.norm_l2(w) * ops.norm_grad(v) * ops.norm_grad(phi))


def test_convection_zero_advecting_field(unit_square_2):
    _, spaces, ops = unit_square_2
    rng = np.random.default_rng(2)
    v, phi = rng.standard_normal((2, spaces.n_u))
    assert convection_apply(ops, np.zeros(spaces.n_u), v, phi) == 0.0


def test_convection_matrix_matches_apply(unit_square_4):
    _, spaces, ops = unit_square_4
    rng = np.random.default_rng(5)
    w, v, phi = rng.standard_normal((3, spaces.n_u))
    C = convection_matrix(ops, w)
    assert phi @ (C @ v) == pytest.approx(convection_apply(ops, w, v, phi), abs=1e-12)


def test_convection_rejects_wrong_length(unit_square_2):
    _, spaces, ops = unit_square_2
    with pytest.raises(ValueError):
        convection_apply(ops, np.zeros(3), np.zeros(spaces.n_u), np.zeros(spaces.n_u))


def test_inverse_inequality_constant_transfers():
    """h * ||grad v|| / ||v|| bounded by the coarse-mesh family constant."""
    import scipy.linalg as la

    mesh = generate_rect_mesh(4, 4)
    spaces = build_spaces(mesh)
    ops = assemble_operators(mesh, spaces)
    K = ops.stiffness.toarray()
    M = ops.mass.toarray()
    c_family = mesh.h * np.sqrt(la.eigh(K, M, eigvals_only=True)[-1])

    rng = np.random.default_rng(13)
    for nx in (8, 16):
        m = generate_rect_mesh(nx, nx)
        s = build_spaces(m)
        o = assemble_operators(m, s)
        for _ in range(50):
            v = rng.standard_normal(s.n_u)
            assert m.h * o.norm_grad(v) <= c_family * o.norm_l2(v) * (1.0 + 1e-10)


def test_div_norm_bounded_by_grad_norm(unit_square_8):
    _, spaces, ops = unit_square_8
    rng = np.random.default_rng(17)
    for _ in range(100):
        v = zero_trace_field(spaces, rng)
        assert ops.norm_div(v) <= ops.norm_grad(v) * (1.0 + 1e-12)
