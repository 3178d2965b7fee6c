"""Operator assembly for the P2/P1 pair: mass, stiffness, divergence, grad-div,
and the skew-symmetrized convection form."""

from __future__ import annotations

import os
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

import numpy as np
import scipy.sparse as sp

from .spaces import FemSpaces

# 7-point degree-5 triangle rule; weights sum to the reference area 1/2,
# so integral over an element = sum_q w_q f(x_q) * |detJ|.
_A1, _B1 = 0.059715871789770, 0.470142064105115
_A2, _B2 = 0.797426985353087, 0.101286507323456
QUAD_POINTS = np.array([
    [1 / 3, 1 / 3],
    [_A1, _B1], [_B1, _A1], [_B1, _B1],
    [_A2, _B2], [_B2, _A2], [_B2, _B2],
])
QUAD_WEIGHTS = 0.5 * np.array([
    0.225,
    0.132394152788506, 0.132394152788506, 0.132394152788506,
    0.125939180544827, 0.125939180544827, 0.125939180544827,
])
QUAD_RULE = "tri7-degree5"


def p2_basis(pts: np.ndarray) -> np.ndarray:
    """P2 shape functions at reference points, shape (6, npts).

    Local order: vertices 0,1,2 then midpoints of edges (0,1), (1,2), (2,0).
    """
    x, y = pts[:, 0], pts[:, 1]
    l0, l1, l2 = 1.0 - x - y, x, y
    return np.stack([
        l0 * (2 * l0 - 1), l1 * (2 * l1 - 1), l2 * (2 * l2 - 1),
        4 * l0 * l1, 4 * l1 * l2, 4 * l2 * l0,
    ])


def p2_grad(pts: np.ndarray) -> np.ndarray:
    """Reference gradients of the P2 basis, shape (6, npts, 2)."""
    x, y = pts[:, 0], pts[:, 1]
    l0 = 1.0 - x - y
    g = np.empty((6, len(pts), 2))
    g[0, :, 0] = 1 - 4 * l0
    g[0, :, 1] = 1 - 4 * l0
    g[1, :, 0] = 4 * x - 1
    g[1, :, 1] = 0.0
    g[2, :, 0] = 0.0
    g[2, :, 1] = 4 * y - 1
    g[3, :, 0] = 4 * (l0 - x)
    g[3, :, 1] = -4 * x
    g[4, :, 0] = 4 * y
    g[4, :, 1] = 4 * x
    g[5, :, 0] = -4 * y
    g[5, :, 1] = 4 * (l0 - y)
    return g


def p1_basis(pts: np.ndarray) -> np.ndarray:
    x, y = pts[:, 0], pts[:, 1]
    return np.stack([1.0 - x - y, x, y])


@dataclass
class ElementGeometry:
    """Per-element affine data and global dof maps used by every assembly loop."""

    dof_p2: np.ndarray   # (nt, 6) scalar P2 dofs
    dof_p1: np.ndarray   # (nt, 3) pressure dofs
    inv_jt: np.ndarray   # (nt, 2, 2) inverse-transpose Jacobians
    det_j: np.ndarray    # (nt,) absolute Jacobian determinants
    grad: np.ndarray = field(init=False)  # (nt, 6, nq, 2) physical P2 gradients

    def __post_init__(self):
        ref = p2_grad(QUAD_POINTS)
        self.grad = np.einsum("ecd,iqd->eiqc", self.inv_jt, ref)


def element_geometry(spaces: FemSpaces) -> ElementGeometry:
    mesh = spaces.mesh
    tris = mesh.triangles
    dof_p2 = np.hstack([tris, mesh.num_vertices + spaces.tri_edges])
    p0 = mesh.vertices[tris[:, 0]]
    p1 = mesh.vertices[tris[:, 1]]
    p2 = mesh.vertices[tris[:, 2]]
    j11, j12 = p1[:, 0] - p0[:, 0], p2[:, 0] - p0[:, 0]
    j21, j22 = p1[:, 1] - p0[:, 1], p2[:, 1] - p0[:, 1]
    det = j11 * j22 - j12 * j21
    inv_jt = np.empty((len(tris), 2, 2))
    inv_jt[:, 0, 0] = j22 / det
    inv_jt[:, 0, 1] = -j21 / det
    inv_jt[:, 1, 0] = -j12 / det
    inv_jt[:, 1, 1] = j11 / det
    return ElementGeometry(dof_p2, tris.copy(), inv_jt, np.abs(det))


@dataclass
class FomOperators:
    """Assembled sparse operators on the velocity/pressure pair.

    mass, stiffness, grad_div are n_u x n_u; divergence maps velocity to
    pressure test functions, with (divergence @ u)[i] = (div u, q_i).
    """

    spaces: FemSpaces
    mass: sp.csr_matrix
    stiffness: sp.csr_matrix
    divergence: sp.csr_matrix
    grad_div: sp.csr_matrix
    pressure_mass: sp.csr_matrix
    pressure_int: np.ndarray     # entries (q_i, 1), the zero-mean constraint row
    geom: ElementGeometry
    quadrature: str = QUAD_RULE

    # --- inner products -----------------------------------------------------
    def l2(self, u, v) -> float:
        return float(u @ (self.mass @ v))

    def norm_l2(self, u) -> float:
        return float(np.sqrt(max(self.l2(u, u), 0.0)))

    def norm_grad(self, u) -> float:
        return float(np.sqrt(max(u @ (self.stiffness @ u), 0.0)))

    def norm_div(self, u) -> float:
        return float(np.sqrt(max(u @ (self.grad_div @ u), 0.0)))

    @property
    def domain_area(self) -> float:
        return float(self.geom.det_j.sum() / 2.0)


def _n_threads() -> int:
    try:
        return max(1, int(os.environ.get("GDROM_THREADS", "1")))
    except ValueError:
        return 1


def _scatter(rows_cols_vals, shape):
    rows, cols, vals = rows_cols_vals
    return sp.coo_matrix((vals, (rows, cols)), shape=shape).tocsr()


def _chunked(n_elem, nthreads):
    bounds = np.linspace(0, n_elem, nthreads + 1, dtype=int)
    return [(a, b) for a, b in zip(bounds[:-1], bounds[1:]) if b > a]


def _element_scatter(local, dof_rows, dof_cols, shape):
    """Scatter (nt, m, n) element blocks into a CSR matrix.

    Chunks over elements and reduces commutatively, so the result does not
    depend on the chunking; GDROM_THREADS > 1 parallelizes the chunks.
    """
    nt, m, n = local.shape

    def triplets(a, b):
        r = np.repeat(dof_rows[a:b], n, axis=1).ravel()
        c = np.tile(dof_cols[a:b], (1, m)).ravel()
        return r, c, local[a:b].ravel()

    nthreads = _n_threads()
    chunks = _chunked(nt, nthreads)
    if len(chunks) > 1:
        with ThreadPoolExecutor(max_workers=len(chunks)) as ex:
            parts = list(ex.map(lambda ab: triplets(*ab), chunks))
    else:
        parts = [triplets(0, nt)]
    rows = np.concatenate([p[0] for p in parts])
    cols = np.concatenate([p[1] for p in parts])
    vals = np.concatenate([p[2] for p in parts])
    return _scatter((rows, cols, vals), shape)


def _vector_block(mat: sp.csr_matrix) -> sp.csr_matrix:
    """Scalar operator acting identically on both velocity components."""
    return sp.block_diag([mat, mat], format="csr")


def assemble_operators(mesh, spaces: FemSpaces) -> FomOperators:
    """Assemble all time-independent sparse operators.

    The degree-5 rule is exact for every form appearing here (P2 mass
    products are degree 4, convection products degree 5).
    """
    geom = element_geometry(spaces)
    w = QUAD_WEIGHTS
    n_s, n_u, n_p = spaces.n_scalar, spaces.n_u, spaces.n_p

    basis = p2_basis(QUAD_POINTS)          # (6, nq)
    pbasis = p1_basis(QUAD_POINTS)         # (3, nq)
    grad = geom.grad                       # (nt, 6, nq, 2)
    det = geom.det_j

    # affine elements: the P2 element mass matrix is detJ times a constant
    m_ref = np.einsum("q,iq,jq->ij", w, basis, basis)
    mass_local = m_ref[None, :, :] * det[:, None, None]
    mass_s = _element_scatter(mass_local, geom.dof_p2[:, :, None],
                              geom.dof_p2[:, None, :], (n_s, n_s))

    stiff_local = np.einsum("q,eiqc,ejqc,e->eij", w, grad, grad, det)
    stiff_s = _element_scatter(stiff_local, geom.dof_p2[:, :, None],
                               geom.dof_p2[:, None, :], (n_s, n_s))

    div_blocks = []
    for c in range(2):
        loc = np.einsum("q,iq,ejq,e->eij", w, pbasis, grad[..., c], det)
        div_blocks.append(_element_scatter(loc, geom.dof_p1[:, :, None],
                                           geom.dof_p2[:, None, :], (n_p, n_s)))
    divergence = sp.hstack(div_blocks, format="csr")

    gd_blocks = [[None, None], [None, None]]
    for c1 in range(2):
        for c2 in range(2):
            loc = np.einsum("q,eiq,ejq,e->eij", w, grad[..., c1], grad[..., c2], det)
            gd_blocks[c1][c2] = _element_scatter(loc, geom.dof_p2[:, :, None],
                                                 geom.dof_p2[:, None, :], (n_s, n_s))
    grad_div = sp.bmat(gd_blocks, format="csr")

    pmass_ref = np.einsum("q,iq,jq->ij", w, pbasis, pbasis)
    pmass_local = pmass_ref[None, :, :] * det[:, None, None]
    pressure_mass = _element_scatter(pmass_local, geom.dof_p1[:, :, None],
                                     geom.dof_p1[:, None, :], (n_p, n_p))

    pint = np.zeros(n_p)
    pint_local = np.einsum("q,iq,e->ei", w, pbasis, det)
    np.add.at(pint, geom.dof_p1.ravel(), pint_local.ravel())

    return FomOperators(spaces, _vector_block(mass_s), _vector_block(stiff_s),
                        divergence, grad_div, pressure_mass, pint, geom)


def _values_at_quad(ops: FomOperators, u: np.ndarray):
    """Velocity values, component gradients and divergence at quadrature points."""
    geom = ops.geom
    n_s = ops.spaces.n_scalar
    basis = p2_basis(QUAD_POINTS)
    ux = u[:n_s][geom.dof_p2]              # (nt, 6)
    uy = u[n_s:][geom.dof_p2]
    vals = np.stack([np.einsum("ei,iq->eq", ux, basis),
                     np.einsum("ei,iq->eq", uy, basis)], axis=-1)   # (nt, nq, 2)
    gx = np.einsum("ei,eiqc->eqc", ux, geom.grad)                   # grad of u_x
    gy = np.einsum("ei,eiqc->eqc", uy, geom.grad)
    div = gx[..., 0] + gy[..., 1]
    return vals, gx, gy, div


def convection_matrix(ops: FomOperators, w: np.ndarray) -> sp.csr_matrix:
    """Matrix C with phi . C v = b_h(w, v, phi) for the fixed advecting field w.

    b_h(w, v, phi) = ((w . grad) v, phi) + 1/2 ((div w) v, phi); both terms act
    componentwise, so C is a scalar operator applied to each component.
    """
    geom = ops.geom
    n_s = ops.spaces.n_scalar
    basis = p2_basis(QUAD_POINTS)
    wq, _, _, divw = _values_at_quad(ops, w)
    # (w . grad)N_j at each quad point
    adv = np.einsum("eqc,ejqc->ejq", wq, geom.grad)
    loc = np.einsum("q,iq,ejq,e->eij", QUAD_WEIGHTS, basis, adv, geom.det_j)
    loc += 0.5 * np.einsum("q,iq,eq,jq,e->eij", QUAD_WEIGHTS, basis, divw, basis, geom.det_j)
    c_s = _element_scatter(loc, geom.dof_p2[:, :, None], geom.dof_p2[:, None, :],
                           (n_s, n_s))
    return _vector_block(c_s)


def convection_apply(ops: FomOperators, w, v, phi) -> float:
    """Trilinear form b_h(w, v, phi) evaluated without assembling the matrix."""
    w, v, phi = (np.asarray(x, dtype=float) for x in (w, v, phi))
    n_u = ops.spaces.n_u
    for x in (w, v, phi):
        if x.shape != (n_u,):
            raise ValueError(f"field length {x.shape} does not match space ({n_u},)")
    geom = ops.geom
    wq, _, _, divw = _values_at_quad(ops, w)
    vq, gvx, gvy, _ = _values_at_quad(ops, v)
    pq, _, _, _ = _values_at_quad(ops, phi)
    adv = np.stack([np.einsum("eqc,eqc->eq", wq, gvx),
                    np.einsum("eqc,eqc->eq", wq, gvy)], axis=-1)
    integrand = np.einsum("eqc,eqc->eq", adv + 0.5 * divw[..., None] * vq, pq)
    return float(np.einsum("q,eq,e->", QUAD_WEIGHTS, integrand, geom.det_j))


def load_vector(ops: FomOperators, sampler, t: float = 0.0) -> np.ndarray:
    """Assemble (f(t), phi_i) for a forcing sampler(t, points) -> (n, 2)."""
    geom = ops.geom
    mesh = ops.spaces.mesh
    basis = p2_basis(QUAD_POINTS)
    pbar = p1_basis(QUAD_POINTS)  # barycentric coords of the quad points
    pts = np.einsum("iq,eic->eqc", pbar, mesh.vertices[mesh.triangles])
    fvals = np.asarray(sampler(t, pts.reshape(-1, 2))).reshape(pts.shape)
    loc = np.einsum("q,iq,eqc,e->eic", QUAD_WEIGHTS, basis, fvals, geom.det_j)
    n_s = ops.spaces.n_scalar
    out = np.zeros((2, n_s))
    for c in range(2):
        np.add.at(out[c], geom.dof_p2.ravel(), loc[..., c].ravel())
    return out.ravel()


def quad_points_physical(ops: FomOperators) -> np.ndarray:
    """Physical coordinates of all quadrature points, shape (nt, nq, 2)."""
    mesh = ops.spaces.mesh
    pbar = p1_basis(QUAD_POINTS)
    return np.einsum("iq,eic->eqc", pbar, mesh.vertices[mesh.triangles])
