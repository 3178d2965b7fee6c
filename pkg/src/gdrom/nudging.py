"""Coarse-mesh observation operators and the reduced nudging algebra."""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Optional

import numpy as np
import scipy.sparse as sp

from .assemble import QUAD_POINTS, QUAD_WEIGHTS, p1_basis, p2_basis
from .mesh import Mesh, MeshError, PointLocator
from .spaces import FemSpaces

KINDS = ("nodal", "pc")


class GeometryError(ValueError):
    """Raised when fine/coarse meshes do not overlap as required."""


@dataclass
class CoarseInterp:
    """Observation operator I_H onto a coarse mesh of resolution H.

    kind 'nodal' is Lagrange interpolation at the coarse vertices,
    re-expressed on the fine P2 space; kind 'pc' averages over coarse cells
    (the L2 projection onto piecewise constants). apply() returns the fine
    coefficient vector for 'nodal' and the stacked per-cell component
    averages for 'pc'; inner products are exact in either representation
    when the fine mesh refines the coarse one.
    """

    kind: str
    coarse_mesh: Mesh
    H: float
    fine_spaces: FemSpaces
    op_scalar: Optional[sp.csr_matrix] = None    # nodal: n_s x n_s
    avg_scalar: Optional[sp.csr_matrix] = None   # pc: n_cells x n_s
    cell_areas: Optional[np.ndarray] = None
    c0_est: Optional[float] = None
    cI_est: Optional[float] = None

    def apply(self, u: np.ndarray) -> np.ndarray:
        n_s = self.fine_spaces.n_scalar
        u = np.asarray(u, dtype=float)
        if self.kind == "nodal":
            return np.concatenate([self.op_scalar @ u[:n_s], self.op_scalar @ u[n_s:]])
        return np.concatenate([self.avg_scalar @ u[:n_s], self.avg_scalar @ u[n_s:]])

    def apply_matrix(self, U: np.ndarray) -> np.ndarray:
        """apply() over the columns of U."""
        n_s = self.fine_spaces.n_scalar
        op = self.op_scalar if self.kind == "nodal" else self.avg_scalar
        return np.vstack([op @ U[:n_s], op @ U[n_s:]])

    def inner(self, iu: np.ndarray, iv: np.ndarray, mass) -> float:
        """(I_H u, I_H v) from two apply() representations."""
        return float(np.sum(iu * self.inner_weight(mass, iv)))

    def inner_weight(self, mass, iv):
        if self.kind == "nodal":
            return mass @ iv
        areas2 = np.concatenate([self.cell_areas, self.cell_areas])
        return (areas2 * iv.T).T

    def ih_norm(self, u: np.ndarray, mass) -> float:
        iu = self.apply(u)
        return float(np.sqrt(max(self.inner(iu, iu, mass), 0.0)))

    def err_norm(self, u: np.ndarray, mass) -> float:
        """|| u - I_H u ||_0."""
        if self.kind == "nodal":
            d = u - self.apply(u)
            return float(np.sqrt(max(d @ (mass @ d), 0.0)))
        # cell averaging is the L2 projection onto its range, so Pythagoras applies
        iu = self.apply(u)
        u2 = float(u @ (mass @ u))
        return float(np.sqrt(max(u2 - self.inner(iu, iu, mass), 0.0)))


def _locate(mesh: Mesh, pts: np.ndarray, what: str):
    try:
        return PointLocator(mesh).locate(pts)
    except MeshError as exc:
        raise GeometryError(f"{what}: {exc}") from exc


def build_coarse_interp(fine: FemSpaces, coarse: Mesh, kind: str) -> CoarseInterp:
    """Assemble the observation operator for the given kind.

    The coarse mesh must cover the fine domain; for 'nodal' every coarse
    vertex must be locatable in a fine element and vice versa.
    """
    if kind not in KINDS:
        raise ValueError(f"kind must be one of {KINDS}, got {kind!r}")
    n_s = fine.n_scalar
    H = coarse.h

    if kind == "nodal":
        tri_f, bary_f = _locate(fine.mesh, coarse.vertices, "coarse vertex in fine mesh")
        basis = _p2_at_barycentric(bary_f)          # (nc_v, 6)
        dof = np.hstack([fine.mesh.triangles[tri_f],
                         fine.mesh.num_vertices + fine.tri_edges[tri_f]])
        nc_v = coarse.num_vertices
        R = sp.coo_matrix((basis.ravel(),
                           (np.repeat(np.arange(nc_v), 6), dof.ravel())),
                          shape=(nc_v, n_s)).tocsr()

        tri_c, bary_c = _locate(coarse, fine.velocity_nodes, "fine node in coarse mesh")
        E = sp.coo_matrix((bary_c.ravel(),
                           (np.repeat(np.arange(n_s), 3), coarse.triangles[tri_c].ravel())),
                          shape=(n_s, nc_v)).tocsr()
        return CoarseInterp(kind, coarse, H, fine, op_scalar=(E @ R).tocsr())

    # piecewise constants: assign each fine element to the coarse cell holding
    # its centroid, then average with the fine quadrature (exact when nested)
    mesh = fine.mesh
    centroids = mesh.vertices[mesh.triangles].mean(axis=1)
    tri_c, _ = _locate(coarse, centroids, "fine element in coarse mesh")
    n_cells = coarse.num_triangles

    basis = p2_basis(QUAD_POINTS)
    p0 = mesh.vertices[mesh.triangles[:, 0]]
    p1v = mesh.vertices[mesh.triangles[:, 1]]
    p2v = mesh.vertices[mesh.triangles[:, 2]]
    det = np.abs((p1v[:, 0] - p0[:, 0]) * (p2v[:, 1] - p0[:, 1])
                 - (p2v[:, 0] - p0[:, 0]) * (p1v[:, 1] - p0[:, 1]))
    loc = np.einsum("q,iq,e->ei", QUAD_WEIGHTS, basis, det)   # integral of N_i
    dof = np.hstack([mesh.triangles, mesh.num_vertices + fine.tri_edges])
    rows = np.repeat(tri_c, 6)
    avg = sp.coo_matrix((loc.ravel(), (rows, dof.ravel())), shape=(n_cells, n_s)).tocsr()
    areas = np.zeros(n_cells)
    np.add.at(areas, tri_c, det / 2.0)
    if np.any(areas <= 0.0):
        raise GeometryError("some coarse cells received no fine elements")
    inv = sp.diags(1.0 / areas)
    return CoarseInterp(kind, coarse, H, fine, avg_scalar=(inv @ avg).tocsr(),
                        cell_areas=areas)


def _p2_at_barycentric(bary: np.ndarray) -> np.ndarray:
    """P2 basis values at barycentric points, also (n, 6)."""
    ref = np.column_stack([bary[:, 1], bary[:, 2]])   # (xi, eta) from (l0, l1, l2)
    return p2_basis(ref).T


def probe_fields(spaces: FemSpaces, n_random: int = 8, seed: int = 0):
    """Constant, linear, trigonometric and random coefficient probes."""
    pts = spaces.velocity_nodes
    x, y = pts[:, 0], pts[:, 1]
    zeros = np.zeros_like(x)
    fields = [
        np.concatenate([np.ones_like(x), zeros]),
        np.concatenate([zeros, np.ones_like(x)]),
        np.concatenate([x, y]),
        np.concatenate([y, -x]),
    ]
    for k in (1, 2, 3):
        fields.append(np.concatenate([np.sin(k * np.pi * x) * np.sin(k * np.pi * y),
                                      np.cos(k * np.pi * x) * np.sin(k * np.pi * y)]))
        fields.append(np.concatenate([np.sin(k * np.pi * (x + y)), np.cos(k * np.pi * x * y)]))
    rng = np.random.default_rng(seed)
    for _ in range(n_random):
        fields.append(rng.standard_normal(spaces.n_u))
    return fields


def estimate_constants(interp: CoarseInterp, ops, probes) -> tuple:
    """Measured stability and approximation constants of I_H.

    c0 = max ||I_H u|| / ||u||, c_I = max ||u - I_H u|| / (H ||grad u||),
    maxima over the probe battery; zero-norm probes are skipped. The values
    are diagnostics only and are stored on the operator.
    """
    if len(probes) < 1:
        raise ValueError("need at least one probe field")
    c0 = 0.0
    ci = 0.0
    for u in probes:
        nu = ops.norm_l2(u)
        if nu > 1e-14:
            c0 = max(c0, interp.ih_norm(u, ops.mass) / nu)
        ng = ops.norm_grad(u)
        if ng > 1e-14:
            ci = max(ci, interp.err_norm(u, ops.mass) / (interp.H * ng))
    interp.c0_est, interp.cI_est = c0, ci
    return c0, ci


@dataclass
class NudgingAlgebra:
    """Reduced nudging operators: the Gram matrix and the observation stream.

    G_ij = (I_H psi_i, I_H psi_j); data(t) returns the vector
    d_k = (I_H u_obs, I_H psi_k) for the observation nearest to t, with the
    window extended periodically.
    """

    G: np.ndarray
    d_matrix: np.ndarray     # (l, M_obs)
    t_first: float
    dt: float
    mean_term: Optional[np.ndarray] = None   # (I_H mean, I_H psi_k) when centered

    @property
    def n_obs(self) -> int:
        return self.d_matrix.shape[1]

    @property
    def period(self) -> float:
        return self.n_obs * self.dt

    def index(self, t: float) -> int:
        return int(round((t - self.t_first) / self.dt)) % self.n_obs

    def data(self, t: float) -> np.ndarray:
        return self.d_matrix[:, self.index(t)]


def build_nudging_algebra(basis, interp: CoarseInterp, observations) -> NudgingAlgebra:
    """Assemble G and the projected observation stream.

    Observations are fine-space snapshots (the truth trajectory); the stream
    repeats with period M_obs * dt.
    """
    if observations.M < 1:
        raise ValueError("empty observation set")
    mass = basis.mass
    ipsi = interp.apply_matrix(basis.modes)
    wpsi = interp.inner_weight(mass, ipsi)
    G = ipsi.T @ wpsi
    G = 0.5 * (G + G.T)
    iobs = interp.apply_matrix(observations.U)
    d_matrix = wpsi.T @ iobs
    mean_term = None
    if basis.centered:
        imean = interp.apply(basis.mean)
        mean_term = wpsi.T @ imean
    return NudgingAlgebra(G, d_matrix, float(observations.times[0]),
                          float(observations.dt), mean_term)
