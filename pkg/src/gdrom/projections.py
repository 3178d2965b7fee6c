"""Saddle-point solves: generic solver, Stokes projection, pressure projection."""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable, Optional

import numpy as np
import scipy.sparse as sp
import scipy.sparse.linalg as spla

from .assemble import FomOperators, QUAD_POINTS, QUAD_WEIGHTS, p2_grad, quad_points_physical
from .spaces import FemSpaces


class SolverError(RuntimeError):
    """Raised when a sparse factorization or solve fails."""


@dataclass
class SaddleProblem:
    """Factorized saddle-point system for repeated right-hand sides.

    Unknowns are (free velocity dofs, pressure[, mean multiplier]); the
    velocity block A may include mass/convection contributions. Velocity
    dofs listed in `constrained` are eliminated.
    """

    ops: FomOperators
    A: sp.spmatrix
    constrained_scalar: np.ndarray
    zero_mean: bool

    def __post_init__(self):
        spaces = self.ops.spaces
        self.mask = spaces.scalar_mask(self.constrained_scalar)
        self.free = np.nonzero(~self.mask)[0]
        self.cdofs = spaces.velocity_dofs(self.constrained_scalar)
        A = self.A.tocsr()
        D = self.ops.divergence
        self._A_fc = A[self.free][:, self.cdofs]
        self._D_c = D[:, self.cdofs]
        A_ff = A[self.free][:, self.free]
        D_f = D[:, self.free]
        blocks = [[A_ff, -D_f.T], [D_f, None]]
        if self.zero_mean:
            m = sp.csr_matrix(self.ops.pressure_int[:, None])
            blocks[0].append(None)
            blocks[1].append(m)
            blocks.append([None, m.T, None])
        K = sp.bmat(blocks, format="csc")
        try:
            # MMD on A + A^T: markedly less fill than COLAMD on these
            # symmetric-pattern saddle systems
            self._lu = spla.splu(K, permc_spec="MMD_AT_PLUS_A")
        except RuntimeError as exc:  # pragma: no cover - singular systems
            raise SolverError(f"saddle factorization failed: {exc}") from exc
        self.n_f = len(self.free)
        self.n_p = self.ops.spaces.n_p

    def solve(self, rhs_u: np.ndarray, boundary_values: Optional[np.ndarray] = None,
              rhs_div: Optional[np.ndarray] = None):
        """Return (velocity with boundary values reinstated, pressure)."""
        u_c = np.zeros(len(self.cdofs)) if boundary_values is None else boundary_values
        b = np.zeros(self.n_f + self.n_p + (1 if self.zero_mean else 0))
        b[:self.n_f] = rhs_u[self.free] - self._A_fc @ u_c
        b[self.n_f:self.n_f + self.n_p] = -(self._D_c @ u_c)
        if rhs_div is not None:
            b[self.n_f:self.n_f + self.n_p] += rhs_div
        x = self._lu.solve(b)
        if not np.all(np.isfinite(x)):
            raise SolverError("saddle solve produced non-finite values")
        u = np.zeros(self.ops.spaces.n_u)
        u[self.free] = x[:self.n_f]
        u[self.cdofs] = u_c
        return u, x[self.n_f:self.n_f + self.n_p]


@dataclass
class AnalyticVelocity:
    """Analytic target for projections: value(pts) -> (n, 2) and
    grad(pts) -> (n, 2, 2) with grad[:, c, d] = d u_c / d x_d."""

    value: Callable[[np.ndarray], np.ndarray]
    grad: Callable[[np.ndarray], np.ndarray]


def grad_load_vector(ops: FomOperators, grad_sampler) -> np.ndarray:
    """Assemble (grad u, grad phi_i) for an analytic gradient sampler."""
    geom = ops.geom
    pts = quad_points_physical(ops)
    g = np.asarray(grad_sampler(pts.reshape(-1, 2))).reshape(pts.shape[0], pts.shape[1], 2, 2)
    loc = np.einsum("q,eiqd,eqcd,e->eic", QUAD_WEIGHTS, geom.grad, g, geom.det_j)
    n_s = ops.spaces.n_scalar
    out = np.zeros((2, n_s))
    for c in range(2):
        np.add.at(out[c], geom.dof_p2.ravel(), loc[..., c].ravel())
    return out.ravel()


class StokesProjector:
    """Projection onto the discretely divergence-free space.

    Solves (grad s, grad phi) = (grad u, grad phi) for all discretely
    divergence-free phi vanishing on the whole boundary, via the
    saddle-point formulation with a pressure multiplier. The projected
    field carries the prescribed boundary trace (zero by default).
    """

    def __init__(self, ops: FomOperators):
        self.ops = ops
        spaces = ops.spaces
        self.problem = SaddleProblem(ops, ops.stiffness, spaces.boundary_scalar,
                                     zero_mean=True)

    def project(self, target, boundary_values: Optional[np.ndarray] = None) -> np.ndarray:
        """target: velocity coefficient vector or AnalyticVelocity."""
        if isinstance(target, AnalyticVelocity):
            rhs = grad_load_vector(self.ops, target.grad)
        else:
            target = np.asarray(target, dtype=float)
            if target.shape != (self.ops.spaces.n_u,):
                raise ValueError("target length does not match the velocity space")
            rhs = self.ops.stiffness @ target
        u, _ = self.problem.solve(rhs, boundary_values)
        return u


def stokes_projection(ops: FomOperators, target) -> np.ndarray:
    """One-shot Stokes projection with homogeneous boundary values."""
    return StokesProjector(ops).project(target)


def l2_project_pressure(ops: FomOperators, p) -> np.ndarray:
    """L2-orthogonal projection onto the zero-mean P1 pressure space.

    `p` is either a P1 coefficient vector or a sampler pts -> values.
    """
    spaces = ops.spaces
    if callable(p):
        pts = quad_points_physical(ops)
        vals = np.asarray(p(pts.reshape(-1, 2))).reshape(pts.shape[:2])
        from .assemble import p1_basis
        loc = np.einsum("q,iq,eq,e->ei", QUAD_WEIGHTS, p1_basis(QUAD_POINTS), vals,
                        ops.geom.det_j)
        rhs = np.zeros(spaces.n_p)
        np.add.at(rhs, ops.geom.dof_p1.ravel(), loc.ravel())
    else:
        p = np.asarray(p, dtype=float)
        if p.shape != (spaces.n_p,):
            raise ValueError("pressure length does not match the space")
        rhs = ops.pressure_mass @ p
    try:
        ph = spla.spsolve(ops.pressure_mass.tocsc(), rhs)
    except RuntimeError as exc:  # pragma: no cover
        raise SolverError(f"pressure mass solve failed: {exc}") from exc
    # remove the mean: constants lie in the P1 space, so the projection onto
    # the zero-mean subspace is the full projection minus its average
    ph -= (ops.pressure_int @ ph) / ops.domain_area
    return ph
