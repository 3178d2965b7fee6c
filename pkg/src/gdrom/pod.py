"""Offline stage: snapshot correlation matrix, eigendecomposition, mode assembly."""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Optional

import numpy as np
import scipy.linalg as la
import scipy.sparse as sp

DEFAULT_DROP_TOL = 1e-10


@dataclass
class SnapshotSet:
    """Velocity snapshots as columns of U, with their time stamps."""

    U: np.ndarray            # (n_u, M)
    times: np.ndarray        # (M,)
    dt: float                # spacing between stored snapshots
    spaces: object = None

    def __post_init__(self):
        self.U = np.asarray(self.U, dtype=float)
        self.times = np.asarray(self.times, dtype=float)
        if self.U.ndim != 2:
            raise ValueError("snapshot matrix must be 2-D")
        if self.U.shape[1] != len(self.times):
            raise ValueError("snapshot count and time stamps disagree")
        if len(self.times) > 1 and np.any(np.diff(self.times) <= 0):
            raise ValueError("snapshot times must be strictly increasing")

    @property
    def M(self) -> int:
        return self.U.shape[1]

    @property
    def n_u(self) -> int:
        return self.U.shape[0]


@dataclass
class Eigenpairs:
    """Positive eigenpairs of the correlation matrix, sorted descending."""

    values: np.ndarray       # (d_p,) positive, nonincreasing
    vectors: np.ndarray      # (M, d_p) Euclidean-orthonormal columns
    drop_tol: float

    @property
    def d_p(self) -> int:
        return len(self.values)


@dataclass
class PodBasis:
    """Orthonormal velocity modes with their eigenvalues and stiffness data.

    Modes are orthonormal in the mass-weighted (true L2) inner product.
    S holds (grad psi_i, grad psi_j) for the retained modes; S_norm2 is its
    spectral norm. `mean` is the subtracted trajectory average, or None.
    """

    eigenvalues: np.ndarray          # all d_p eigenvalues
    modes: np.ndarray                # (n_u, l)
    mass: sp.spmatrix
    mean: Optional[np.ndarray] = None
    S: Optional[np.ndarray] = None
    S_norm2: Optional[float] = None

    @property
    def l(self) -> int:
        return self.modes.shape[1]

    @property
    def d_p(self) -> int:
        return len(self.eigenvalues)

    @property
    def centered(self) -> bool:
        return self.mean is not None


def _centered_matrix(snapshots: SnapshotSet, centered: bool):
    if centered:
        mean = snapshots.U.mean(axis=1)
        return snapshots.U - mean[:, None], mean
    return snapshots.U, None


def build_correlation(snapshots: SnapshotSet, mass: sp.spmatrix,
                      centered: bool = False) -> np.ndarray:
    """Correlation matrix k_ij = (1/M) (u_i, u_j) in the L2 inner product.

    With `centered`, the trajectory mean is subtracted from every snapshot
    first. The 1/M scaling is always applied, so eigenvalues are invariant
    under duplicating the snapshot set.
    """
    if snapshots.M < 1:
        raise ValueError("need at least one snapshot")
    U, _ = _centered_matrix(snapshots, centered)
    K = U.T @ (mass @ U) / snapshots.M
    return 0.5 * (K + K.T)


def eigendecompose(K: np.ndarray, drop_tol: float = DEFAULT_DROP_TOL) -> Eigenpairs:
    """Descending positive eigenpairs; d_p counts values above drop_tol * max."""
    K = np.asarray(K, dtype=float)
    if K.ndim != 2 or K.shape[0] != K.shape[1]:
        raise ValueError("correlation matrix must be square")
    if not np.allclose(K, K.T, rtol=0.0, atol=1e-12 * max(1.0, np.abs(K).max())):
        raise ValueError("correlation matrix must be symmetric")
    vals, vecs = la.eigh(K)
    order = np.argsort(vals)[::-1]
    vals, vecs = vals[order], vecs[:, order]
    keep = vals > drop_tol * max(vals[0], 0.0) if vals.size else np.zeros(0, bool)
    return Eigenpairs(vals[keep], vecs[:, keep], drop_tol)


def assemble_modes(snapshots: SnapshotSet, eig: Eigenpairs, l: int,
                   mass: sp.spmatrix, stiffness: Optional[sp.spmatrix] = None,
                   centered: bool = False) -> PodBasis:
    """Build the first l modes, psi_k = (M lambda_k)^{-1/2} sum_j v_k^j u_j.

    Mode signs are fixed by making the largest-magnitude coefficient entry
    positive. The mode stiffness matrix S and its spectral norm are computed
    when a stiffness operator is supplied.
    """
    if not 1 <= l <= eig.d_p:
        raise ValueError(f"l={l} outside [1, d_p={eig.d_p}]")
    U, mean = _centered_matrix(snapshots, centered)
    scale = 1.0 / np.sqrt(snapshots.M * eig.values[:l])
    modes = (U @ eig.vectors[:, :l]) * scale
    anchor = np.abs(modes).argmax(axis=0)
    signs = np.sign(modes[anchor, np.arange(l)])
    signs[signs == 0] = 1.0
    modes *= signs

    S = S_norm2 = None
    if stiffness is not None:
        S = modes.T @ (stiffness @ modes)
        S = 0.5 * (S + S.T)
        S_norm2 = float(la.eigvalsh(S)[-1]) if l else 0.0
    return PodBasis(eig.values.copy(), modes, mass, mean, S, S_norm2)


def build_pod_basis(snapshots: SnapshotSet, l: int, mass: sp.spmatrix,
                    stiffness: Optional[sp.spmatrix] = None, centered: bool = False,
                    drop_tol: float = DEFAULT_DROP_TOL) -> PodBasis:
    """Correlation, eigendecomposition and mode assembly in one call."""
    K = build_correlation(snapshots, mass, centered)
    eig = eigendecompose(K, drop_tol)
    return assemble_modes(snapshots, eig, min(l, eig.d_p), mass, stiffness, centered)


def project(field: np.ndarray, basis: PodBasis) -> np.ndarray:
    """Coefficients a_k = (field - mean, psi_k)."""
    f = np.asarray(field, dtype=float)
    if basis.mean is not None:
        f = f - basis.mean
    return basis.modes.T @ (basis.mass @ f)


def reconstruct(basis: PodBasis, coeffs: np.ndarray) -> np.ndarray:
    """mean + sum_k a_k psi_k."""
    u = basis.modes @ np.asarray(coeffs, dtype=float)
    if basis.mean is not None:
        u = u + basis.mean
    return u


def mean_projection_error(snapshots: SnapshotSet, basis: PodBasis, l: int,
                          centered: bool = False) -> float:
    """(1/M) sum_j || u_j - sum_{k<=l} (u_j, psi_k) psi_k ||_0^2.

    Equals the tail eigenvalue sum when the basis comes from these snapshots.
    """
    U, _ = _centered_matrix(snapshots, centered)
    Psi = basis.modes[:, :l]
    coeff = Psi.T @ (basis.mass @ U)
    R = U - Psi @ coeff
    return float(np.sum(R * (basis.mass @ R)) / snapshots.M)


def gradient_truncation_identity(snapshots: SnapshotSet, basis: PodBasis, l: int,
                                 stiffness: sp.spmatrix, centered: bool = False):
    """Both sides of the tail identity for gradients.

    lhs = (1/M) sum_j || grad u_j - sum_{k<=l} (u_j, psi_k) grad psi_k ||_0^2,
    rhs = sum_{k>l} lambda_k || grad psi_k ||_0^2. The basis must retain all
    d_p modes so the right-hand side can be formed.
    """
    if basis.l < basis.d_p:
        raise ValueError("need the full basis (l = d_p) to evaluate the identity")
    U, _ = _centered_matrix(snapshots, centered)
    Psi = basis.modes
    coeff = Psi[:, :l].T @ (basis.mass @ U)
    R = U - Psi[:, :l] @ coeff
    lhs = float(np.sum(R * (stiffness @ R)) / snapshots.M)
    grad_norms = np.einsum("uk,uk->k", Psi, (stiffness @ Psi))
    rhs = float(np.sum(basis.eigenvalues[l:] * grad_norms[l:]))
    return lhs, rhs
