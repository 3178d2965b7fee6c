"""Taylor-Hood P2/P1 spaces: dof maps, boundary masks, field containers."""

from __future__ import annotations

from dataclasses import dataclass
from typing import Optional

import numpy as np

from .mesh import Mesh, _edge_table

# highest priority wins when a node sits on edges with different tags
_TAG_PRIORITY = {"wall": 1, "inflow": 2, "outflow": 0, "cylinder": 3}
DIRICHLET_TAGS = ("wall", "inflow", "cylinder")


@dataclass(frozen=True)
class FemSpaces:
    """P2 velocity / P1 pressure dof layout on a mesh.

    Scalar P2 dofs are numbered vertices first, then edge midpoints; a
    velocity coefficient vector stacks the x block before the y block,
    so dof (component c, scalar node k) lives at c * n_scalar + k.
    Pressure dofs are the vertices. The pressure space is understood as
    zero-mean; the constraint is enforced at solve time.
    """

    mesh: Mesh
    edges: np.ndarray        # (ne, 2) sorted vertex pairs
    tri_edges: np.ndarray    # (nt, 3) edge ids, local edge k = (k, k+1 mod 3)
    velocity_nodes: np.ndarray  # (n_scalar, 2) vertex then midpoint coordinates
    boundary_scalar: np.ndarray  # scalar node ids on any boundary edge
    boundary_scalar_tags: np.ndarray  # highest-priority tag per boundary node

    @property
    def n_scalar(self) -> int:
        return self.velocity_nodes.shape[0]

    @property
    def n_u(self) -> int:
        return 2 * self.n_scalar

    @property
    def n_p(self) -> int:
        return self.mesh.num_vertices

    @property
    def dirichlet_scalar(self) -> np.ndarray:
        """Boundary nodes carrying Dirichlet data (outflow stays free)."""
        sel = np.isin(self.boundary_scalar_tags, DIRICHLET_TAGS)
        return self.boundary_scalar[sel]

    @property
    def dirichlet_node_tags(self) -> np.ndarray:
        sel = np.isin(self.boundary_scalar_tags, DIRICHLET_TAGS)
        return self.boundary_scalar_tags[sel]

    @property
    def dirichlet_mask(self) -> np.ndarray:
        return self.scalar_mask(self.dirichlet_scalar)

    def scalar_mask(self, scalar_nodes) -> np.ndarray:
        mask = np.zeros(self.n_u, dtype=bool)
        mask[scalar_nodes] = True
        mask[self.n_scalar + np.asarray(scalar_nodes)] = True
        return mask

    def velocity_dofs(self, scalar_nodes) -> np.ndarray:
        """Both-component dof ids for the given scalar nodes (x block, y block)."""
        scalar_nodes = np.asarray(scalar_nodes)
        return np.concatenate([scalar_nodes, self.n_scalar + scalar_nodes])


def build_spaces(mesh: Mesh) -> FemSpaces:
    edges, tri_edges = _edge_table(mesh.triangles)
    nv = mesh.num_vertices
    midpoints = 0.5 * (mesh.vertices[edges[:, 0]] + mesh.vertices[edges[:, 1]])
    velocity_nodes = np.vstack([mesh.vertices, midpoints])

    edge_id = {(int(a), int(b)): i for i, (a, b) in enumerate(edges)}
    prio = np.full(velocity_nodes.shape[0], -1, dtype=int)
    tags = np.empty(velocity_nodes.shape[0], dtype=object)
    for (a, b), tag in zip(mesh.boundary_edges, mesh.boundary_tags):
        eid = edge_id.get((int(min(a, b)), int(max(a, b))))
        if eid is None:
            raise ValueError(f"boundary edge ({a}, {b}) is not a mesh edge")
        p = _TAG_PRIORITY[tag]
        for node in (int(a), int(b), nv + eid):
            if p > prio[node]:
                prio[node] = p
                tags[node] = tag
    on_boundary = np.nonzero(prio >= 0)[0]
    return FemSpaces(mesh, edges, tri_edges, velocity_nodes,
                     on_boundary, tags[on_boundary].astype(str))


@dataclass
class VelocityField:
    """Coefficient vector over the velocity dofs, with an optional time stamp."""

    coeffs: np.ndarray
    t: Optional[float] = None

    def __post_init__(self):
        self.coeffs = np.asarray(self.coeffs, dtype=float)

    def check(self, spaces: FemSpaces) -> "VelocityField":
        if self.coeffs.shape != (spaces.n_u,):
            raise ValueError(f"velocity length {self.coeffs.shape} != ({spaces.n_u},)")
        return self


@dataclass
class PressureField:
    coeffs: np.ndarray
    t: Optional[float] = None

    def __post_init__(self):
        self.coeffs = np.asarray(self.coeffs, dtype=float)

    def check(self, spaces: FemSpaces) -> "PressureField":
        if self.coeffs.shape != (spaces.n_p,):
            raise ValueError(f"pressure length {self.coeffs.shape} != ({spaces.n_p},)")
        return self


def interpolate_velocity(spaces: FemSpaces, sampler, t: float = 0.0) -> np.ndarray:
    """Nodal P2 interpolation: sampler(t, points) -> (n, 2) values."""
    vals = np.asarray(sampler(t, spaces.velocity_nodes))
    return np.concatenate([vals[:, 0], vals[:, 1]])


def interpolate_pressure(spaces: FemSpaces, sampler, t: float = 0.0) -> np.ndarray:
    return np.asarray(sampler(t, spaces.mesh.vertices), dtype=float)


def dirichlet_values(spaces: FemSpaces, tag_samplers: dict, t: float = 0.0) -> np.ndarray:
    """Velocity values on the constrained dofs.

    tag_samplers maps a boundary tag to sampler(t, points) -> (n, 2);
    missing tags default to zero (no-slip).
    """
    nodes = spaces.dirichlet_scalar
    vals = np.zeros((len(nodes), 2))
    for tag in np.unique(spaces.dirichlet_node_tags):
        sel = spaces.dirichlet_node_tags == tag
        sampler = tag_samplers.get(tag)
        if sampler is not None:
            vals[sel] = sampler(t, spaces.velocity_nodes[nodes[sel]])
    return vals.T.ravel()  # matches spaces.velocity_dofs(nodes) ordering
