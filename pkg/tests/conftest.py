"""Shared fixtures: small meshes and assembled operators."""

from __future__ import annotations

import numpy as np
import pytest

from gdrom.assemble import assemble_operators
from gdrom.mesh import generate_rect_mesh
from gdrom.spaces import build_spaces


@pytest.fixture(scope="session")
def unit_square_2():
    """The 8-triangle unit square with assembled operators."""
    mesh = generate_rect_mesh(2, 2)
    spaces = build_spaces(mesh)
    return mesh, spaces, assemble_operators(mesh, spaces)


@pytest.fixture(scope="session")
def unit_square_4():
    mesh = generate_rect_mesh(4, 4)
    spaces = build_spaces(mesh)
    return mesh, spaces, assemble_operators(mesh, spaces)


@pytest.fixture(scope="session")
def unit_square_8():
    mesh = generate_rect_mesh(8, 8)
    spaces = build_spaces(mesh)
    return mesh, spaces, assemble_operators(mesh, spaces)


def zero_trace_field(spaces, rng):
    """Random velocity coefficients vanishing on the whole boundary."""
    u = rng.standard_normal(spaces.n_u)
    u[spaces.scalar_mask(spaces.boundary_scalar)] = 0.0
    return u


class DeskProblem:
    """The forced unit-square assimilation benchmark used by the acceptance
    suite: nu = 1e-3, M = 100 snapshots over one forcing period, l = 6,
    nodal observations on the H = 4h coarse mesh."""

    def __init__(self):
        from gdrom.fom import FomConfig, FomSolver
        from gdrom.nudging import build_coarse_interp, build_nudging_algebra
        from gdrom.pod import SnapshotSet, assemble_modes, build_correlation, eigendecompose
        from gdrom.profiles import DESK, desk_forcing

        d = DESK
        self.params = d
        self.forcing = desk_forcing(d["amplitude"])
        self.mesh = generate_rect_mesh(d["nx"], d["nx"])
        self.spaces = build_spaces(self.mesh)
        self.ops = assemble_operators(self.mesh, self.spaces)

        cfg = FomConfig(nu=d["nu"], dt=d["dt"], t_end=d["t_end"], scheme="bdf2",
                        forcing=self.forcing)
        solver = FomSolver(self.ops, cfg)
        state = solver.initial_state()
        refs, times = [], []
        t_ref0 = d["t_spinup"] - 1.5 * d["dt"]
        while state.t < d["t_end"] - 1e-9:
            state = solver.step(state)
            if state.t > t_ref0:
                refs.append(state.u.copy())
                times.append(state.t)
        self.reference = SnapshotSet(np.column_stack(refs), np.asarray(times),
                                     d["dt"], self.spaces)

        w0, w1 = d["t_spinup"], d["t_spinup"] + d["window"]
        sel = (self.reference.times > w0 + 1e-12) & (self.reference.times <= w1 + 1e-12)
        self.snapshots = SnapshotSet(self.reference.U[:, sel],
                                     self.reference.times[sel], d["dt"], self.spaces)
        assert self.snapshots.M == 100

        K = build_correlation(self.snapshots, self.ops.mass)
        self.eig = eigendecompose(K)
        self.basis = assemble_modes(self.snapshots, self.eig, d["l"], self.ops.mass,
                                    self.ops.stiffness)
        coarse = generate_rect_mesh(d["nx"] // d["ratio"], d["nx"] // d["ratio"])
        self.interp = build_coarse_interp(self.spaces, coarse, "nodal")
        self.nudge = build_nudging_algebra(self.basis, self.interp, self.snapshots)

    def rom_system(self, mu, beta):
        from gdrom.rom import build_rom_system

        return build_rom_system(self.basis, self.ops, self.nudge,
                                self.params["nu"], mu, beta, forcing=self.forcing)

    def truth_coefficients(self, t):
        """Projection of the reference state nearest to t onto the modes."""
        j = int(np.argmin(np.abs(self.reference.times - t)))
        return self.basis.modes.T @ (self.ops.mass @ self.reference.U[:, j])

    def error_series(self, traj):
        """Per-step errors vs the truth and vs its mode projection."""
        from gdrom.rom import reconstruct_trajectory

        fields = reconstruct_trajectory(self.basis, traj)
        P = self.basis.modes
        err_l2 = np.empty(len(traj.times))
        err_proj = np.empty(len(traj.times))
        for j, t in enumerate(traj.times):
            k = int(np.argmin(np.abs(self.reference.times - t)))
            truth = self.reference.U[:, k]
            proj = P @ (P.T @ (self.ops.mass @ truth))
            d = fields[:, j] - truth
            err_l2[j] = np.sqrt(max(d @ (self.ops.mass @ d), 0.0))
            d = fields[:, j] - proj
            err_proj[j] = np.sqrt(max(d @ (self.ops.mass @ d), 0.0))
        return err_l2, err_proj

    def projection_error_series(self, traj):
        """|| u_l^n - P_l u(t_n) ||_0 for every stored step."""
        return self.error_series(traj)[1]

    def max_energy_start(self, limit=60):
        """Snapshot time of the largest-norm state in the early window."""
        nrm = np.einsum("un,un->n", self.snapshots.U[:, :limit],
                        self.ops.mass @ self.snapshots.U[:, :limit])
        return float(self.snapshots.times[int(np.argmax(nrm))])


@pytest.fixture(scope="session")
def desk_problem():
    return DeskProblem()


@pytest.fixture(scope="session")
def fom_spatial_convergence():
    """Mesh sizes and steady manufactured-solution errors for nx = 8, 16, 32."""
    from _manufactured import ManufacturedFlow, l2_error_vs_exact
    from gdrom.fom import FomConfig, FomSolver
    from gdrom.spaces import interpolate_velocity

    flow = ManufacturedFlow(nu=1.0)
    errs, hs = [], []
    for nx in (8, 16, 32):
        mesh = generate_rect_mesh(nx, nx)
        spaces = build_spaces(mesh)
        ops = assemble_operators(mesh, spaces)
        cfg = FomConfig(nu=1.0, dt=0.1, t_end=10.0,
                        forcing=lambda t, p: flow.forcing(0.0, p),
                        u0=interpolate_velocity(spaces, flow.velocity, 0.0))
        solver = FomSolver(ops, cfg)
        st = solver.initial_state()
        for _ in range(200):
            new = solver.step(st)
            d = ops.norm_l2(new.u - st.u)
            st = new
            if d < 1e-13:
                break
        errs.append(l2_error_vs_exact(ops, st.u, flow.velocity, 0.0))
        hs.append(mesh.h)
    return hs, errs


@pytest.fixture(scope="session")
def fom_temporal_convergence():
    """Time steps and BDF2 errors against a small-step same-mesh reference."""
    from _manufactured import ManufacturedFlow
    from gdrom.fom import FomConfig, FomSolver
    from gdrom.spaces import interpolate_velocity

    flow = ManufacturedFlow(nu=1.0)
    mesh = generate_rect_mesh(16, 16)
    spaces = build_spaces(mesh)
    ops = assemble_operators(mesh, spaces)
    T = 0.4

    def run(dt):
        cfg = FomConfig(nu=1.0, dt=dt, t_end=T, forcing=flow.forcing,
                        u0=interpolate_velocity(spaces, flow.velocity, 0.0),
                        u1=interpolate_velocity(spaces, flow.velocity, dt))
        solver = FomSolver(ops, cfg)
        st = solver.initial_state()
        while st.t < T - 1e-9:
            st = solver.step(st)
        return st.u

    ref = run(1.25e-3)
    dts = (4e-2, 2e-2, 1e-2)
    errs = [ops.norm_l2(run(dt) - ref) for dt in dts]
    return dts, errs


def random_snapshots(spaces, m, rng, scale=1.0, zero_trace=False):
    from gdrom.pod import SnapshotSet

    U = scale * rng.standard_normal((spaces.n_u, m))
    if zero_trace:
        U[spaces.scalar_mask(spaces.boundary_scalar)] = 0.0
    return SnapshotSet(U, 0.1 * (1.0 + np.arange(m)), 0.1, spaces)
