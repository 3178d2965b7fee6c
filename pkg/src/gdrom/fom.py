"""Full-order Navier-Stokes solver: semi-implicit BDF2 (production scheme) and
fully implicit Euler (analysis scheme), snapshot collection, QoI recording."""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable, Optional, Tuple

import numpy as np

from .assemble import FomOperators, convection_matrix, load_vector
from .projections import SaddleProblem, SolverError
from .spaces import dirichlet_values


class StepError(RuntimeError):
    """Raised when a time step fails to solve or converge."""

    def __init__(self, msg, step=None, residual=None):
        super().__init__(msg)
        self.step = step
        self.residual = residual


@dataclass
class SeparableForcing:
    """Forcing a(t) * F(x); lets the reduced model precompute (F, psi_k)."""

    amplitude: Callable[[float], float]
    shape: Callable[[np.ndarray], np.ndarray]

    def __call__(self, t, pts):
        return self.amplitude(t) * np.asarray(self.shape(pts))


@dataclass
class FomConfig:
    """Full-order run parameters.

    scheme 'bdf2' is the semi-implicit production scheme with Newton-Gregory
    extrapolation of the convecting velocity; 'euler' is the fully implicit
    scheme used by the error analysis, with a fixed-point nonlinear solve.
    """

    nu: float
    dt: float
    t_end: float
    scheme: str = "bdf2"
    inflow_um: float = 0.0        # peak speed of the parabolic inflow profile
    channel_height: float = 0.41
    forcing: Optional[Callable] = None          # f(t, pts) -> (n, 2)
    forcing_vector: Optional[Callable] = None   # t -> assembled load vector
    dirichlet: Optional[Callable] = None        # overrides every Dirichlet tag
    snap_window: Optional[Tuple[float, float]] = None
    snap_stride: int = 1
    qoi_diameter: float = 0.1
    qoi_ubar: float = 1.0
    convection: bool = True
    fp_tol: float = 1e-10
    fp_max_iter: int = 50
    u0: Optional[np.ndarray] = None
    u1: Optional[np.ndarray] = None   # explicit second level: uniform BDF2 start

    def __post_init__(self):
        if self.dt <= 0:
            raise ValueError("dt must be positive")
        if self.nu <= 0:
            raise ValueError("nu must be positive")
        if self.scheme not in ("bdf2", "euler"):
            raise ValueError(f"unknown scheme {self.scheme!r}")
        if self.snap_window is not None:
            w0, w1 = self.snap_window
            if not (0.0 <= w0 <= w1 <= self.t_end + 1e-12):
                raise ValueError("snapshot window must lie inside [0, t_end]")
        if self.snap_stride < 1:
            raise ValueError("snapshot stride must be >= 1")


@dataclass
class FomState:
    u: np.ndarray
    u_prev: np.ndarray
    p: np.ndarray
    n: int
    t: float


class FomSolver:
    """Time stepper over assembled operators with Dirichlet data baked in."""

    def __init__(self, ops: FomOperators, cfg: FomConfig):
        self.ops = ops
        self.cfg = cfg
        spaces = ops.spaces
        self.zero_mean = "outflow" not in spaces.mesh.boundary_tags
        self._cached_problem = None  # reused whenever the matrix is time-constant

        um, a = cfg.inflow_um, cfg.channel_height

        def inflow(t, pts):
            y = pts[:, 1]
            return np.column_stack([4.0 * um * y * (a - y) / a**2, np.zeros(len(y))])

        self._tag_samplers = {"inflow": inflow} if um != 0.0 else {}

    # -- helpers -------------------------------------------------------------

    def times(self) -> np.ndarray:
        """Time stamps t_1..t_N of every step up to t_end.

        The impulsive BDF2 start shortens the first step to (2/3) dt, so
        t_n = (2/3 + (n-1)) dt; with an explicit history or the implicit
        Euler scheme the grid is uniform, t_n = n dt.
        """
        cfg = self.cfg
        if cfg.scheme == "bdf2" and cfg.u1 is None:
            n = int(np.floor(cfg.t_end / cfg.dt + 1.0 / 3.0 + 1e-9))
            return (2.0 / 3.0 + np.arange(n)) * cfg.dt
        n = int(np.floor(cfg.t_end / cfg.dt + 1e-9))
        return (1.0 + np.arange(n)) * cfg.dt

    def initial_state(self) -> FomState:
        cfg = self.cfg
        n_u = self.ops.spaces.n_u
        u0 = np.zeros(n_u) if cfg.u0 is None else np.asarray(cfg.u0, dtype=float)
        if cfg.u1 is not None:
            return FomState(np.asarray(cfg.u1, dtype=float), u0,
                            np.zeros(self.ops.spaces.n_p), 1, cfg.dt)
        return FomState(u0, u0.copy(), np.zeros(self.ops.spaces.n_p), 0, 0.0)

    def _boundary_values(self, t):
        spaces = self.ops.spaces
        if self.cfg.dirichlet is not None:
            nodes = spaces.dirichlet_scalar
            vals = np.asarray(self.cfg.dirichlet(t, spaces.velocity_nodes[nodes]))
            return vals.T.ravel()
        return dirichlet_values(spaces, self._tag_samplers, t)

    def _load(self, t):
        cfg = self.cfg
        rhs = np.zeros(self.ops.spaces.n_u)
        if cfg.forcing is not None:
            rhs += load_vector(self.ops, cfg.forcing, t)
        if cfg.forcing_vector is not None:
            rhs += np.asarray(cfg.forcing_vector(t))
        return rhs

    def _problem(self, A, reusable):
        if reusable and self._cached_problem is not None:
            return self._cached_problem
        prob = SaddleProblem(self.ops, A, self.ops.spaces.dirichlet_scalar,
                             self.zero_mean)
        if reusable:
            self._cached_problem = prob
        return prob

    # -- steps ---------------------------------------------------------------

    def step(self, state: FomState) -> FomState:
        if self.cfg.scheme == "bdf2":
            return self.bdf2_semiimplicit_step(state)
        return self.implicit_euler_step(state)

    def bdf2_semiimplicit_step(self, state: FomState) -> FomState:
        """One linear solve; convection frozen at u_hat = 2 u^n - u^{n-1}."""
        ops, cfg = self.ops, self.cfg
        dt = cfg.dt
        t_next = state.t + (2.0 / 3.0) * dt if state.n == 0 and cfg.u1 is None \
            else state.t + dt
        A = (1.5 / dt) * ops.mass + cfg.nu * ops.stiffness
        if cfg.convection:
            u_hat = 2.0 * state.u - state.u_prev
            A = A + convection_matrix(ops, u_hat)
        rhs = ops.mass @ ((2.0 * state.u - 0.5 * state.u_prev) / dt) + self._load(t_next)
        try:
            prob = self._problem(A, reusable=not cfg.convection)
            u, p = prob.solve(rhs, self._boundary_values(t_next))
        except SolverError as exc:
            raise StepError(f"step {state.n + 1}: {exc}", step=state.n + 1) from exc
        return FomState(u, state.u, p, state.n + 1, t_next)

    def implicit_euler_step(self, state: FomState) -> FomState:
        """Fully implicit Euler; the nonlinearity is resolved by fixed-point
        iteration on the convecting field (tolerance cfg.fp_tol)."""
        ops, cfg = self.ops, self.cfg
        dt = cfg.dt
        t_next = state.t + dt
        A_lin = (1.0 / dt) * ops.mass + cfg.nu * ops.stiffness
        rhs = ops.mass @ (state.u / dt) + self._load(t_next)
        bvals = self._boundary_values(t_next)
        scale = max(np.linalg.norm(rhs), 1.0)

        if not cfg.convection:
            prob = self._problem(A_lin, reusable=True)
            u, p = prob.solve(rhs, bvals)
            return FomState(u, state.u, p, state.n + 1, t_next)

        u_it = state.u
        for _ in range(cfg.fp_max_iter):
            C = convection_matrix(ops, u_it)
            prob = SaddleProblem(ops, A_lin + C, ops.spaces.dirichlet_scalar,
                                 self.zero_mean)
            u, p = prob.solve(rhs, bvals)
            resid_vec = (A_lin + convection_matrix(ops, u)) @ u \
                - ops.divergence.T @ p - rhs
            resid = np.linalg.norm(resid_vec[~ops.spaces.dirichlet_mask]) / scale
            u_it = u
            if resid <= cfg.fp_tol:
                return FomState(u, state.u, p, state.n + 1, t_next)
        raise StepError(f"step {state.n + 1}: fixed point stalled at residual {resid:.3e}",
                        step=state.n + 1, residual=resid)


@dataclass
class FomResult:
    snapshots: "SnapshotSet"
    qoi: "QoISeries"
    final: FomState


def run_fom(cfg: FomConfig, mesh, spaces, ops: FomOperators,
            out_dir=None, progress: bool = False) -> FomResult:
    """Run the full-order model, collecting snapshots and QoI series.

    Snapshots are the states at step ends with t in (w0, w1], every
    `snap_stride`-th one; kinetic energy is recorded every step, drag and
    lift whenever the mesh has a cylinder boundary. With `out_dir` the
    snapshot file and QoI CSV are written there.
    """
    from .analysis import QoISeries, kinetic_energy, stokes_test_functions, drag_lift
    from .pod import SnapshotSet

    solver = FomSolver(ops, cfg)
    state = solver.initial_state()
    times = solver.times()

    has_cyl = "cylinder" in mesh.boundary_tags
    vd = vl = None
    if has_cyl:
        vd, vl = stokes_test_functions(ops)

    tol = 1e-9 * cfg.dt
    w0, w1 = cfg.snap_window if cfg.snap_window is not None else (np.inf, -np.inf)

    snaps, snap_times = [], []
    ts, ekin, cds, cls = [], [], [], []
    in_window = 0
    for t_next in times:
        prev = state
        state = solver.step(state)
        assert abs(state.t - t_next) < 1e-9
        ts.append(state.t)
        ekin.append(kinetic_energy(state.u, ops.mass))
        if has_cyl:
            cd, cl = drag_lift(ops, state.u, prev.u, state.t - prev.t, cfg.nu,
                               vd, vl, cfg.qoi_diameter, cfg.qoi_ubar)
        else:
            cd, cl = 0.0, 0.0
        cds.append(cd)
        cls.append(cl)
        if w0 + tol < state.t <= w1 + tol:
            in_window += 1
            if in_window % cfg.snap_stride == 0:
                snaps.append(state.u.copy())
                snap_times.append(state.t)
        if progress and state.n % 200 == 0:
            print(f"  step {state.n}/{len(times)}  t={state.t:.4f}  "
                  f"E={ekin[-1]:.6f}", flush=True)

    U = np.column_stack(snaps) if snaps else np.zeros((spaces.n_u, 0))
    snapshots = SnapshotSet(U, np.asarray(snap_times), cfg.dt * cfg.snap_stride, spaces)
    qoi = QoISeries(np.asarray(ts), np.asarray(ekin), np.asarray(cds), np.asarray(cls))

    if out_dir is not None:
        from .io import write_snapshots, write_qoi_csv
        from pathlib import Path
        out = Path(out_dir)
        out.mkdir(parents=True, exist_ok=True)
        write_snapshots(out / "snapshots.gdsn", snapshots)
        write_qoi_csv(out / "qoi.csv", qoi)
    return FomResult(snapshots, qoi, state)
