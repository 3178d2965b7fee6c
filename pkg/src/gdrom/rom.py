"""Online stage: reduced operators and time integration of the ROM variants."""

from __future__ import annotations

import enum
from dataclasses import dataclass, field
from typing import Callable, Optional

import numpy as np

from .assemble import FomOperators, convection_matrix, load_vector
from .nudging import NudgingAlgebra
from .pod import PodBasis, reconstruct

MAX_MODES = 64


class RomVariant(enum.Enum):
    """The four (mu, beta) zeroing patterns."""

    G_ROM = "g-rom"
    GRAD_DIV_ROM = "grad-div-rom"
    DA_ROM = "da-rom"
    GRAD_DIV_DA_ROM = "grad-div-da-rom"

    @property
    def uses_grad_div(self) -> bool:
        return self in (RomVariant.GRAD_DIV_ROM, RomVariant.GRAD_DIV_DA_ROM)

    @property
    def uses_nudging(self) -> bool:
        return self in (RomVariant.DA_ROM, RomVariant.GRAD_DIV_DA_ROM)

    def resolve_parameters(self, mu: float, beta: float):
        """Zero out parameters the variant forbids; reject inconsistencies."""
        if not self.uses_grad_div:
            if mu != 0.0:
                raise ValueError(f"{self.value} requires mu = 0, got {mu}")
        if not self.uses_nudging:
            if beta != 0.0:
                raise ValueError(f"{self.value} requires beta = 0, got {beta}")
        return (mu if self.uses_grad_div else 0.0,
                beta if self.uses_nudging else 0.0)


class RomStepError(RuntimeError):
    def __init__(self, msg, step=None, residual=None):
        super().__init__(msg)
        self.step = step
        self.residual = residual


@dataclass
class RomSystem:
    """Reduced operators; the reduced mass matrix is the identity.

    T holds the convection tensor T[i, j, k] = b_h(psi_i, psi_j, psi_k)
    (advecting, transported, test). With a centered basis the mean-field
    couplings enter as one constant vector and one linear matrix.
    """

    nu: float
    mu: float
    beta: float
    A_r: np.ndarray                   # (grad psi_i, grad psi_j)
    D_r: np.ndarray                   # (div psi_i, div psi_j)
    T: np.ndarray                     # (l, l, l)
    G: Optional[np.ndarray] = None
    nudge: Optional[NudgingAlgebra] = None
    forcing_reduced: Optional[Callable[[float], np.ndarray]] = None
    basis: Optional[PodBasis] = None
    mean_const: Optional[np.ndarray] = None   # constant forcing-side terms
    mean_linear: Optional[np.ndarray] = None  # linear mean convection coupling
    mean_coupling: Optional[np.ndarray] = None  # (mean, psi_k), for energy
    mean_l2sq: float = 0.0

    @property
    def l(self) -> int:
        return self.A_r.shape[0]

    def convection_operator(self, a: np.ndarray) -> np.ndarray:
        """Matrix C(a)[k, j] = sum_i a_i T[i, j, k] acting on the transported field."""
        return np.einsum("i,ijk->kj", a, self.T)

    def convection_vector(self, a: np.ndarray) -> np.ndarray:
        """N(a)_k = b_h(u_a, u_a, psi_k) in reduced variables."""
        return np.einsum("i,j,ijk->k", a, a, self.T)

    def linear_operator(self) -> np.ndarray:
        """nu A_r + mu D_r + beta G + mean convection coupling."""
        L = self.nu * self.A_r + self.mu * self.D_r
        if self.beta != 0.0 and self.G is not None:
            L = L + self.beta * self.G
        if self.mean_linear is not None:
            L = L + self.mean_linear
        return L

    def rhs_constant(self, t: float) -> np.ndarray:
        """Forcing, observation data and mean terms at time t."""
        rhs = np.zeros(self.l)
        if self.forcing_reduced is not None:
            rhs += self.forcing_reduced(t)
        if self.beta != 0.0:
            if self.nudge is None:
                raise ValueError("nudging requested but no observation stream attached")
            rhs += self.beta * self.nudge.data(t)
            if self.nudge.mean_term is not None:
                rhs -= self.beta * self.nudge.mean_term
        if self.mean_const is not None:
            rhs -= self.mean_const
        return rhs

    def kinetic_energy(self, a: np.ndarray) -> float:
        """0.5 ||mean + sum a_k psi_k||_0^2 in reduced variables."""
        e = float(a @ a) + self.mean_l2sq
        if self.mean_coupling is not None:
            e += 2.0 * float(a @ self.mean_coupling)
        return 0.5 * e


@dataclass
class RomState:
    a: np.ndarray
    a_prev: np.ndarray
    n: int
    t: float
    fp_iterations: int = 0   # nonlinear iterations spent on the last step


def build_rom_system(basis: PodBasis, fom_ops: FomOperators,
                     nudge: Optional[NudgingAlgebra], nu: float, mu: float,
                     beta: float, forcing=None, forcing_vector=None) -> RomSystem:
    """Galerkin-project the fine operators onto the POD modes.

    `forcing` is the spatial sampler f(t, pts); SeparableForcing lets the
    reduction precompute one vector. `forcing_vector` maps t to an already
    assembled fine load vector.
    """
    from .fom import SeparableForcing

    Psi = basis.modes
    l = basis.l
    if l > MAX_MODES:
        raise ValueError(f"l = {l} exceeds the dense-tensor limit {MAX_MODES}")
    A_r = Psi.T @ (fom_ops.stiffness @ Psi)
    A_r = 0.5 * (A_r + A_r.T)
    D_r = Psi.T @ (fom_ops.grad_div @ Psi)
    D_r = 0.5 * (D_r + D_r.T)

    T = np.empty((l, l, l))
    for i in range(l):
        C = convection_matrix(fom_ops, Psi[:, i])
        T[i] = (Psi.T @ (C @ Psi)).T   # T[i, j, k] = psi_k . C(psi_i) psi_j

    mean_const = mean_linear = mean_coupling = None
    mean_l2sq = 0.0
    if basis.centered:
        m = basis.mean
        Cm = convection_matrix(fom_ops, m)
        mean_const = nu * (Psi.T @ (fom_ops.stiffness @ m)) \
            + mu * (Psi.T @ (fom_ops.grad_div @ m)) \
            + Psi.T @ (Cm @ m)
        # b_h(m, psi_j, .) + b_h(psi_i, m, .) are both linear in the unknown
        L1 = Psi.T @ (Cm @ Psi)
        L2 = np.empty((l, l))
        for i in range(l):
            Ci = convection_matrix(fom_ops, Psi[:, i])
            L2[:, i] = Psi.T @ (Ci @ m)
        mean_linear = L1 + L2
        mean_coupling = Psi.T @ (fom_ops.mass @ m)
        mean_l2sq = float(m @ (fom_ops.mass @ m))

    forcing_reduced = None
    if forcing_vector is not None:
        forcing_reduced = lambda t: Psi.T @ np.asarray(forcing_vector(t))
    elif isinstance(forcing, SeparableForcing):
        base = Psi.T @ load_vector(fom_ops, lambda t, pts: forcing.shape(pts), 0.0)
        amplitude = forcing.amplitude
        forcing_reduced = lambda t: amplitude(t) * base
    elif forcing is not None:
        forcing_reduced = lambda t: Psi.T @ load_vector(fom_ops, forcing, t)

    G = nudge.G if nudge is not None else None
    return RomSystem(nu, mu, beta, A_r, D_r, T, G, nudge, forcing_reduced,
                     basis, mean_const, mean_linear, mean_coupling, mean_l2sq)


def rom_step_implicit_euler(state: RomState, sys: RomSystem, dt: float,
                            tol: float = 1e-12, max_iter: int = 50) -> RomState:
    """Implicit Euler with the nonlinearity resolved by fixed-point iteration.

    Convergence is measured on the dt-scaled residual
    a - a_prev + dt * (L a + N(a) - rhs), so `tol` is an absolute target at
    the scale of the coefficients themselves.
    """
    t_next = state.t + dt
    L = sys.linear_operator()
    rhs = sys.rhs_constant(t_next)
    eye = np.eye(sys.l)
    base = eye + dt * L
    b = state.a + dt * rhs
    a_it = state.a
    for it in range(max_iter):
        a_new = np.linalg.solve(base + dt * sys.convection_operator(a_it), b)
        resid = np.linalg.norm(a_new - state.a
                               + dt * (L @ a_new + sys.convection_vector(a_new) - rhs))
        a_it = a_new
        if resid <= tol * max(1.0, np.linalg.norm(state.a)):
            return RomState(a_new, state.a, state.n + 1, t_next, it + 1)
    raise RomStepError(f"fixed point stalled at residual {resid:.3e} after {max_iter} "
                       f"iterations (step {state.n + 1})",
                       step=state.n + 1, residual=resid)


def rom_step_bdf2_semiimplicit(state: RomState, sys: RomSystem, dt: float,
                               first: bool = False) -> RomState:
    """Semi-implicit BDF2: one dense solve, convection frozen at 2a^n - a^{n-1}.

    With `first` the history is a_prev = a (impulsive start) and the step is
    the shortened Euler step, advancing time by (2/3) dt.
    """
    t_next = state.t + ((2.0 / 3.0) * dt if first else dt)
    a_hat = 2.0 * state.a - state.a_prev
    M = (1.5 / dt) * np.eye(sys.l) + sys.linear_operator() \
        + sys.convection_operator(a_hat)
    rhs = (2.0 * state.a - 0.5 * state.a_prev) / dt + sys.rhs_constant(t_next)
    try:
        a_new = np.linalg.solve(M, rhs)
    except np.linalg.LinAlgError as exc:
        raise RomStepError(f"singular reduced matrix at step {state.n + 1}",
                           step=state.n + 1) from exc
    if not np.all(np.isfinite(a_new)):
        raise RomStepError(f"non-finite coefficients at step {state.n + 1}",
                           step=state.n + 1)
    return RomState(a_new, state.a, state.n + 1, t_next)


@dataclass
class RomSchedule:
    t_start: float
    t_end: float
    dt: float
    scheme: str = "bdf2"   # or "euler"

    def __post_init__(self):
        if self.dt <= 0 or self.t_end <= self.t_start:
            raise ValueError("need dt > 0 and t_end > t_start")
        if self.scheme not in ("bdf2", "euler"):
            raise ValueError(f"unknown scheme {self.scheme!r}")

    @property
    def n_steps(self) -> int:
        span = self.t_end - self.t_start
        if self.scheme == "bdf2":
            return int(np.floor(span / self.dt + 1.0 / 3.0 + 1e-9))
        return int(np.floor(span / self.dt + 1e-9))


@dataclass
class RomTrajectory:
    """Coefficient history including the initial state in column 0."""

    times: np.ndarray        # (N + 1,)
    coeffs: np.ndarray       # (l, N + 1)
    energy: np.ndarray       # (N + 1,)
    variant: RomVariant
    iterations: int = 0      # total nonlinear iterations (euler scheme)


def run_rom(variant: RomVariant, sys: RomSystem, schedule: RomSchedule,
            a0: Optional[np.ndarray] = None,
            euler_tol: float = 1e-12, euler_max_iter: int = 50) -> RomTrajectory:
    """Integrate the reduced system over the schedule.

    The variant must match the system parameters (its zeroing pattern is
    re-validated here). Fails fast with the partial trajectory attached to
    the exception.
    """
    variant.resolve_parameters(sys.mu, sys.beta)
    a = np.zeros(sys.l) if a0 is None else np.asarray(a0, dtype=float).copy()
    state = RomState(a, a.copy(), 0, schedule.t_start)
    times = [state.t]
    coeffs = [state.a.copy()]
    energy = [sys.kinetic_energy(state.a)]
    iterations = 0
    try:
        for n in range(schedule.n_steps):
            if schedule.scheme == "euler":
                state = rom_step_implicit_euler(state, sys, schedule.dt,
                                                euler_tol, euler_max_iter)
                iterations += state.fp_iterations
            else:
                state = rom_step_bdf2_semiimplicit(state, sys, schedule.dt,
                                                   first=(n == 0))
            times.append(state.t)
            coeffs.append(state.a.copy())
            energy.append(sys.kinetic_energy(state.a))
    except RomStepError as exc:
        exc.partial = RomTrajectory(np.asarray(times), np.column_stack(coeffs),
                                    np.asarray(energy), variant, iterations)
        raise
    return RomTrajectory(np.asarray(times), np.column_stack(coeffs),
                         np.asarray(energy), variant, iterations)


def reconstruct_trajectory(basis: PodBasis, traj: RomTrajectory) -> np.ndarray:
    """Fine-space fields for every stored step, one column per step."""
    U = basis.modes @ traj.coeffs
    if basis.centered:
        U = U + basis.mean[:, None]
    return U
