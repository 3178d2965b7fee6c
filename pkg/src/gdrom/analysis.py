"""Quantities of interest and error diagnostics."""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from .assemble import FomOperators, convection_apply
from .projections import StokesProjector


@dataclass
class QoISeries:
    """Per-step kinetic energy, drag and lift coefficients."""

    times: np.ndarray
    e_kin: np.ndarray
    c_d: np.ndarray
    c_l: np.ndarray

    def __post_init__(self):
        n = len(self.times)
        if not (len(self.e_kin) == len(self.c_d) == len(self.c_l) == n):
            raise ValueError("QoI series lengths disagree")
        if n > 1 and np.any(np.diff(self.times) <= 0):
            raise ValueError("QoI times must be strictly increasing")


def kinetic_energy(u: np.ndarray, mass) -> float:
    """0.5 * ||u||_0^2 via the mass matrix."""
    return 0.5 * float(u @ (mass @ u))


def stokes_test_functions(ops: FomOperators):
    """Discretely divergence-free drag/lift test functions.

    v_D carries trace (1, 0) on the cylinder boundary and zero elsewhere,
    v_L carries (0, 1); both are extended inside by Stokes projection.
    """
    spaces = ops.spaces
    tags = spaces.boundary_scalar_tags
    if "cylinder" not in tags:
        raise ValueError("mesh has no cylinder-tagged boundary")
    on_cyl = tags == "cylinder"
    nb = len(spaces.boundary_scalar)
    proj = StokesProjector(ops)
    out = []
    for comp in (0, 1):
        vals = np.zeros((2, nb))
        vals[comp, on_cyl] = 1.0
        out.append(proj.project(np.zeros(spaces.n_u), boundary_values=vals.ravel()))
    return out[0], out[1]


def drag_lift(ops: FomOperators, u: np.ndarray, u_prev: np.ndarray, dt: float,
              nu: float, v_d: np.ndarray, v_l: np.ndarray,
              diameter: float = 0.1, u_bar: float = 1.0):
    """Volume-integral drag/lift coefficients.

    c = -(2 / (D Ubar^2)) [ (du/dt, v) + b_h(u, u, v) + nu (grad u, grad v) ];
    the pressure term vanishes because the test functions are discretely
    divergence-free. The time derivative is the backward difference.
    """
    if dt <= 0:
        raise ValueError("need a positive time increment")
    dudt = (u - u_prev) / dt
    scale = -2.0 / (diameter * u_bar**2)
    m_dudt = ops.mass @ dudt
    k_u = ops.stiffness @ u
    out = []
    for v in (v_d, v_l):
        val = float(m_dudt @ v) + convection_apply(ops, u, u, v) + nu * float(k_u @ v)
        out.append(scale * val)
    return out[0], out[1]


def strouhal(lift: np.ndarray, dt: float, diameter: float = 0.1,
             u_bar: float = 1.0) -> float:
    """Vortex-shedding Strouhal number D f / Ubar.

    The frequency comes from the mean spacing of upward zero crossings of the
    mean-removed lift signal (crossing instants linearly interpolated).
    """
    sig = np.asarray(lift, dtype=float)
    sig = sig - sig.mean()
    s0, s1 = sig[:-1], sig[1:]
    idx = np.nonzero((s0 < 0.0) & (s1 >= 0.0))[0]
    if len(idx) < 2:
        raise ValueError(f"insufficient data: {len(idx)} upward zero crossings, need >= 2")
    crossings = (idx + s0[idx] / (s0[idx] - s1[idx])) * dt
    period = float(np.diff(crossings).mean())
    return diameter / (u_bar * period)


def nudging_rate_scale(nu: float, c_i: float, coarse_h: float, beta: float) -> float:
    """Theoretical decay-rate scale min(nu / (2 c_i^2 H^2), beta / 2).

    A diagnostic only: c_i comes from measured interpolation constants and
    the value is reported next to fitted decay rates, never used as an input.
    """
    if c_i <= 0.0 or coarse_h <= 0.0:
        return 0.5 * beta
    return min(0.5 * nu / (c_i * coarse_h) ** 2, 0.5 * beta)


@dataclass
class DecayFit:
    """Least-squares fit of log(error) vs step on the pre-floor segment."""

    slope: float             # per-step increment of log(e)
    intercept: float
    floor: float             # long-run error level
    n_fit: int               # steps used in the fit
    ratios: np.ndarray = field(default=None)  # per-step e_n / e_{n-1} on the segment


def fit_decay(errors: np.ndarray, floor_fraction: float = 0.2,
              floor_multiple: float = 3.0) -> Optional[DecayFit]:
    """Fit the geometric decay phase of an error series.

    The floor is the median of the trailing `floor_fraction` of the series;
    the fit window runs from the first step until the error first drops
    below floor_multiple * floor. Returns None when no fit is possible
    (all-zero errors or a window shorter than two steps).
    """
    e = np.asarray(errors, dtype=float)
    if len(e) < 4 or np.all(e <= 0.0):
        return None
    tail = e[int(np.floor(len(e) * (1.0 - floor_fraction))):]
    floor = float(np.median(tail))
    below = np.nonzero(e < floor_multiple * floor)[0]
    end = int(below[0]) if len(below) else len(e)
    end = max(end, 2)
    seg = e[:end]
    if np.any(seg <= 0.0):
        return None
    n = np.arange(end)
    slope, intercept = np.polyfit(n, np.log(seg), 1)
    return DecayFit(float(slope), float(intercept), floor, end, seg[1:] / seg[:-1])


@dataclass
class ErrorReport:
    """Per-step and aggregate deviations of a ROM run from its reference."""

    times: np.ndarray
    err_l2: np.ndarray         # || u_l^n - u_ref^n ||_0
    err_proj: np.ndarray       # || u_l^n - P_l u_ref^n ||_0
    l2l2: float                # sqrt of time-mean of squared L2 errors
    qoi_max_dev: dict          # metric -> | max rom - max ref |
    decay: Optional[DecayFit]

    def rows(self):
        yield "l2l2_error", self.l2l2
        for k, v in sorted(self.qoi_max_dev.items()):
            yield f"max_dev_{k}", v
        if self.decay is not None:
            yield "decay_slope", self.decay.slope
            yield "decay_floor", self.decay.floor
            yield "decay_steps", float(self.decay.n_fit)


def _align(times_a: np.ndarray, times_b: np.ndarray, tol: float):
    """Indices into b of the nearest time stamp for every entry of a."""
    idx = np.searchsorted(times_b, times_a)
    idx = np.clip(idx, 1, len(times_b) - 1)
    left = times_b[idx - 1]
    right = times_b[idx]
    idx = idx - (times_a - left < right - times_a)
    keep = np.abs(times_b[idx] - times_a) <= tol
    return idx, keep


def error_report(rom_times: np.ndarray, rom_fields: np.ndarray,
                 ref, basis, ops: FomOperators,
                 rom_qoi: Optional[QoISeries] = None,
                 ref_qoi: Optional[QoISeries] = None,
                 qoi_window: Optional[tuple] = None) -> ErrorReport:
    """Compare reconstructed ROM fields (columns) against reference snapshots.

    Reference columns are matched to ROM steps by nearest time stamp within
    (2/3) of the snapshot spacing. `qoi_window` restricts both the
    aggregated l2(L2) norm and the QoI maxima (the tables exclude the
    assimilation transient); the per-step series and the decay fit always
    cover the full overlap.
    """
    from .pod import project, reconstruct

    ref_times = ref.times
    tol = (2.0 / 3.0) * ref.dt
    idx, keep = _align(rom_times, ref_times, tol)
    if not np.any(keep):
        raise ValueError("no overlap between ROM and reference time grids")
    rt = rom_times[keep]
    Ul = rom_fields[:, keep]
    Ur = ref.U[:, idx[keep]]

    diff = Ul - Ur
    err_l2 = np.sqrt(np.maximum(np.sum(diff * (ops.mass @ diff), axis=0), 0.0))
    Pr = np.column_stack([reconstruct(basis, project(Ur[:, j], basis))
                          for j in range(Ur.shape[1])])
    dproj = Ul - Pr
    err_proj = np.sqrt(np.maximum(np.sum(dproj * (ops.mass @ dproj), axis=0), 0.0))
    in_window = np.ones(len(rt), dtype=bool)
    if qoi_window is not None:
        in_window = (rt >= qoi_window[0]) & (rt <= qoi_window[1])
        if not np.any(in_window):
            in_window[:] = True
    l2l2 = float(np.sqrt(np.mean(err_l2[in_window]**2)))

    qoi_max_dev = {}
    if rom_qoi is not None and ref_qoi is not None:
        for name in ("e_kin", "c_d", "c_l"):
            a_t, a = rom_qoi.times, getattr(rom_qoi, name)
            b_t, b = ref_qoi.times, getattr(ref_qoi, name)
            if qoi_window is not None:
                lo, hi = qoi_window
                a = a[(a_t >= lo) & (a_t <= hi)]
                b = b[(b_t >= lo) & (b_t <= hi)]
            if len(a) and len(b):
                qoi_max_dev[name] = float(abs(a.max() - b.max()))

    # roundoff-level series carry no decay information
    ref_scale = float(np.sqrt(np.max(np.sum(Ur * (ops.mass @ Ur), axis=0))))
    decay = None
    if err_proj.max() > 1e-12 * max(ref_scale, 1.0):
        decay = fit_decay(err_proj)
    return ErrorReport(rt, err_l2, err_proj, l2l2, qoi_max_dev, decay)


def report_table(report: ErrorReport, title: str = "error report") -> str:
    """Human-readable two-column table of the report metrics."""
    lines = [title, "-" * len(title)]
    width = max(len(k) for k, _ in report.rows())
    for k, v in report.rows():
        lines.append(f"{k:<{width}}  {v:.6e}")
    return "\n".join(lines) + "\n"
