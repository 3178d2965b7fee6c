"""Reproduction profiles: the desk problem and the cylinder benchmark setups."""

from __future__ import annotations

import numpy as np

from .mesh import (Mesh, cylinder_snap, generate_channel_cylinder_mesh,
                   generate_rect_mesh, load_mesh, refine)

DESK_FORCING_PERIOD = 0.2


def _curl_vortex(pts):
    """curl of w = sin^2(pi x) sin^2(pi y): divergence-free, zero trace."""
    x, y = pts[:, 0], pts[:, 1]
    sx, cx = np.sin(np.pi * x), np.cos(np.pi * x)
    sy, cy = np.sin(np.pi * y), np.cos(np.pi * y)
    return np.column_stack([sx**2 * 2 * np.pi * sy * cy,
                            -2 * np.pi * sx * cx * sy**2])


def _curl_vortex_tilted(pts):
    """curl of w * (2x - 1): a second large-scale solenoidal shape."""
    x, y = pts[:, 0], pts[:, 1]
    sx, cx = np.sin(np.pi * x), np.cos(np.pi * x)
    sy, cy = np.sin(np.pi * y), np.cos(np.pi * y)
    w = sx**2 * sy**2
    wx = 2 * np.pi * sx * cx * sy**2
    wy = sx**2 * 2 * np.pi * sy * cy
    g = 2.0 * x - 1.0
    return np.column_stack([wy * g, -(wx * g + 2.0 * w)])


def desk_forcing(amplitude: float):
    """Rotating pair of large-scale vortices with period DESK_FORCING_PERIOD.

    Both shapes live at the box scale, so the dominant flow structures stay
    well observable on the coarse assimilation mesh.
    """
    w = 2.0 * np.pi / DESK_FORCING_PERIOD

    def f(t, pts):
        return amplitude * (np.sin(w * t) * _curl_vortex(pts)
                            + np.cos(w * t) * _curl_vortex_tilted(pts))

    return f


def forcing_by_name(name: str, amplitude: float = 1.0):
    if name == "none":
        return None
    if name == "desk":
        return desk_forcing(amplitude)
    raise ValueError(f"unknown forcing {name!r} (choose none or desk)")


def build_fine_mesh(spec: str) -> Mesh:
    """Mesh from a spec string: a file path, rect:NX[xNY], or cylinder:D.

    cylinder:D generates the channel benchmark at density D and refines it
    twice (projecting new cylinder nodes onto the circle), so the generator
    output itself is the natural H = 4h observation mesh.
    """
    if spec.startswith("rect:"):
        nx, ny = _rect_dims(spec)
        return generate_rect_mesh(nx, ny)
    if spec.startswith("cylinder:"):
        coarse = generate_channel_cylinder_mesh(float(spec.split(":", 1)[1]))
        return refine(refine(coarse, cylinder_snap), cylinder_snap)
    return load_mesh(spec)


def build_coarse_mesh(cfg, fine_spec: str) -> Mesh:
    """Observation mesh from nudging.coarse_mesh or nudging.ratio."""
    path = cfg.get("nudging", "coarse_mesh")
    if path is not None:
        if path.startswith("rect:"):
            nx, ny = _rect_dims(path)
            return generate_rect_mesh(nx, ny)
        if path.startswith("cylinder:"):
            return generate_channel_cylinder_mesh(int(path.split(":", 1)[1]))
        return load_mesh(path)
    ratio = cfg.get("nudging", "ratio")
    if ratio is None:
        raise ValueError("need nudging.coarse_mesh or nudging.ratio")
    if fine_spec.startswith("rect:"):
        nx, ny = _rect_dims(fine_spec)
        if nx % ratio or ny % ratio:
            raise ValueError(f"ratio {ratio} does not divide rect:{nx}x{ny}")
        return generate_rect_mesh(nx // ratio, ny // ratio)
    if fine_spec.startswith("cylinder:"):
        # the unrefined generator output: H = 4h by construction
        return generate_channel_cylinder_mesh(float(fine_spec.split(":", 1)[1]))
    raise ValueError("nudging.ratio requires a rect: or cylinder: fine mesh")


def _rect_dims(spec: str):
    body = spec.split(":", 1)[1]
    parts = body.lower().split("x")
    nx = int(parts[0])
    ny = int(parts[1]) if len(parts) > 1 else nx
    return nx, ny


# Desk problem constants, shared by the acceptance suite and the CLI profile.
DESK = {
    "nx": 32,
    "ratio": 4,              # H = 4h coarse observation mesh
    "nu": 1e-3,
    "dt": 2e-3,
    "amplitude": 24.0,
    "t_spinup": 0.4,
    "window": 0.2,           # one forcing period, M = 100 snapshots
    "t_end": 0.62,
    "l": 6,
    "mu": 0.01,
    "beta": 500.0,
}


def profile_defaults(name: str) -> dict:
    """Config values a profile fills in (explicit keys win)."""
    if name == "desk":
        d = DESK
        return {
            "fom": {"mesh": f"rect:{d['nx']}", "nu": d["nu"], "dt": d["dt"],
                    "t_end": d["t_end"], "scheme": "bdf2", "forcing": "desk",
                    "forcing_amplitude": d["amplitude"],
                    "snap_t0": d["t_spinup"], "snap_t1": d["t_spinup"] + d["window"]},
            "pod": {"l": d["l"], "centered": False},
            "nudging": {"kind": "nodal", "ratio": d["ratio"]},
            "rom": {"variant": "grad-div-da-rom", "scheme": "bdf2", "l": d["l"],
                    "mu": d["mu"], "beta": d["beta"],
                    "t_start": d["t_spinup"],
                    "t_end": d["t_spinup"] + d["window"]},
            "analysis": {"qoi_exclude": 0.01},
        }

    if name.startswith("re100") or name.startswith("re1000"):
        re1000 = name.startswith("re1000")
        inaccurate = name.endswith("inaccurate")
        period = 0.22 if re1000 else 0.332
        window = round(0.64 * period, 3) if inaccurate else period
        dt = 2e-3
        # windows are shifted so the first stored step is the state near t = 5
        return {
            "fom": {"mesh": "cylinder:3" if re1000 else "cylinder:2",
                    "nu": 1e-4 if re1000 else 1e-3, "dt": dt, "t_end": 7.0,
                    "inflow_um": 1.5, "channel_height": 0.41, "forcing": "none",
                    "snap_t0": 5.0 - dt, "snap_t1": 5.0 - dt + window},
            "pod": {"l": 8, "centered": True},
            "nudging": {"kind": "nodal",
                        "ratio": 4 if not re1000 else None,
                        "coarse_mesh": None if not re1000 else "cylinder:2"},
            "rom": {"variant": "grad-div-da-rom", "scheme": "bdf2", "l": 8,
                    "mu": 0.001 if re1000 else 0.15, "beta": 500.0,
                    "t_start": 5.0, "t_end": 7.0},
            "analysis": {"qoi_exclude": 0.01},
        }
    raise ValueError(f"unknown profile {name!r}")
