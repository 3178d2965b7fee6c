"""Binary snapshot/basis files and the CSV artifacts."""

from __future__ import annotations

import struct
from pathlib import Path

import numpy as np

SNAP_MAGIC = b"GDSN"
BASIS_MAGIC = b"GDPB"
FORMAT_VERSION = 1


class FileFormatError(IOError):
    """Raised for unrecognized or corrupt artifact files."""


def _fmt(x: float) -> str:
    return f"{x:.17g}"


# -- snapshots ----------------------------------------------------------------

def write_snapshots(path, snapshots) -> None:
    """GDSN: magic, u32 version, u64 M, u64 n_u, f64 dt, f64 t_first, then
    M little-endian f64 coefficient records."""
    t_first = float(snapshots.times[0]) if snapshots.M else 0.0
    with open(path, "wb") as fh:
        fh.write(SNAP_MAGIC)
        fh.write(struct.pack("<IQQdd", FORMAT_VERSION, snapshots.M,
                             snapshots.n_u, snapshots.dt, t_first))
        fh.write(np.ascontiguousarray(snapshots.U.T, dtype="<f8").tobytes())


def read_snapshots(path, spaces=None):
    from .pod import SnapshotSet

    with open(path, "rb") as fh:
        magic = fh.read(4)
        if magic != SNAP_MAGIC:
            raise FileFormatError(f"{path}: bad magic {magic!r}")
        version, m, n_u, dt, t_first = struct.unpack("<IQQdd", fh.read(36))
        if version != FORMAT_VERSION:
            raise FileFormatError(f"{path}: unsupported version {version}")
        data = np.frombuffer(fh.read(8 * m * n_u), dtype="<f8")
    if data.size != m * n_u:
        raise FileFormatError(f"{path}: truncated snapshot payload")
    U = data.reshape(m, n_u).T.copy()
    times = t_first + dt * np.arange(m)
    return SnapshotSet(U, times, dt, spaces)


# -- basis ---------------------------------------------------------------------

def write_basis(path, basis) -> None:
    """GDPB: magic, u32 version, u64 l, u64 n_u, u32 centered, u64 d_p,
    eigenvalues, mean when centered, then the l mode vectors."""
    n_u = basis.modes.shape[0]
    with open(path, "wb") as fh:
        fh.write(BASIS_MAGIC)
        fh.write(struct.pack("<IQQIQ", FORMAT_VERSION, basis.l, n_u,
                             int(basis.centered), basis.d_p))
        fh.write(np.ascontiguousarray(basis.eigenvalues, dtype="<f8").tobytes())
        if basis.centered:
            fh.write(np.ascontiguousarray(basis.mean, dtype="<f8").tobytes())
        fh.write(np.ascontiguousarray(basis.modes.T, dtype="<f8").tobytes())


def read_basis(path, mass=None, stiffness=None):
    """Load a basis file; S and its norm are recomputed when a stiffness
    operator is supplied (they are not stored)."""
    import scipy.linalg as la

    from .pod import PodBasis

    with open(path, "rb") as fh:
        magic = fh.read(4)
        if magic != BASIS_MAGIC:
            raise FileFormatError(f"{path}: bad magic {magic!r}")
        version, l, n_u, centered, d_p = struct.unpack("<IQQIQ", fh.read(32))
        if version != FORMAT_VERSION:
            raise FileFormatError(f"{path}: unsupported version {version}")
        eigenvalues = np.frombuffer(fh.read(8 * d_p), dtype="<f8").copy()
        mean = None
        if centered:
            mean = np.frombuffer(fh.read(8 * n_u), dtype="<f8").copy()
        data = np.frombuffer(fh.read(8 * l * n_u), dtype="<f8")
    if data.size != l * n_u:
        raise FileFormatError(f"{path}: truncated mode payload")
    modes = data.reshape(l, n_u).T.copy()
    S = S_norm2 = None
    if stiffness is not None:
        S = modes.T @ (stiffness @ modes)
        S = 0.5 * (S + S.T)
        S_norm2 = float(la.eigvalsh(S)[-1])
    return PodBasis(eigenvalues, modes, mass, mean, S, S_norm2)


# -- CSV artifacts ---------------------------------------------------------------

def write_qoi_csv(path, qoi) -> None:
    with open(path, "w") as fh:
        fh.write("t,e_kin,c_d,c_l\n")
        for t, e, cd, cl in zip(qoi.times, qoi.e_kin, qoi.c_d, qoi.c_l):
            fh.write(f"{_fmt(t)},{_fmt(e)},{_fmt(cd)},{_fmt(cl)}\n")


def read_qoi_csv(path):
    from .analysis import QoISeries

    data = np.genfromtxt(path, delimiter=",", names=True)
    data = np.atleast_1d(data)
    return QoISeries(data["t"], data["e_kin"], data["c_d"], data["c_l"])


def write_trajectory_csv(path, times, coeffs) -> None:
    """coeffs holds one column per step, one row per mode."""
    l = coeffs.shape[0]
    with open(path, "w") as fh:
        fh.write("t," + ",".join(f"a_{k + 1}" for k in range(l)) + "\n")
        for j, t in enumerate(times):
            fh.write(_fmt(t) + "," + ",".join(_fmt(v) for v in coeffs[:, j]) + "\n")


def read_trajectory_csv(path):
    with open(path) as fh:
        header = fh.readline().strip().split(",")
    if header[0] != "t" or len(header) < 2:
        raise FileFormatError(f"{path}: expected 't,a_1,...' header")
    raw = np.loadtxt(path, delimiter=",", skiprows=1, ndmin=2)
    return raw[:, 0], raw[:, 1:].T


def write_eigenvalues_csv(path, eigenvalues) -> None:
    with open(path, "w") as fh:
        fh.write("k,lambda\n")
        for k, lam in enumerate(eigenvalues, start=1):
            fh.write(f"{k},{_fmt(lam)}\n")


def write_report_csv(path, report) -> None:
    with open(path, "w") as fh:
        fh.write("metric,value\n")
        for k, v in report.rows():
            fh.write(f"{k},{_fmt(v)}\n")


def write_error_series_csv(path, report) -> None:
    with open(path, "w") as fh:
        fh.write("t,err_l2,err_proj\n")
        for t, a, b in zip(report.times, report.err_l2, report.err_proj):
            fh.write(f"{_fmt(t)},{_fmt(a)},{_fmt(b)}\n")
