"""The gdrom command line: fom-run, pod-build, rom-run, diagnose, sweep.

Each subcommand reads one config file and works inside an output workspace:
fom-run writes fom/, pod-build reads fom/ and writes pod/, rom-run writes
rom-<variant>-b<beta>/, diagnose writes diagnose/ next to them. Every stage
directory gets a manifest with input hashes and the resolved parameters.
"""

from __future__ import annotations

import argparse
import hashlib
import json
import os
import sys
import time
from concurrent.futures import ThreadPoolExecutor
from pathlib import Path

import numpy as np

EXIT_OK = 0
EXIT_CONFIG = 2
EXIT_NUMERICAL = 3
EXIT_IO = 4


def _sha256(path: Path) -> str:
    h = hashlib.sha256()
    with open(path, "rb") as fh:
        for chunk in iter(lambda: fh.read(1 << 20), b""):
            h.update(chunk)
    return h.hexdigest()


def _write_manifest(stage_dir: Path, command: str, cfg, inputs, t_start: float,
                    extra=None):
    manifest = {
        "command": command,
        "config_source": cfg.source,
        "profile": cfg.profile,
        "parameters": {sec: {k: v for k, v in keys.items() if v is not None}
                       for sec, keys in cfg.sections.items()},
        "inputs": {str(p): _sha256(Path(p)) for p in inputs if Path(p).is_file()},
        "wall_time_s": round(time.time() - t_start, 3),
    }
    if extra:
        manifest["diagnostics"] = extra
    with open(stage_dir / "manifest.json", "w") as fh:
        json.dump(manifest, fh, indent=2, sort_keys=True, default=str)
        fh.write("\n")


def _require_artifact(path: Path, producer: str) -> Path:
    if not path.exists():
        raise FileNotFoundError(
            f"missing artifact {path}; run `gdrom {producer}` first")
    return path


def _build_fine(cfg):
    from .assemble import assemble_operators
    from .profiles import build_fine_mesh
    from .spaces import build_spaces

    spec = cfg.require("fom", "mesh")
    mesh = build_fine_mesh(spec)
    spaces = build_spaces(mesh)
    return mesh, spaces, assemble_operators(mesh, spaces)


def _fom_config(cfg):
    from .fom import FomConfig
    from .profiles import forcing_by_name

    f = cfg.sections["fom"]
    snap = None
    if f["snap_t0"] is not None and f["snap_t1"] is not None:
        snap = (f["snap_t0"], f["snap_t1"])
    return FomConfig(
        nu=cfg.require("fom", "nu"), dt=cfg.require("fom", "dt"),
        t_end=cfg.require("fom", "t_end"), scheme=f["scheme"],
        inflow_um=f["inflow_um"], channel_height=f["channel_height"],
        forcing=forcing_by_name(f["forcing"], f["forcing_amplitude"]),
        snap_window=snap, snap_stride=f["snap_stride"],
        qoi_diameter=f["qoi_diameter"], qoi_ubar=f["qoi_ubar"])


def cmd_fom_run(cfg, out: Path, progress: bool = True) -> None:
    from .fom import run_fom
    from .mesh import save_mesh

    t0 = time.time()
    mesh, spaces, ops = _build_fine(cfg)
    stage = out / "fom"
    stage.mkdir(parents=True, exist_ok=True)
    save_mesh(mesh, stage / "mesh.txt")
    run_fom(_fom_config(cfg), mesh, spaces, ops, out_dir=stage, progress=progress)
    _write_manifest(stage, "fom-run", cfg, [], t0)
    print(f"fom-run: wrote {stage}/snapshots.gdsn and qoi.csv")


def cmd_pod_build(cfg, out: Path) -> None:
    from .io import read_snapshots, write_basis, write_eigenvalues_csv
    from .pod import assemble_modes, build_correlation, eigendecompose

    t0 = time.time()
    snap_path = _require_artifact(out / "fom" / "snapshots.gdsn", "fom-run")
    mesh, spaces, ops = _build_fine(cfg)
    snaps = read_snapshots(snap_path, spaces)
    if snaps.n_u != spaces.n_u:
        raise ValueError(f"snapshot width {snaps.n_u} does not match mesh ({spaces.n_u})")
    centered = cfg.get("pod", "centered")
    K = build_correlation(snaps, ops.mass, centered)
    eig = eigendecompose(K, cfg.get("pod", "drop_tol"))
    l = min(cfg.get("pod", "l"), eig.d_p)
    basis = assemble_modes(snaps, eig, l, ops.mass, ops.stiffness, centered)
    stage = out / "pod"
    stage.mkdir(parents=True, exist_ok=True)
    write_basis(stage / "basis.gdpb", basis)
    write_eigenvalues_csv(stage / "eigenvalues.csv", eig.values)
    _write_manifest(stage, "pod-build", cfg, [snap_path], t0)
    print(f"pod-build: {basis.l} modes (d_p = {eig.d_p}) -> {stage}/basis.gdpb")


def _rom_stage_name(cfg) -> str:
    return f"rom-{cfg.variant.value}-b{cfg.beta:g}"


def _run_rom_stage(cfg, out: Path):
    from .io import read_basis, read_snapshots, write_qoi_csv, write_trajectory_csv
    from .analysis import QoISeries, drag_lift, stokes_test_functions
    from .nudging import build_coarse_interp, build_nudging_algebra
    from .pod import PodBasis
    from .profiles import build_coarse_mesh, forcing_by_name
    from .rom import (RomSchedule, build_rom_system, reconstruct_trajectory,
                      run_rom)
    from .spaces import build_spaces

    t0 = time.time()
    snap_path = _require_artifact(out / "fom" / "snapshots.gdsn", "fom-run")
    basis_path = _require_artifact(out / "pod" / "basis.gdpb", "pod-build")
    mesh, spaces, ops = _build_fine(cfg)
    snaps = read_snapshots(snap_path, spaces)
    basis = read_basis(basis_path, ops.mass, ops.stiffness)
    l = min(cfg.rom_l, basis.l)
    basis = PodBasis(basis.eigenvalues, basis.modes[:, :l], ops.mass, basis.mean,
                     basis.S[:l, :l] if basis.S is not None else None, None)

    variant = cfg.variant
    mu, beta = variant.resolve_parameters(cfg.get("rom", "mu"), cfg.beta)
    nudge = None
    diagnostics = {}
    if variant.uses_nudging:
        from .analysis import nudging_rate_scale
        from .nudging import estimate_constants, probe_fields

        coarse = build_coarse_mesh(cfg, cfg.require("fom", "mesh"))
        interp = build_coarse_interp(spaces, coarse, cfg.get("nudging", "kind"))
        nudge = build_nudging_algebra(basis, interp, snaps)
        c0, ci = estimate_constants(interp, ops, probe_fields(spaces))
        diagnostics = {"c0_est": c0, "cI_est": ci, "coarse_h": interp.H,
                       "rate_scale": nudging_rate_scale(cfg.require("fom", "nu"),
                                                        ci, interp.H, beta)}

    forcing = forcing_by_name(cfg.get("fom", "forcing"),
                              cfg.get("fom", "forcing_amplitude"))
    system = build_rom_system(basis, ops, nudge, cfg.require("fom", "nu"),
                              mu, beta, forcing=forcing)
    schedule = RomSchedule(cfg.require("rom", "t_start"), cfg.require("rom", "t_end"),
                           cfg.require("fom", "dt"), cfg.get("rom", "scheme"))

    a0 = None
    if not variant.uses_nudging:
        # non-DA variants start from the projection of the reference state
        from .pod import project
        j0 = int(np.argmin(np.abs(snaps.times - schedule.t_start)))
        a0 = project(snaps.U[:, j0], basis)

    stage = out / _rom_stage_name(cfg)
    stage.mkdir(parents=True, exist_ok=True)
    try:
        traj = run_rom(variant, system, schedule, a0=a0)
    except Exception as exc:
        partial = getattr(exc, "partial", None)
        if partial is not None:
            write_trajectory_csv(stage / "trajectory.csv", partial.times, partial.coeffs)
        raise

    write_trajectory_csv(stage / "trajectory.csv", traj.times, traj.coeffs)
    fields = reconstruct_trajectory(basis, traj)
    if "cylinder" in mesh.boundary_tags:
        vd, vl = stokes_test_functions(ops)
        cds, cls = [0.0], [0.0]
        for j in range(1, fields.shape[1]):
            cd, cl = drag_lift(ops, fields[:, j], fields[:, j - 1],
                               traj.times[j] - traj.times[j - 1],
                               cfg.require("fom", "nu"), vd, vl,
                               cfg.get("fom", "qoi_diameter"), cfg.get("fom", "qoi_ubar"))
            cds.append(cd)
            cls.append(cl)
        qoi = QoISeries(traj.times, traj.energy, np.asarray(cds), np.asarray(cls))
    else:
        zeros = np.zeros_like(traj.energy)
        qoi = QoISeries(traj.times, traj.energy, zeros, zeros)
    write_qoi_csv(stage / "qoi.csv", qoi)
    _write_manifest(stage, "rom-run", cfg, [snap_path, basis_path], t0,
                    extra=diagnostics)
    return stage, traj, fields, ops, basis, snaps, qoi


def cmd_rom_run(cfg, out: Path) -> None:
    stage, traj, *_ = _run_rom_stage(cfg, out)
    print(f"rom-run: {traj.coeffs.shape[1] - 1} steps -> {stage}/trajectory.csv")


def cmd_diagnose(cfg, out: Path) -> None:
    from .analysis import error_report, report_table
    from .io import (read_basis, read_qoi_csv, read_snapshots, read_trajectory_csv,
                     write_error_series_csv, write_report_csv)
    from .pod import PodBasis

    t0 = time.time()
    snap_path = _require_artifact(out / "fom" / "snapshots.gdsn", "fom-run")
    basis_path = _require_artifact(out / "pod" / "basis.gdpb", "pod-build")
    rom_dir = _require_artifact(out / _rom_stage_name(cfg), "rom-run")
    traj_path = _require_artifact(rom_dir / "trajectory.csv", "rom-run")

    mesh, spaces, ops = _build_fine(cfg)
    snaps = read_snapshots(snap_path, spaces)
    basis = read_basis(basis_path, ops.mass, ops.stiffness)
    times, coeffs = read_trajectory_csv(traj_path)
    l = coeffs.shape[0]
    basis = PodBasis(basis.eigenvalues, basis.modes[:, :l], ops.mass, basis.mean)
    fields = basis.modes @ coeffs
    if basis.centered:
        fields = fields + basis.mean[:, None]

    rom_qoi = read_qoi_csv(rom_dir / "qoi.csv")
    ref_qoi = read_qoi_csv(out / "fom" / "qoi.csv")
    exclude = cfg.get("analysis", "qoi_exclude")
    window = (times[0] + exclude, times[-1])
    report = error_report(times, fields, snaps, basis, ops,
                          rom_qoi=rom_qoi, ref_qoi=ref_qoi, qoi_window=window)

    stage = out / "diagnose"
    stage.mkdir(parents=True, exist_ok=True)
    write_report_csv(stage / "report.csv", report)
    write_error_series_csv(stage / "error_series.csv", report)
    table = report_table(report, title=f"{cfg.variant.value} vs reference")
    (stage / "report.txt").write_text(table)
    _write_manifest(stage, "diagnose", cfg, [snap_path, basis_path, traj_path], t0)
    print(table, end="")


def cmd_sweep(cfg, out: Path) -> None:
    """Run the beta x variant grid and tabulate the error levels."""
    import copy

    from .analysis import error_report
    from .io import write_report_csv

    t0 = time.time()
    betas = cfg.get("sweep", "betas")
    variants = cfg.get("sweep", "variants")
    jobs = []
    for name in variants:
        for beta in betas:
            c = copy.deepcopy(cfg)
            c.sections["rom"]["variant"] = name
            c.sections["rom"]["beta"] = beta if c.variant.uses_nudging else 0.0
            if not c.variant.uses_grad_div:
                c.sections["rom"]["mu"] = 0.0
            jobs.append(c)

    def one(c):
        stage, traj, fields, ops, basis, snaps, qoi = _run_rom_stage(c, out)
        exclude = c.get("analysis", "qoi_exclude")
        window = (traj.times[0] + exclude, traj.times[-1])
        from .io import read_qoi_csv
        ref_qoi = read_qoi_csv(out / "fom" / "qoi.csv")
        rep = error_report(traj.times, fields, snaps, basis, ops,
                           rom_qoi=qoi, ref_qoi=ref_qoi, qoi_window=window)
        write_report_csv(stage / "report.csv", rep)
        return c.variant.value, c.beta, rep

    workers = max(1, int(os.environ.get("GDROM_THREADS", "1")))
    if workers > 1:
        with ThreadPoolExecutor(max_workers=workers) as ex:
            results = list(ex.map(one, jobs))
    else:
        results = [one(c) for c in jobs]

    stage = out / "sweep"
    stage.mkdir(parents=True, exist_ok=True)
    lines = ["variant,beta,l2l2_error,max_dev_e_kin,max_dev_c_d,max_dev_c_l"]
    rows = ["variant          beta     l2l2        dE_kin      dc_D        dc_L",
            "-" * 68]
    for name, beta, rep in results:
        dev = rep.qoi_max_dev
        lines.append(f"{name},{beta:g},{rep.l2l2:.17g},{dev.get('e_kin', 0):.17g},"
                     f"{dev.get('c_d', 0):.17g},{dev.get('c_l', 0):.17g}")
        rows.append(f"{name:<16} {beta:<8g} {rep.l2l2:<11.4e} "
                    f"{dev.get('e_kin', 0):<11.4e} {dev.get('c_d', 0):<11.4e} "
                    f"{dev.get('c_l', 0):<11.4e}")
    (stage / "comparison.csv").write_text("\n".join(lines) + "\n")
    (stage / "comparison.txt").write_text("\n".join(rows) + "\n")
    _write_manifest(stage, "sweep", cfg, [], t0)
    print("\n".join(rows))


def main(argv=None) -> int:
    parser = argparse.ArgumentParser(
        prog="gdrom",
        description="grad-div stabilized nudging POD-ROM pipeline")
    sub = parser.add_subparsers(dest="command", required=True)
    for name, help_ in [("fom-run", "run the full-order solver and store snapshots"),
                        ("pod-build", "build the POD basis from stored snapshots"),
                        ("rom-run", "integrate the reduced model"),
                        ("diagnose", "compare a ROM run against the reference"),
                        ("sweep", "run the beta x variant comparison grid")]:
        p = sub.add_parser(name, help=help_)
        p.add_argument("--config", required=True, help="INI config file")
        p.add_argument("--out", default="gdrom-out", help="workspace directory")
        if name == "fom-run":
            p.add_argument("--quiet", action="store_true")
    args = parser.parse_args(argv)

    from .config import ConfigError, parse_config
    from .fom import StepError
    from .projections import SolverError
    from .rom import RomStepError

    try:
        cfg = parse_config(args.config)
        out = Path(args.out)
        if args.command == "fom-run":
            cmd_fom_run(cfg, out, progress=not args.quiet)
        elif args.command == "pod-build":
            cmd_pod_build(cfg, out)
        elif args.command == "rom-run":
            cmd_rom_run(cfg, out)
        elif args.command == "diagnose":
            cmd_diagnose(cfg, out)
        elif args.command == "sweep":
            cmd_sweep(cfg, out)
    except (StepError, RomStepError, SolverError, np.linalg.LinAlgError) as exc:
        print(f"numerical failure: {exc}", file=sys.stderr)
        return EXIT_NUMERICAL
    except (ConfigError, ValueError) as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except OSError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_IO
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
