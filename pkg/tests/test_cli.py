import json
import os
from pathlib import Path

import numpy as np
import pytest

from gdrom.cli import main
from gdrom.config import ConfigError, parse_config, parse_config_text, serialize

MINI_CONFIG = """
[fom]
mesh = rect:6
nu = 0.05
dt = 0.02
t_end = 0.4
scheme = bdf2
forcing = desk
forcing_amplitude = 2.0
snap_t0 = 0.2
snap_t1 = 0.4

[pod]
l = 4

[nudging]
kind = nodal
ratio = 2

[rom]
variant = grad-div-da-rom
scheme = bdf2
mu = 0.01
beta = 50
t_start = 0.2
t_end = 0.4

[analysis]
qoi_exclude = 0.02

[sweep]
betas = 10,50
variants = da-rom,grad-div-da-rom
"""


@pytest.fixture()
def mini_config(tmp_path):
    path = tmp_path / "mini.ini"
    path.write_text(MINI_CONFIG)
    return path


def test_parse_minimal_profile_fills_defaults(tmp_path):
    path = tmp_path / "desk.ini"
    path.write_text("[pipeline]\nprofile = desk\n")
    cfg = parse_config(path)
    assert cfg.get("fom", "mesh") == "rect:32"
    assert cfg.get("fom", "nu") == 1e-3
    assert cfg.get("rom", "beta") == 500.0
    assert cfg.get("pod", "l") == 6


def test_parse_cylinder_profiles(tmp_path):
    for name, mu, window in (("re100-full", 0.15, 0.332),
                             ("re100-inaccurate", 0.15, 0.212),
                             ("re1000-full", 0.001, 0.22),
                             ("re1000-inaccurate", 0.001, 0.141)):
        path = tmp_path / f"{name}.ini"
        path.write_text(f"[pipeline]\nprofile = {name}\n")
        cfg = parse_config(path)
        assert cfg.get("rom", "mu") == mu
        assert cfg.get("pod", "l") == 8
        assert cfg.get("pod", "centered") is True
        t0, t1 = cfg.get("fom", "snap_t0"), cfg.get("fom", "snap_t1")
        assert t1 - t0 == pytest.approx(window)
        assert cfg.get("fom", "mesh").startswith("cylinder:")


def test_explicit_keys_override_profile(tmp_path):
    path = tmp_path / "desk.ini"
    path.write_text("[pipeline]\nprofile = desk\n[rom]\nbeta = 100\n")
    cfg = parse_config(path)
    assert cfg.beta == 100.0
    assert cfg.get("fom", "nu") == 1e-3


def test_unknown_key_rejected(tmp_path):
    path = tmp_path / "bad.ini"
    path.write_text("[fom]\nmesh = rect:4\nwarp_speed = 9\n")
    with pytest.raises(ConfigError, match="fom.warp_speed"):
        parse_config(path)


def test_unknown_section_rejected(tmp_path):
    path = tmp_path / "bad.ini"
    path.write_text("[warp]\nspeed = 9\n")
    with pytest.raises(ConfigError, match="warp"):
        parse_config(path)


def test_variant_beta_inconsistency_rejected(tmp_path):
    path = tmp_path / "bad.ini"
    path.write_text("[rom]\nvariant = g-rom\nbeta = 10\n")
    with pytest.raises(ConfigError, match="rom.variant"):
        parse_config(path)


def test_da_variant_needs_beta(tmp_path):
    path = tmp_path / "bad.ini"
    path.write_text("[rom]\nvariant = da-rom\nbeta = 0\n")
    with pytest.raises(ConfigError, match="beta"):
        parse_config(path)


def test_missing_mesh_file_rejected(tmp_path):
    path = tmp_path / "bad.ini"
    path.write_text("[fom]\nmesh = nope.txt\n[rom]\nvariant = g-rom\n")
    with pytest.raises(ConfigError, match="not found"):
        parse_config(path)


def test_beta_alias_consistency(tmp_path):
    path = tmp_path / "bad.ini"
    path.write_text("[nudging]\nbeta = 10\n[rom]\nvariant = da-rom\nbeta = 20\n")
    with pytest.raises(ConfigError, match="conflicts"):
        parse_config(path)
    path.write_text("[nudging]\nbeta = 10\n[rom]\nvariant = da-rom\n")
    cfg = parse_config(path)
    assert cfg.beta == 10.0


def test_serialize_roundtrip(mini_config):
    cfg = parse_config(mini_config)
    text = serialize(cfg)
    cfg2 = parse_config_text(text)
    assert cfg2.sections == cfg.sections
    assert serialize(cfg2) == text


def test_config_error_exit_code(tmp_path):
    path = tmp_path / "bad.ini"
    path.write_text("[rom]\nvariant = g-rom\nbeta = 10\n")
    assert main(["rom-run", "--config", str(path), "--out", str(tmp_path)]) == 2


def test_missing_artifact_exit_code(mini_config, tmp_path):
    rc = main(["pod-build", "--config", str(mini_config), "--out", str(tmp_path / "ws")])
    assert rc == 4


def test_pipeline_end_to_end(mini_config, tmp_path, capsys):
    ws = tmp_path / "ws"
    assert main(["fom-run", "--config", str(mini_config), "--out", str(ws),
                 "--quiet"]) == 0
    assert (ws / "fom" / "snapshots.gdsn").exists()
    assert (ws / "fom" / "qoi.csv").exists()
    assert (ws / "fom" / "manifest.json").exists()

    assert main(["pod-build", "--config", str(mini_config), "--out", str(ws)]) == 0
    assert (ws / "pod" / "basis.gdpb").exists()
    eig_lines = (ws / "pod" / "eigenvalues.csv").read_text().splitlines()
    assert eig_lines[0] == "k,lambda"

    from gdrom.io import read_basis
    basis = read_basis(ws / "pod" / "basis.gdpb")
    assert basis.l == 4      # pod-build on a 10-snapshot set with l = 4

    assert main(["rom-run", "--config", str(mini_config), "--out", str(ws)]) == 0
    rom_dir = ws / "rom-grad-div-da-rom-b50"
    traj = (rom_dir / "trajectory.csv").read_text().splitlines()
    assert traj[0] == "t,a_1,a_2,a_3,a_4"

    assert main(["diagnose", "--config", str(mini_config), "--out", str(ws)]) == 0
    report = (ws / "diagnose" / "report.csv").read_text()
    assert report.startswith("metric,value")
    assert "l2l2_error" in report

    manifest = json.loads((ws / "diagnose" / "manifest.json").read_text())
    assert manifest["command"] == "diagnose"
    assert manifest["inputs"]           # hashes of upstream artifacts
    assert "parameters" in manifest


def test_snapshot_count_contract(mini_config, tmp_path):
    ws = tmp_path / "ws"
    main(["fom-run", "--config", str(mini_config), "--out", str(ws), "--quiet"])
    from gdrom.io import read_snapshots
    snaps = read_snapshots(ws / "fom" / "snapshots.gdsn")
    assert snaps.M == 10     # window 0.2 s at dt 0.02


def test_sweep_grid(mini_config, tmp_path):
    ws = tmp_path / "ws"
    main(["fom-run", "--config", str(mini_config), "--out", str(ws), "--quiet"])
    main(["pod-build", "--config", str(mini_config), "--out", str(ws)])
    assert main(["sweep", "--config", str(mini_config), "--out", str(ws)]) == 0
    lines = (ws / "sweep" / "comparison.csv").read_text().splitlines()
    assert len(lines) == 1 + 4           # 2 betas x 2 variants
    run_dirs = [p.name for p in ws.iterdir() if p.name.startswith("rom-")]
    assert len(run_dirs) == 4


def test_sweep_parallel_workers_match_serial(mini_config, tmp_path, monkeypatch):
    results = {}
    for workers in ("1", "2"):
        ws = tmp_path / f"w{workers}"
        monkeypatch.setenv("GDROM_THREADS", workers)
        main(["fom-run", "--config", str(mini_config), "--out", str(ws), "--quiet"])
        main(["pod-build", "--config", str(mini_config), "--out", str(ws)])
        assert main(["sweep", "--config", str(mini_config), "--out", str(ws)]) == 0
        results[workers] = (ws / "sweep" / "comparison.csv").read_text()
    # same grid, same metrics up to assembly reduction order
    a = [r.split(",") for r in results["1"].splitlines()[1:]]
    b = [r.split(",") for r in results["2"].splitlines()[1:]]
    for ra, rb in zip(a, b):
        assert ra[:2] == rb[:2]
        assert float(ra[2]) == pytest.approx(float(rb[2]), rel=1e-10)


def test_fom_run_deterministic(mini_config, tmp_path):
    outs = []
    for name in ("a", "b"):
        ws = tmp_path / name
        main(["fom-run", "--config", str(mini_config), "--out", str(ws), "--quiet"])
        outs.append((ws / "fom" / "qoi.csv").read_bytes())
    assert outs[0] == outs[1]


def test_diagnose_zero_error_on_identical_inputs(tmp_path):
    """Exactly low-rank reference plus its projected trajectory: zero report."""
    cfg_text = MINI_CONFIG.replace("l = 4", "l = 40")
    path = tmp_path / "full.ini"
    path.write_text(cfg_text)
    ws = tmp_path / "ws"
    main(["fom-run", "--config", str(path), "--out", str(ws), "--quiet"])

    from gdrom.io import (read_basis, read_snapshots, write_snapshots,
                          write_trajectory_csv)
    from gdrom.mesh import generate_rect_mesh
    from gdrom.spaces import build_spaces
    from gdrom.assemble import assemble_operators
    from gdrom.pod import SnapshotSet, project

    mesh = generate_rect_mesh(6, 6)
    spaces = build_spaces(mesh)
    ops = assemble_operators(mesh, spaces)

    # replace the snapshots with an exactly rank-4 set so the basis spans them
    rng = np.random.default_rng(42)
    W = rng.standard_normal((spaces.n_u, 4))
    C = rng.standard_normal((4, 10))
    old = read_snapshots(ws / "fom" / "snapshots.gdsn", spaces)
    snaps = SnapshotSet(W @ C, old.times, old.dt, spaces)
    write_snapshots(ws / "fom" / "snapshots.gdsn", snaps)
    main(["pod-build", "--config", str(path), "--out", str(ws)])

    basis = read_basis(ws / "pod" / "basis.gdpb", ops.mass)
    assert basis.l == 4
    coeffs = np.column_stack([project(snaps.U[:, j], basis)
                              for j in range(snaps.M)])
    rom_dir = ws / "rom-grad-div-da-rom-b50"
    rom_dir.mkdir()
    write_trajectory_csv(rom_dir / "trajectory.csv", snaps.times, coeffs)
    from gdrom.io import write_qoi_csv
    from gdrom.analysis import QoISeries
    e = 0.5 * np.einsum("un,un->n", snaps.U, (ops.mass @ snaps.U))
    z = np.zeros(snaps.M)
    qoi = QoISeries(snaps.times, e, z, z)
    write_qoi_csv(rom_dir / "qoi.csv", qoi)
    write_qoi_csv(ws / "fom" / "qoi.csv", qoi)   # identical reference QoI

    assert main(["diagnose", "--config", str(path), "--out", str(ws)]) == 0
    report = dict(line.split(",") for line in
                  (ws / "diagnose" / "report.csv").read_text().splitlines()[1:])
    assert float(report["l2l2_error"]) <= 1e-10
    assert float(report["max_dev_e_kin"]) <= 1e-12
