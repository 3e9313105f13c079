import json

import numpy as np
import pytest

from sdfseg import field_net
from sdfseg.cli import main
from sdfseg.config import ConfigError, RunConfig
from sdfseg.shape_data import load_labeled_mesh, read_ply_comments

SPEC = {
    "primitives": [
        {"kind": "sphere", "center": [0.0, 0.0, 0.4], "radius": 0.45, "label": 0},
        {"kind": "cylinder", "center": [0.0, 0.0, -0.3], "radius": 0.3,
         "half_height": 0.5, "label": 1},
    ]
}

RUN = {
    "seed": 3,
    "surface_samples": 2000,
    "train": {"iterations": 5},
    "sampler": {"n_manifold": 64, "n_nonmanifold": 64, "n_shell": 32},
    "grid": {"resolution": 24, "chunk_size": 50000},
    "metrics": {"eval_samples": 500},
}


@pytest.fixture
def workdir(tmp_path):
    (tmp_path / "spec.json").write_text(json.dumps(SPEC))
    (tmp_path / "run.json").write_text(json.dumps(RUN))
    return tmp_path


def _synth(workdir, out="gt.ply", extra=()):
    rc = main(["synth", "--spec", str(workdir / "spec.json"),
               "--out", str(workdir / out), "--resolution", "48", *extra])
    assert rc == 0
    return workdir / out


def _fit(workdir, mesh, out="model.ckpt", extra=()):
    rc = main(["fit", "--mesh", str(mesh), "--config", str(workdir / "run.json"),
               "--out", str(workdir / out), *extra])
    assert rc == 0
    return workdir / out


def test_synth_produces_loadable_labeled_mesh(workdir):
    path = _synth(workdir)
    mesh = load_labeled_mesh(path)
    assert len(mesh.faces) > 0
    assert set(np.unique(mesh.face_labels)) == {0, 1}
    comments = read_ply_comments(path)
    assert any("sdfseg-config" in c for c in comments)
    assert any("sdfseg-input-sha256" in c for c in comments)


def test_synth_deterministic_bytes(workdir):
    a = _synth(workdir, out="a.ply")
    b = _synth(workdir, out="b.ply")
    assert a.read_bytes() == b.read_bytes()


def test_fit_writes_checkpoint_log_and_sidecar(workdir):
    mesh = _synth(workdir)
    ckpt = _fit(workdir, mesh)
    assert ckpt.exists()
    sidecar = json.loads((workdir / "model.ckpt.json").read_text())
    assert sidecar["config"]["weights"]["lam_dm"] == 7000.0
    assert "normalization" in sidecar and "input_sha256" in sidecar
    log_lines = (workdir / "model.ckpt.log.jsonl").read_text().strip().split("\n")
    header = json.loads(log_lines[0])["header"]
    weights = header["config"]["weights"]
    assert (weights["lam_dm"], weights["lam_dnm"], weights["lam_eik"],
            weights["lam_odw"], weights["lam_seg"]) == (7000.0, 600.0, 50.0, 10.0, 100.0)
    assert len(log_lines) == 1 + 5
    entry = json.loads(log_lines[1])
    assert {"iteration", "dm", "dnm", "eik", "odw", "seg", "total", "wall_time"} <= set(entry)


def test_fit_zero_iterations_equals_fresh_init(workdir):
    mesh = _synth(workdir)
    ckpt = _fit(workdir, mesh, extra=("--iterations", "0"))
    net = field_net.load_checkpoint(ckpt)
    init_ss, _ = np.random.SeedSequence(3).spawn(2)
    reference = field_net.init("relu", 2, seed=init_ss)
    for name in net.params:
        np.testing.assert_array_equal(net.params[name], reference.params[name])


def test_fit_checkpoints_are_deterministic(workdir):
    mesh = _synth(workdir)
    a = _fit(workdir, mesh, out="a.ckpt")
    b = _fit(workdir, mesh, out="b.ckpt")
    assert a.read_bytes() == b.read_bytes()
    assert (workdir / "a.ckpt.json").read_bytes() == (workdir / "b.ckpt.json").read_bytes()


def test_extract_and_chunk_invariance(workdir):
    mesh = _synth(workdir)
    ckpt = _fit(workdir, mesh)
    rc = main(["extract", "--checkpoint", str(ckpt), "--out", str(workdir / "p1.ply"),
               "--chunk-size", "1000"])
    assert rc == 0
    rc = main(["extract", "--checkpoint", str(ckpt), "--out", str(workdir / "p2.ply"),
               "--chunk-size", "1000000"])
    assert rc == 0
    assert (workdir / "p1.ply").read_bytes() == (workdir / "p2.ply").read_bytes()
    pred = load_labeled_mesh(workdir / "p1.ply")
    assert len(pred.faces) > 0
    assert pred.vertex_labels is not None


def test_extract_resolution_flag(workdir):
    mesh = _synth(workdir)
    ckpt = _fit(workdir, mesh)
    rc = main(["extract", "--checkpoint", str(ckpt), "--out", str(workdir / "lo.ply"),
               "--resolution", "16"])
    assert rc == 0
    assert len(load_labeled_mesh(workdir / "lo.ply").faces) > 0


def test_default_grid_resolution_is_256():
    assert RunConfig().grid.resolution == 256


def test_eval_self_is_perfect(workdir):
    gt = _synth(workdir)
    rc = main(["eval", "--gt", str(gt), "--pred", str(gt), "--config",
               str(workdir / "run.json"), "--out", str(workdir / "report.json")])
    assert rc == 0
    report = json.loads((workdir / "report.json").read_text())
    m = report["metrics"]
    assert m["cd_l1"] == 0.0
    assert m["miou"] == 1.0
    assert "parts_gt" in m and "parts_pred" in m
    assert report["inputs"]["gt_sha256"] == report["inputs"]["pred_sha256"]


def test_eval_report_deterministic(workdir):
    gt = _synth(workdir)
    for name in ("r1.json", "r2.json"):
        main(["eval", "--gt", str(gt), "--pred", str(gt), "--config",
              str(workdir / "run.json"), "--out", str(workdir / name)])
    assert (workdir / "r1.json").read_bytes() == (workdir / "r2.json").read_bytes()


def test_eval_aggregate_directory(workdir):
    gt = _synth(workdir)
    reports = workdir / "reports"
    reports.mkdir()
    for i, seed in enumerate((3, 4, 5)):
        main(["eval", "--gt", str(gt), "--pred", str(gt), "--config",
              str(workdir / "run.json"), "--seed", str(seed),
              "--out", str(reports / f"shape{i}.json")])
    rc = main(["eval", "--aggregate", str(reports), "--out", str(workdir / "agg.csv")])
    assert rc == 0
    rows = (workdir / "agg.csv").read_text().strip().split("\n")
    assert rows[0] == "variant,n,metric,mean,std"
    assert any(row.startswith("unknown,3,miou,") for row in rows)
    assert (workdir / "agg.correlations.csv").exists()


def test_full_pipeline_eval(workdir):
    gt = _synth(workdir)
    ckpt = _fit(workdir, gt)
    main(["extract", "--checkpoint", str(ckpt), "--out", str(workdir / "pred.ply")])
    rc = main(["eval", "--gt", str(gt), "--pred", str(workdir / "pred.ply"),
               "--config", str(workdir / "run.json"), "--out", str(workdir / "rep.json")])
    assert rc == 0
    report = json.loads((workdir / "rep.json").read_text())
    assert report["variant"] == "relu"


def test_exit_code_config_error(workdir, capsys):
    (workdir / "bad.json").write_text(json.dumps({"unknown_key": 1}))
    rc = main(["fit", "--mesh", "whatever.ply", "--config", str(workdir / "bad.json"),
               "--out", str(workdir / "x.ckpt")])
    assert rc == 1
    assert "unknown config keys" in capsys.readouterr().err


def test_exit_code_runtime_error(workdir, capsys):
    rc = main(["eval", "--gt", "missing.ply", "--pred", "missing.ply",
               "--out", str(workdir / "r.json")])
    assert rc == 2


def test_exit_code_usage_error(workdir):
    with pytest.raises(SystemExit) as exc:
        main(["synth", "--out", str(workdir / "x.ply")])  # missing --spec
    assert exc.value.code == 1


def test_bad_shape_spec_fails_nonzero(workdir, capsys):
    (workdir / "badspec.json").write_text(json.dumps({"primitives": [{"kind": "torus"}]}))
    rc = main(["synth", "--spec", str(workdir / "badspec.json"),
               "--out", str(workdir / "x.ply")])
    assert rc == 2
    assert "torus" in capsys.readouterr().err


def test_config_rejects_unknown_section_keys():
    with pytest.raises(ConfigError, match="sampler"):
        RunConfig.from_dict({"sampler": {"n_manifold": 10, "bogus": 1}})
    with pytest.raises(ConfigError):
        RunConfig.from_dict({"head_variant": "mamba"})
    cfg = RunConfig.from_dict({"train": {"iterations": 7}, "seed": 9})
    assert cfg.train.iterations == 7 and cfg.seed == 9
    assert cfg.weights.lam_dm == 7000.0


def test_config_override_paths():
    cfg = RunConfig().override(seed=4, iterations=11, resolution=32, tau=0.01,
                               head="siren", chunk_size=2048)
    assert cfg.seed == 4
    assert cfg.train.iterations == 11
    assert cfg.grid.resolution == 32
    assert cfg.grid.chunk_size == 2048
    assert cfg.metrics.tau == 0.01
    assert cfg.head_variant == "siren"
