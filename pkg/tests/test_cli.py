import json
from pathlib import Path

import numpy as np
import pytest

from semedit.cli import load_train_config, main
from semedit.meshio import load_mesh, save_obj
from semedit.templates import decode, get_template_spec, sample_params


def run_cli(*argv):
    return main(list(argv))


def test_gen_data_manifest_counts(tmp_path):
    out = tmp_path / "data"
    assert run_cli("gen-data", "--class", "chair", "--synthetic", "20",
                   "--realistic", "10", "--seed", "7", "--sample-count", "64",
                   "--out", str(out)) == 0
    manifest = json.loads((out / "manifest.json").read_text())
    splits = [e["split"] for e in manifest["entries"] if e["kind"] == "synthetic"]
    assert splits.count("train") == 16 and splits.count("test") == 4
    assert len(list((out / "meshes").glob("*.obj"))) == 30


def test_gen_data_rerun_byte_identical(tmp_path):
    a, b = tmp_path / "a", tmp_path / "b"
    for out in (a, b):
        run_cli("gen-data", "--class", "chair", "--synthetic", "8", "--realistic", "6",
                "--seed", "3", "--sample-count", "32", "--out", str(out))
    assert (a / "manifest.json").read_bytes() == (b / "manifest.json").read_bytes()
    for mesh in sorted((a / "meshes").iterdir()):
        assert mesh.read_bytes() == (b / "meshes" / mesh.name).read_bytes()


def test_gen_data_humanoid_label_width(tmp_path):
    out = tmp_path / "h"
    run_cli("gen-data", "--class", "humanoid", "--synthetic", "5", "--realistic", "5",
            "--seed", "0", "--sample-count", "32", "--out", str(out))
    manifest = json.loads((out / "manifest.json").read_text())
    labels = [e["label"] for e in manifest["entries"] if e["kind"] == "synthetic"]
    assert all(len(l) == 30 for l in labels)  # 27 semantic + 3 translation


def test_train_eval_outputs(tmp_path):
    data = tmp_path / "data"
    run_cli("gen-data", "--class", "chair", "--synthetic", "10", "--realistic", "8",
            "--seed", "1", "--sample-count", "64", "--out", str(data))
    run_dir = tmp_path / "run"
    cfg = tmp_path / "cfg.json"
    cfg.write_text(json.dumps({
        "class_id": "chair", "steps": 4, "batch_size": 4, "sample_count": 64,
        "eval_every": 2, "n_synthetic": 10, "n_realistic": 8,
    }))
    assert run_cli("train", "--config", str(cfg), "--data", str(data),
                   "--out", str(run_dir)) == 0
    for name in ("checkpoint.bin", "loss_curves.csv", "loss_curves.png", "mve.csv", "mve.png"):
        assert (run_dir / name).exists(), name
    header = (run_dir / "loss_curves.csv").read_text().splitlines()[0]
    assert header == "step,L_sem,L_sem_edit,L_rec,L_rec_edit,L_sim,total"
    assert run_cli("eval", "--ckpt", str(run_dir / "checkpoint.bin"),
                   "--data", str(data)) == 0


def test_eval_prints_threshold_table(tmp_path, capsys, random_chair_checkpoint):
    data = tmp_path / "data"
    run_cli("gen-data", "--class", "chair", "--synthetic", "10", "--realistic", "8",
            "--seed", "1", "--sample-count", "64", "--out", str(data))
    run_cli("eval", "--ckpt", str(random_chair_checkpoint), "--data", str(data))
    out = capsys.readouterr().out
    assert "MVE<0.01" in out and "MVE<0.02" in out and "MVE<0.03" in out


def test_encode_then_identity_deform(tmp_path, random_chair_checkpoint):
    spec = get_template_spec("chair")
    mesh = decode(spec, sample_params(spec, 5)).mesh
    mesh_path = tmp_path / "chair.obj"
    save_obj(mesh, mesh_path)

    params_path = tmp_path / "params.json"
    assert run_cli("encode", "--in", str(mesh_path), "--ckpt", str(random_chair_checkpoint),
                   "--out", str(params_path)) == 0
    payload = json.loads(params_path.read_text())
    assert len(payload["values"]) == 11

    edits_path = tmp_path / "edits.json"
    edits_path.write_text("[]")
    out_path = tmp_path / "out.obj"
    assert run_cli("deform", "--in", str(mesh_path), "--ckpt", str(random_chair_checkpoint),
                   "--edits", str(edits_path), "--out", str(out_path)) == 0
    original = load_mesh(mesh_path)
    deformed = load_mesh(out_path)
    assert np.abs(deformed.vertices - original.vertices).max() < 1e-6
    assert np.array_equal(deformed.faces, original.faces)


def test_encode_deterministic_bytes(tmp_path, random_chair_checkpoint):
    spec = get_template_spec("chair")
    mesh = decode(spec, sample_params(spec, 6)).mesh
    mesh_path = tmp_path / "c.obj"
    save_obj(mesh, mesh_path)
    outs = []
    for name in ("p1.json", "p2.json"):
        out = tmp_path / name
        run_cli("encode", "--in", str(mesh_path), "--ckpt", str(random_chair_checkpoint),
                "--out", str(out))
        payload = json.loads(out.read_text())
        payload.pop("encode_ms")  # wall-clock timing is not part of the contract
        outs.append(json.dumps(payload, sort_keys=True))
    assert outs[0] == outs[1]


def test_edit_subcommand(tmp_path, random_chair_checkpoint):
    spec = get_template_spec("chair")
    mesh = decode(spec, sample_params(spec, 7)).mesh
    mesh_path = tmp_path / "c.obj"
    save_obj(mesh, mesh_path)
    params_path = tmp_path / "p.json"
    run_cli("encode", "--in", str(mesh_path), "--ckpt", str(random_chair_checkpoint),
            "--out", str(params_path))
    edits_path = tmp_path / "e.json"
    edits_path.write_text(json.dumps([{"name": "leg_height", "op": "set", "value": 0.5}]))
    out_path = tmp_path / "p2.json"
    assert run_cli("edit", "--params", str(params_path), "--edits", str(edits_path),
                   "--out", str(out_path)) == 0
    edited = json.loads(out_path.read_text())
    assert abs(edited["named"]["leg_height"][0] - 0.5) < 1e-9


def test_unknown_config_key_lists_valid(tmp_path, capsys):
    cfg = tmp_path / "bad.json"
    cfg.write_text(json.dumps({"class_id": "chair", "bogus_key": 1}))
    assert run_cli("train", "--config", str(cfg), "--out", str(tmp_path / "o")) == 1
    err = capsys.readouterr().err
    assert "bogus_key" in err and "learning_rate" in err
    assert err.startswith("error:")


def test_load_train_config_overrides():
    cfg = load_train_config(None, ["class_id=airplane", "steps=12", "edit_branch=false"])
    assert cfg.class_id == "airplane"
    assert (cfg.alpha, cfg.beta, cfg.gamma) == (0.3, 200.0, 10.0)
    assert cfg.steps == 12
    assert cfg.edit_branch is False


def test_cli_error_on_missing_file(tmp_path, capsys):
    assert run_cli("encode", "--in", str(tmp_path / "nope.obj"),
                   "--ckpt", str(tmp_path / "nope.bin"), "--out", str(tmp_path / "p.json")) == 1
    assert capsys.readouterr().err.startswith("error:")
