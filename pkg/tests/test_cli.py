import json
import subprocess
import sys

import numpy as np
import pytest

from pwralign import io
from pwralign.cli import evaluate, main
from pwralign.geometry import RigidTransform, compose, nn_rmse, rotation_error_deg

SCENE = {"preset": "hinged_chain", "counts": [800, 600, 400], "joint_angles_deg": [20, 35], "rng_seed": 1,
         "global": {"axis": [1, 1, 0], "angle_deg": 25, "translation": [0.2, -0.1, 0.3]}}
DEGRADE = {"noise_sigma": 0.005, "keep_fraction": 0.8, "rng_seed": 2}


def write(path, doc):
    path.write_text(json.dumps(doc))
    return str(path)


@pytest.fixture
def synth(tmp_path):
    rc = main(["synth", "--scene", write(tmp_path / "scene.json", SCENE),
               "--degrade", write(tmp_path / "deg.json", DEGRADE), "--out-prefix", str(tmp_path / "s")])
    assert rc == 0
    return tmp_path


def oracle_config(d, **matcher):
    return write(d / "cfg.json", {"matcher": {"variant": "oracle", "provenance": "s.truth.json", **matcher},
                                  "seed": 3})


def register(d, config, out="r.json", labels="s.labels"):
    return main(["register", "--source", str(d / "s.source.ply"), "--labels", str(d / labels),
                 "--target", str(d / "s.target.ply"), "--config", config, "--out", str(d / out)])


class TestSynth:
    def test_four_files(self, synth):
        names = sorted(p.name for p in synth.iterdir() if p.name.startswith("s."))
        assert names == ["s.labels", "s.source.ply", "s.target.ply", "s.truth.json"]
        truth = io.load_json(synth / "s.truth.json")
        assert truth["files"]["target"] == "s.target.ply"
        assert len(truth["provenance"]) == len(io.read_ply(synth / "s.target.ply"))

    def test_same_seed_same_bytes(self, synth, tmp_path_factory):
        other = tmp_path_factory.mktemp("again")
        main(["synth", "--scene", str(synth / "scene.json"), "--degrade", str(synth / "deg.json"),
              "--out-prefix", str(other / "s")])
        for name in ("s.source.ply", "s.labels", "s.target.ply", "s.truth.json"):
            assert (synth / name).read_bytes() == (other / name).read_bytes()

    def test_keep_zero(self, tmp_path, capsys):
        rc = main(["synth", "--scene", write(tmp_path / "sc.json", SCENE),
                   "--degrade", write(tmp_path / "d.json", {"keep_fraction": 0.0}),
                   "--out-prefix", str(tmp_path / "x")])
        assert rc == 1 and "keep_fraction" in capsys.readouterr().err
        assert not list(tmp_path.glob("x.*"))

    def test_bad_scene_key(self, tmp_path):
        rc = main(["synth", "--scene", write(tmp_path / "sc.json", {**SCENE, "wheels": 4}),
                   "--out-prefix", str(tmp_path / "x")])
        assert rc == 1


class TestRegister:
    def test_success(self, synth, capsys):
        assert register(synth, oracle_config(synth)) == 0
        lines = capsys.readouterr().out.strip().splitlines()
        assert len(lines) == 3 and all(line.startswith("part ") for line in lines)
        doc = io.load_result(synth / "r.json")
        assert sorted(doc["part_transforms"]) == [0, 1, 2]
        assert doc["seeds"] == {"ransac": 3, "matcher": 3}

    def test_missing_labels(self, synth):
        assert register(synth, oracle_config(synth), labels="nope.labels") == 1

    def test_unknown_config_key(self, synth, capsys):
        cfg = write(synth / "bad.json", {"pipeline": {"tau_jiont": 1.0}})
        assert register(synth, cfg) == 1
        assert "pipeline.tau_jiont" in capsys.readouterr().err

    def test_oracle_without_provenance(self, synth):
        assert register(synth, write(synth / "c.json", {"matcher": {"variant": "oracle"}})) == 1

    def test_all_outlier_input_is_fatal(self, synth):
        cfg = write(synth / "c.json", {
            "pipeline": {"ransac": {"min_inlier_count": 50}},
            "matcher": {"variant": "oracle", "oracle_outlier_fraction": 0.999, "provenance": "s.truth.json"},
        })
        assert register(synth, cfg, out="fail.json") == 2
        doc = io.load_json(synth / "fail.json")
        assert doc["error_type"] == "NoConsensus" and doc["source_points"] == 1800

    def test_byte_identical_reruns(self, synth):
        cfg = oracle_config(synth, oracle_outlier_fraction=0.2)
        assert register(synth, cfg, out="a.json") == 0
        assert register(synth, cfg, out="b.json") == 0
        assert (synth / "a.json").read_bytes() == (synth / "b.json").read_bytes()

    def test_module_entry_point(self, synth):
        out = subprocess.run([sys.executable, "-m", "pwralign", "eval", "--result", str(synth / "missing.json"),
                              "--truth", str(synth / "s.truth.json")], capture_output=True, text=True)
        assert out.returncode == 1 and "error" in out.stderr


class TestEval:
    def test_truth_against_itself(self, synth):
        truth_doc = io.load_json(synth / "s.truth.json")
        truth = io.truth_from_dict(truth_doc)
        result = {"part_transforms": truth.part_transforms}
        m = evaluate(result, truth_doc, synth)
        assert all(p["rotation_error_deg"] == 0 and p["translation_error"] == 0 for p in m["parts"])
        assert m["nn_rmse"] == 0.0

    def test_five_degree_error(self, synth):
        truth_doc = io.load_json(synth / "s.truth.json")
        truth = io.truth_from_dict(truth_doc)
        est = dict(truth.part_transforms)
        est[1] = compose(est[1], RigidTransform.from_axis_angle([0.3, -1, 2], np.radians(5)))
        m = evaluate({"part_transforms": est}, truth_doc)
        assert m["parts"][1]["rotation_error_deg"] == pytest.approx(5.0, abs=1e-6)
        assert m["parts"][0]["rotation_error_deg"] == 0

    def test_metrics_match_independent_recomputation(self, synth, capsys):
        register(synth, oracle_config(synth, oracle_outlier_fraction=0.2))
        assert main(["eval", "--result", str(synth / "r.json"), "--truth", str(synth / "s.truth.json")]) == 0
        metrics = io.load_json(synth / "r.metrics.json")
        res = io.load_result(synth / "r.json")
        truth = io.truth_from_dict(io.load_json(synth / "s.truth.json"))
        source = io.read_ply(synth / "s.source.ply")
        labels = io.read_labels(synth / "s.labels")
        for row in metrics["parts"]:
            p = row["part_id"]
            a, b = res["part_transforms"][p], truth.part_transforms[p]
            cos = (np.trace(a.rotation.T @ b.rotation) - 1) / 2
            assert row["rotation_error_deg"] == pytest.approx(np.degrees(np.arccos(np.clip(cos, -1, 1))), abs=1e-6)
            assert row["rotation_error_deg"] == pytest.approx(rotation_error_deg(a, b), abs=1e-12)
            assert row["translation_error"] == pytest.approx(np.linalg.norm(a.translation - b.translation))
        pa = np.vstack([res["part_transforms"][p].apply_points(source.points[labels == p]) for p in range(3)])
        pb = np.vstack([truth.part_transforms[p].apply_points(source.points[labels == p]) for p in range(3)])
        d = np.linalg.norm(pa[:, None] - pb[None], axis=2).min(axis=1)
        assert metrics["nn_rmse"] == pytest.approx(np.sqrt(np.mean(d**2)), rel=1e-9)
        assert "nn_rmse" in capsys.readouterr().out

    def test_part_set_mismatch(self, synth):
        truth_doc = io.load_json(synth / "s.truth.json")
        res = {"parts": [{"part_id": 0, **io.transform_to_json(RigidTransform.identity())}],
               "global_transform": io.transform_to_json(RigidTransform.identity())}
        f = write(synth / "partial.json", res)
        assert main(["eval", "--result", f, "--truth", str(synth / "s.truth.json")]) == 1
        assert truth_doc  # truth file untouched and readable
