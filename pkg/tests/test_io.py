import json

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from pwralign import io
from pwralign.correspondence import MatcherConfig
from pwralign.errors import ConfigError, ParseError, UnsupportedFormat
from pwralign.evaluation import hinge_scene, run_oracle
from pwralign.geometry import PointCloud, RigidTransform

MINIMAL = """ply
format ascii 1.0
comment three points
element vertex 3
property float x
property float y
property float z
end_header
0 0 0
1 0 0
0 1 0.5
"""


class TestPly:
    def test_minimal(self, tmp_path):
        f = tmp_path / "a.ply"
        f.write_text(MINIMAL)
        c = io.read_ply(f)
        assert len(c) == 3 and c.normals is None
        assert np.array_equal(c.points[2], [0, 1, 0.5])

    def test_truncated_reports_line(self, tmp_path):
        text = MINIMAL.replace("element vertex 3", "element vertex 5")
        f = tmp_path / "t.ply"
        f.write_text(text)
        with pytest.raises(ParseError) as exc:
            io.read_ply(f)
        # header is 8 lines, three rows follow, row four would be line 12
        assert exc.value.line == 12

    def test_binary_rejected(self, tmp_path):
        f = tmp_path / "b.ply"
        f.write_text(MINIMAL.replace("format ascii 1.0", "format binary_little_endian 1.0"))
        with pytest.raises(UnsupportedFormat):
            io.read_ply(f)

    def test_extra_elements_and_normals(self, tmp_path):
        text = ("ply\nformat ascii 1.0\nelement vertex 2\nproperty float x\nproperty float y\n"
                "property float z\nproperty float nx\nproperty float ny\nproperty float nz\n"
                "element face 1\nproperty list uchar int vertex_indices\nend_header\n"
                "0 0 0 0 0 2\n1 1 1 1 0 0\n3 0 1 1\n")
        f = tmp_path / "n.ply"
        f.write_text(text)
        c = io.read_ply(f)
        assert np.array_equal(c.normals, [[0, 0, 1], [1, 0, 0]])

    @pytest.mark.parametrize("bad", ["0 0 x", "0 0"])
    def test_bad_rows(self, tmp_path, bad):
        f = tmp_path / "r.ply"
        f.write_text(MINIMAL.replace("0 1 0.5", bad))
        with pytest.raises(ParseError) as exc:
            io.read_ply(f)
        assert exc.value.line == 11

    @settings(max_examples=30)
    @given(st.integers(0, 2**31), st.integers(1, 40), st.booleans())
    def test_round_trip_at_nine_digits(self, tmp_path_factory, seed, n, normals):
        rng = np.random.default_rng(seed)
        pts = rng.normal(scale=100, size=(n, 3))
        nrm = None
        if normals:
            nrm = rng.normal(size=(n, 3))
            nrm /= np.linalg.norm(nrm, axis=1, keepdims=True)
        f = tmp_path_factory.mktemp("ply") / "c.ply"
        io.write_ply(PointCloud(pts, nrm), f)
        back = io.read_ply(f)
        assert np.allclose(back.points, pts, rtol=1e-8, atol=0)
        # writing the canonical form again is a fixed point
        g = f.with_name("d.ply")
        io.write_ply(back, g)
        assert g.read_bytes() == f.read_bytes()


class TestLabels:
    def test_round_trip(self, tmp_path):
        f = tmp_path / "l.labels"
        io.write_labels([0, 0, 2, 1], f)
        assert io.read_labels(f, expected=4).tolist() == [0, 0, 2, 1]

    def test_count_mismatch(self, tmp_path):
        f = tmp_path / "l.labels"
        io.write_labels([0, 1], f)
        with pytest.raises(ParseError):
            io.read_labels(f, expected=3)

    def test_non_integer(self, tmp_path):
        f = tmp_path / "l.labels"
        f.write_text("0\n1.5\n")
        with pytest.raises(ParseError) as exc:
            io.read_labels(f)
        assert exc.value.line == 2


class TestConfig:
    def test_empty_is_defaults(self):
        pcfg, mcfg, prov = io.config_from_dict({})
        assert pcfg.min_corr_per_part == 5 and mcfg.variant == "feature" and prov is None

    def test_nested(self):
        doc = {"pipeline": {"tau_joint": 0.2, "ransac": {"max_iterations": 50}, "icp": {"reciprocal": False}},
               "matcher": {"variant": "oracle", "provenance": "g.json"}, "seed": 9}
        pcfg, mcfg, prov = io.config_from_dict(doc)
        assert pcfg.tau_joint == 0.2 and pcfg.ransac.max_iterations == 50 and not pcfg.icp.reciprocal
        assert mcfg.variant == "oracle" and prov == "g.json"
        assert pcfg.ransac.rng_seed == 9 and mcfg.rng_seed == 9

    @pytest.mark.parametrize("doc,key", [
        ({"pipline": {}}, "pipline"),
        ({"pipeline": {"tau": 1}}, "pipeline.tau"),
        ({"pipeline": {"ransac": {"iters": 3}}}, "pipeline.ransac.iters"),
        ({"matcher": {"kind": "oracle"}}, "matcher.kind"),
    ])
    def test_unknown_key_is_named(self, doc, key):
        with pytest.raises(ConfigError, match=key.replace(".", r"\.")):
            io.config_from_dict(doc)

    def test_invalid_value(self):
        with pytest.raises(ConfigError):
            io.config_from_dict({"pipeline": {"min_corr_per_part": 0}})

    def test_malformed_json(self, tmp_path):
        f = tmp_path / "c.json"
        f.write_text("{\n  \"seed\": ,\n}")
        with pytest.raises(ParseError) as exc:
            io.load_config(f)
        assert exc.value.line == 2


class TestDocuments:
    def test_transform_round_trip(self):
        t = RigidTransform.from_axis_angle([1, 2, 3], 0.7, about=[1, 0, 0])
        back = io.transform_from_json(json.loads(json.dumps(io.transform_to_json(t))))
        assert back == t

    def test_transform_must_be_rotation(self):
        with pytest.raises(ParseError):
            io.transform_from_json({"rotation": np.diag([1, 1, -1]).tolist(), "translation": [0, 0, 0]})

    def test_result_round_trip(self, tmp_path):
        sc = hinge_scene(seed=0, counts=(800, 600, 400))
        res = run_oracle(sc, 0.1, 0)
        f = tmp_path / "r.json"
        io.dump_json(io.result_to_dict(res, MatcherConfig("oracle", 0.1)), f)
        doc = io.load_result(f)
        assert doc["global_transform"] == res.global_transform
        assert doc["part_transforms"] == res.part_transforms
        assert [p["status"] for p in doc["parts"]] == [str(s) for s in res.part_status.values()]
        assert doc["seeds"] == {"ransac": 0, "matcher": 0}

    def test_truth_round_trip(self):
        sc = hinge_scene(seed=1, counts=(800, 600, 400))
        back = io.truth_from_dict(json.loads(json.dumps(io.truth_to_dict(sc.truth))))
        assert back.part_transforms == sc.truth.part_transforms
        assert np.array_equal(back.provenance, sc.truth.provenance)

    def test_scene_document(self):
        spec, angles, g = io.scene_from_dict({"preset": "hinged_chain", "joint_angles_deg": [10, 20],
                                              "global": {"axis": [0, 0, 1], "angle_deg": 90}})
        assert len(spec.parts) == 3 and np.allclose(np.degrees(angles), [10, 20])
        assert np.allclose(g.apply_points([1, 0, 0]), [[0, 1, 0]])
        with pytest.raises(ConfigError):
            io.scene_from_dict({"preset": "hinged_chain", "colour": "red"})
