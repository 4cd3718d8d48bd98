"""File formats: ASCII PLY, label sidecars, and JSON result/truth/config/scene documents."""
from __future__ import annotations

import dataclasses
import json
from pathlib import Path

import numpy as np

from .correspondence import MatcherConfig
from .errors import ConfigError, ParseError, UnsupportedFormat
from .geometry import ORTHO_TOL, PointCloud, RigidTransform, axis_angle_matrix, orthonormality_error
from .pipeline import PipelineConfig, RegistrationResult
from .rigid_fit import IcpParams, RansacParams
from .synthetic import ArticulatedSpec, DegradationSpec, GroundTruth, Joint, Primitive, hinged_chain_spec

_PLY_TYPES = {"float", "float32", "double", "float64", "int", "int32", "uint", "short", "ushort",
              "char", "uchar", "int8", "uint8", "int16", "uint16", "uint32"}


# -- PLY ----------------------------------------------------------------------

def read_ply(path) -> PointCloud:
    """Read vertex positions (and ``nx ny nz`` if present) from an ASCII PLY file."""
    with open(path, "r", encoding="ascii", errors="replace") as f:
        lines = f.read().split("\n")
    if not lines or lines[0].strip() != "ply":
        raise ParseError("missing 'ply' magic", 1)
    elements: list[list] = []  # [name, count, [props]]
    fmt = None
    end = None
    for i, raw in enumerate(lines[1:], start=2):
        tok = raw.split()
        if not tok or tok[0] in ("comment", "obj_info"):
            continue
        if tok[0] == "format":
            fmt = tok[1] if len(tok) > 1 else ""
            if fmt != "ascii":
                raise UnsupportedFormat(f"only ASCII PLY is supported, got {fmt!r}")
        elif tok[0] == "element":
            if len(tok) != 3 or not tok[2].isdigit():
                raise ParseError(f"bad element line {raw!r}", i)
            elements.append([tok[1], int(tok[2]), []])
        elif tok[0] == "property":
            if not elements:
                raise ParseError("property before any element", i)
            if len(tok) >= 2 and tok[1] == "list":
                elements[-1][2].append(None)
            elif len(tok) == 3 and tok[1] in _PLY_TYPES:
                elements[-1][2].append(tok[2])
            else:
                raise ParseError(f"bad property line {raw!r}", i)
        elif tok[0] == "end_header":
            end = i
            break
        else:
            raise ParseError(f"unexpected header line {raw!r}", i)
    if fmt is None:
        raise ParseError("header has no format line", 2)
    if end is None:
        raise ParseError("header has no end_header", len(lines))

    line_no = end
    verts = None
    for name, count, props in elements:
        rows = []
        for _ in range(count):
            line_no += 1
            if line_no > len(lines) or not lines[line_no - 1].strip():
                raise ParseError(f"expected {count} {name} rows, file ends early", line_no)
            tok = lines[line_no - 1].split()
            if name == "vertex":
                if len(tok) != len(props) or None in props:
                    raise ParseError(f"vertex row has {len(tok)} values, expected {len(props)}", line_no)
                try:
                    rows.append([float(t) for t in tok])
                except ValueError:
                    raise ParseError("non-numeric vertex value", line_no) from None
        if name == "vertex":
            verts = (props, np.array(rows, dtype=np.float64).reshape(count, len(props)))
    if verts is None:
        raise ParseError("no vertex element", end)
    props, data = verts
    try:
        xyz = data[:, [props.index(c) for c in ("x", "y", "z")]]
    except ValueError:
        raise ParseError("vertex element lacks x/y/z", end) from None
    normals = None
    if all(c in props for c in ("nx", "ny", "nz")):
        normals = data[:, [props.index(c) for c in ("nx", "ny", "nz")]]
        lens = np.linalg.norm(normals, axis=1, keepdims=True)
        if np.any(lens == 0):
            raise ParseError("zero-length normal", end)
        # values written at 9 digits are unit to ~1e-9; keep them verbatim
        off = np.abs(lens[:, 0] - 1.0) > 1e-7
        normals[off] /= lens[off]
    return PointCloud(xyz, normals)


def write_ply(cloud: PointCloud, path) -> None:
    has_n = cloud.normals is not None
    header = ["ply", "format ascii 1.0", f"element vertex {len(cloud)}",
              "property float x", "property float y", "property float z"]
    if has_n:
        header += ["property float nx", "property float ny", "property float nz"]
    header.append("end_header")
    data = np.hstack([cloud.points, cloud.normals]) if has_n else cloud.points
    body = "\n".join(" ".join(f"{v:.9g}" for v in row) for row in data)
    with open(path, "w", encoding="ascii", newline="\n") as f:
        f.write("\n".join(header) + "\n")
        if len(data):
            f.write(body + "\n")


def read_labels(path, expected: int | None = None) -> np.ndarray:
    out = []
    with open(path, "r", encoding="ascii") as f:
        for i, line in enumerate(f, start=1):
            s = line.strip()
            if not s:
                continue
            try:
                out.append(int(s))
            except ValueError:
                raise ParseError(f"label {s!r} is not an integer", i) from None
    labels = np.asarray(out, dtype=np.int64)
    if expected is not None and len(labels) != expected:
        raise ParseError(f"{len(labels)} labels for {expected} vertices")
    return labels


def write_labels(labels, path) -> None:
    with open(path, "w", encoding="ascii", newline="\n") as f:
        f.write("".join(f"{int(v)}\n" for v in labels))


# -- JSON helpers -------------------------------------------------------------

def transform_to_json(t: RigidTransform) -> dict:
    return {"rotation": t.rotation.tolist(), "translation": t.translation.tolist()}


def transform_from_json(d: dict) -> RigidTransform:
    try:
        r = np.asarray(d["rotation"], dtype=np.float64)
        t = np.asarray(d["translation"], dtype=np.float64)
    except (KeyError, TypeError, ValueError) as exc:
        raise ParseError(f"bad transform entry: {exc}") from None
    if r.shape != (3, 3) or t.shape != (3,):
        raise ParseError("transform needs a 3x3 rotation and a 3-vector translation")
    if orthonormality_error(r) > ORTHO_TOL:
        raise ParseError("stored rotation is not a proper rotation")
    return RigidTransform(r, t)


def dump_json(doc, path) -> None:
    text = json.dumps(doc, indent=2, allow_nan=False)
    Path(path).write_text(text + "\n", encoding="utf-8")


def load_json(path):
    try:
        return json.loads(Path(path).read_text(encoding="utf-8"))
    except json.JSONDecodeError as exc:
        raise ParseError(f"{path}: {exc.msg}", exc.lineno) from None


# -- config -------------------------------------------------------------------

def _fill(cls, data, where: str):
    if data is None:
        return cls()
    if not isinstance(data, dict):
        raise ConfigError(f"{where} must be an object")
    names = {f.name for f in dataclasses.fields(cls)}
    for key in data:
        if key not in names:
            raise ConfigError(f"unknown config key {where}.{key}")
    try:
        return cls(**data)
    except (TypeError, ValueError) as exc:
        raise ConfigError(f"{where}: {exc}") from None


def config_from_dict(doc: dict) -> tuple[PipelineConfig, MatcherConfig, str | None]:
    """Parse a config document into pipeline/matcher configs plus an optional
    provenance path (oracle matcher only)."""
    if not isinstance(doc, dict):
        raise ConfigError("config must be a JSON object")
    for key in doc:
        if key not in ("pipeline", "matcher", "seed"):
            raise ConfigError(f"unknown config key {key}")
    pipe = dict(doc.get("pipeline") or {})
    if not isinstance(doc.get("pipeline", {}), dict):
        raise ConfigError("pipeline must be an object")
    ransac = _fill(RansacParams, pipe.pop("ransac", None), "pipeline.ransac")
    icp_params = _fill(IcpParams, pipe.pop("icp", None), "pipeline.icp")
    pcfg = _fill(PipelineConfig, pipe, "pipeline")
    pcfg = dataclasses.replace(pcfg, ransac=ransac, icp=icp_params)
    mdoc = dict(doc.get("matcher") or {})
    provenance = mdoc.pop("provenance", None)
    mcfg = _fill(MatcherConfig, mdoc, "matcher")
    if "seed" in doc:
        seed = doc["seed"]
        if not isinstance(seed, int):
            raise ConfigError("seed must be an integer")
        pcfg = dataclasses.replace(pcfg, ransac=dataclasses.replace(pcfg.ransac, rng_seed=seed))
        mcfg = dataclasses.replace(mcfg, rng_seed=seed)
    return pcfg, mcfg, provenance


def load_config(path) -> tuple[PipelineConfig, MatcherConfig, str | None]:
    if path is None:
        return PipelineConfig(), MatcherConfig(), None
    return config_from_dict(load_json(path))


def config_to_dict(pcfg: PipelineConfig, mcfg: MatcherConfig) -> dict:
    return {"pipeline": dataclasses.asdict(pcfg), "matcher": dataclasses.asdict(mcfg)}


# -- results ------------------------------------------------------------------

def result_to_dict(res: RegistrationResult, mcfg: MatcherConfig | None = None) -> dict:
    parts = []
    for p, t in res.part_transforms.items():
        d = res.diagnostics[p]
        parts.append({
            "part_id": p,
            **transform_to_json(t),
            "status": str(res.part_status[p]),
            "rmse": d.rmse,
            "inlier_count": d.inlier_count,
            "correspondence_count": d.correspondence_count,
            "anchor_count": d.anchor_count,
            "roi": {"min": d.roi.min.tolist(), "max": d.roi.max.tolist()},
        })
    mcfg = mcfg or MatcherConfig()
    return {
        "global_transform": transform_to_json(res.global_transform),
        "global_rmse": res.global_rmse,
        "correspondence_count": res.correspondence_count,
        "order": list(res.order),
        "parts": parts,
        "density_flags": [dataclasses.asdict(f) for f in res.density_flags],
        "config": config_to_dict(res.config, mcfg),
        "seeds": {"ransac": res.config.ransac.rng_seed, "matcher": mcfg.rng_seed},
    }


def load_result(path) -> dict:
    """Load a result document; transforms come back as ``RigidTransform``."""
    doc = load_json(path)
    if "error" in doc:
        raise ParseError(f"{path} records a failed registration: {doc['error']}")
    try:
        doc["global_transform"] = transform_from_json(doc["global_transform"])
        doc["part_transforms"] = {int(p["part_id"]): transform_from_json(p) for p in doc["parts"]}
    except (KeyError, TypeError) as exc:
        raise ParseError(f"{path}: malformed result document ({exc})") from None
    return doc


# -- ground truth -------------------------------------------------------------

def truth_to_dict(truth: GroundTruth, files: dict | None = None) -> dict:
    doc = {
        "global_transform": transform_to_json(truth.global_transform),
        "part_transforms": [{"part_id": p, **transform_to_json(t)}
                            for p, t in sorted(truth.part_transforms.items())],
        "provenance": [int(v) for v in truth.provenance],
    }
    if files:
        doc["files"] = files
    return doc


def truth_from_dict(doc: dict) -> GroundTruth:
    try:
        return GroundTruth(
            transform_from_json(doc["global_transform"]),
            {int(p["part_id"]): transform_from_json(p) for p in doc["part_transforms"]},
            np.asarray(doc["provenance"], dtype=np.int64),
        )
    except (KeyError, TypeError, ValueError) as exc:
        raise ParseError(f"malformed ground-truth document ({exc})") from None


# -- scene / degradation specs ------------------------------------------------

def scene_from_dict(doc: dict):
    """Parse a scene document into ``(spec, joint_angles_rad, global_transform)``."""
    if not isinstance(doc, dict):
        raise ConfigError("scene must be a JSON object")
    known = {"preset", "lengths", "counts", "thickness", "parts", "joints",
             "joint_angles_deg", "global", "rng_seed", "min_points_per_part"}
    for key in doc:
        if key not in known:
            raise ConfigError(f"unknown scene key {key}")
    seed = int(doc.get("rng_seed", 0))
    if doc.get("preset") is not None:
        if doc["preset"] != "hinged_chain":
            raise ConfigError(f"unknown preset {doc['preset']!r}")
        kw = {k: doc[k] for k in ("lengths", "counts", "thickness") if k in doc}
        spec = hinged_chain_spec(rng_seed=seed, **kw)
    else:
        try:
            parts = [Primitive(**{k: (tuple(v) if isinstance(v, list) else v) for k, v in p.items()})
                     for p in doc.get("parts", [])]
            joints = [Joint(int(j["parent"]), int(j["child"]), tuple(j["point"]), tuple(j["direction"]))
                      for j in doc.get("joints", [])]
        except (TypeError, KeyError) as exc:
            raise ConfigError(f"bad scene entry: {exc}") from None
        spec = ArticulatedSpec(parts, joints, seed)
    if "min_points_per_part" in doc:
        spec.min_points_per_part = int(doc["min_points_per_part"])
    angles = [np.radians(float(a)) for a in doc.get("joint_angles_deg", [0.0] * len(spec.joints))]
    g = doc.get("global")
    if g is None:
        global_t = RigidTransform.identity()
    else:
        unknown = set(g) - {"axis", "angle_deg", "translation"}
        if unknown:
            raise ConfigError(f"unknown scene key global.{sorted(unknown)[0]}")
        r = axis_angle_matrix(g.get("axis", (0, 0, 1)), np.radians(float(g.get("angle_deg", 0.0))))
        global_t = RigidTransform(r, g.get("translation", (0.0, 0.0, 0.0)))
    return spec, angles, global_t


def degradation_from_dict(doc: dict | None) -> DegradationSpec:
    d = _fill(DegradationSpec, doc, "degrade")
    if d.view_direction is not None:
        d.view_direction = tuple(float(v) for v in d.view_direction)
    return d
