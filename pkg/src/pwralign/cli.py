"""Command-line entry point: ``register``, ``synth`` and ``eval``.

Exit codes: 0 success, 1 input/config error, 2 fatal registration error.
Set ``PWRALIGN_LOG_LEVEL`` (e.g. ``DEBUG``) for more log output.
"""
from __future__ import annotations

import argparse
import logging
import os
import sys
from pathlib import Path

import numpy as np

from . import io
from .errors import (
    ConfigError,
    DensityViolation,
    DisconnectedGraph,
    EmptyPart,
    EmptyResult,
    InsufficientCorrespondences,
    InvalidSpec,
    NoConsensus,
    NoCorrespondences,
    ParseError,
    PartSetMismatch,
    UnsupportedFormat,
)
from .geometry import PointCloud, nn_rmse, rotation_error_deg
from .pipeline import register
from .synthetic import articulate, degrade, generate

log = logging.getLogger("pwralign")

_INPUT_ERRORS = (OSError, ParseError, UnsupportedFormat, ConfigError, ValueError)
_FATAL_ERRORS = (DisconnectedGraph, EmptyPart, DensityViolation, NoCorrespondences,
                 InsufficientCorrespondences, NoConsensus)


def _err(msg: str) -> None:
    print(f"error: {msg}", file=sys.stderr)


def cmd_register(args) -> int:
    try:
        source = io.read_ply(args.source)
        labels = io.read_labels(args.labels, expected=len(source))
        target = io.read_ply(args.target)
        pcfg, mcfg, prov_path = io.load_config(args.config)
        provenance = None
        if mcfg.variant == "oracle":
            if prov_path is None:
                raise ConfigError("oracle matcher needs matcher.provenance (a ground-truth file)")
            prov_path = Path(args.config).parent / prov_path
            provenance = io.truth_from_dict(io.load_json(prov_path)).provenance
            if len(provenance) != len(target):
                raise ConfigError("provenance length does not match the target cloud")
    except _INPUT_ERRORS as exc:
        _err(str(exc))
        return 1

    try:
        res = register(source, labels, target, mcfg, pcfg, provenance)
    except _FATAL_ERRORS as exc:
        _err(f"registration failed: {exc}")
        io.dump_json({
            "error": str(exc),
            "error_type": type(exc).__name__,
            "source_points": len(source),
            "target_points": len(target),
            "config": io.config_to_dict(pcfg, mcfg),
        }, args.out)
        return 2

    io.dump_json(io.result_to_dict(res, mcfg), args.out)
    for p, status in res.part_status.items():
        rmse = res.diagnostics[p].rmse
        print(f"part {p}: {status} rmse={'nan' if rmse is None else f'{rmse:.6g}'}")
    return 0


def cmd_synth(args) -> int:
    try:
        spec, angles, global_t = io.scene_from_dict(io.load_json(args.scene))
        dspec = io.degradation_from_dict(io.load_json(args.degrade) if args.degrade else None)
        dspec.validate()
        scene = generate(spec)
        target, truth = articulate(scene.cloud, scene.labels, spec, angles, global_t)
        target, truth = degrade(target, truth, dspec)
    except (InvalidSpec, EmptyResult, *_INPUT_ERRORS) as exc:
        _err(str(exc))
        return 1
    prefix = Path(args.out_prefix)
    prefix.parent.mkdir(parents=True, exist_ok=True)
    names = {k: f"{prefix.name}.{k}" for k in ("source.ply", "labels", "target.ply", "truth.json")}
    io.write_ply(scene.cloud, prefix.parent / names["source.ply"])
    io.write_labels(scene.labels, prefix.parent / names["labels"])
    io.write_ply(target, prefix.parent / names["target.ply"])
    files = {"source": names["source.ply"], "labels": names["labels"], "target": names["target.ply"]}
    io.dump_json(io.truth_to_dict(truth, files), prefix.parent / names["truth.json"])
    print(f"wrote {len(scene.cloud)} source and {len(target)} target points to {prefix}.*")
    return 0


def evaluate(result: dict, truth_doc: dict, base: Path | None = None) -> dict:
    """Per-part rotation/translation errors and whole-object NN RMSE."""
    truth = io.truth_from_dict(truth_doc)
    est = result["part_transforms"]
    if set(est) != set(truth.part_transforms):
        raise PartSetMismatch(
            f"result parts {sorted(est)} differ from truth parts {sorted(truth.part_transforms)}"
        )
    parts = []
    for p in sorted(est):
        a, b = est[p], truth.part_transforms[p]
        parts.append({
            "part_id": p,
            "rotation_error_deg": rotation_error_deg(a, b),
            "translation_error": float(np.linalg.norm(a.translation - b.translation)),
        })
    metrics = {"parts": parts, "nn_rmse": None}
    files = truth_doc.get("files")
    if files and base is not None:
        source = io.read_ply(base / files["source"])
        labels = io.read_labels(base / files["labels"], expected=len(source))
        metrics["nn_rmse"] = nn_rmse(_placed(source, labels, est), _placed(source, labels, truth.part_transforms))
    return metrics


def _placed(source: PointCloud, labels, transforms) -> PointCloud:
    pts = np.empty_like(source.points)
    for p, t in transforms.items():
        m = labels == p
        pts[m] = t.apply_points(source.points[m])
    return PointCloud(pts)


def cmd_eval(args) -> int:
    try:
        result = io.load_result(args.result)
        truth_doc = io.load_json(args.truth)
        metrics = evaluate(result, truth_doc, Path(args.truth).parent)
    except (PartSetMismatch, *_INPUT_ERRORS) as exc:
        _err(str(exc))
        return 1
    print(f"{'part':>4}  {'rot_err_deg':>12}  {'trans_err':>12}")
    for m in metrics["parts"]:
        print(f"{m['part_id']:>4}  {m['rotation_error_deg']:>12.6f}  {m['translation_error']:>12.6g}")
    if metrics["nn_rmse"] is not None:
        print(f"whole-object nn_rmse: {metrics['nn_rmse']:.6g}")
    out = Path(args.result)
    io.dump_json(metrics, out.with_name(out.stem + ".metrics.json"))
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="pwralign", description=__doc__.splitlines()[0])
    sub = parser.add_subparsers(dest="command", required=True)

    reg = sub.add_parser("register", help="register a labelled source scan onto a target scan")
    reg.add_argument("--source", required=True)
    reg.add_argument("--labels", required=True)
    reg.add_argument("--target", required=True)
    reg.add_argument("--config", default=None)
    reg.add_argument("--out", required=True)
    reg.set_defaults(func=cmd_register)

    syn = sub.add_parser("synth", help="generate a synthetic articulated scene")
    syn.add_argument("--scene", required=True)
    syn.add_argument("--degrade", default=None)
    syn.add_argument("--out-prefix", required=True)
    syn.set_defaults(func=cmd_synth)

    ev = sub.add_parser("eval", help="compare a result file with ground truth")
    ev.add_argument("--result", required=True)
    ev.add_argument("--truth", required=True)
    ev.set_defaults(func=cmd_eval)
    return parser


def main(argv=None) -> int:
    level = os.environ.get("PWRALIGN_LOG_LEVEL", "WARNING").upper()
    logging.basicConfig(level=getattr(logging, level, logging.WARNING),
                        format="%(levelname)s %(name)s: %(message)s")
    args = build_parser().parse_args(argv)
    return args.func(args)


if __name__ == "__main__":
    sys.exit(main())
