"""Synthesize a hinged three-part scene, register it and score it, all through the CLI.

    python3 scripts/demo.py --out /tmp/pwr_demo
"""
from __future__ import annotations

import argparse
import json
from dataclasses import asdict, dataclass, field
from pathlib import Path

from pwralign.cli import main as cli


@dataclass
class DemoConfig:
    joint_angles_deg: list[float] = field(default_factory=lambda: [20.0, 35.0])
    noise_sigma: float = 0.01
    keep_fraction: float = 0.7
    outlier_points: int = 200
    oracle_outlier_fraction: float = 0.2
    matcher: str = "oracle"
    seed: int = 0


def run(cfg: DemoConfig, out: Path) -> int:
    out.mkdir(parents=True, exist_ok=True)
    scene = {"preset": "hinged_chain", "joint_angles_deg": cfg.joint_angles_deg, "rng_seed": cfg.seed,
             "global": {"axis": [0.3, 1.0, 0.2], "angle_deg": 30.0, "translation": [0.4, -0.2, 0.1]}}
    degrade = {"noise_sigma": cfg.noise_sigma, "keep_fraction": cfg.keep_fraction,
               "outlier_points": cfg.outlier_points, "rng_seed": cfg.seed + 1}
    matcher = {"variant": cfg.matcher}
    if cfg.matcher == "oracle":
        matcher |= {"oracle_outlier_fraction": cfg.oracle_outlier_fraction, "provenance": "scan.truth.json"}
    docs = {"scene.json": scene, "degrade.json": degrade, "config.json": {"matcher": matcher, "seed": cfg.seed}}
    for name, doc in docs.items():
        (out / name).write_text(json.dumps(doc, indent=2))
    p = str(out)
    steps = [
        ["synth", "--scene", f"{p}/scene.json", "--degrade", f"{p}/degrade.json", "--out-prefix", f"{p}/scan"],
        ["register", "--source", f"{p}/scan.source.ply", "--labels", f"{p}/scan.labels",
         "--target", f"{p}/scan.target.ply", "--config", f"{p}/config.json", "--out", f"{p}/result.json"],
        ["eval", "--result", f"{p}/result.json", "--truth", f"{p}/scan.truth.json"],
    ]
    for argv in steps:
        print("$ pwralign " + " ".join(argv))
        rc = cli(argv)
        if rc:
            return rc
    return 0


def main() -> None:
    p = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    p.add_argument("--out", type=Path, default=Path("demo_out"))
    p.add_argument("--matcher", choices=["oracle", "feature"], default="oracle",
                   help="the FPFH-style feature matcher needs a clean full-density scan of these "
                        "flat-faced boxes, so 'feature' also switches degradation off")
    p.add_argument("--seed", type=int, default=0)
    a = p.parse_args()
    cfg = DemoConfig(matcher=a.matcher, seed=a.seed)
    if a.matcher == "feature":
        cfg.noise_sigma, cfg.keep_fraction, cfg.outlier_points = 0.0, 1.0, 0
    print("config:", asdict(cfg))
    raise SystemExit(run(cfg, a.out))


if __name__ == "__main__":
    main()
