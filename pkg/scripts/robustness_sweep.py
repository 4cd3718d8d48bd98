"""Pass rate of the 3 deg / 1%-of-diagonal gate over a grid of noise and outlier levels.

    python3 scripts/robustness_sweep.py --seeds 5
"""
from __future__ import annotations

import argparse
import logging
from dataclasses import dataclass, field

from pwralign.evaluation import hinge_scene, max_junction_gap, part_errors, run_oracle


@dataclass
class GridConfig:
    noise_fracs: list[float] = field(default_factory=lambda: [0.0, 0.0025, 0.005, 0.01])
    outlier_fractions: list[float] = field(default_factory=lambda: [0.0, 0.2, 0.4, 0.6])
    keep_fraction: float = 0.7
    seeds: int = 5
    max_rot_deg: float = 3.0
    max_trans_frac: float = 0.01


def cell(cfg: GridConfig, noise: float, outl: float) -> tuple[int, float, float]:
    passed, worst_rot, worst_gap = 0, 0.0, 0.0
    for s in range(cfg.seeds):
        sc = hinge_scene(noise_frac=noise, keep_fraction=cfg.keep_fraction, seed=s)
        res = run_oracle(sc, outl, s)
        errs = part_errors(res.part_transforms, sc.truth).values()
        rot = max(e[0] for e in errs)
        trans = max(e[1] for e in errs) / sc.diagonal
        passed += rot < cfg.max_rot_deg and trans < cfg.max_trans_frac
        worst_rot = max(worst_rot, rot)
        worst_gap = max(worst_gap, max_junction_gap(sc, res) / res.config.tau_joint)
    return passed, worst_rot, worst_gap


def main() -> None:
    p = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    p.add_argument("--seeds", type=int, default=GridConfig.seeds)
    p.add_argument("--keep", type=float, default=GridConfig.keep_fraction)
    a = p.parse_args()
    logging.basicConfig(level=logging.ERROR)
    cfg = GridConfig(seeds=a.seeds, keep_fraction=a.keep)
    print(f"{'noise':>7} {'outliers':>8} {'pass':>6} {'worst_deg':>10} {'gap/tau':>8}")
    for noise in cfg.noise_fracs:
        for outl in cfg.outlier_fractions:
            n, rot, gap = cell(cfg, noise, outl)
            print(f"{noise:>7.4f} {outl:>8.2f} {n:>3d}/{cfg.seeds:<2d} {rot:>10.3f} {gap:>8.3f}")


if __name__ == "__main__":
    main()
