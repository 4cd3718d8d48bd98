"""Mean per-part rotation error as the target scan gets sparser.

Also prints error x sqrt(keep): if that column stays flat the error follows
the 1/sqrt(points) law of a least-squares estimate under fixed noise.

    python3 scripts/sparsity_sweep.py --seeds 10
"""
from __future__ import annotations

import argparse
import logging
from dataclasses import dataclass, field

import numpy as np

from pwralign.evaluation import hinge_scene, max_junction_gap, part_errors, run_oracle


@dataclass
class SweepConfig:
    keeps: list[float] = field(default_factory=lambda: [1.0, 0.5, 0.25, 0.1])
    seeds: int = 10
    noise_frac: float = 0.005
    outlier_fraction: float = 0.2


def sweep(cfg: SweepConfig) -> dict[float, dict]:
    out = {}
    for keep in cfg.keeps:
        errs, worst_gap, statuses = [], 0.0, []
        for s in range(cfg.seeds):
            sc = hinge_scene(noise_frac=cfg.noise_frac, keep_fraction=keep, seed=s)
            res = run_oracle(sc, cfg.outlier_fraction, s)
            errs += [e[0] for e in part_errors(res.part_transforms, sc.truth).values()]
            worst_gap = max(worst_gap, max_junction_gap(sc, res) / res.config.tau_joint)
            statuses += [str(v) for v in res.part_status.values()]
        out[keep] = {"mean": float(np.mean(errs)), "sem": float(np.std(errs) / np.sqrt(len(errs))),
                     "gap": worst_gap, "not_adjusted": sum(v != "Adjusted" for v in statuses)}
    return out


def main() -> None:
    p = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    p.add_argument("--seeds", type=int, default=SweepConfig.seeds)
    p.add_argument("--noise", type=float, default=SweepConfig.noise_frac, help="sigma / scene diagonal")
    p.add_argument("--outliers", type=float, default=SweepConfig.outlier_fraction)
    p.add_argument("--keeps", type=float, nargs="+", default=None)
    a = p.parse_args()
    logging.basicConfig(level=logging.ERROR)
    cfg = SweepConfig(seeds=a.seeds, noise_frac=a.noise, outlier_fraction=a.outliers)
    if a.keeps:
        cfg.keeps = a.keeps
    table = sweep(cfg)
    base = table[cfg.keeps[0]]["mean"]
    print(f"{'keep':>6} {'mean_deg':>9} {'+-sem':>7} {'x sqrt(keep)':>13} {'ratio':>6} {'gap/tau':>8} {'skips':>6}")
    for k, row in table.items():
        print(f"{k:>6.2f} {row['mean']:>9.4f} {row['sem']:>7.4f} {row['mean'] * np.sqrt(k):>13.4f} "
              f"{row['mean'] / base:>6.2f} {row['gap']:>8.3f} {row['not_adjusted']:>6d}")


if __name__ == "__main__":
    main()
