"""Bias of the reconstruction against the master equation as beta varies.

For the Lindblad preset, runs one ensemble per beta and prints the
reconstructed-minus-oracle difference at the horizon next to its standard
error, the cumulative scaled probability P_c and the multi-jump count.

    python3 scripts/beta_sweep.py --betas 1e4 3e3 1e3 --n-traj 100000
"""

import argparse
from dataclasses import dataclass

from jumpscale.ensemble import PRESETS, compare, oracle_curve, run_ensemble


@dataclass(frozen=True)
class SweepConfig:
    betas: tuple = (1e4, 3e3, 1e3)
    n_traj: int = 100_000
    preset: str = "fig1"
    workers: int = 1
    seed: int = 0


def sweep(cfg: SweepConfig) -> list:
    base = PRESETS[cfg.preset].with_overrides(n_traj=cfg.n_traj, seed=cfg.seed)
    orc = oracle_curve(base)
    rows = []
    for beta in cfg.betas:
        res = run_ensemble(base.with_overrides(beta=beta), workers=cfg.workers)
        rep = compare(res, orc)
        diff = res.reconstructed - orc.value
        rows.append(dict(beta=beta, p_c=res.summary["P_c"], n_multi=res.summary["n_multi"],
                         bias=float(diff[-1]), stderr=float(res.stderr[-1]),
                         max_abs_z=rep.max_abs_z, frac_within_3=rep.frac_within_3))
    return rows


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--betas", type=float, nargs="+", default=list(SweepConfig.betas))
    ap.add_argument("--n-traj", type=int, default=SweepConfig.n_traj)
    ap.add_argument("--preset", choices=sorted(PRESETS), default=SweepConfig.preset)
    ap.add_argument("--workers", type=int, default=SweepConfig.workers)
    ap.add_argument("--seed", type=int, default=SweepConfig.seed)
    args = ap.parse_args()
    cfg = SweepConfig(tuple(args.betas), args.n_traj, args.preset, args.workers, args.seed)
    print("beta,P_c,n_multi,horizon_bias,horizon_stderr,max_abs_z,frac_within_3")
    for row in sweep(cfg):
        print(f"{row['beta']:g},{row['p_c']:.4g},{row['n_multi']},{row['bias']:.3e},"
              f"{row['stderr']:.3e},{row['max_abs_z']:.3g},{row['frac_within_3']:.3f}")


if __name__ == "__main__":
    main()
