"""Reconstruction with multi-jump realizations dropped versus kept.

The ensemble runner drops realizations with two or more jumps.  This script
reruns the Lindblad preset trajectory by trajectory and reconstructs both
ways, reporting the difference to the master equation at the horizon.

    python3 scripts/multi_jump_policy.py --n-traj 50000
"""

import argparse
from dataclasses import dataclass

import numpy as np

from jumpscale.ensemble import PRESETS, oracle_curve
from jumpscale.estimator import ScalingLedger, reconstruct, standard_error, total_transition_rate
from jumpscale.jumps import trajectory_stream
from jumpscale.trajectories import prepare_mcwf, run_mcwf_trajectory


@dataclass(frozen=True)
class PolicyConfig:
    n_traj: int = 50_000
    beta: float = 1e4
    seed: int = 0


def compare_policies(cfg: PolicyConfig) -> dict:
    run = PRESETS["fig1"].with_overrides(n_traj=cfg.n_traj, beta=cfg.beta, seed=cfg.seed)
    tcfg = run.trajectory_config()
    sh = prepare_mcwf(tcfg)
    a0 = sh.path.observable_curve
    p_tot = total_transition_rate(sh.path, run.beta)
    values = np.empty((cfg.n_traj, a0.size))
    jumped = np.empty((cfg.n_traj, a0.size), dtype=bool)
    multi = np.empty(cfg.n_traj, dtype=bool)
    for tid in range(cfg.n_traj):
        rec = run_mcwf_trajectory(tcfg, trajectory_stream(run.seed, tid), tid, shared=sh)
        values[tid], jumped[tid], multi[tid] = rec.values, rec.jumped_by, rec.multi_jump
    truth = oracle_curve(run).value[-1]
    out = {"n_multi": int(multi.sum())}
    for name, keep in (("dropped", ~multi), ("kept", np.ones_like(multi))):
        v, j = values[keep], jumped[keep]
        led = ScalingLedger(run.beta, run.sample_grid, a0, p_tot, int(keep.sum()), j.sum(axis=0), v.mean(axis=0))
        se = standard_error(np.where(j, v, 0.0), run.beta)
        out[name] = (float(reconstruct(led)[-1] - truth), float(se[-1]))
    return out


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--n-traj", type=int, default=PolicyConfig.n_traj)
    ap.add_argument("--beta", type=float, default=PolicyConfig.beta)
    ap.add_argument("--seed", type=int, default=PolicyConfig.seed)
    args = ap.parse_args()
    res = compare_policies(PolicyConfig(args.n_traj, args.beta, args.seed))
    print(f"multi-jump realizations: {res['n_multi']} of {args.n_traj}")
    for name in ("dropped", "kept"):
        bias, se = res[name]
        print(f"{name}: horizon bias {bias:.3e} +- {se:.3e} ({bias / se:.1f} stderr)")


if __name__ == "__main__":
    main()
