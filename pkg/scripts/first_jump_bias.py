"""Deterministic prediction of the reconstruction bias at one time.

Treats every realization as jumping at most once with the scaled first-jump
density beta * r(s) * exp(-beta * Lambda(s)) and evaluates the expected
reconstruction by quadrature.  The gap to the one-jump expansion at beta = 1
is the bias that remains however many trajectories are run.

    python3 scripts/first_jump_bias.py --betas 1e4 3e3 1e3 100
"""

import argparse
from dataclasses import dataclass

import numpy as np
from scipy.integrate import cumulative_trapezoid

from jumpscale.ensemble import PRESETS
from jumpscale.flow import population_factors
from jumpscale.hilbert import make_initial_state, observable_weights
from jumpscale.oracle import path_integral_expectation


@dataclass(frozen=True)
class BiasConfig:
    betas: tuple = (1e4, 3e3, 1e3, 1e2)
    time: float = 5.0
    nodes: int = 20_001
    preset: str = "fig1"


def _post_jump(pops, op):
    out = np.zeros_like(pops)
    k = np.arange(1, pops.shape[-1], dtype=float)
    if op == "lower":
        out[:, :-1] = k * pops[:, 1:]
    else:
        out[:, 1:] = k * pops[:, :-1]
    return out


def predicted_bias(cfg: BiasConfig) -> list:
    run = PRESETS[cfg.preset]
    model = run.trajectory_config().model
    n_max = run.n_max
    psi0 = make_initial_state(run.state, n_max)
    obs = observable_weights(run.observable, n_max)
    weights = model.jump_weights(n_max)
    s = np.linspace(0.0, cfg.time, cfg.nodes)
    pops = psi0.populations() * population_factors(0.0, s, model, n_max)
    pops /= pops.sum(axis=1, keepdims=True)
    flux = model.rates(s) * (pops @ weights.T).T  # per channel
    lam = cumulative_trapezoid(flux.sum(axis=0), s, initial=0.0)
    decay = np.exp(-((model.integrals(np.array([cfg.time]))[:, 0][:, None] - model.integrals(s)).T @ weights))
    a0 = float(pops[-1] @ obs)
    after = np.empty_like(flux)
    for i, op in enumerate(model.operators):
        q = _post_jump(pops, op) * decay
        after[i] = (q @ obs) / q.sum(axis=1)
    truth = path_integral_expectation(psi0, model, cfg.time)
    rows = []
    for beta in cfg.betas:
        p_c = beta * lam[-1]
        shift = np.trapezoid((beta * flux * (after - a0)).sum(axis=0) * np.exp(-beta * lam), s)
        expected = a0 * (1 - lam[-1]) - np.exp(-p_c) * a0 / beta + (a0 + shift) / beta
        rows.append((beta, p_c, expected - truth))
    return rows


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--betas", type=float, nargs="+", default=list(BiasConfig.betas))
    ap.add_argument("--time", type=float, default=BiasConfig.time)
    ap.add_argument("--preset", choices=["fig1"], default=BiasConfig.preset)
    args = ap.parse_args()
    print("beta,P_c,predicted_bias")
    for beta, p_c, bias in predicted_bias(BiasConfig(tuple(args.betas), args.time, preset=args.preset)):
        print(f"{beta:g},{p_c:.4g},{bias:.3e}")


if __name__ == "__main__":
    main()
