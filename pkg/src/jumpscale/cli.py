"""Command-line entry point.

Exit codes: 0 success, 1 usage or configuration error, 2 numerical guard
trip, 3 acceptance comparison failure.
"""

from __future__ import annotations

import argparse
import logging
import sys
from pathlib import Path

import numpy as np

from .coefficients import OhmicParams, delta_coefficient, gamma_coefficient
from .ensemble import (
    FULL_N_TRAJ,
    PRESETS,
    QUICK_N_TRAJ,
    EnsembleResult,
    OracleCurve,
    RunConfig,
    compare,
    oracle_curve,
    run_ensemble,
)
from .errors import ConfigError, GuardTrip, OracleError

EXIT_OK, EXIT_USAGE, EXIT_GUARD, EXIT_ACCEPTANCE = 0, 1, 2, 3
CANCEL_RATIO = 0.1


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        raise ConfigError(f"{self.prog}: {message}")


def _count(text: str) -> int:
    val = float(text)
    if val != int(val) or val < 1:
        raise argparse.ArgumentTypeError(f"expected a positive integer, got {text!r}")
    return int(val)


GLOBAL_DEFAULTS = {"seed": None, "n_traj": None, "workers": 1, "out": None}


def _parser() -> argparse.ArgumentParser:
    # SUPPRESS so a flag given before the subcommand is not reset by the subparser
    common = argparse.ArgumentParser(add_help=False, argument_default=argparse.SUPPRESS)
    common.add_argument("--seed", type=int, help="master seed")
    common.add_argument("--n-traj", type=_count, help="number of trajectories")
    common.add_argument("--workers", type=int, help="worker processes (default 1)")
    common.add_argument("--out", type=Path, help="output path (file or directory)")

    p = _Parser(prog="jumpscale", description="Scaled quantum-jump ensembles for a damped oscillator.",
                parents=[common])
    sub = p.add_subparsers(dest="command", required=True, parser_class=_Parser)

    c = sub.add_parser("coeffs", parents=[common], help="tabulate decay coefficients")
    c.add_argument("--theta-bar", type=float, default=1.2e-6)
    c.add_argument("--g-bar", type=float, default=0.5e-8)
    c.add_argument("--r", type=float, default=10.0)
    c.add_argument("--t-final", type=float, default=5.0)
    c.add_argument("--samples", type=int, default=51)

    r = sub.add_parser("run", parents=[common], help="run an ensemble from a config file")
    r.add_argument("config", type=Path)

    o = sub.add_parser("oracle", parents=[common], help="master-equation reference for a config file")
    o.add_argument("config", type=Path)

    m = sub.add_parser("compare", parents=[common], help="z-scores of a result against an oracle curve")
    m.add_argument("result", type=Path)
    m.add_argument("oracle", type=Path)

    helps = {
        "fig1": "Lindblad preset (mcwf, beta=1e4) against the master equation",
        "fig2": "non-Lindblad preset (doubled, beta=1e5) against the master equation",
        "fig3": "non-Lindblad preset with the reconstruction term breakdown",
    }
    for name, text in helps.items():
        f = sub.add_parser(name, parents=[common], help=text)
        f.add_argument("--full", action="store_true",
                       help=f"use {FULL_N_TRAJ} trajectories (default {QUICK_N_TRAJ})")
    return p


def _emit(text: str, out: Path | None, default_name: str):
    if out is None:
        sys.stdout.write(text)
        return
    path = out / default_name if out.is_dir() else out
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(text, encoding="utf-8")


def _cmd_coeffs(args) -> int:
    p = OhmicParams(args.theta_bar, args.g_bar, args.r)
    t = np.linspace(0.0, args.t_final, args.samples)
    d, g = delta_coefficient(t, p), gamma_coefficient(t, p)
    rows = ["t,Delta,Gamma,Delta-Gamma,Delta+Gamma"]
    rows += [f"{a:.16e},{b:.16e},{c:.16e},{b - c:.16e},{b + c:.16e}" for a, b, c in zip(t, d, g)]
    _emit("\n".join(rows) + "\n", args.out, "coeffs.csv")
    return EXIT_OK


def _overrides(cfg: RunConfig, args, full: bool = False) -> RunConfig:
    n_traj = args.n_traj if args.n_traj is not None else (FULL_N_TRAJ if full else None)
    return cfg.with_overrides(seed=args.seed, n_traj=n_traj)


def _result_path(args, name: str) -> Path:
    if args.out is None:
        return Path(name)
    return args.out / name if args.out.is_dir() or args.out.suffix == "" else args.out


def _cmd_run(args) -> int:
    cfg = _overrides(RunConfig.load(args.config), args)
    res = run_ensemble(cfg, workers=args.workers)
    path = res.write(_result_path(args, "result.csv"))
    print(f"wrote {path} ({cfg.n_traj} trajectories, {res.wall_time:.1f} s, "
          f"P_c = {res.summary['P_c']:.4g}, multi-jump = {res.summary['n_multi']})")
    return EXIT_OK


def _cmd_oracle(args) -> int:
    cfg = RunConfig.load(args.config)
    path = oracle_curve(cfg).write(_result_path(args, "oracle.csv"))
    print(f"wrote {path}")
    return EXIT_OK


def _cmd_compare(args) -> int:
    res = EnsembleResult.read(args.result)
    rep = compare(res, OracleCurve.read(args.oracle))
    _emit(rep.to_text(), args.out, "report.csv")
    print(f"max |z| = {rep.max_abs_z:.3g}, fraction |z| <= 3: {rep.frac_within_3:.3f}", file=sys.stderr)
    return EXIT_OK


def _cmd_figure(args) -> int:
    full = args.full
    cfg = _overrides(PRESETS[args.command], args, full=full)
    bound = 3.0 if full else 4.0
    res = run_ensemble(cfg, workers=args.workers)
    orc = oracle_curve(cfg)
    rep = compare(res, orc)
    res.summary["max_abs_z"] = rep.max_abs_z
    out = args.out or Path(f"{args.command}_out")
    out.mkdir(parents=True, exist_ok=True)
    res.write(out / "result.csv")
    orc.write(out / "oracle.csv")
    (out / "report.csv").write_text(rep.to_text(), encoding="utf-8")

    checks = []
    if args.command == "fig1":
        checks.append((f"|z| <= {bound:g} at every sample time", rep.fraction_within(bound) == 1.0))
        checks.append(("initial value equals the no-jump value",
                       res.columns["reconstructed"][0] == res.columns["a0"][0]))
    else:
        checks.append((f"fraction |z| <= {bound:g} at least 0.99", rep.fraction_within(bound) >= 0.99))
    if args.command == "fig3":
        tb, tc = res.columns["T_B"][-1], res.columns["T_C"][-1]
        checks.append((f"|T_B + T_C| <= {CANCEL_RATIO} max(|T_B|, |T_C|) at the horizon",
                       abs(tb + tc) <= CANCEL_RATIO * max(abs(tb), abs(tc))))
        td = res.columns["T_D"][-1]
        print(f"horizon terms: T_B = {tb:.6e}, T_C = {tc:.6e}, T_D = {td:.6e}, "
              f"T_C + T_D = {tc + td:.6e}")
    print(f"{args.command}: n_traj = {cfg.n_traj}, beta = {cfg.beta:g}, P_c = {res.summary['P_c']:.4g}, "
          f"multi-jump = {res.summary['n_multi']}, max |z| = {rep.max_abs_z:.3g}, "
          f"wall time = {res.wall_time:.1f} s")
    for label, ok in checks:
        print(f"  [{'PASS' if ok else 'FAIL'}] {label}")
    print(f"outputs in {out}")
    return EXIT_OK if all(ok for _, ok in checks) else EXIT_ACCEPTANCE


COMMANDS = {
    "coeffs": _cmd_coeffs,
    "run": _cmd_run,
    "oracle": _cmd_oracle,
    "compare": _cmd_compare,
    "fig1": _cmd_figure,
    "fig2": _cmd_figure,
    "fig3": _cmd_figure,
}


def cli_dispatch(argv) -> int:
    """Parse ``argv`` and run the command; returns the exit code."""
    try:
        args = _parser().parse_args(list(argv))
        for key, val in GLOBAL_DEFAULTS.items():
            if not hasattr(args, key):
                setattr(args, key, val)
        if args.workers < 1:
            raise ConfigError("--workers must be >= 1")
        return COMMANDS[args.command](args)
    except SystemExit as exc:  # --help
        return EXIT_OK if exc.code in (0, None) else EXIT_USAGE
    except (GuardTrip, OracleError) as exc:
        print(f"guard trip: {exc}", file=sys.stderr)
        return EXIT_GUARD
    except (ConfigError, FileNotFoundError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE


def main() -> None:
    logging.basicConfig(level=logging.WARNING, format="%(levelname)s: %(message)s")
    sys.exit(cli_dispatch(sys.argv[1:]))


if __name__ == "__main__":
    main()
