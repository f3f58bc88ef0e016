"""Run the three presets end to end and write their tables.

    python3 scripts/reproduce_figures.py --out runs --full --workers 4

Each preset writes result.csv, oracle.csv and report.csv into its own
subdirectory and prints its checks; the exit code is the worst one seen.
"""

import argparse
from pathlib import Path

from jumpscale.cli import cli_dispatch


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--out", type=Path, default=Path("runs"))
    ap.add_argument("--full", action="store_true", help="full ensemble size")
    ap.add_argument("--workers", type=int, default=1)
    ap.add_argument("--seed", type=int, default=0)
    args = ap.parse_args()
    codes = []
    for name in ("fig1", "fig2", "fig3"):
        argv = [name, "--out", str(args.out / name), "--workers", str(args.workers), "--seed", str(args.seed)]
        if args.full:
            argv.append("--full")
        codes.append(cli_dispatch(argv))
    raise SystemExit(max(codes))


if __name__ == "__main__":
    main()
