#!/usr/bin/env python3
"""Validity-region sweep of the coloured-noise closures on the bistable
system: stationary L1 vs Monte Carlo over a (D, tau) grid.

Thin wrapper over the `genfpk sweep` subcommand with the canonical grid.
"""

import argparse
import sys

from genfpk.cli import main as cli_main


def main(argv=None):
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--D-values", default="0.2,1,2,5")
    ap.add_argument("--tau-values", default="0.1,1,5")
    ap.add_argument("--methods", default="Hanggi,VADA2,VADA4")
    ap.add_argument("--samples", type=int, default=50_000)
    ap.add_argument("--seed", type=int, default=0)
    ap.add_argument("--dt", type=float, default=0.005)
    ap.add_argument("--out", default="runs/validity-sweep")
    args = ap.parse_args(argv)

    return cli_main([
        "sweep",
        "--D-values", args.D_values,
        "--tau-values", args.tau_values,
        "--methods", args.methods,
        "--samples", str(args.samples),
        "--seed", str(args.seed),
        "--dt", str(args.dt),
        "--out", args.out,
    ])


if __name__ == "__main__":
    sys.exit(main())
