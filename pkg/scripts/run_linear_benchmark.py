#!/usr/bin/env python3
"""Linear benchmark: solve the exact-diffusion pdf equation for the stable
linear system under OU excitation and report the error against the analytic
Gaussian at every snapshot.

Writes a run directory (snapshots, final pdf, diagnostics, manifest) plus
an error table on stdout.
"""

import argparse
import sys
from pathlib import Path

import numpy as np

from genfpk.analytic import GaussianEvolution
from genfpk.cli import main as cli_main
from genfpk.model import (
    InitialSpec,
    ModelSpec,
    NoiseSpec,
    OUKernel,
    Scenario,
    save_scenario,
)


def main(argv=None):
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--out", default="runs/linear-benchmark")
    ap.add_argument("--K", type=int, default=50)
    ap.add_argument("--basis", type=int, default=4)
    ap.add_argument("--dt", type=float, default=None)
    args = ap.parse_args(argv)

    model = ModelSpec(etas=((1, -0.8),), kappa=0.2, t0=0.0, t_end=12.5)
    noise = NoiseSpec(kernel=OUKernel(D=1.0, tau=1.0, convention="plain"), mean=0.2)
    init = InitialSpec(mean=-0.7, variance=0.15**2)
    scenario = Scenario(model=model, noise=noise, init=init,
                        label="linear-benchmark")

    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    scen_path = out / "scenario.json"
    save_scenario(scenario, scen_path)

    cmd = ["solve", str(scen_path), "--method", "ExactLinear",
           "--K", str(args.K), "--basis", str(args.basis), "--out", str(out)]
    if args.dt:
        cmd += ["--dt", str(args.dt)]
    rc = cli_main(cmd)
    if rc != 0:
        return rc

    # error table against the analytic Gaussian
    import csv
    with open(out / "snapshots.csv") as f:
        rows = list(csv.reader(f))
    grid = np.asarray(rows[0][1:], dtype=float)
    ev = GaussianEvolution(model=model, noise=noise, init=init)
    print(f"{'t':>8} {'Linf error':>12}")
    worst = 0.0
    for row in rows[1:]:
        t = float(row[0])
        fh = np.asarray(row[1:], dtype=float)
        err = float(np.max(np.abs(fh - ev.pdf(t, grid))))
        worst = max(worst, err)
        print(f"{t:8.3f} {err:12.3e}")
    print(f"worst-case Linf = {worst:.3e}")
    return 0


if __name__ == "__main__":
    sys.exit(main())
