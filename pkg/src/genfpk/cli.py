"""Command line entry point.

Subcommands:
  solve              march a pdf evolution equation for a scenario file
  mc                 Monte Carlo ensemble + kernel density estimate
  compare            L1/Linf/peak report across finished run directories
  sweep              (D, tau) validity-region matrix on the bistable system
  validate-scenario  schema-check a scenario file

Exit codes: 0 success, 2 validation error, 3 solver failure, 4 divergence.

Every run writes into its own directory: CSV artifacts plus a
manifest.json listing each emitted file, the scenario, the configuration
and a diagnostics summary.
"""

from __future__ import annotations

import argparse
import concurrent.futures
import csv
import json
import os
import sys
import time
from pathlib import Path
from typing import Dict, List, Optional, Sequence

import numpy as np

from . import montecarlo as mc
from . import solver as sv
from ._quad import trapz
from .errors import (
    ConfigurationError,
    DivergenceError,
    GenFpkError,
    ParameterError,
    StepFailure,
    UsageError,
)
from .model import (
    ModelSpec,
    NoiseSpec,
    OUKernel,
    InitialSpec,
    Scenario,
    load_scenario,
    scenario_to_dict,
)

__all__ = ["main", "build_parser"]

EXIT_OK = 0
EXIT_VALIDATION = 2
EXIT_SOLVER = 3
EXIT_DIVERGENCE = 4


# --------------------------------------------------------------------------
# manifest / file helpers
# --------------------------------------------------------------------------

class RunManifest:
    def __init__(self, out_dir: Path, command: str):
        self.out_dir = out_dir
        self.data: Dict = {
            "command": command,
            "files": [],
            "warnings": [],
            "timings": {},
        }
        self._t0 = time.time()

    def add_file(self, name: str):
        if name not in self.data["files"]:
            self.data["files"].append(name)

    def warn(self, message: str):
        self.data["warnings"].append(message)

    def finish(self):
        self.data["timings"]["wall_seconds"] = round(time.time() - self._t0, 3)
        path = self.out_dir / "manifest.json"
        self.add_file("manifest.json")
        with open(path, "w") as f:
            json.dump(self.data, f, indent=2)
            f.write("\n")


def _write_csv(path: Path, header: Sequence, rows) -> None:
    with open(path, "w", newline="") as f:
        w = csv.writer(f)
        w.writerow(header)
        for row in rows:
            w.writerow(row)


def _write_snapshots(out_dir: Path, manifest: RunManifest, grid: np.ndarray,
                     times: np.ndarray, pdfs: List[np.ndarray]) -> None:
    rows = [[f"{t:.10g}"] + [f"{v:.10g}" for v in p] for t, p in zip(times, pdfs)]
    _write_csv(out_dir / "snapshots.csv",
               ["t"] + [f"{x:.10g}" for x in grid], rows)
    manifest.add_file("snapshots.csv")


def _write_density(out_dir: Path, manifest: RunManifest, name: str,
                   grid: np.ndarray, f: np.ndarray) -> None:
    _write_csv(out_dir / name, ["x", "f"],
               [[f"{x:.10g}", f"{v:.10g}"] for x, v in zip(grid, f)])
    manifest.add_file(name)


def _out_dir(args, default: str) -> Path:
    out = Path(args.out) if args.out else Path("runs") / default
    out.mkdir(parents=True, exist_ok=True)
    return out


def _read_density(run_dir: Path, name: str):
    with open(run_dir / name) as f:
        rows = list(csv.reader(f))
    data = np.asarray(rows[1:], dtype=float)
    return data[:, 0], data[:, 1]


def _read_snapshots(run_dir: Path):
    with open(run_dir / "snapshots.csv") as f:
        rows = list(csv.reader(f))
    grid = np.asarray(rows[0][1:], dtype=float)
    data = np.asarray(rows[1:], dtype=float)
    return grid, data[:, 0], data[:, 1:]


# --------------------------------------------------------------------------
# argument plumbing
# --------------------------------------------------------------------------

def _add_discretization_flags(p: argparse.ArgumentParser):
    p.add_argument("--method", default="VADA",
                   help="ExactLinear | WhiteNoiseFPK | SCT | Fox | Hanggi | VADA")
    p.add_argument("--vada-order", type=int, default=2)
    p.add_argument("--allow-odd", action="store_true")
    p.add_argument("--K", type=int, default=50, help="subdomain count")
    p.add_argument("--basis", type=int, default=4, help="Legendre functions per subdomain")
    p.add_argument("--smoothness", type=int, default=2, choices=(1, 2, 3))
    p.add_argument("--dt", type=float, default=None)
    p.add_argument("--eps-tol", type=float, default=1e-8)
    p.add_argument("--domain", type=str, default=None, help="lo,hi (default: estimated)")
    p.add_argument("--grid-points", type=int, default=401)


def _parse_domain(text: Optional[str]):
    if text is None:
        return None
    try:
        lo, hi = (float(v) for v in text.split(","))
    except ValueError as e:
        raise ParameterError(f"--domain expects 'lo,hi', got {text!r}") from e
    if hi <= lo:
        raise ParameterError("--domain upper bound must exceed lower bound")
    return (lo, hi)


def _config_from_args(args) -> sv.SolveConfig:
    return sv.SolveConfig(
        method=args.method, vada_order=args.vada_order, dt=args.dt,
        eps_tol=args.eps_tol, K=args.K, basis_count=args.basis,
        smoothness=args.smoothness, domain=_parse_domain(args.domain),
        allow_odd=args.allow_odd, seed=args.seed,
    )


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="genfpk",
                                description="Probability-density evolution solvers "
                                            "for randomly forced scalar ODEs")
    sub = p.add_subparsers(dest="command", required=True)

    ps = sub.add_parser("solve", help="run a pdf evolution equation")
    ps.add_argument("scenario", type=Path)
    _add_discretization_flags(ps)
    ps.add_argument("--seed", type=int, default=0)
    ps.add_argument("--out", type=str, default=None)
    ps.set_defaults(func=cmd_solve)

    pm = sub.add_parser("mc", help="Monte Carlo ensemble + density estimate")
    pm.add_argument("scenario", type=Path)
    pm.add_argument("--samples", type=int, default=50_000)
    pm.add_argument("--seed", type=int, default=0)
    pm.add_argument("--dt", type=float, default=None, help="path integration step")
    pm.add_argument("--domain", type=str, default=None)
    pm.add_argument("--grid-points", type=int, default=401)
    pm.add_argument("--stationary", action="store_true",
                    help="pool decorrelated stationary samples instead of snapshots")
    pm.add_argument("--out", type=str, default=None)
    pm.set_defaults(func=cmd_mc)

    pc = sub.add_parser("compare", help="compare finished run directories")
    pc.add_argument("runs", nargs="+", type=Path)
    pc.add_argument("--out", type=str, default=None)
    pc.set_defaults(func=cmd_compare)

    pw = sub.add_parser("sweep", help="(D, tau) validity matrix, bistable system")
    pw.add_argument("--D-values", type=str, default="0.2,1,2,5")
    pw.add_argument("--tau-values", type=str, default="0.1,1,5")
    pw.add_argument("--methods", type=str, default="Hanggi,VADA2,VADA4")
    pw.add_argument("--samples", type=int, default=50_000)
    pw.add_argument("--seed", type=int, default=0)
    pw.add_argument("--dt", type=float, default=0.005)
    pw.add_argument("--t-end", type=float, default=None)
    pw.add_argument("--out", type=str, default=None)
    pw.set_defaults(func=cmd_sweep)

    pv = sub.add_parser("validate-scenario", help="schema-check a scenario file")
    pv.add_argument("scenario", type=Path)
    pv.set_defaults(func=cmd_validate)
    return p


# --------------------------------------------------------------------------
# subcommands
# --------------------------------------------------------------------------

def cmd_solve(args) -> int:
    scenario = load_scenario(args.scenario)
    config = _config_from_args(args)
    out = _out_dir(args, f"solve-{scenario.label or args.scenario.stem}-{args.method}")
    manifest = RunManifest(out, "solve")
    result = sv.run(scenario, config)

    lo, hi = result.domain
    grid = np.linspace(lo, hi, args.grid_points)
    pdfs = [result.pdf_on(grid, i) for i in range(len(result.weights))]
    _write_snapshots(out, manifest, grid, result.times, pdfs)
    _write_density(out, manifest, "final_pdf.csv", grid, pdfs[-1])

    diag = result.diagnostics
    rows = []
    for i, t in enumerate(result.times):
        row = [f"{t:.10g}", f"{diag['norm'][i]:.10g}",
               f"{diag['I'][i]:.10g}", f"{diag['P'][i]:.10g}"]
        row.append(f"{diag['d_eff'][i]:.10g}" if diag["d_eff"] else "")
        if diag["sct_reports"]:
            rep = diag["sct_reports"][i][1]
            row.append("" if rep.valid else f"{rep.x_negative:.6g}")
        else:
            row.append("")
        rows.append(row)
    _write_csv(out / "diagnostics.csv",
               ["t", "norm", "I", "P", "d_eff", "sct_negative_at"], rows)
    manifest.add_file("diagnostics.csv")

    t_st = sv.detect_stationarity(result)
    manifest.data.update({
        "scenario": scenario_to_dict(scenario),
        "method": args.method,
        "vada_order": args.vada_order if args.method in ("VADA",) else None,
        "discretization": {"K": config.K, "basis": config.basis_count,
                           "smoothness": config.smoothness,
                           "dt": config.dt or sv.default_dt(scenario),
                           "domain": [lo, hi]},
        "diagnostics": {
            "norm_drift_max": float(np.max(np.abs(np.asarray(diag["norm"]) - 1.0))),
            "iterations_max": max(diag["iterations"], default=0),
            "boundary_events": len(diag["boundary_events"]),
            "sct_negative": any(not r.valid for _, r in diag["sct_reports"]),
            "stationary_at": t_st,
        },
        "seeds": {"domain_estimate": config.seed},
    })
    manifest.finish()
    print(f"solve finished: {out}")
    return EXIT_OK


def cmd_mc(args) -> int:
    scenario = load_scenario(args.scenario)
    out = _out_dir(args, f"mc-{scenario.label or args.scenario.stem}")
    manifest = RunManifest(out, "mc")
    if args.samples < 100:
        raise ParameterError("need at least 100 samples")
    if args.samples < 1000:
        manifest.warn(f"low sample count N_s = {args.samples}; density estimate noisy")

    model = scenario.model
    domain = _parse_domain(args.domain)
    if domain is None:
        probe = sv.SolveConfig(method="Fox", seed=args.seed)
        domain = sv.estimate_domain(scenario, probe)
    grid = np.linspace(domain[0], domain[1], args.grid_points)

    if args.stationary:
        samples = mc.stationary_sampling(scenario, args.dt, args.seed,
                                         N_s=args.samples)
        f = mc.kde_estimate(samples, grid)
        _write_density(out, manifest, "kde.csv", grid, f)
        np.savetxt(out / "samples.csv", samples, header="x", comments="")
        manifest.add_file("samples.csv")
        extra = {"stationary": True, "pooled_samples": int(samples.size)}
    else:
        n_snap = 26
        t_grid = np.linspace(model.t0, model.t_end, n_snap)
        ens = mc.integrate_paths(scenario, args.dt, t_grid, args.samples, args.seed)
        pdfs = [mc.kde_estimate(ens.trajectories[:, i], grid) for i in range(n_snap)]
        _write_snapshots(out, manifest, grid, t_grid, pdfs)
        _write_density(out, manifest, "kde.csv", grid, pdfs[-1])
        extra = {"stationary": False, "flagged_paths": ens.n_flagged,
                 "dt_mc": ens.dt_mc}
    manifest.data.update({
        "scenario": scenario_to_dict(scenario),
        "seeds": {"ensemble": args.seed},
        "samples": args.samples,
        "domain": list(domain),
        **extra,
    })
    manifest.finish()
    print(f"mc finished: {out}")
    return EXIT_OK


def cmd_compare(args) -> int:
    runs = [Path(r) for r in args.runs]
    if len(runs) < 2:
        raise UsageError("compare needs at least two run directories")
    for r in runs:
        if not (r / "manifest.json").exists():
            raise UsageError(f"{r} is not a finished run directory (no manifest)")
    out = _out_dir(args, "compare-" + "-".join(r.name for r in runs)[:80])
    manifest = RunManifest(out, "compare")

    grids, dens = [], []
    for r in runs:
        name = "final_pdf.csv" if (r / "final_pdf.csv").exists() else "kde.csv"
        g, f = _read_density(r, name)
        grids.append(g)
        dens.append(f)
    base = grids[0]
    regridded = [dens[0]]
    for g, f in zip(grids[1:], dens[1:]):
        fi = np.interp(base, g, f, left=0.0, right=0.0)
        z = trapz(fi, base)
        regridded.append(fi / z if z > 0 else fi)

    rows = []
    report = {"baseline": str(runs[0]), "pairs": []}
    for r, f in zip(runs[1:], regridded[1:]):
        comp = mc.compare_pdfs(regridded[0], f, base)
        rows.append([str(runs[0]), str(r), f"{comp.l1:.8g}", f"{comp.linf:.8g}",
                     ";".join(f"{x:.6g}" for x, _ in comp.peaks_p),
                     ";".join(f"{x:.6g}" for x, _ in comp.peaks_q)])
        report["pairs"].append({
            "run": str(r), "l1": comp.l1, "linf": comp.linf,
            "peaks_baseline": [list(p) for p in comp.peaks_p],
            "peaks_run": [list(p) for p in comp.peaks_q],
        })
    _write_csv(out / "report.csv",
               ["baseline", "run", "l1", "linf", "peaks_baseline", "peaks_run"], rows)
    manifest.add_file("report.csv")
    with open(out / "report.json", "w") as f:
        json.dump(report, f, indent=2)
        f.write("\n")
    manifest.add_file("report.json")
    overlay = np.column_stack([base] + regridded)
    _write_csv(out / "overlay.csv",
               ["x"] + [r.name for r in runs],
               [[f"{v:.10g}" for v in row] for row in overlay])
    manifest.add_file("overlay.csv")
    manifest.data["runs"] = [str(r) for r in runs]
    manifest.finish()
    print(f"compare finished: {out}")
    return EXIT_OK


def _bistable_scenario(D: float, tau: float, t_end: float) -> Scenario:
    model = ModelSpec(etas=((1, 1.0), (3, -1.0)), kappa=1.0, t0=0.0, t_end=t_end)
    noise = NoiseSpec(kernel=OUKernel(D=D, tau=tau, convention="scaled"))
    init = InitialSpec(mean=0.0, variance=0.36)
    return Scenario(model=model, noise=noise, init=init, label=f"bistable-D{D}-tau{tau}")


def _sweep_method_config(name: str, dt: Optional[float], seed: int) -> sv.SolveConfig:
    name = name.strip()
    if name == "Hanggi":
        return sv.SolveConfig(method="Hanggi", dt=dt, seed=seed)
    if name == "SCT":
        return sv.SolveConfig(method="SCT", dt=dt, seed=seed)
    if name == "Fox":
        return sv.SolveConfig(method="Fox", dt=dt, seed=seed)
    if name.startswith("VADA"):
        order = int(name[4:] or 2)
        return sv.SolveConfig(method="VADA", vada_order=order, dt=dt, seed=seed)
    raise ParameterError(f"unknown sweep method {name!r}")


def run_sweep_cell(D: float, tau: float, methods: Sequence[str], samples: int,
                   seed: int, dt: Optional[float],
                   t_end: Optional[float]) -> tuple:
    """One (D, tau) cell of the validity matrix: Monte Carlo stationary
    reference plus the requested methods, each reported as an L1 distance
    and a status. Failures are recorded, never propagated, so a sweep
    always produces a complete table.

    The L1 metric is taken against a binned (histogram) density, which is
    free of kernel-bandwidth smoothing bias -- at low noise intensity the
    stationary peaks are narrower than Scott's bandwidth and a KDE-based L1
    would report spurious errors of order 0.3. Peak locations are still read
    off the smoother KDE, where bandwidth bias shifts heights but not
    abscissae of symmetric peaks."""
    t_end = t_end or max(12.0, 6.0 * tau + 6.0)
    scenario = _bistable_scenario(D, tau, t_end)
    cell = {"D": D, "tau": tau, "Dtau": D * tau, "methods": {}}
    rows = []
    try:
        pooled = mc.stationary_sampling(scenario, None, seed, N_s=samples)
    except GenFpkError as e:
        cell["mc_error"] = str(e)
        rows.append([D, tau, "MC", "", f"error: {e}"])
        return rows, cell
    lo = min(float(np.min(pooled)) - 0.5, -3.0)
    hi = max(float(np.max(pooled)) + 0.5, 3.0)
    grid = np.linspace(lo, hi, 601)
    cell["grid_spacing"] = float(grid[1] - grid[0])
    f_mc_kde = mc.kde_estimate(pooled, grid)
    f_mc = mc.binned_density(pooled, grid)
    cell["mc_peaks"] = [list(p)
                        for p in mc.compare_pdfs(f_mc_kde, f_mc_kde, grid).peaks_p]
    for name in methods:
        try:
            config = _sweep_method_config(name, dt, seed)
            result = sv.run(scenario, config)
            t_st = sv.detect_stationarity(result)
            f_m = result.pdf_on(grid, -1)
            f_m = np.clip(f_m, 0.0, None)
            z = trapz(f_m, grid)
            comp = mc.compare_pdfs(f_m / z if z > 0 else f_m, f_mc, grid)
            status = "ok" if t_st is not None else "not_stationary"
            if name == "SCT":
                neg = any(not r.valid
                          for _, r in result.diagnostics["sct_reports"])
                if neg:
                    status = "sct_negative"
            cell["methods"][name] = {"l1_vs_mc": comp.l1, "status": status,
                                     "stationary_at": t_st,
                                     "peaks": [list(p) for p in comp.peaks_p]}
            rows.append([D, tau, name, f"{comp.l1:.6g}", status])
        except DivergenceError as e:
            cell["methods"][name] = {"status": "diverged", "error": str(e)}
            rows.append([D, tau, name, "", "diverged"])
        except GenFpkError as e:
            cell["methods"][name] = {"status": "failed", "error": str(e)}
            rows.append([D, tau, name, "", f"failed: {e}"])
    return rows, cell


def cmd_sweep(args) -> int:
    Ds = [float(v) for v in args.D_values.split(",")]
    taus = [float(v) for v in args.tau_values.split(",")]
    methods = [m.strip() for m in args.methods.split(",")]
    for name in methods:  # reject typos before any expensive work
        _sweep_method_config(name, args.dt, args.seed)
    out = _out_dir(args, "sweep")
    manifest = RunManifest(out, "sweep")

    grid_cells = [(D, tau) for D in Ds for tau in taus]
    workers = min(len(grid_cells), os.cpu_count() or 1)
    rows = []
    cells = {}
    if workers > 1:
        # cells are independent; fan them out across processes
        with concurrent.futures.ProcessPoolExecutor(max_workers=workers) as pool:
            futures = [pool.submit(run_sweep_cell, D, tau, methods, args.samples,
                                   args.seed, args.dt, args.t_end)
                       for D, tau in grid_cells]
            results = [f.result() for f in futures]
    else:
        results = [run_sweep_cell(D, tau, methods, args.samples, args.seed,
                                  args.dt, args.t_end)
                   for D, tau in grid_cells]
    for (D, tau), (cell_rows, cell) in zip(grid_cells, results):
        rows.extend(cell_rows)
        cells[f"{D},{tau}"] = cell
    _write_csv(out / "sweep.csv", ["D", "tau", "method", "l1_vs_mc", "status"], rows)
    manifest.add_file("sweep.csv")

    threshold_summary = {
        "cells_Dtau_gt_1_han_worse": [
            key for key, c in cells.items()
            if c["Dtau"] > 1 and "Hanggi" in c.get("methods", {})
            and any(m.startswith("VADA") for m in c["methods"])
            and c["methods"]["Hanggi"].get("l1_vs_mc", float("inf"))
            > min(v.get("l1_vs_mc", float("inf"))
                  for k, v in c["methods"].items() if k.startswith("VADA"))
        ],
        "cells_Dtau_gt_25": [key for key, c in cells.items() if c["Dtau"] > 25],
    }
    with open(out / "cells.json", "w") as f:
        json.dump({"cells": cells, "summary": threshold_summary}, f, indent=2)
        f.write("\n")
    manifest.add_file("cells.json")
    manifest.data.update({"D_values": Ds, "tau_values": taus, "methods": methods,
                          "samples": args.samples,
                          "seeds": {"ensemble": args.seed}})
    manifest.finish()
    print(f"sweep finished: {out}")
    return EXIT_OK


def cmd_validate(args) -> int:
    scenario = load_scenario(args.scenario)
    print(f"scenario {args.scenario} is valid "
          f"(label={scenario.label!r}, degrees={scenario.model.degrees})")
    return EXIT_OK


def main(argv: Optional[Sequence[str]] = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except (ParameterError, UsageError, ConfigurationError, FileNotFoundError,
            json.JSONDecodeError) as e:
        print(f"validation error: {e}", file=sys.stderr)
        return EXIT_VALIDATION
    except StepFailure as e:
        print(f"solver failure: {e}", file=sys.stderr)
        return EXIT_SOLVER
    except DivergenceError as e:
        print(f"divergence detected: {e}", file=sys.stderr)
        return EXIT_DIVERGENCE


if __name__ == "__main__":
    sys.exit(main())
