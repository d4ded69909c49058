"""Command-line interface: subcommands, artifacts and exit codes."""

import csv
import json

import numpy as np
import pytest

from genfpk.cli import (
    EXIT_DIVERGENCE,
    EXIT_OK,
    EXIT_SOLVER,
    EXIT_VALIDATION,
    main,
)
from genfpk.errors import StepFailure
from genfpk.model import (
    InitialSpec,
    ModelSpec,
    NoiseSpec,
    OUKernel,
    Scenario,
    save_scenario,
)


@pytest.fixture
def linear_file(tmp_path):
    model = ModelSpec(etas=((1, -0.8),), kappa=0.2, t0=0.0, t_end=2.0)
    noise = NoiseSpec(kernel=OUKernel(D=1.0, tau=1.0, convention="plain"), mean=0.2)
    init = InitialSpec(mean=-0.7, variance=0.15**2)
    sc = Scenario(model=model, noise=noise, init=init, label="cli-linear")
    path = tmp_path / "linear.json"
    save_scenario(sc, path)
    return path


@pytest.fixture
def bistable_file(tmp_path):
    model = ModelSpec(etas=((1, 1.0), (3, -1.0)), kappa=1.0, t0=0.0, t_end=0.4)
    noise = NoiseSpec(kernel=OUKernel(D=1.0, tau=0.1, convention="scaled"))
    init = InitialSpec(mean=0.0, variance=0.36)
    sc = Scenario(model=model, noise=noise, init=init, label="cli-bistable")
    path = tmp_path / "bistable.json"
    save_scenario(sc, path)
    return path


def _read_csv(path):
    with open(path) as f:
        return list(csv.reader(f))


class TestValidate:
    def test_valid(self, linear_file, capsys):
        assert main(["validate-scenario", str(linear_file)]) == EXIT_OK
        assert "valid" in capsys.readouterr().out

    def test_missing_file(self, tmp_path):
        assert main(["validate-scenario", str(tmp_path / "nope.json")]) == EXIT_VALIDATION

    def test_malformed_json(self, tmp_path):
        bad = tmp_path / "bad.json"
        bad.write_text("{not json")
        assert main(["validate-scenario", str(bad)]) == EXIT_VALIDATION

    def test_unknown_field(self, tmp_path, linear_file):
        d = json.loads(linear_file.read_text())
        d["surprise"] = 1
        bad = tmp_path / "unknown.json"
        bad.write_text(json.dumps(d))
        assert main(["validate-scenario", str(bad)]) == EXIT_VALIDATION


class TestSolve:
    def test_artifacts_and_manifest(self, linear_file, tmp_path):
        out = tmp_path / "run"
        rc = main(["solve", str(linear_file), "--method", "ExactLinear",
                   "--K", "30", "--dt", "0.02", "--out", str(out)])
        assert rc == EXIT_OK
        for name in ("snapshots.csv", "final_pdf.csv", "diagnostics.csv",
                     "manifest.json"):
            assert (out / name).exists(), name

        rows = _read_csv(out / "final_pdf.csv")
        assert rows[0] == ["x", "f"]
        data = np.asarray(rows[1:], dtype=float)
        assert np.trapezoid(data[:, 1], data[:, 0]) == pytest.approx(1.0, abs=1e-4)

        snap = _read_csv(out / "snapshots.csv")
        assert snap[0][0] == "t"
        assert float(snap[1][0]) == 0.0
        assert float(snap[-1][0]) == pytest.approx(2.0)

        diag = _read_csv(out / "diagnostics.csv")
        assert diag[0] == ["t", "norm", "I", "P", "d_eff", "sct_negative_at"]
        assert float(diag[-1][1]) == pytest.approx(1.0, abs=1e-6)

        man = json.loads((out / "manifest.json").read_text())
        assert man["command"] == "solve"
        assert set(man["files"]) >= {"snapshots.csv", "final_pdf.csv",
                                     "diagnostics.csv", "manifest.json"}
        assert man["scenario"]["label"] == "cli-linear"
        assert man["discretization"]["K"] == 30
        assert man["diagnostics"]["norm_drift_max"] < 1e-6
        assert "wall_seconds" in man["timings"]

    def test_vada_on_bistable(self, bistable_file, tmp_path):
        out = tmp_path / "vada"
        rc = main(["solve", str(bistable_file), "--method", "VADA",
                   "--vada-order", "2", "--K", "30", "--dt", "0.01",
                   "--out", str(out)])
        assert rc == EXIT_OK
        man = json.loads((out / "manifest.json").read_text())
        assert man["vada_order"] == 2
        assert man["diagnostics"]["iterations_max"] >= 1

    def test_seed_determinism(self, bistable_file, tmp_path):
        outs = []
        for name in ("a", "b"):
            out = tmp_path / name
            rc = main(["solve", str(bistable_file), "--method", "Hanggi",
                       "--K", "25", "--dt", "0.01", "--seed", "3",
                       "--out", str(out)])
            assert rc == EXIT_OK
            outs.append((out / "final_pdf.csv").read_text())
        assert outs[0] == outs[1]

    def test_odd_vada_order_rejected(self, bistable_file, tmp_path):
        rc = main(["solve", str(bistable_file), "--method", "VADA",
                   "--vada-order", "3", "--out", str(tmp_path / "x")])
        assert rc == EXIT_VALIDATION

    def test_allow_odd_flag(self, bistable_file, tmp_path):
        """--allow-odd gets an odd order past validation; the run itself may
        still fail numerically (odd orders lose diffusion positivity, which
        is why they are refused by default)."""
        rc = main(["solve", str(bistable_file), "--method", "VADA",
                   "--vada-order", "1", "--allow-odd", "--K", "25",
                   "--dt", "0.01", "--out", str(tmp_path / "odd")])
        assert rc != EXIT_VALIDATION

    def test_explicit_domain_flag(self, linear_file, tmp_path):
        out = tmp_path / "dom"
        rc = main(["solve", str(linear_file), "--method", "ExactLinear",
                   "--K", "30", "--dt", "0.02", "--domain=-2.5,1.5",
                   "--out", str(out)])
        assert rc == EXIT_OK
        man = json.loads((out / "manifest.json").read_text())
        assert man["discretization"]["domain"] == [-2.5, 1.5]

    def test_bad_domain_string(self, linear_file, tmp_path):
        rc = main(["solve", str(linear_file), "--method", "ExactLinear",
                   "--domain", "oops", "--out", str(tmp_path / "x")])
        assert rc == EXIT_VALIDATION

    def test_divergence_exit_code(self, linear_file, tmp_path):
        """A domain that excludes the initial density loses all mass on the
        first step."""
        rc = main(["solve", str(linear_file), "--method", "ExactLinear",
                   "--K", "25", "--dt", "0.02", "--domain", "2.0,4.0",
                   "--out", str(tmp_path / "div")])
        assert rc == EXIT_DIVERGENCE

    def test_step_failure_exit_code(self, linear_file, tmp_path, monkeypatch):
        import genfpk.cli as cli_mod

        def boom(scenario, config):
            raise StepFailure("synthetic failure", t=0.1, dt=0.01)

        monkeypatch.setattr(cli_mod.sv, "run", boom)
        rc = main(["solve", str(linear_file), "--method", "ExactLinear",
                   "--out", str(tmp_path / "sf")])
        assert rc == EXIT_SOLVER


class TestMc:
    def test_transient_artifacts(self, linear_file, tmp_path):
        out = tmp_path / "mc"
        rc = main(["mc", str(linear_file), "--samples", "2000", "--seed", "1",
                   "--out", str(out)])
        assert rc == EXIT_OK
        for name in ("snapshots.csv", "kde.csv", "manifest.json"):
            assert (out / name).exists(), name
        rows = _read_csv(out / "kde.csv")
        data = np.asarray(rows[1:], dtype=float)
        assert np.trapezoid(data[:, 1], data[:, 0]) == pytest.approx(1.0, abs=1e-6)
        man = json.loads((out / "manifest.json").read_text())
        assert man["samples"] == 2000
        assert man["stationary"] is False

    def test_low_sample_warning(self, linear_file, tmp_path):
        out = tmp_path / "mc-low"
        rc = main(["mc", str(linear_file), "--samples", "500", "--out", str(out)])
        assert rc == EXIT_OK
        man = json.loads((out / "manifest.json").read_text())
        assert any("low sample" in w for w in man["warnings"])

    def test_too_few_samples(self, linear_file, tmp_path):
        rc = main(["mc", str(linear_file), "--samples", "50",
                   "--out", str(tmp_path / "x")])
        assert rc == EXIT_VALIDATION

    def test_stationary_mode(self, tmp_path):
        model = ModelSpec(etas=((1, -0.8),), kappa=0.2, t0=0.0, t_end=40.0)
        noise = NoiseSpec(kernel=OUKernel(D=1.0, tau=1.0, convention="plain"),
                          mean=0.2)
        sc = Scenario(model=model, noise=noise,
                      init=InitialSpec(mean=-0.7, variance=0.15**2), label="st")
        path = tmp_path / "st.json"
        save_scenario(sc, path)
        out = tmp_path / "mc-st"
        rc = main(["mc", str(path), "--samples", "2000", "--stationary",
                   "--out", str(out)])
        assert rc == EXIT_OK
        assert (out / "samples.csv").exists()
        man = json.loads((out / "manifest.json").read_text())
        assert man["stationary"] is True
        assert man["pooled_samples"] > 2000

    def test_seed_changes_estimate(self, linear_file, tmp_path):
        texts = []
        for seed in ("1", "2"):
            out = tmp_path / f"mc-{seed}"
            main(["mc", str(linear_file), "--samples", "1500", "--seed", seed,
                  "--out", str(out)])
            texts.append((out / "kde.csv").read_text())
        assert texts[0] != texts[1]


class TestCompare:
    def test_compare_two_solves(self, linear_file, tmp_path):
        a, b = tmp_path / "a", tmp_path / "b"
        for out, method in ((a, "ExactLinear"), (b, "Fox")):
            assert main(["solve", str(linear_file), "--method", method,
                         "--K", "30", "--dt", "0.02", "--out", str(out)]) == EXIT_OK
        out = tmp_path / "cmp"
        rc = main(["compare", str(a), str(b), "--out", str(out)])
        assert rc == EXIT_OK
        for name in ("report.csv", "report.json", "overlay.csv", "manifest.json"):
            assert (out / name).exists(), name
        report = json.loads((out / "report.json").read_text())
        # linear model: Fox is exact, densities should coincide closely
        assert report["pairs"][0]["l1"] < 1e-4

    def test_compare_solve_with_mc(self, linear_file, tmp_path):
        a, b = tmp_path / "a", tmp_path / "mc"
        assert main(["solve", str(linear_file), "--method", "ExactLinear",
                     "--K", "30", "--dt", "0.02", "--out", str(a)]) == EXIT_OK
        assert main(["mc", str(linear_file), "--samples", "4000",
                     "--out", str(b)]) == EXIT_OK
        rc = main(["compare", str(a), str(b), "--out", str(tmp_path / "cmp2")])
        assert rc == EXIT_OK
        report = json.loads((tmp_path / "cmp2" / "report.json").read_text())
        assert report["pairs"][0]["l1"] < 0.2

    def test_single_run_rejected(self, linear_file, tmp_path):
        a = tmp_path / "a"
        main(["solve", str(linear_file), "--method", "ExactLinear",
              "--K", "25", "--dt", "0.05", "--out", str(a)])
        assert main(["compare", str(a), "--out", str(tmp_path / "c")]) \
            == EXIT_VALIDATION

    def test_unfinished_dir_rejected(self, tmp_path):
        a, b = tmp_path / "a", tmp_path / "b"
        a.mkdir()
        b.mkdir()
        assert main(["compare", str(a), str(b), "--out", str(tmp_path / "c")]) \
            == EXIT_VALIDATION


class TestSweep:
    @pytest.mark.slow
    def test_single_cell(self, tmp_path):
        out = tmp_path / "sweep"
        rc = main(["sweep", "--D-values", "1", "--tau-values", "0.1",
                   "--methods", "Hanggi", "--samples", "3000", "--seed", "2",
                   "--dt", "0.01", "--t-end", "8", "--out", str(out)])
        assert rc == EXIT_OK
        for name in ("sweep.csv", "cells.json", "manifest.json"):
            assert (out / name).exists(), name
        cells = json.loads((out / "cells.json").read_text())
        cell = cells["cells"]["1.0,0.1"]
        assert cell["Dtau"] == pytest.approx(0.1)
        han = cell["methods"]["Hanggi"]
        assert han["status"] == "ok"
        assert han["l1_vs_mc"] < 0.2

    def test_unknown_method(self, tmp_path):
        rc = main(["sweep", "--D-values", "1", "--tau-values", "0.1",
                   "--methods", "Telepathy", "--samples", "120",
                   "--out", str(tmp_path / "s")])
        assert rc == EXIT_VALIDATION
