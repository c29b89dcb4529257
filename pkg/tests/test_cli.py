"""Command line interface: subcommands, outputs, and exit codes."""

import json
from pathlib import Path

import numpy as np
import pytest

from saupefit import cli, experiments, tensor

DATA = Path(__file__).parent / "data"
PDB = str(DATA / "synthetic_ubiquitin.pdb")
RDC = str(DATA / "synthetic_rdc.csv")
RDC_ARGS = ["--pdb", PDB, "--rdc", RDC, "--rdc-units", "normalized"]


def run_cli(argv, capsys):
    code = cli.main(argv)
    captured = capsys.readouterr()
    return code, captured.out, captured.err


class TestFit:
    def test_recovers_known_tensor(self, capsys):
        code, out, err = run_cli(["fit", *RDC_ARGS], capsys)
        assert code == 0 and err == ""
        payload = json.loads(out)
        assert payload["command"] == "fit"
        assert payload["n_couplings"] == 222
        S_true = experiments.demo_saupe([-1.05e-3, 0.25e-3, 0.8e-3], seed=77)
        assert np.allclose(payload["saupe_tensor"], S_true, atol=1e-9)
        lam = tensor.eig_sorted(S_true).values
        assert np.allclose(payload["eigenvalues"], lam, atol=1e-9)
        assert payload["rms"] < 1e-9
        assert payload["magnitude_da"] is not None

    def test_constrained_matches_ols_on_physical_data(self, capsys):
        code, out, _ = run_cli(["fit", *RDC_ARGS, "--constrained"], capsys)
        assert code == 0
        payload = json.loads(out)
        assert payload["constrained"] is True
        assert payload["converged"] is True
        code, out, _ = run_cli(["fit", *RDC_ARGS], capsys)
        ols = json.loads(out)
        assert np.allclose(payload["saupe_tensor"], ols["saupe_tensor"],
                           atol=1e-7)

    def test_range_restricts_couplings(self, capsys):
        code, out, _ = run_cli(["fit", *RDC_ARGS, "--range", "1:8"], capsys)
        assert code == 0
        assert json.loads(out)["n_couplings"] == 21

    def test_json_out_writes_file(self, capsys, tmp_path):
        target = tmp_path / "fit.json"
        code, out, _ = run_cli(
            ["fit", *RDC_ARGS, "--json-out", str(target)], capsys)
        assert code == 0 and out == ""
        assert json.loads(target.read_text())["command"] == "fit"


class TestSigma:
    def test_reports_noise_magnitudes(self, capsys):
        code, out, _ = run_cli(["sigma", *RDC_ARGS], capsys)
        assert code == 0
        payload = json.loads(out)
        # fixture couplings are exact up to coordinate rounding
        assert 0.0 <= payload["sigma_torsion_deg"] < 1.0
        assert 0.0 <= payload["sigma_add"] < 1e-4
        assert payload["n_couplings"] == 222


class TestDebias:
    def test_deterministic_given_seed(self, capsys):
        argv = ["debias", *RDC_ARGS, "--sigma", "10", "--nsim", "100",
                "--seed", "5"]
        code, out1, _ = run_cli(argv, capsys)
        assert code == 0
        _, out2, _ = run_cli(argv, capsys)
        assert out1 == out2
        payload = json.loads(out1)
        tilde = np.array(payload["eigenvalues_debiased"])
        ols = np.array(payload["eigenvalues_ols"])
        sim = np.array(payload["eigenvalues_sim_mean"])
        assert np.allclose(tilde, 2 * ols - sim, atol=1e-15)
        assert payload["sigma_deg"] == pytest.approx(10.0)

    def test_auto_sigma(self, capsys):
        code, out, _ = run_cli(
            ["debias", *RDC_ARGS, "--auto-sigma", "--nsim", "50"], capsys)
        assert code == 0
        assert json.loads(out)["sigma_deg"] < 1.0

    def test_simex_grid(self, capsys):
        code, out, _ = run_cli(
            ["debias", *RDC_ARGS, "--sigma", "10", "--nsim", "100",
             "--simex-grid", "0.5,1.0,1.5"], capsys)
        assert code == 0
        payload = json.loads(out)
        assert payload["simex_grid"] == [0.5, 1.0, 1.5]
        lam = np.array(payload["eigenvalues_simex"])
        assert abs(lam.sum()) < 1e-9

    def test_sigma_flags_mutually_exclusive(self, capsys):
        with pytest.raises(SystemExit):
            cli.main(["debias", *RDC_ARGS, "--sigma", "10", "--auto-sigma"])
        capsys.readouterr()


class TestMfr:
    def test_fragment_sweep(self, capsys):
        code, out, _ = run_cli(
            ["mfr", *RDC_ARGS, "--residue-limit", "71", "--sigma", "10",
             "--nsim", "50", "--seed", "3"], capsys)
        assert code == 0
        payload = json.loads(out)
        assert payload["n_fragments"] == 64
        assert payload["n_fitted"] == 64
        assert payload["n_selected"] == 64
        ave = np.array(payload["eigenvalues_ave_debiased"])
        assert abs(ave.sum()) < 1e-9
        lam_true = tensor.eig_sorted(
            experiments.demo_saupe([-1.05e-3, 0.25e-3, 0.8e-3], seed=77)).values
        # fixture couplings are nearly noiseless: the OLS average is tight
        # and the debiased one deviates only by the (unneeded) correction
        ols = np.array(payload["eigenvalues_ave_ols"])
        assert np.allclose(ols, lam_true, atol=1e-6)
        assert np.allclose(ave, lam_true, atol=2e-4)

    def test_threshold_selection(self, capsys):
        code, out, _ = run_cli(
            ["mfr", *RDC_ARGS, "--residue-limit", "20", "--sigma", "5",
             "--nsim", "20", "--threshold", "1e-9", "--below"], capsys)
        payload = json.loads(out) if code == 0 else None
        if code == 0:
            assert payload["n_selected"] <= payload["n_fitted"]
            assert "<" in payload["selection"]
        else:
            # all fragments above the cutoff is a legitimate outcome
            assert code == 3


class TestExperiment:
    def test_writes_csv_and_sidecar(self, capsys, tmp_path):
        config = {"sigma_deg_grid": [0.0, 10.0], "n_draws": 20}
        cfg_path = tmp_path / "cfg.json"
        cfg_path.write_text(json.dumps(config))
        code, out, _ = run_cli(
            ["experiment", "attenuation", "--config", str(cfg_path),
             "--out", str(tmp_path)], capsys)
        assert code == 0
        payload = json.loads(out)
        csv_path, json_path = payload["outputs"]
        lines = Path(csv_path).read_text().splitlines()
        assert lines[0] == ",".join(experiments.CSV_FIELDS)
        assert len(lines) == 1 + 2 * 3  # two grid points, three eigenvalues
        sidecar = json.loads(Path(json_path).read_text())
        assert sidecar["config"]["n_draws"] == 20

    def test_unknown_config_key_is_input_error(self, capsys, tmp_path):
        cfg_path = tmp_path / "cfg.json"
        cfg_path.write_text(json.dumps({"typo_key": 1}))
        code, _, err = run_cli(
            ["experiment", "attenuation", "--config", str(cfg_path),
             "--out", str(tmp_path)], capsys)
        assert code == 2
        assert "typo_key" in err


class TestErrorHandling:
    def test_missing_file_is_input_error(self, capsys):
        code, out, err = run_cli(
            ["fit", "--pdb", "/nonexistent.pdb", "--rdc", RDC], capsys)
        assert code == 2 and out == ""
        assert err.startswith("saupefit: input error")

    def test_bad_range_is_input_error(self, capsys):
        code, _, err = run_cli(
            ["fit", *RDC_ARGS, "--range", "eight"], capsys)
        assert code == 2
        assert "--range" in err

    def test_range_without_couplings_is_input_error(self, capsys):
        # a single-residue range has no peptide plane, hence no bonds
        code, _, err = run_cli(
            ["fit", *RDC_ARGS, "--range", "76:76"], capsys)
        assert code == 2

    def test_malformed_rdc_is_input_error(self, capsys, tmp_path):
        bad = tmp_path / "bad.csv"
        bad.write_text("residue,bond,value\n2,C-O,1.0\n")
        code, _, err = run_cli(
            ["fit", "--pdb", PDB, "--rdc", str(bad)], capsys)
        assert code == 2
        assert "bond kind" in err
