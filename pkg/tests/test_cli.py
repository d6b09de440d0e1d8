import json

import numpy as np
import pytest

from app.cli import COMMANDS, build_parser, run
from app.schemas.simulation import mean_mixture
from app.services.simulation_service import SimulationService
from app.utils import data_io
from app.utils.exceptions import EXIT_CALIBRATION, EXIT_CONFIG, EXIT_DATA, EXIT_OK

RECORD = ["--format", "structured-record"]
GRID = ["--points", "64"]


@pytest.fixture
def store(tmp_path):
    return f"sqlite:///{tmp_path / 'cal.db'}"


@pytest.fixture
def gaussian_file(tmp_path):
    path = tmp_path / "h0.txt"
    assert run(["generate", "--scenario", "gaussian", "--eps", "0", "--n", "100", "--seed", "1",
                "--output", str(path)]) == EXIT_OK
    return path


@pytest.fixture
def contaminated_file(tmp_path):
    path = tmp_path / "h1.txt"
    assert run(["generate", "--scenario", "gaussian", "--eps", "0.2", "--h", "4", "--n", "1000", "--seed", "2",
                "--output", str(path)]) == EXIT_OK
    return path


def _record(capsys):
    return json.loads(capsys.readouterr().out)


class TestParser:
    def test_every_subcommand_dispatches(self):
        parser = build_parser()
        sub = next(a for a in parser._actions if a.dest == "command")
        assert set(sub.choices) == set(COMMANDS)

    def test_unknown_flag(self, capsys):
        assert run(["detect", "--input", "x.txt", "--bogus"]) == EXIT_CONFIG
        assert "error" in capsys.readouterr().err

    def test_missing_subcommand(self):
        assert run([]) == EXIT_CONFIG

    def test_table_out_of_range(self):
        assert run(["reproduce", "--table", "11"]) == EXIT_CONFIG


class TestDetect:
    def test_homogeneous_file_accepted(self, gaussian_file, capsys):
        capsys.readouterr()
        assert run(RECORD + ["detect", "--input", str(gaussian_file), "--C", "0.5"] + GRID) == EXIT_OK
        rec = _record(capsys)
        assert rec["decision"] == "AcceptH0"
        assert rec["threshold_source"] == "explicit"
        assert len(rec["profile"]) == 64

    def test_contaminated_file_rejected(self, contaminated_file, capsys):
        capsys.readouterr()
        assert run(RECORD + ["detect", "--input", str(contaminated_file), "--C", "0.038"] + GRID) == EXIT_OK
        assert _record(capsys)["decision"] == "RejectH0"

    def test_negative_threshold(self, gaussian_file, capsys):
        assert run(["detect", "--input", str(gaussian_file), "--C", "-1"]) == EXIT_CONFIG
        assert "threshold must be positive" in capsys.readouterr().err

    def test_missing_file(self, tmp_path, capsys):
        assert run(["detect", "--input", str(tmp_path / "nope.txt"), "--C", "0.1"]) == EXIT_DATA
        assert "error:" in capsys.readouterr().err

    def test_threshold_or_level_required(self, gaussian_file):
        assert run(["detect", "--input", str(gaussian_file)]) == EXIT_CONFIG

    def test_empty_store(self, gaussian_file, store):
        assert run(["detect", "--input", str(gaussian_file), "--p", "0.95", "--store", store]) == EXIT_CALIBRATION

    def test_human_table_output(self, gaussian_file, capsys):
        capsys.readouterr()
        assert run(["detect", "--input", str(gaussian_file), "--C", "0.5"] + GRID) == EXIT_OK
        out = capsys.readouterr().out
        assert out.startswith("Detection")
        assert "AcceptH0" in out

    def test_delimited_output(self, gaussian_file, capsys):
        capsys.readouterr()
        assert run(["--format", "delimited", "detect", "--input", str(gaussian_file), "--C", "0.5"] + GRID) == EXIT_OK
        header = capsys.readouterr().out.splitlines()[0]
        assert "decision" in header.split(",")


class TestCalibrateThenDetect:
    def test_calibrated_threshold_is_used(self, gaussian_file, store, capsys):
        assert run(["calibrate", "--scenario", "gaussian", "--n", "100", "--trials", "100", "--p", "0.95",
                    "--seed", "3", "--store", store] + GRID) == EXIT_OK
        capsys.readouterr()
        assert run(RECORD + ["detect", "--input", str(gaussian_file), "--p", "0.95", "--store", store]
                   + GRID) == EXIT_OK
        rec = _record(capsys)
        assert rec["threshold_source"] == "calibrated"

    def test_other_grid_has_no_entry(self, gaussian_file, store):
        assert run(["calibrate", "--scenario", "gaussian", "--n", "100", "--trials", "100", "--p", "0.95",
                    "--store", store] + GRID) == EXIT_OK
        assert run(["detect", "--input", str(gaussian_file), "--p", "0.95", "--store", store,
                    "--points", "128"]) == EXIT_CALIBRATION

    def test_no_store_flag(self, store, tmp_path, capsys):
        assert run(RECORD + ["calibrate", "--n", "100", "--trials", "100", "--p", "0.95", "--no-store",
                             "--store", store] + GRID) == EXIT_OK
        records = _record(capsys)
        assert len(records) == 1 and records[0]["n"] == 100
        assert run(RECORD + ["store-export", "--store", store, "--output", str(tmp_path / "x.jsonl")]) == EXIT_OK
        assert _record(capsys)["exported"] == 0

    def test_too_few_trials(self, store):
        assert run(["calibrate", "--n", "100", "--trials", "10", "--store", store] + GRID) == EXIT_CONFIG

    def test_export_and_import(self, store, tmp_path, capsys):
        run(["calibrate", "--n", "100", "--trials", "100", "--p", "0.95", "--store", store] + GRID)
        out = tmp_path / "store.jsonl"
        capsys.readouterr()
        assert run(RECORD + ["store-export", "--store", store, "--output", str(out)]) == EXIT_OK
        assert _record(capsys)["exported"] == 1
        other = f"sqlite:///{tmp_path / 'other.db'}"
        assert run(RECORD + ["store-import", "--store", other, "--input", str(out)]) == EXIT_OK
        assert _record(capsys)["imported"] == 1


class TestOtherCommands:
    def test_estimate_with_gaussian_f0(self, contaminated_file, capsys):
        capsys.readouterr()
        assert run(RECORD + ["estimate", "--input", str(contaminated_file), "--C", "0.038", "--f0", "gaussian"]
                   + GRID) == EXIT_OK
        rec = _record(capsys)
        assert rec["decision"] == "RejectH0"
        assert rec["eps_nonpar"] > 0

    def test_detect_var(self, gaussian_file, capsys):
        capsys.readouterr()
        assert run(RECORD + ["detect-var", "--input", str(gaussian_file), "--C", "1.0"] + GRID) == EXIT_OK
        assert _record(capsys)["method"] == "variance"

    def test_detect_asym_chi_square(self, gaussian_file, capsys):
        capsys.readouterr()
        assert run(RECORD + ["detect-asym", "--input", str(gaussian_file), "--f0", "chi-square", "--C", "1.0",
                             "--B", "5", "--points", "16"]) == EXIT_OK
        rec = _record(capsys)
        assert rec["method"] == "asymmetric"
        assert rec["threshold_source"] == "explicit"

    def test_detect_mv(self, tmp_path, capsys):
        path = tmp_path / "mv.txt"
        assert run(["generate", "--scenario", "bivariate", "--n", "300", "--output", str(path)]) == EXIT_OK
        capsys.readouterr()
        assert run(RECORD + ["detect-mv", "--input", str(path), "--C", "1.0", "--coordinates", "1"] + GRID) == EXIT_OK
        assert _record(capsys)["method"] == "multivariate"

    def test_detect_reg(self, tmp_path, capsys):
        path = tmp_path / "reg.csv"
        assert run(["generate", "--scenario", "regression", "--n", "200", "--output", str(path)]) == EXIT_OK
        capsys.readouterr()
        assert run(RECORD + ["detect-reg", "--input", str(path), "--C", "10,10"] + GRID) == EXIT_OK
        rec = _record(capsys)
        assert len(rec["coefficients"]) == 2

    def test_detect_reg_uses_calibration_at_sample_size(self, tmp_path, store, capsys):
        path = tmp_path / "reg.csv"
        assert run(["generate", "--scenario", "regression", "--n", "400", "--seed", "4", "--output", str(path)]) == EXIT_OK
        capsys.readouterr()
        assert run(RECORD + ["calibrate", "--scenario", "regression", "--n", "400", "--trials", "100", "--p", "0.95",
                             "--seed", "5", "--store", store] + GRID) == EXIT_OK
        stored = {r["component"]: r["threshold"] for r in _record(capsys)}
        assert sorted(stored) == [0, 1]
        assert run(RECORD + ["detect-reg", "--input", str(path), "--p", "0.95", "--store", store] + GRID) == EXIT_OK
        coefficients = _record(capsys)["coefficients"]
        assert [c["threshold_c"] for c in coefficients] == [stored[0], stored[1]]
        assert [c["threshold_source"] for c in coefficients] == ["calibrated", "calibrated"]

    def test_detect_reg_threshold_count(self, tmp_path):
        path = tmp_path / "reg.csv"
        run(["generate", "--scenario", "regression", "--n", "200", "--output", str(path)])
        assert run(["detect-reg", "--input", str(path), "--C", "10"] + GRID) == EXIT_CONFIG

    def test_peel(self, contaminated_file, capsys):
        capsys.readouterr()
        assert run(RECORD + ["peel", "--input", str(contaminated_file), "--C", "0.038", "--n-ref", "1000"]
                   + GRID) == EXIT_OK
        rec = _record(capsys)
        assert sum(rec["class_sizes"]) == 1000

    def test_generate_is_reproducible(self, tmp_path):
        a, b = tmp_path / "a.txt", tmp_path / "b.txt"
        for path in (a, b):
            run(["generate", "--scenario", "variance", "--eps", "0.1", "--n", "50", "--seed", "9",
                 "--output", str(path)])
        assert a.read_text() == b.read_text()

    def test_invalid_scenario_parameters(self, tmp_path):
        assert run(["generate", "--scenario", "variance", "--eps", "0.7", "--n", "50",
                    "--output", str(tmp_path / "x.txt")]) == EXIT_CONFIG

    def test_oracle(self, capsys):
        capsys.readouterr()
        assert run(RECORD + ["oracle", "--n", "200", "--trials", "20", "--b", "1,2"]) == EXIT_OK
        rows = _record(capsys)
        assert len(rows) == 3


class TestInvalidConfiguration:
    def test_peel_negative_reference_threshold(self, contaminated_file, capsys):
        assert run(["peel", "--input", str(contaminated_file), "--C", "-1"] + GRID) == EXIT_CONFIG
        assert "reference threshold" in capsys.readouterr().err

    def test_peel_zero_iterations(self, contaminated_file):
        assert run(["peel", "--input", str(contaminated_file), "--C", "0.038", "--max-iter", "0"] + GRID) == EXIT_CONFIG

    def test_oracle_weight_out_of_range(self, capsys):
        assert run(["oracle", "--eps", "1.5", "--n", "100", "--trials", "10"]) == EXIT_CONFIG
        assert "error:" in capsys.readouterr().err


class TestReproducibility:
    def test_generated_file_reads_back_bit_for_bit(self, contaminated_file):
        expected = SimulationService.generate(mean_mixture(0.2, 4.0, 1000, seed=2))
        assert np.array_equal(data_io.load_sample(contaminated_file).values, expected.values)

    def test_same_arguments_same_output(self, contaminated_file, capsys):
        argv = RECORD + ["detect", "--input", str(contaminated_file), "--C", "0.038"] + GRID
        capsys.readouterr()
        run(argv)
        first = capsys.readouterr().out
        run(argv)
        assert capsys.readouterr().out == first
