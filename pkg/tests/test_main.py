"""
命令列介面測試
"""
import json

import pytest

from lattice_regression import main as cli
from lattice_regression.services.experiment_service import ExperimentService, RunResult


@pytest.fixture(autouse=True)
def fresh_service_cache():
    cli.get_experiment_service.cache_clear()
    yield
    cli.get_experiment_service.cache_clear()


def _stdout_json(capsys):
    out = capsys.readouterr().out.strip().splitlines()
    return json.loads(out[-1])


def _stderr_json(capsys):
    err = capsys.readouterr().err.strip().splitlines()
    return json.loads(err[-1])


class TestArguments:
    def test_unknown_subcommand(self):
        assert cli.cli_main(["dance"]) == cli.EXIT_USAGE

    def test_missing_subcommand(self):
        assert cli.cli_main([]) == cli.EXIT_USAGE

    def test_version(self, capsys):
        assert cli.cli_main(["--version"]) == cli.EXIT_OK
        assert "lattice-regression" in capsys.readouterr().out

    def test_film_p_parsing(self):
        assert cli._film_p("inf") == "inf"
        assert cli._film_p("4") == 4.0


class TestCommands:
    def test_run(self, capsys, tmp_path, config_dir):
        code = cli.cli_main(["run", str(config_dir / "kaar_linear.json"), "--out", str(tmp_path)])
        assert code == cli.EXIT_OK
        payload = _stdout_json(capsys)
        assert payload["success"] is True
        assert len(payload["data"]["paths"]) == 2
        assert len(payload["run_id"]) == 12

    def test_verify_acceptance(self, capsys, tmp_path, config_dir):
        code = cli.cli_main(["verify", str(config_dir / "blaar_p2_acceptance.json"), "--out", str(tmp_path)])
        assert code == cli.EXIT_OK
        payload = _stdout_json(capsys)
        assert payload["data"]["failures"] == 0
        assert (tmp_path / "blaar_p2_acceptance" / "report.csv").exists()

    def test_film(self, capsys, tmp_path):
        assert cli.cli_main(["film", "--out", str(tmp_path)]) == cli.EXIT_OK
        payload = _stdout_json(capsys)
        assert payload["data"] == {"crossover_frames": 786432, "crossover_seconds": "32768"}
        assert (tmp_path / "film" / "film.csv").exists()

    def test_output_dir_from_environment(self, capsys, isolated_output_dir):
        assert cli.cli_main(["film", "--pixels", "16", "--frames", "32", "--p", "4"]) == cli.EXIT_OK
        assert (isolated_output_dir / "film" / "film.json").exists()


class TestFailures:
    def test_missing_config_file(self, capsys, tmp_path):
        code = cli.cli_main(["run", str(tmp_path / "absent.json"), "--out", str(tmp_path)])
        assert code == cli.EXIT_ERROR
        envelope = _stderr_json(capsys)
        assert envelope["success"] is False
        assert envelope["error_type"] == "ConfigurationError"

    def test_unexpected_exception(self, capsys, mocker, tmp_path, config_dir):
        mocker.patch.object(ExperimentService, "run", side_effect=RuntimeError("boom"))
        code = cli.cli_main(["run", str(config_dir / "kaar_linear.json"), "--out", str(tmp_path)])
        assert code == cli.EXIT_ERROR
        envelope = _stderr_json(capsys)
        assert envelope["error"] == "boom"
        assert envelope["error_type"] == "RuntimeError"

    def test_bound_failure_exit_code(self, capsys, mocker, tmp_path, config_dir):
        mocker.patch.object(RunResult, "passed", new_callable=mocker.PropertyMock, return_value=False)
        code = cli.cli_main(["verify", str(config_dir / "kaar_linear.json"), "--out", str(tmp_path)])
        assert code == cli.EXIT_VERIFICATION_FAILED
        payload = _stdout_json(capsys)
        assert payload["success"] is False

    def test_invalid_film_exponent(self, capsys, tmp_path):
        assert cli.cli_main(["film", "--p", "1.5", "--out", str(tmp_path)]) == cli.EXIT_ERROR
        assert _stderr_json(capsys)["error_type"] == "ConfigurationError"
