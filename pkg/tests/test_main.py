import pytest
import yaml

from nlslab.main import build_parser, main
from nlslab.runner.config import parse_config
from nlslab.runner.pipeline import run_directory


@pytest.fixture
def config_file(tmp_path, small_config):
    path = tmp_path / "run.yaml"
    config = small_config(analysis={"virial_scales": [], "concentration": False})
    path.write_text(yaml.safe_dump(config.record()))
    return path


class TestParser:
    def test_subcommands(self):
        args = build_parser().parse_args(["analyze", "--virial", "m=4", "--concentration"])
        assert args.command == "analyze"
        assert args.virial == ["m=4"]
        assert args.concentration

    def test_unknown_suite(self):
        with pytest.raises(SystemExit):
            build_parser().parse_args(["verify", "--suite", "nope"])


class TestCommands:
    def test_classify(self, config_file, capsys):
        assert main(["classify", "--config", str(config_file)]) == 0
        assert "admissible=True" in capsys.readouterr().out

    def test_run_then_analyze_with_overrides(self, config_file, index_backend, capsys):
        assert main(["run", "--config", str(config_file)]) == 0
        directory = run_directory(parse_config(config_file))
        assert (directory / "trace.csv").is_file()
        assert main(["analyze", "--config", str(config_file), "--virial", "m=5", "--concentration"]) == 0
        assert (directory / "virial_m5.csv").is_file()
        assert (directory / "concentration.csv").is_file()
        assert "analyzed" in capsys.readouterr().out

    def test_out_and_seed_override(self, config_file, tmp_path, monkeypatch):
        monkeypatch.delenv("NLSLAB_OUTPUT_ROOT", raising=False)
        out = tmp_path / "elsewhere"
        assert main(["classify", "--config", str(config_file), "--out", str(out), "--seed", "7"]) == 0
        written = parse_config(next(out.glob("*/config.yaml")))
        assert written.seed == 7
        assert written.output_dir == str(out)

    def test_library_errors_exit_2(self, tmp_path, capsys):
        assert main(["classify", "--config", str(tmp_path / "missing.yaml")]) == 2
        assert "error" in capsys.readouterr().err

    def test_bad_virial_option(self, config_file, capsys):
        assert main(["analyze", "--config", str(config_file), "--virial", "r=5"]) == 2
        assert "m=<value>" in capsys.readouterr().err

    def test_seed_range(self, config_file):
        assert main(["classify", "--config", str(config_file), "--seed", str(2**64)]) == 2

    def test_ground_state(self, config_file, capsys):
        assert main(["ground-state", "--config", str(config_file)]) == 0
        out = capsys.readouterr().out
        assert "constants.txt" in out
        assert "kinetic=" in out
        assert "critical_energy=" in out
        assert "sobolev_constant=" in out
