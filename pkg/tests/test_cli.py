import json
import os

import pytest

from src import app_init
from src.cli_setup import RunConfig, UsageError, get_commands, parse_config, render_config
from src.constants import COMMANDS, DEFAULT_SEED
from src.experiments import VerificationError
from src.grf import grf_curve, uniform_grid
from src.output import OutputWriter, emit, output_prefix
from src.spectra import new_spectrum
from src.utils import chunk_sizes, format_float


@pytest.fixture(autouse=True)
def clean_env(monkeypatch):
    for name in ("JOBS", "OUTPUT_DIR", "LOG_LEVEL"):
        monkeypatch.delenv(name, raising=False)


def read(path):
    with open(path, "rb") as fh:
        return fh.read()


class TestParseConfig:
    def test_detect_example(self):
        config = parse_config(["detect", "--spectrum", "1.5", "--n", "500", "--trials", "200", "--seed", "7"])
        assert config.command == "detect"
        assert config.spectrum == new_spectrum([1.5])
        assert (config.n, config.trials, config.seed) == (500, 200, 7)

    def test_grf_example(self):
        config = parse_config(["grf", "--spectrum", "1,0.7,0.2", "--grid", "1000"])
        assert config.grid == 1000
        assert config.seed == DEFAULT_SEED

    def test_empty_envelope_is_valid(self):
        assert parse_config(["envelope", "--spectrum", "1,0.7,0.2", "--samples", "0"]).samples == 0

    def test_verify_needs_no_spectrum(self):
        assert parse_config(["verify"]).spectrum is None

    @pytest.mark.parametrize(
        "argv, field",
        [
            (["grf"], "spectrum"),
            (["grf", "--spectrum", "1,,2"], "spectrum"),
            (["grf", "--spectrum", "1,0"], "spectrum"),
            (["waterfill", "--spectrum", "1"], "x"),
            (["detect", "--spectrum", "1", "--threshold", "2", "--quantile", "0.9"], "threshold"),
            (["detect", "--spectrum", "1", "--trials", "0"], "trials"),
            (["detect", "--spectrum", "1", "--quantile", "1.5"], "quantile"),
        ],
    )
    def test_usage_errors_name_the_field(self, argv, field):
        with pytest.raises(UsageError, match=field):
            parse_config(argv)

    @pytest.mark.parametrize("argv", [["grf", "--bogus", "1"], ["launch"], ["grf", "--n", "ten"]])
    def test_rejected_flags(self, argv):
        with pytest.raises(UsageError):
            parse_config(argv)

    def test_config_file_merges_under_flags(self, tmp_path):
        path = tmp_path / "run.json"
        path.write_text(json.dumps({"spectrum": [1.0, 0.5], "n": 80, "trials": 12}))
        config = parse_config(["detect", "--config", str(path), "--n", "90"])
        assert config.spectrum == new_spectrum([1.0, 0.5])
        assert (config.n, config.trials) == (90, 12)

    def test_config_file_unknown_field(self, tmp_path):
        path = tmp_path / "run.json"
        path.write_text(json.dumps({"spectra": [1.0]}))
        with pytest.raises(UsageError, match="spectra"):
            parse_config(["grf", "--config", str(path)])

    def test_config_file_type_error(self, tmp_path):
        path = tmp_path / "run.json"
        path.write_text(json.dumps({"spectrum": "1", "n": "many"}))
        with pytest.raises(UsageError, match="n:"):
            parse_config(["grf", "--config", str(path)])

    def test_jobs_from_environment(self, monkeypatch):
        monkeypatch.setenv("JOBS", "3")
        assert parse_config(["grf", "--spectrum", "1"]).jobs == 3
        assert parse_config(["grf", "--spectrum", "1", "--jobs", "2"]).jobs == 2

    def test_bad_jobs_setting(self, monkeypatch):
        monkeypatch.setenv("JOBS", "lots")
        with pytest.raises(UsageError, match="JOBS"):
            parse_config(["grf", "--spectrum", "1"])

    def test_seed_is_not_read_from_environment(self, monkeypatch):
        monkeypatch.setenv("SEED", "5")
        assert parse_config(["grf", "--spectrum", "1"]).seed == DEFAULT_SEED

    def test_every_command_is_described(self):
        assert [c for c, _ in get_commands()] == COMMANDS


class TestRenderConfig:
    @pytest.mark.parametrize(
        "config",
        [
            RunConfig("grf", new_spectrum([1.0, 0.7, 0.2]), grid=1000),
            RunConfig("detect", new_spectrum([1.5]), n=500, trials=200, seed=7, threshold=2.05),
            RunConfig("detect", new_spectrum([0.3]), quantile=0.95, jobs=4, out="runs/q"),
            RunConfig("waterfill", new_spectrum([1 / 3, 0.1]), x=0.1 + 0.2),
            RunConfig("moment", new_spectrum([0.5]), epsilon=1e-3, delta=0.07, log_level="DEBUG"),
            RunConfig("verify", points=5, budget=3000, restarts=2, grid_steps=50),
            RunConfig("envelope", new_spectrum([2.0, 1.0]), samples=0, n_block=9, seed=2**63),
        ],
    )
    def test_round_trip(self, config):
        assert parse_config(render_config(config)) == config


class TestOutput:
    def test_format_float(self):
        assert format_float(0.1) == "0.10000000000000001"
        assert format_float(float("-inf")) == "-inf"
        assert format_float(float("nan")) == "nan"

    def test_chunk_sizes(self):
        assert chunk_sizes(25, 10) == [10, 10, 5]
        assert chunk_sizes(0, 10) == []

    def test_grf_files(self, tmp_path):
        s = new_spectrum([1.0, 0.7, 0.2])
        config = RunConfig("grf", s, grid=5, out=str(tmp_path / "fig"))
        written = emit(grf_curve(s, uniform_grid(s, 5)), config, 0.5)
        assert sorted(os.path.basename(p) for p in written) == ["fig.curve.csv", "fig.manifest.json"]
        lines = read(tmp_path / "fig.curve.csv").decode().splitlines()
        assert lines[0] == "x,neg_grf,k,upper_bound"
        assert len(lines) == 6
        manifest = json.loads(read(tmp_path / "fig.manifest.json"))
        assert manifest["config"]["spectrum"] == [1.0, 0.7, 0.2]
        assert manifest["elapsed_seconds"] == 0.5
        assert set(manifest["files"]) == {"fig.curve.csv"}

    def test_failed_write_publishes_nothing(self, tmp_path):
        prefix = str(tmp_path / "broken")
        with pytest.raises(RuntimeError):
            with OutputWriter(prefix) as writer:
                writer.write_csv("curve.csv", ["x"], [[1.0]])
                raise RuntimeError("boom")
        assert os.listdir(tmp_path) == []

    def test_output_dir_for_relative_prefix(self, monkeypatch, tmp_path):
        monkeypatch.setenv("OUTPUT_DIR", str(tmp_path))
        assert output_prefix(RunConfig("verify", out="a/b")) == os.path.join(str(tmp_path), "a/b")
        assert output_prefix(RunConfig("verify", out="/abs/p")) == "/abs/p"


class TestRun:
    def test_envelope_is_byte_identical_across_runs_and_jobs(self, tmp_path):
        base = ["envelope", "--spectrum", "1,0.7,0.2", "--samples", "25000", "--grid", "20"]
        assert app_init.run([*base, "--jobs", "1", "--out", str(tmp_path / "a")]) == 0
        assert app_init.run([*base, "--jobs", "2", "--out", str(tmp_path / "b")]) == 0
        for suffix in ("samples.csv", "curve.csv", "summary.json"):
            assert read(tmp_path / f"a.{suffix}") == read(tmp_path / f"b.{suffix}")
        assert (tmp_path / "a.manifest.json").exists()

    def test_empty_envelope(self, tmp_path):
        argv = ["envelope", "--spectrum", "1,0.7,0.2", "--samples", "0", "--grid", "10"]
        assert app_init.run([*argv, "--out", str(tmp_path / "e")]) == 0
        assert read(tmp_path / "e.samples.csv") == b"sample_id,x,y\n"

    def test_detect_writes_trials(self, tmp_path):
        argv = ["detect", "--spectrum", "1.5", "--n", "40", "--trials", "5", "--out", str(tmp_path / "d")]
        assert app_init.run(argv) == 0
        lines = read(tmp_path / "d.trials.csv").decode().splitlines()
        assert lines[0] == "trial,hypothesis,lambda1,decision"
        assert len(lines) == 11

    def test_waterfill_and_moment(self, tmp_path):
        assert app_init.run(["waterfill", "--spectrum", "1,0.7,0.2", "--x", "1.0", "--out", str(tmp_path / "w")]) == 0
        payload = json.loads(read(tmp_path / "w.waterfill.json"))
        assert payload["s"] == 2
        argv = ["moment", "--spectrum", "0.5", "--n", "10", "--samples", "500", "--out", str(tmp_path / "m")]
        assert app_init.run(argv) == 0
        moment = json.loads(read(tmp_path / "m.moment.json"))
        assert moment["mean"] == moment["e1_part"] + moment["e2_part"]
        assert "moment_bound" in moment["bounds"]

    def test_usage_error_exit_code(self, tmp_path):
        assert app_init.run(["grf", "--out", str(tmp_path / "x")]) == 1

    def test_domain_error_exit_code(self, tmp_path):
        assert app_init.run(["waterfill", "--spectrum", "1", "--x", "2", "--out", str(tmp_path / "x")]) == 2
        assert app_init.run(["detect", "--spectrum", "1,1", "--n", "1", "--out", str(tmp_path / "y")]) == 2

    def test_verification_exit_code(self, monkeypatch):
        def failing(config):
            raise VerificationError("gap too large")

        monkeypatch.setattr(app_init, "register_handlers", lambda: {"verify": failing})
        assert app_init.run(["verify"]) == 3

    def test_verify_writes_records(self, tmp_path):
        argv = [
            "verify", "--spectrum", "0.9", "--points", "2", "--budget", "3000",
            "--restarts", "3", "--grid-steps", "100", "--out", str(tmp_path / "v"),
        ]
        assert app_init.run(argv) == 0
        payload = json.loads(read(tmp_path / "v.verify.json"))
        assert payload["passed"] is True
        assert len(payload["records"]) == 8

    def test_independent_commands(self, tmp_path):
        argv = ["grf", "--spectrum", "1", "--grid", "3"]
        assert app_init.run([*argv, "--out", str(tmp_path / "one")]) == 0
        assert app_init.run(["waterfill", "--spectrum", "1", "--x", "0.5", "--out", str(tmp_path / "w")]) == 0
        assert app_init.run([*argv, "--out", str(tmp_path / "two")]) == 0
        assert read(tmp_path / "one.curve.csv") == read(tmp_path / "two.curve.csv")
