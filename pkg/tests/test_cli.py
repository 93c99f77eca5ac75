"""Tests for the command-line interface."""

import pytest
from click.testing import CliRunner

from deep_envelope.cli import main
from deep_envelope.dataset import load_dataset


@pytest.fixture
def runner():
    """Click test runner."""
    return CliRunner()


@pytest.fixture
def synth_dir(runner, tmp_path):
    """A small synthetic dataset written by the synth command."""
    out = tmp_path / "synth"
    result = runner.invoke(
        main,
        [
            "synth",
            "--out",
            str(out),
            "--subjects",
            "12",
            "--segments",
            "8",
            "--features",
            "4",
            "--signal-positions",
            "6",
        ],
    )
    assert result.exit_code == 0, result.output
    return out


class TestSynth:
    """Test cases for the synth command."""

    def test_writes_dataset_and_config(self, synth_dir):
        """Test synth writes a loadable dataset and a config pointing at it."""
        ds = load_dataset(synth_dir / "dataset.csv")

        assert ds.n_subjects == 12
        assert ds.segment_counts == (8,) * 12
        conf = (synth_dir / "synth.conf").read_text()
        assert "preset=synth" in conf
        assert "dataset_path=dataset.csv" in conf
        assert "initial_cutoff" not in conf

    def test_same_seed_same_files(self, runner, tmp_path):
        """Test two synth runs with seed 7 write identical files."""
        for name in ("a", "b"):
            result = runner.invoke(main, ["synth", "--seed", "7", "--out", str(tmp_path / name)])
            assert result.exit_code == 0, result.output

        for name in ("dataset.csv", "synth.conf"):
            assert (tmp_path / "a" / name).read_bytes() == (tmp_path / "b" / name).read_bytes()

    def test_default_config_uses_preset_cutoff(self, runner, tmp_path):
        """Test the written config validates with the synth preset counts."""
        out = tmp_path / "bench"
        assert runner.invoke(main, ["synth", "--out", str(out)]).exit_code == 0

        result = runner.invoke(main, ["validate-config", "--config", str(out / "synth.conf")])

        assert result.exit_code == 0, result.output
        assert "ok: layer counts [12, 11, 10, 9, 8, 7]; 6 fusion columns" in result.output


class TestValidateConfig:
    """Test cases for the validate-config command."""

    def test_ok(self, runner, synth_dir):
        """Test a feasible config prints the layer counts."""
        conf = synth_dir / "small.conf"
        conf.write_text("dataset_path=dataset.csv\ninitial_cutoff=2\ndeep_layers=2\n")

        result = runner.invoke(main, ["validate-config", "--config", str(conf)])

        assert result.exit_code == 0, result.output
        assert "ok: layer counts [6, 5, 4]; 3 fusion columns" in result.output

    def test_cutoff_exhausts_envelope(self, runner, synth_dir):
        """Test cutoff >= m exits 1 with a single error line."""
        conf = synth_dir / "bad.conf"
        conf.write_text("dataset_path=dataset.csv\ninitial_cutoff=8\n")

        result = runner.invoke(main, ["validate-config", "--config", str(conf)])

        assert result.exit_code == 1
        errors = [line for line in result.output.splitlines() if line.startswith("error: ")]
        assert len(errors) == 1
        assert errors[0].startswith("error: cutoff_exhausts_envelope: ")
        assert "cutoff exhausts envelope" in errors[0]

    def test_unknown_key(self, runner, synth_dir):
        """Test config errors use the config code."""
        conf = synth_dir / "typo.conf"
        conf.write_text("dataset_path=dataset.csv\ncutof=2\n")

        result = runner.invoke(main, ["validate-config", "--config", str(conf)])

        assert result.exit_code == 1
        assert "error: config: invalid config: unknown key 'cutof'" in result.output

    def test_missing_dataset(self, runner, tmp_path):
        """Test a missing dataset file is reported as a dataset error."""
        result = runner.invoke(
            main, ["validate-config", "--dataset", str(tmp_path / "absent.csv")]
        )

        assert result.exit_code == 1
        assert "error: " in result.output

    def test_dataset_not_utf8(self, runner, tmp_path):
        """Test undecodable dataset bytes exit 1 with a dataset_format line."""
        path = tmp_path / "latin.csv"
        path.write_bytes(b"subject_id,label,f1\ns\xff1,0,1.0\n")

        result = runner.invoke(
            main, ["validate-config", "--dataset", str(path), "--preset", "selfdata"]
        )

        assert result.exit_code == 1
        errors = [line for line in result.output.splitlines() if line.startswith("error: ")]
        assert len(errors) == 1
        assert errors[0].startswith("error: dataset_format: ")
        assert "not UTF-8" in errors[0]

    def test_config_not_utf8(self, runner, tmp_path):
        """Test undecodable config bytes exit 1 with a config line."""
        conf = tmp_path / "latin.conf"
        conf.write_bytes(b"dataset_path=d\xe9.csv\n")

        result = runner.invoke(main, ["validate-config", "--config", str(conf)])

        assert result.exit_code == 1
        errors = [line for line in result.output.splitlines() if line.startswith("error: ")]
        assert len(errors) == 1
        assert errors[0].startswith("error: config: ")


class TestRun:
    """Test cases for the run command."""

    def test_writes_report_files(self, runner, synth_dir, tmp_path):
        """Test run writes the report artifacts and prints a summary."""
        conf = synth_dir / "small.conf"
        conf.write_text(
            "dataset_path=dataset.csv\ninitial_cutoff=2\ndeep_layers=2\nseed=3\n"
        )
        out = tmp_path / "report"

        result = runner.invoke(main, ["run", "--config", str(conf), "--out", str(out)])

        assert result.exit_code == 0, result.output
        assert "fused acc" in result.output
        for name in ("report.tsv", "layers.tsv", "weights.csv", "markers.csv"):
            assert (out / name).is_file()

    def test_requires_output_dir(self, runner, synth_dir):
        """Test run refuses to start without somewhere to write."""
        conf = synth_dir / "small.conf"
        conf.write_text("dataset_path=dataset.csv\ninitial_cutoff=2\ndeep_layers=2\n")

        result = runner.invoke(main, ["run", "--config", str(conf)])

        assert result.exit_code == 1
        assert "error: config: no output directory" in result.output
