"""CLI subcommands: exit codes, overrides, and the installed entry point."""

import csv
import subprocess
import sys

import numpy as np
import pytest

from nfloc.cli import EXIT_CONFIG, EXIT_NUMERIC, EXIT_OK, main
from nfloc.regnet import TrainingSample, save_dataset

CONFIG = """\
seed = 7
methods = ["msdc"]

[array]
m = 24
ms = 2
l = 3
carrier_freq_ghz = 30.0

[emitter]
theta_deg = 25.0
range_m = 0.55

[sweep]
snr_db = [inf]
snapshots = [30]
trials = 1
"""


@pytest.fixture()
def config_path(tmp_path):
    p = tmp_path / "exp.toml"
    p.write_text(CONFIG)
    return p


class TestExitCodes:
    def test_locate_success(self, config_path, capsys):
        assert main(["locate", "--config", str(config_path)]) == EXIT_OK
        out = capsys.readouterr().out
        assert "truth: theta_deg=25.000000 range_m=0.550000" in out
        assert "msdc:" in out

    def test_sweep_success_writes_csv_and_figure(self, config_path, tmp_path, capsys):
        out = tmp_path / "sweep.csv"
        assert main(["sweep", "--config", str(config_path),
                     "--out", str(out)]) == EXIT_OK
        assert "wrote 1 rows" in capsys.readouterr().out
        assert out.exists() and out.with_suffix(".png").exists()

    def test_missing_output_path_is_a_config_error(self, config_path, capsys):
        assert main(["sweep", "--config", str(config_path)]) == EXIT_CONFIG
        assert "output path" in capsys.readouterr().err

    def test_unknown_config_key_is_a_config_error(self, tmp_path, capsys):
        p = tmp_path / "bad.toml"
        p.write_text('sede = 7\n' + CONFIG.replace("seed = 7\n", ""))
        assert main(["locate", "--config", str(p)]) == EXIT_CONFIG
        assert "config error" in capsys.readouterr().err

    def test_missing_config_file_is_a_config_error(self, tmp_path, capsys):
        assert main(["locate", "--config", str(tmp_path / "nope.toml")]) == EXIT_CONFIG
        assert "cannot read" in capsys.readouterr().err

    @pytest.mark.filterwarnings("ignore:overflow:RuntimeWarning")
    def test_training_divergence_is_a_numeric_error(self, tmp_path, capsys):
        data = tmp_path / "data.bin"
        save_dataset(data, [TrainingSample(input=np.full(6, 1e200),
                                           target_groups=np.zeros(3),
                                           target_theta=0.0)])
        p = tmp_path / "exp.toml"
        p.write_text(CONFIG + f'\n[train]\nepochs = 2\ndataset = "{data}"\n')
        code = main(["train", "--config", str(p), "--out", str(tmp_path / "m.bin")])
        assert code == EXIT_NUMERIC
        assert "numerical failure" in capsys.readouterr().err


class TestOverrides:
    def test_trials_override_lands_in_the_rows(self, config_path, tmp_path):
        out = tmp_path / "s.csv"
        assert main(["sweep", "--config", str(config_path), "--out", str(out),
                     "--trials", "3"]) == EXIT_OK
        with open(out, newline="") as f:
            rows = list(csv.reader(f))
        assert rows[1][3] == "3"

    def test_seed_override_changes_noisy_results(self, tmp_path, capsys):
        p = tmp_path / "exp.toml"
        p.write_text(CONFIG.replace("[inf]", "[0.0]"))
        main(["locate", "--config", str(p)])
        first = capsys.readouterr().out
        main(["locate", "--config", str(p), "--seed", "8"])
        second = capsys.readouterr().out
        assert first != second

    def test_negative_seed_rejected(self, config_path, capsys):
        assert main(["locate", "--config", str(config_path),
                     "--seed", "-1"]) == EXIT_CONFIG
        capsys.readouterr()

    def test_zero_trials_rejected(self, config_path, tmp_path, capsys):
        assert main(["sweep", "--config", str(config_path),
                     "--out", str(tmp_path / "x.csv"),
                     "--trials", "0"]) == EXIT_CONFIG
        capsys.readouterr()


class TestInstalledEntryPoint:
    def test_console_script_runs_locate(self, config_path):
        proc = subprocess.run(["nfloc", "locate", "--config", str(config_path)],
                              capture_output=True, text=True, timeout=300)
        assert proc.returncode == EXIT_OK
        assert "truth: theta_deg=25.000000" in proc.stdout

    def test_console_script_reports_config_errors(self, tmp_path):
        proc = subprocess.run(["nfloc", "locate", "--config",
                               str(tmp_path / "absent.toml")],
                              capture_output=True, text=True, timeout=300)
        assert proc.returncode == EXIT_CONFIG
        assert "config error" in proc.stderr
