import numpy as np
import pytest
import yaml

from crossdetect import cli
from crossdetect.errors import ConfigError


def run(args):
    return cli.main(args)


def read_csv_rows(path):
    lines = path.read_text().splitlines()
    assert lines[0].startswith("# config_fingerprint=")
    assert lines[1].startswith("# seed=")
    header = lines[2].split(",")
    rows = np.array([[float(v) for v in ln.split(",")] for ln in lines[3:]])
    return header, rows


SMALL = ["--m", "8", "--k", "32", "--n-h0", "3000", "--n-mc", "200", "--seed", "3"]


class TestExperimentCommands:
    def test_calibrate(self, tmp_path):
        code = run(["calibrate", "--detector", "m-nmf-r", "--out-dir", str(tmp_path)] + SMALL)
        assert code == 0
        header, rows = read_csv_rows(tmp_path / "calibrate_m-nmf-r.csv")
        assert header == ["threshold", "pfa"]
        assert rows.shape == (1, 2) and rows[0, 1] == 0.01

    def test_pfa_curve(self, tmp_path):
        code = run(["pfa", "--detector", "nmf1", "--out-dir", str(tmp_path)] + SMALL)
        assert code == 0
        header, rows = read_csv_rows(tmp_path / "pfa_nmf1.csv")
        assert header == ["threshold", "pfa"]
        assert np.all(np.diff(rows[:, 0]) >= 0)

    def test_pd_snr_with_grid(self, tmp_path):
        code = run(
            ["pd-snr", "--detector", "m-nmf-g", "--snr-grid", "10,14,18",
             "--out-dir", str(tmp_path)] + SMALL
        )
        assert code == 0
        header, rows = read_csv_rows(tmp_path / "pd_m-nmf-g.csv")
        assert header == ["snr_db", "pd", "ci_lo", "ci_hi"]
        assert rows.shape == (3, 4)

    def test_converge(self, tmp_path):
        code = run(["converge", "--m", "8", "--k", "32", "--seed", "3",
                    "--out-dir", str(tmp_path)])
        assert code == 0
        header, rows = read_csv_rows(tmp_path / "converge.csv")
        assert header == ["iter", "rel_dev"]
        assert rows[-1, 1] < 1e-8

    def test_corrupt_exp(self, tmp_path):
        code = run(["corrupt-exp", "--runs", "2", "--out-dir", str(tmp_path),
                    "--theta1", "20", "--theta2", "30"] + SMALL)
        assert code == 0
        header, rows = read_csv_rows(tmp_path / "corrupt_exp.csv")
        assert rows.shape == (2, 5)

    def test_resolved_config_written(self, tmp_path):
        run(["calibrate", "--detector", "nmf1", "--out-dir", str(tmp_path)] + SMALL)
        data = yaml.safe_load((tmp_path / "calibrate_resolved_config.yaml").read_text())
        assert data["m"] == 8 and data["seed"] == 3
        assert data["detectors"] == ["nmf1"]
        assert "config_fingerprint" in data


class TestConfigFile:
    def test_file_plus_override(self, tmp_path):
        cfg = tmp_path / "cfg.yaml"
        cfg.write_text("m: 8\nk_secondary: 32\nn_h0: 3000\nn_mc: 100\nseed: 9\n")
        code = run(["calibrate", "--config", str(cfg), "--detector", "nmf1",
                    "--seed", "11", "--out-dir", str(tmp_path)])
        assert code == 0
        data = yaml.safe_load((tmp_path / "calibrate_resolved_config.yaml").read_text())
        assert data["seed"] == 11  # flag wins over file

    def test_unknown_key_rejected(self, tmp_path):
        cfg = tmp_path / "cfg.yaml"
        cfg.write_text("m: 8\nwavelength: 3\n")
        code = run(["calibrate", "--config", str(cfg), "--detector", "nmf1",
                    "--out-dir", str(tmp_path)])
        assert code == 2

    def test_malformed_yaml(self, tmp_path):
        cfg = tmp_path / "cfg.yaml"
        cfg.write_text("m: [unclosed\n")
        assert run(["calibrate", "--config", str(cfg), "--detector", "nmf1",
                    "--out-dir", str(tmp_path)]) == 2

    def test_clutter_spec(self, tmp_path):
        code = run(["calibrate", "--detector", "nmf1", "--clutter", "k,nu=0.5",
                    "--out-dir", str(tmp_path)] + SMALL)
        assert code == 0
        data = yaml.safe_load((tmp_path / "calibrate_resolved_config.yaml").read_text())
        assert data["texture"] == "gamma" and data["nu"] == 0.5

    def test_bad_clutter_spec(self, tmp_path):
        assert run(["calibrate", "--detector", "nmf1", "--clutter", "weibull",
                    "--out-dir", str(tmp_path)] + SMALL) == 2


class TestValidation:
    def test_unknown_detector_exit_code(self, tmp_path, capsys):
        code = run(["calibrate", "--detector", "bogus", "--out-dir", str(tmp_path)] + SMALL)
        assert code == 2
        err = capsys.readouterr().err
        assert "m-nmf-r" in err  # the message names valid ids

    def test_missing_detector(self, tmp_path):
        assert run(["pfa", "--out-dir", str(tmp_path)] + SMALL) == 2

    def test_unresolvable_pfa(self, tmp_path):
        assert run(["calibrate", "--detector", "nmf1", "--pfa", "1e-6",
                    "--out-dir", str(tmp_path)] + SMALL) == 2


class TestCubeCommands:
    def test_synth_and_detect(self, tmp_path):
        cube_path = tmp_path / "ping.pcub"
        code = run(["synth-cube", "--m", "8", "--bins", "50", "--seed", "9",
                    "--target", "25:20:30:25", "--out", str(cube_path)])
        assert code == 0
        assert cube_path.exists()
        code = run(["detect-cube", "--cube", str(cube_path), "--detector", "m-nmf-r",
                    "--estimator", "scm", "--window-k", "32", "--window-g", "4",
                    "--theta-step", "10", "--bins-range", "20:30",
                    "--out-dir", str(tmp_path)])
        assert code == 0
        header, rows = read_csv_rows(tmp_path / "detectmap_m-nmf-r-scm.csv")
        assert header == ["range_bin", "theta1", "theta2", "statistic", "error"]
        assert rows.shape[0] == 10 * 13 * 13
        best = rows[np.nanargmax(rows[:, 3])]
        assert (best[0], best[1], best[2]) == (25.0, 20.0, 30.0)

    def test_detect_bad_cube(self, tmp_path):
        bad = tmp_path / "bad.pcub"
        bad.write_bytes(b"JUNKJUNKJUNKJUNK")
        assert run(["detect-cube", "--cube", str(bad), "--out-dir", str(tmp_path)]) == 2

    def test_synth_bad_target_spec(self, tmp_path):
        assert run(["synth-cube", "--m", "8", "--bins", "10",
                    "--target", "1:2", "--out", str(tmp_path / "x.pcub")]) == 2


class TestReproducibility:
    def test_same_seed_same_bytes(self, tmp_path):
        for sub in ("a", "b"):
            out = tmp_path / sub
            out.mkdir()
            run(["pfa", "--detector", "m-nmf-r", "--out-dir", str(out)] + SMALL)
        a = (tmp_path / "a" / "pfa_m-nmf-r.csv").read_bytes()
        b = (tmp_path / "b" / "pfa_m-nmf-r.csv").read_bytes()
        assert a == b

    def test_workers_do_not_change_bytes(self, tmp_path):
        outs = []
        for i, w in enumerate(("1", "4")):
            out = tmp_path / f"w{w}"
            out.mkdir()
            run(["pfa", "--detector", "m-nmf-g", "--workers", w,
                 "--out-dir", str(out)] + SMALL)
            outs.append((out / "pfa_m-nmf-g.csv").read_bytes())
        assert outs[0] == outs[1]
