import json
import math
import subprocess
import sys

import pytest

from corrected_llp.cli import EXIT_DIVERGED, EXIT_INPUT, EXIT_OK, experiment_config, main, read_config

LN8 = math.log(8.0)


def bag_args(fixtures_dir, name):
    return ["--bags", str(fixtures_dir / f"{name}.csv"), "--proportions", str(fixtures_dir / f"{name}_proportions.csv")]


def bound_rows(text):
    lines = [line for line in text.splitlines() if not line.startswith("#")]
    header = lines[0].split(",")
    return header, [dict(zip(header, line.split(","))) for line in lines[1:]]


class TestPair:
    def test_four_bags(self, fixtures_dir, tmp_path, capsys):
        out = tmp_path / "pairs.csv"
        assert main(["pair", *bag_args(fixtures_dir, "bags4"), "--out", str(out), "--oracle"]) == EXIT_OK
        stdout = capsys.readouterr().out
        assert "brute force agrees" in stdout
        objective = float(stdout.strip().splitlines()[-1].split(":")[1])
        assert objective == pytest.approx(0.68, abs=1e-12)
        text = out.read_text().splitlines()
        assert text[0].startswith("# manifest: ") and text[1].startswith("# objective: ")
        assert text[2] == "pair_id,pos_bag_id,neg_bag_id,gamma_plus,gamma_minus,weight"
        assert [line.split(",")[1:3] for line in text[3:]] == [["0", "1"], ["2", "3"]]

    def test_two_bags(self, fixtures_dir, tmp_path):
        out = tmp_path / "pairs.csv"
        assert main(["pair", *bag_args(fixtures_dir, "bags2"), "--out", str(out)]) == EXIT_OK
        assert out.read_text().splitlines()[3].split(",")[1:3] == ["1", "0"]

    def test_odd_count(self, fixtures_dir, tmp_path, capsys):
        code = main(["pair", *bag_args(fixtures_dir, "bags3"), "--out", str(tmp_path / "p.csv")])
        assert code == EXIT_INPUT
        assert "even number" in capsys.readouterr().err

    def test_missing_file(self, tmp_path, capsys):
        code = main(["pair", "--bags", str(tmp_path / "nope.csv"), "--proportions", str(tmp_path / "x.csv"),
                     "--out", str(tmp_path / "p.csv")])
        assert code == EXIT_INPUT


class TestTrain:
    def test_reproduces_committed_model(self, fixtures_dir, tmp_path, capsys):
        args = ["train", *bag_args(fixtures_dir, "bags4"), "--config", str(fixtures_dir / "train.cfg"),
                "--out-dir", str(tmp_path)]
        assert main(args) == EXIT_OK
        stdout = capsys.readouterr().out
        assert "convexity certificate: convex=True" in stdout
        assert (tmp_path / "model.txt").read_bytes() == (fixtures_dir / "model_expected.txt").read_bytes()

    def test_manifest_replay(self, fixtures_dir, tmp_path):
        digests = []
        for k in range(2):
            out = tmp_path / str(k)
            main(["train", *bag_args(fixtures_dir, "bags4"), "--config", str(fixtures_dir / "train.cfg"),
                  "--out-dir", str(out)])
            manifest = json.loads((out / "manifest.json").read_text())
            assert manifest["config"]["seed"] == 7
            digests.append(manifest["manifest_sha256"])
        assert digests[0] == digests[1]
        assert (tmp_path / "0" / "model.txt").read_bytes() == (tmp_path / "1" / "model.txt").read_bytes()

    def test_zero_gap_only(self, fixtures_dir, tmp_path, capsys):
        code = main(["train", *bag_args(fixtures_dir, "bags_zero_gap"), "--out-dir", str(tmp_path)])
        assert code == EXIT_INPUT
        assert "no usable pairs" in capsys.readouterr().err

    def test_divergence_exit_code(self, fixtures_dir, tmp_path):
        cfg = tmp_path / "wild.cfg"
        cfg.write_text("learning_rate = 1e9\niterations = 500\nlam = 0\nbandwidth = 0.5\nloss = squared\n")
        code = main(["train", *bag_args(fixtures_dir, "bags4"), "--config", str(cfg), "--out-dir", str(tmp_path)])
        assert code == EXIT_DIVERGED

    def test_unknown_key(self, fixtures_dir, tmp_path, capsys):
        cfg = tmp_path / "bad.cfg"
        cfg.write_text("learnin_rate = 0.1\n")
        code = main(["train", *bag_args(fixtures_dir, "bags4"), "--config", str(cfg), "--out-dir", str(tmp_path)])
        assert code == EXIT_INPUT
        assert "learnin_rate" in capsys.readouterr().err


class TestBound:
    def run(self, capsys, *args):
        assert main(["bound", *args]) == EXIT_OK
        return bound_rows(capsys.readouterr().out)

    def test_common_hand_value(self, capsys):
        header, rows = self.run(capsys, "--setting", "common", "--n", "100", "--rho-plus", "0", "--rho-minus", "0",
                                "--delta", "0.25")
        assert header[:4] == ["setting", "delta", "R", "bound_value"]
        assert float(rows[0]["bound_value"]) == pytest.approx(4 * math.sqrt(LN8 / 200), abs=1e-9)

    def test_varying_priors_hand_value(self, capsys):
        _, rows = self.run(capsys, "--setting", "varying_priors", "--n", "100", "--rho-plus", "0",
                           "--rho-minus", "0", "--pi", "0.25", "--phi0", "0.25", "--delta", "0.25")
        assert float(rows[0]["bound_value"]) == pytest.approx(0.8 * math.sqrt(LN8 / 2), abs=1e-9)

    def test_llp_hand_value(self, capsys):
        _, rows = self.run(capsys, "--setting", "llp", "--n", "100,100", "--gamma-plus", "0.9,0.6",
                           "--gamma-minus", "0.1,0.4", "--delta", "0.25", "--master")
        assert float(rows[0]["bound_value"]) == pytest.approx(4 * math.sqrt(LN8 / 136), abs=1e-9)
        assert rows[1]["setting"] == "master:llp"
        assert float(rows[1]["bound_value"]) <= float(rows[0]["bound_value"])

    def test_default_delta_recorded(self, capsys, tmp_path):
        _, rows = self.run(capsys, "--setting", "common", "--n", "100", "--rho-plus", "0", "--rho-minus", "0",
                           "--R", "3", "--master-only", "--out-dir", str(tmp_path))
        assert rows[0]["delta"] == "0.050000000000000003"
        manifest = json.loads((tmp_path / "manifest.json").read_text())
        assert manifest["config"]["delta"] == 0.05

    def test_precondition(self, capsys):
        code = main(["bound", "--setting", "varying_priors", "--n", "100", "--rho-plus", "0", "--rho-minus", "0",
                     "--pi", "0.5", "--delta", "0.25"])
        assert code == EXIT_INPUT
        assert "R > 2 phi(0)/(K L) violated" in capsys.readouterr().err


class TestExperiment:
    def test_small_run_and_replay(self, fixtures_dir, tmp_path, capsys):
        outputs = []
        for k in range(2):
            out = tmp_path / str(k)
            assert main(["experiment", "--config", str(fixtures_dir / "experiment_small.cfg"),
                         "--out-dir", str(out)]) == EXIT_OK
            outputs.append(out)
        table = capsys.readouterr().out
        assert table.startswith("balanced accuracy\ndataset    method")
        for name in ("summary.csv", "runs.csv", "table.txt", "manifest.json"):
            a, b = (o / name for o in outputs)
            if name == "manifest.json":
                assert json.loads(a.read_text())["manifest_sha256"] == json.loads(b.read_text())["manifest_sha256"]
            else:
                assert a.read_bytes() == b.read_bytes()
        summary = (outputs[0] / "summary.csv").read_text().splitlines()
        assert summary[0].startswith("# manifest: ")
        assert len(summary) == 2 + 2

    def test_config_keys(self, fixtures_dir):
        config = experiment_config(read_config(fixtures_dir / "experiment_small.cfg"))
        assert config.bag_sizes == (2, 4) and config.grid.iterations == (50, 100)
        assert config.grid.bandwidths == (0.001, 0.1, 1.0)
        assert experiment_config({"bandwidths": "auto"}).grid.bandwidths is None


class TestSimulate:
    def test_unbiased(self, tmp_path, capsys):
        assert main(["simulate", "unbiased", "--samples", "200000", "--out-dir", str(tmp_path)]) == EXIT_OK
        lines = (tmp_path / "unbiased.csv").read_text().splitlines()
        assert lines[1] == "t,y,monte_carlo_mean,clean_loss,abs_error"
        errors = [float(line.split(",")[-1]) for line in lines[2:]]
        assert len(errors) == 6 and max(errors) < 0.02

    def test_noise_free_exact(self, tmp_path, capsys):
        main(["simulate", "unbiased", "--rho-plus", "0", "--rho-minus", "0", "--samples", "10",
              "--out-dir", str(tmp_path)])
        errors = [float(line.split(",")[-1]) for line in (tmp_path / "unbiased.csv").read_text().splitlines()[2:]]
        assert max(errors) < 1e-15


def test_module_entry_point():
    proc = subprocess.run([sys.executable, "-m", "corrected_llp", "--help"], capture_output=True, text=True)
    assert proc.returncode == 0
    assert "bandwidths" in proc.stdout
