import json
import os
import subprocess
import sys

import pytest

from gexp.cli import ConfigError, dispatch, main, parse_config, worker_count


def run_cli(args):
    return subprocess.run(
        [sys.executable, "-m", "gexp.cli"] + args, capture_output=True, text=True
    )


class TestParseConfig:
    def test_flag_echo(self):
        cfg = parse_config(["smalldev", "--band", "0.5,1.0", "--x", "0.4",
                            "--n_list", "512", "--seed", "7"])
        assert cfg.subcommand == "smalldev"
        assert (cfg.band.sigma_lo, cfg.band.sigma_hi) == (0.5, 1.0)
        assert cfg.params["x"] == (0.4,)
        assert cfg.params["n_list"] == (512,)
        assert cfg.seed == 7

    def test_inverted_band_rejected(self):
        with pytest.raises(ConfigError, match="sigma_lo > sigma_hi"):
            parse_config(["walk", "--band", "1.0,0.5"])

    def test_malformed_number_names_key(self):
        with pytest.raises(ConfigError, match="'n'"):
            parse_config(["walk", "--n", "twelve"])
        with pytest.raises(ConfigError, match="'band'"):
            parse_config(["walk", "--band", "a,b"])

    def test_file_then_flag_precedence(self, tmp_path):
        cfile = tmp_path / "run.cfg"
        cfile.write_text("n = 64\nk = 4  # comment\n")
        cfg = parse_config(["walk", "--config", str(cfile), "--n", "512"])
        assert cfg.params["n"] == 512  # flag wins
        assert cfg.params["k"] == 4  # file supplies the rest

    def test_unknown_config_key_rejected(self, tmp_path):
        cfile = tmp_path / "run.cfg"
        cfile.write_text("frobnicate = 3\n")
        with pytest.raises(ConfigError, match="frobnicate"):
            parse_config(["walk", "--config", str(cfile)])

    def test_defaults(self):
        cfg = parse_config(["axioms"])
        assert cfg.seed == 0 and cfg.fmt == "csv" and cfg.band.sigma_lo == 0.5


class TestDispatch:
    def test_axioms_exit_zero(self, tmp_path):
        out = tmp_path / "ax.csv"
        rc = main(["axioms", "--band", "0.5,1.0", "--n", "6", "--seed", "1",
                   "--count", "10", "--out", str(out)])
        assert rc == 0
        text = out.read_text()
        lines = text.splitlines()
        assert lines[0].startswith("# config:")
        assert lines[1] == "experiment,params,computed,reference,tolerance,verdict,runtime_ms"
        assert all(line.endswith(",0") for line in lines[2:])  # stable timings

    def test_byte_identical_reruns(self, tmp_path):
        args = ["walk", "--functional", "sin", "--n", "64", "--k", "4", "--seed", "3"]
        a, b = tmp_path / "a.csv", tmp_path / "b.csv"
        assert main(args + ["--out", str(a)]) == 0
        assert main(args + ["--out", str(b)]) == 0
        assert a.read_bytes() == b.read_bytes()

    def test_negative_threshold_is_config_error(self):
        rc = main(["capacity", "--band", "0.5,1.0", "--event", "supabs",
                   "--dir", "le", "--x", "-1"])
        assert rc == 2

    def test_unknown_subcommand(self):
        r = run_cli(["frobnicate"])
        assert r.returncode == 2
        assert "axioms" in r.stderr  # lists valid subcommands

    def test_json_mirrors_csv(self, tmp_path):
        base = ["walk", "--functional", "convex", "--n", "32", "--k", "2", "--r", "8"]
        csv_out = tmp_path / "w.csv"
        json_out = tmp_path / "w.json"
        assert main(base + ["--out", str(csv_out)]) == 0
        assert main(base + ["--format", "json", "--out", str(json_out)]) == 0
        payload = json.loads(json_out.read_text())
        assert payload["all_pass"] is True
        csv_rows = [l.split(",") for l in csv_out.read_text().splitlines()[2:]]
        assert len(payload["records"]) == len(csv_rows)
        for rec, row in zip(payload["records"], csv_rows):
            assert rec["experiment"] == row[0]
            assert [f"{float(c):.17g}" for c in rec["computed"]] == row[2].split("|")
            assert rec["verdict"] == ("pass" if row[5] == "pass" else "FAIL")

    def test_timings_flag_writes_measured(self, tmp_path):
        out = tmp_path / "t.csv"
        assert main(["axioms", "--count", "5", "--timings", "--out", str(out)]) == 0
        rows = out.read_text().splitlines()[2:]
        assert any(not line.endswith(",0") for line in rows)

    def test_capacity_subcommand_passes(self, tmp_path):
        # n must be large enough that the walk bracket reaches the Brownian
        # limit within the 0.03 widening; 512 matches the experiment scale.
        out = tmp_path / "cap.csv"
        rc = main(["capacity", "--event", "supabs", "--dir", "le", "--x", "0.5",
                   "--n", "512", "--k", "2", "--r", "4", "--out", str(out)])
        assert rc == 0
        assert "capacity/V_contains_limit" in out.read_text()

    def test_gheat_subcommand(self, tmp_path):
        out = tmp_path / "gh.csv"
        rc = main(["gheat", "--phi", "convex", "--points", "401", "--out", str(out)])
        assert rc == 0
        text = out.read_text()
        assert "gheat/upper" in text and "gheat/pair_order" in text

    def test_exit_one_on_failing_row(self, tmp_path, monkeypatch):
        # Force a failing verdict through an unreachable tolerance.
        import gexp.cli as cli

        def fake_job(cfg):
            from gexp.experiments import ExperimentRecord
            return [ExperimentRecord("forced/fail", {}, (1.0,), 2.0, 1e-9,
                                     "abs_diff", False, 0.0)]

        monkeypatch.setitem(cli._JOBS, "axioms", fake_job)
        assert main(["axioms", "--out", str(tmp_path / "f.csv")]) == 1


class TestWorkerCount:
    def test_default_auto(self, monkeypatch):
        monkeypatch.delenv("GEXP_THREADS", raising=False)
        assert worker_count() >= 1

    def test_explicit_cap(self, monkeypatch):
        monkeypatch.setenv("GEXP_THREADS", "3")
        assert worker_count() == 3

    def test_invalid(self, monkeypatch):
        monkeypatch.setenv("GEXP_THREADS", "lots")
        with pytest.raises(ConfigError):
            worker_count()
        monkeypatch.setenv("GEXP_THREADS", "-1")
        with pytest.raises(ConfigError):
            worker_count()
