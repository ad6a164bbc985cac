import json
import os
import subprocess
import sys

import pytest

from pcrampim import config as config_mod
from pcrampim.cli import main
from pcrampim.commands import read_trace

HERE = os.path.dirname(os.path.abspath(__file__))
DATA = os.path.join(HERE, "data")
FIXTURE = ["--topology", "@" + os.path.join(DATA, "fixture_topology.txt"),
           "--weights", os.path.join(DATA, "fixture_weights.bin"),
           "--input", os.path.join(DATA, "fixture_input.bin")]


def run_cli(args, capsys):
    code = main(args)
    out, err = capsys.readouterr()
    return code, out, err


def error_of(err):
    return json.loads(err.strip().splitlines()[-1])


def write_config(tmp_path, text, name="cfg.toml"):
    p = tmp_path / name
    p.write_text(text)
    return str(p)


class TestValidate:
    def test_default_ok(self, capsys):
        code, out, _ = run_cli(["validate"], capsys)
        assert code == 0
        for kind in ("B_TO_S", "S_TO_B", "ANN_POOL", "ANN_MUL", "ANN_ACC"):
            assert any(line.startswith(kind) and line.endswith("ok") for line in out.splitlines())
        assert "17179869184 bytes (16 GiB)  ok" in out

    def test_t_read_50(self, tmp_path, capsys):
        text = config_mod.default_config_text().replace("t_read_ns = 48.0", "t_read_ns = 50.0")
        code, out, _ = run_cli(["validate", "--config", write_config(tmp_path, text), "--format", "json"], capsys)
        assert code == 3
        doc = json.loads(out)
        row = next(r for r in doc["table1"] if r["kind"] == "B_TO_S")
        assert row["expected"]["latency_ns"] == 3504 and row["computed"]["latency_ns"] == 3570
        assert any("expected 3504 ns" in d and "computed 3570 ns" in d for d in doc["diagnostics"])

    def test_missing_addon_entry(self, tmp_path, capsys):
        text = config_mod.default_config_text().replace('"256:1024 Demux" = [902.8, 1.465]\n', "")
        code, out, _ = run_cli(["validate", "--config", write_config(tmp_path, text)], capsys)
        assert code == 3
        assert "energy add-on table lacks: 256:1024 Demux" in out

    def test_empty_addon_table(self, tmp_path, capsys):
        text = ("schema_version = 1\n[energy]\ne_read_pj = 1.0\ne_write_pj = 2.0\n"
                "[energy.addons]\n")
        code, out, _ = run_cli(["validate", "--config", write_config(tmp_path, text)], capsys)
        assert code == 3 and "Pooling Logic" in out

    def test_env_override(self, tmp_path, capsys, monkeypatch):
        text = config_mod.default_config_text().replace("t_write_ns = 60.0", "t_write_ns = 61.0")
        monkeypatch.setenv("PCRAMPIM_CONFIG", write_config(tmp_path, text))
        code, _, _ = run_cli(["validate"], capsys)
        assert code == 3

    def test_bad_config(self, tmp_path, capsys):
        code, _, err = run_cli(["validate", "--config", write_config(tmp_path, "schema_version = 1\nbogus = 2\n")],
                               capsys)
        assert code == 3 and error_of(err)["error"] == "config"


class TestRun:
    def test_fixture_report(self, capsys, oracle_values):
        code, out, _ = run_cli(["run", *FIXTURE], capsys)
        assert code == 0
        doc = json.loads(out)
        assert doc["output"] == oracle_values["fixture_tree"]
        assert doc["accuracy"]["reference"] == oracle_values["fixture_reference"]
        assert doc["tool"]["name"] == "pcrampim" and doc["tool"]["version"]
        assert doc["config_fingerprint"] == config_mod.load().fingerprint()
        t = doc["totals"]
        for key in ("reads", "writes", "commands", "energy_pj", "addon_energy_pj"):
            assert sum(v[key] for v in doc["by_kind"].values()) == pytest.approx(t[key])
            assert sum(v[key] for v in doc["by_layer"].values()) == pytest.approx(t[key])
        assert sum(v["latency_ns"] for v in doc["by_kind"].values()) == pytest.approx(t["busy_ns"])

    def test_deterministic_across_workers(self, tmp_path, capsys):
        outs = []
        for i, workers in enumerate((1, 1, 4)):
            rep, led = tmp_path / f"r{i}.json", tmp_path / f"l{i}.csv"
            code, _, _ = run_cli(["run", *FIXTURE, "--workers", str(workers), "--out", str(rep),
                                  "--ledger", str(led)], capsys)
            assert code == 0
            outs.append((rep.read_bytes(), led.read_bytes()))
        assert outs[0] == outs[1] == outs[2]

    def test_csv_rollup(self, capsys):
        code, out, _ = run_cli(["run", *FIXTURE, "--format", "csv"], capsys)
        lines = out.splitlines()
        assert code == 0
        assert lines[0] == "scope,key,commands,reads,writes,latency_ns,energy_pj,addon_energy_pj"
        assert lines[-1].startswith("total,makespan,")

    def test_trace_roundtrip(self, tmp_path, capsys):
        trace = tmp_path / "t.trace"
        code, out, _ = run_cli(["run", *FIXTURE, "--trace", str(trace)], capsys)
        assert code == 0
        with open(trace) as fh:
            stream = read_trace(fh)
        doc = json.loads(out)
        cmds = stream.materialize()
        assert len(cmds) == doc["totals"]["commands"]
        assert {k: v["commands"] for k, v in doc["by_kind"].items()} == \
               {k: v for k, v in stream.counts().items() if v}

    def test_cnn1_random(self, capsys):
        code, out, _ = run_cli(["run", "--topology", "conv5x5-pool-784-70-10", "--input-shape", "28,28,1",
                                "--random-weights", "1", "--random-input", "2", "--no-reference"], capsys)
        assert code == 0
        doc = json.loads(out)
        assert doc["output_shape"] == [10] and "accuracy" not in doc

    def test_missing_weights_file(self, tmp_path, capsys):
        args = ["run", "--topology", "16-8-4", "--weights", str(tmp_path / "nope.bin"), "--random-input", "1"]
        code, _, err = run_cli(args, capsys)
        assert code == 5 and error_of(err)["error"] == "io"

    def test_parse_error_exit(self, capsys):
        code, _, err = run_cli(["run", "--topology", "16-x-4", "--random-weights", "1", "--random-input", "1"],
                               capsys)
        assert code == 2 and error_of(err)["error"] == "parse"

    def test_placement_error_exit(self, tmp_path, capsys):
        text = config_mod.default_config_text().replace("rows_per_partition = 4096", "rows_per_partition = 256")
        text = text.replace("partitions_per_bank = 16", "partitions_per_bank = 2").replace(
            "compute_partition = 15", "compute_partition = 1")
        cfg = write_config(tmp_path, text)
        code, _, err = run_cli(["run", "--config", cfg, "--topology", "20000-300", "--random-weights", "1",
                                "--random-input", "1", "--no-reference"], capsys)
        assert code == 4
        assert "requires" in error_of(err)["message"]

    def test_weights_mismatch(self, capsys):
        args = ["run", "--topology", "16-9-4", "--weights", os.path.join(DATA, "fixture_weights.bin"),
                "--random-input", "1"]
        code, _, err = run_cli(args, capsys)
        assert code == 2


class TestCount:
    def test_cnn1_targets(self, capsys):
        code, out, _ = run_cli(["count", "--topology", "CNN1"], capsys)
        assert code == 0
        doc = json.loads(out)
        fc = doc["calibration"]["fc"]
        assert fc["reads_m"]["published"] == 1.22 and fc["writes_m"]["published"] == 1.226
        assert fc["reads_m"]["ratio"] > 0
        assert doc["assumptions"]

    def test_verbatim_string_gets_targets(self, capsys):
        code, out, _ = run_cli(["count", "--topology", "conv5x5-pool-784-70-10", "--input-shape", "28,28,1"],
                               capsys)
        assert code == 0 and json.loads(out)["benchmark"] == "CNN1"

    def test_vgg2_memory_target(self, capsys):
        code, out, _ = run_cli(["count", "--topology", "VGG2"], capsys)
        assert json.loads(out)["calibration"]["fc"]["memory_gb"]["published"] == 1.96

    def test_empty_topology(self, capsys):
        code, _, err = run_cli(["count", "--topology", ""], capsys)
        assert code == 2 and error_of(err)["error"] == "parse"

    def test_csv(self, capsys):
        code, out, _ = run_cli(["count", "--topology", "784-70-10", "--format", "csv"], capsys)
        assert code == 0 and out.splitlines()[0].startswith("index,kind,class,n_out,fan_in,B_TO_S")


class TestPlotAndLut:
    def test_plot_dat(self, tmp_path, capsys):
        rep = tmp_path / "r.json"
        assert run_cli(["run", *FIXTURE, "--out", str(rep)], capsys)[0] == 0
        dat = tmp_path / "p.dat"
        assert run_cli(["plot", "--report", str(rep), "--out", str(dat)], capsys)[0] == 0
        lines = dat.read_text().splitlines()
        assert lines[0].startswith("#") and [l.split()[0] for l in lines[1:]] == ["1", "2"]

    def test_plot_bad_report(self, tmp_path, capsys):
        p = tmp_path / "bad.json"
        p.write_text("{}")
        assert run_cli(["plot", "--report", str(p), "--out", str(tmp_path / "x.dat")], capsys)[0] == 2

    def test_lut(self, capsys):
        code, out, _ = run_cli(["lut"], capsys)
        assert code == 0 and len(out.splitlines()) == 257


def test_console_script_entry():
    out = subprocess.run([sys.executable, "-m", "pcrampim.cli", "validate"], capture_output=True, text=True)
    assert out.returncode == 0
