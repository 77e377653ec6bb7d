import json
import os

import pytest
import yaml

from icnjfc.cli import data_path, main


def _json_line(text):
    lines = [l for l in text.splitlines() if l.startswith("{")]
    return json.loads(lines[-1])


def test_simulate_writes_a_metrics_log(tmp_path, capsys):
    rc = main(["simulate", "--topology", "tree", "--strategy", "mindelay", "--rate", "2",
               "--seed", "7", "--horizon", "30", "--out", str(tmp_path)])
    assert rc == 0
    summary = _json_line(capsys.readouterr().out)
    assert summary["fulfilled"] == summary["generated"] > 0
    log = tmp_path / "tree_mindelay_r2_s7.csv"
    assert log.read_text().startswith("kind,time,fulfill_time,object,requester,node")
    assert (tmp_path / "tree_mindelay_r2_s7.json").exists()


def test_check_conditions_reports_the_caching_violation(tmp_path, capsys):
    rc = main(["check-conditions", "--instance", "fig1.cfg", "--point", "bad.cfg",
               "--out", str(tmp_path)])
    assert rc == 0
    out = capsys.readouterr().out
    assert not _json_line(out)["clean"]
    violations = [l.split("\t") for l in out.splitlines() if l.startswith("violation")]
    assert ["violation", "caching", "node=1", "object=1"] in [v[:4] for v in violations]
    doc = yaml.safe_load((tmp_path / "conditions.yaml").read_text())
    assert doc["clean"] is False


def test_solve_fluid_ends_with_object_two_cached(tmp_path, capsys):
    rc = main(["solve-fluid", "--instance", "fig1.cfg", "--steps", "50", "--out", str(tmp_path)])
    assert rc == 0
    summary = _json_line(capsys.readouterr().out)
    assert summary["status"] == "clean"
    assert summary["cached"] == {"1": [2]}
    assert summary["final_cost"] == pytest.approx(1 / 19)
    final = yaml.safe_load((tmp_path / "final_point.yaml").read_text())
    assert final["rho"] == {"1": {2: 1.0}}
    assert (tmp_path / "trajectory.png").stat().st_size > 0
    assert (tmp_path / "trajectory.csv").read_text().startswith("iteration,cost")


def test_experiment_writes_tables_and_figures(tmp_path, capsys):
    rc = main(["experiment", "-t", "tree", "-s", "bp", "-s", "lfum-pi", "--rates", "1,2",
               "--seeds", "2", "--horizon", "10", "--out", str(tmp_path)])
    assert rc == 0
    for name in ("delay_vs_rate.csv", "cache_hits_vs_rate.csv", "delay_vs_rate.png",
                 "cache_hits_vs_rate.png"):
        assert (tmp_path / name).stat().st_size > 0


def test_list_topologies(capsys):
    assert main(["list-topologies"]) == 0
    names = [l.split("\t")[0] for l in capsys.readouterr().out.splitlines()]
    assert names == ["abilene", "geant", "dtelekom", "tree", "ladder", "fattree"]


@pytest.mark.parametrize("argv", [
    ["simulate", "-t", "atlantis", "--rate", "1"],
    ["simulate", "-t", "tree", "-s", "teleport", "--rate", "1"],
    ["simulate", "-t", "tree"],
    ["check-conditions", "--instance", "missing.cfg", "--point", "bad.cfg"],
    ["frobnicate"],
    [],
])
def test_config_errors_exit_2_with_one_json_line(argv, tmp_path, capsys):
    assert main(argv + ["--out", str(tmp_path)] if argv and argv[0] != "frobnicate" else argv) == 2
    err = capsys.readouterr().err.strip().splitlines()
    assert len(err) == 1
    assert json.loads(err[0])["error"] in ("config", "io")


def test_anomalies_exit_3(tmp_path, capsys, monkeypatch):
    from icnjfc.sim import engine
    real = engine.Simulator.on_data

    def drop(self, i, packet, in_iface):
        self.pit[i].pop((packet.obj, packet.nonce), None)
        real(self, i, packet, in_iface)

    monkeypatch.setattr(engine.Simulator, "on_data", drop)
    rc = main(["simulate", "-t", "tree", "--rate", "1", "--horizon", "5", "--out", str(tmp_path)])
    assert rc == 3
    assert json.loads(capsys.readouterr().err)["error"] == "anomaly"


def test_livelock_exits_4(tmp_path, capsys, monkeypatch):
    from icnjfc.sim import engine
    from icnjfc.errors import LivelockError

    def stuck(self):
        raise LivelockError("no progress")

    monkeypatch.setattr(engine.Simulator, "run", stuck)
    rc = main(["simulate", "-t", "tree", "--rate", "1", "--out", str(tmp_path)])
    assert rc == 4
    assert json.loads(capsys.readouterr().err)["error"] == "livelock"


def test_output_directory_from_environment(tmp_path, monkeypatch, capsys):
    monkeypatch.setenv("ICNJFC_OUT", str(tmp_path / "envout"))
    assert main(["simulate", "-t", "ladder", "-s", "bp", "--rate", "1", "--horizon", "5"]) == 0
    assert (tmp_path / "envout" / "ladder_bp_r1_s0.csv").exists()


def test_inputs_are_not_mutated_and_reruns_are_idempotent(tmp_path, capsys):
    inputs = [data_path("fig1.cfg"), data_path("bad.cfg")]
    before = [p.read_bytes() for p in inputs]
    outputs = []
    for sub in ("a", "b"):
        out = tmp_path / sub
        main(["check-conditions", "--instance", str(inputs[0]), "--point", str(inputs[1]),
              "--out", str(out)])
        main(["simulate", "-t", "abilene", "-s", "lfum-rtt", "--rate", "2", "--horizon", "10",
              "--seed", "3", "--out", str(out)])
        # summaries echo the output path; everything else must match byte for byte
        outputs.append(sorted((p.name, p.read_bytes().replace(str(out).encode(), b"OUT"))
                              for p in out.iterdir()))
    assert [p.read_bytes() for p in inputs] == before
    assert outputs[0] == outputs[1]
