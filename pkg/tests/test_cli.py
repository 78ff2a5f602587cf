"""CLI subcommands, config handling, and exit codes."""

import http.client
import json
import threading

import pytest

from shadowpatch import appsim
from shadowpatch.cli import RunConfig, RunTopology, _replay, main
from shadowpatch.harness import BadConfig


def ephemeral_cfg(**overrides):
    return RunConfig(listen="127.0.0.1:0", control_listen="127.0.0.1:0",
                     **overrides)


def test_run_config_parse_and_errors(tmp_path):
    cfg = RunConfig.parse("# c\nlisten = 127.0.0.1:9999\noracle = status\n"
                          "patch-queue-capacity = 3\n")
    assert cfg.listen == "127.0.0.1:9999"
    assert cfg.oracle == "status"
    assert cfg.patch_queue_capacity == 3
    with pytest.raises(BadConfig):
        RunConfig.parse("nonsense\n")
    with pytest.raises(BadConfig):
        RunConfig.parse("mystery = 1\n")
    path = tmp_path / "run.cfg"
    path.write_text("control-listen = 127.0.0.1:0\n")
    assert RunConfig.load(path).control_listen == "127.0.0.1:0"


def test_topology_boots_and_health_endpoints_respond():
    topo = RunTopology("shop", ephemeral_cfg())
    try:
        conn = http.client.HTTPConnection("127.0.0.1", topo.control.port,
                                          timeout=10)
        conn.request("GET", "/health")
        assert conn.getresponse().status == 200
        conn.close()
        conn = http.client.HTTPConnection("127.0.0.1", topo.app.port,
                                          timeout=10)
        conn.request("GET", "/health")
        resp = conn.getresponse()
        assert resp.status == 200 and resp.read() == b"ok"
        conn.close()
    finally:
        topo.stop()


def test_topology_seed_fault_serves_the_bug():
    topo = RunTopology("shop", ephemeral_cfg(), fault="shipping")
    try:
        conn = http.client.HTTPConnection("127.0.0.1", topo.proxy.port,
                                          timeout=10)
        conn.request("GET", "/shipping?carrier=promo",
                     headers={"x-session": "s1"})
        assert conn.getresponse().status == 500
        conn.close()
    finally:
        topo.stop()
    with pytest.raises(BadConfig):
        RunTopology("shop", ephemeral_cfg(), fault="ghost")


def test_topology_rejects_bad_profile_and_oracle():
    with pytest.raises(BadConfig):
        RunTopology("blog", ephemeral_cfg())
    with pytest.raises(BadConfig):
        RunTopology("shop", ephemeral_cfg(oracle="vibes"))


def test_run_command_port_in_use_is_environment_error(tmp_path):
    topo = RunTopology("shop", ephemeral_cfg())
    try:
        cfg = tmp_path / "clash.cfg"
        cfg.write_text(f"listen = 127.0.0.1:{topo.proxy.port}\n"
                       "control-listen = 127.0.0.1:0\n")
        wl = tmp_path / "wl.txt"
        wl.write_text(appsim.generate_workload("shop", 1).serialize())
        assert main(["run", "--config", str(cfg),
                     "--replay", str(wl)]) == 3
    finally:
        topo.stop()


def test_replay_drives_workload_and_event_log_is_well_formed(tmp_path):
    topo = RunTopology("shop", ephemeral_cfg())
    try:
        small = appsim.Workload(
            sessions=appsim.generate_workload("shop", 3).sessions[:2],
            seed=3)
        path = tmp_path / "wl.txt"
        path.write_text(small.serialize())
        _replay(topo, str(path))
    finally:
        topo.stop()
    rows = [json.loads(line)
            for line in topo.log.serialize().splitlines()]
    n = len(list(small.all_requests()))
    routing = [r for r in rows if r["kind"] == "routing"]
    assert len(routing) == n
    assert [r["seq"] for r in rows] == list(range(len(rows)))
    assert all({"kind", "seq"} <= set(r) for r in rows)


def test_experiment_rq1_writes_json_and_exits_zero(tmp_path, capsys):
    out = tmp_path / "rq1.json"
    code = main(["experiment", "rq1", "--faults", "1", "--seed", "42",
                 "--out", str(out)])
    assert code == 0
    doc = json.loads(out.read_text())
    assert doc["experiment"] == "rq1" and doc["passed"]
    text = capsys.readouterr().out
    assert "null-recovery" in text and "passed: True" in text


def test_experiment_rq4_prints_diff_of_equivalent_patch(capsys):
    assert main(["experiment", "rq4", "--scenario", "shipping"]) == 0
    text = capsys.readouterr().out
    assert "output-equal to human fix:" in text
    assert "+++ b/app.hpl" in text


def test_missing_config_file_is_environment_error(capsys):
    assert main(["run", "--config", "/nonexistent/run.cfg"]) == 3
    assert "error:" in capsys.readouterr().err
