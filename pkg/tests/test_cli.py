import contextlib
import io
import json

import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from logless_reconfig.cli import TEST_BUILD_ENV, main

SMALL = ["explore", "--servers", "2", "--max-term", "1"]


def run(argv):
    out, err = io.StringIO(), io.StringIO()
    with contextlib.redirect_stdout(out), contextlib.redirect_stderr(err):
        code = main(argv)
    return code, out.getvalue(), err.getvalue()


@pytest.fixture
def test_build(monkeypatch):
    monkeypatch.setenv(TEST_BUILD_ENV, "1")


@pytest.fixture
def release_build(monkeypatch):
    monkeypatch.delenv(TEST_BUILD_ENV, raising=False)


def test_explore_all_hold_exits_zero():
    code, out, _ = run(SMALL + ["--invariants", "all"])
    assert code == 0 and "verdict: AllHold" in out


def test_json_envelope():
    code, out, _ = run(SMALL + ["--json"])
    obj = json.loads(out)
    assert code == 0
    assert list(obj) == ["command", "params", "result"]
    assert obj["command"] == "explore" and obj["result"]["verdict"] == "AllHold"


def test_mutation_exits_one_and_writes_replayable_trace(test_build, tmp_path):
    trace = tmp_path / "cex.json"
    argv = ["explore", "--servers", "3", "--max-term", "1", "--max-config-version", "3", "--symmetry",
            "--mutate", "drop-q2", "--trace-out", str(trace)]
    code, out, _ = run(argv)
    assert code == 1 and "Violation" in out and trace.exists()
    assert run(["replay", str(trace)])[0] == 0


def test_mutate_flag_absent_in_release_builds(release_build):
    code, _, err = run(SMALL + ["--mutate", "drop-q2"])
    assert code == 2 and "--mutate" in err


def test_mutated_trace_rejected_in_release_builds(test_build, tmp_path, monkeypatch):
    trace = tmp_path / "cex.json"
    run(["explore", "--servers", "3", "--max-term", "1", "--max-config-version", "3", "--symmetry",
         "--mutate", "drop-q2", "--trace-out", str(trace)])
    monkeypatch.delenv(TEST_BUILD_ENV)
    code, _, err = run(["replay", str(trace)])
    assert code == 2 and "mutations" in err


def test_replay_missing_file_exits_two(tmp_path):
    code, _, err = run(["replay", str(tmp_path / "nonexistent.json")])
    assert code == 2 and "FILE" in err


def test_replay_invalid_trace_exits_one(tmp_path):
    from logless_reconfig.core import reconfig, initial_state, server_ids
    from logless_reconfig.explorer import Trace

    p = tmp_path / "bad.json"
    p.write_text(Trace(initial_state(server_ids(3), server_ids(3)), [reconfig("n1", {"n1", "n2"})]).dumps())
    code, out, _ = run(["replay", str(p), "--json"])
    assert code == 1
    assert json.loads(out)["result"] == {"result": "InvalidAtStep", "step": 1, "reason": "NotPrimary"}


def test_refine_round_trip(tmp_path):
    p = tmp_path / "sim.json"
    assert run(["simulate", "--seed", "4", "--servers", "3", "--duration-ms", "2000",
                "--write-period-ms", "20", "--trace-out", str(p)])[0] == 0
    code, out, _ = run(["refine", str(p)])
    assert code == 0 and out == "Refines\n"


def test_refine_malformed_json_exits_two(tmp_path):
    p = tmp_path / "junk.json"
    p.write_text("{not json")
    assert run(["refine", str(p)])[0] == 2


def test_simulate_bad_faults_exit_two(tmp_path):
    p = tmp_path / "faults.json"
    p.write_text(json.dumps([{"start_ms": 10, "end_ms": 5, "affected": ["n1"]}]))
    code, _, err = run(["simulate", "--seed", "1", "--servers", "3", "--duration-ms", "100", "--faults", str(p)])
    assert code == 2 and "--faults" in err


def test_outputs_are_byte_identical(tmp_path):
    outs = []
    for k in range(2):
        ev, csv = tmp_path / f"ev{k}.jsonl", tmp_path / f"lat{k}.csv"
        a = run(["simulate", "--seed", "8", "--servers", "5", "--duration-ms", "3000", "--write-period-ms", "20",
                 "--reconfig-period-ms", "200", "--out", str(ev), "--json"])
        b = run(["experiment", "--backend", "raft-oplog", "--seed", "3", "--total-ms", "12000",
                 "--out", str(csv)])
        c = run(SMALL + ["--max-log-len", "1", "--json"])
        outs.append((a, c, ev.read_bytes(), csv.read_bytes(), b[1].replace(f"lat{k}", "lat")))
    assert outs[0] == outs[1]
    assert outs[0][0][0] == 0


def test_explore_preset_fills_bounds():
    code, out, _ = run(["explore", "--preset", "fig2a", "--max-term", "1", "--max-log-len", "0",
                        "--max-config-version", "1", "--servers", "2", "--json"])
    obj = json.loads(out)
    assert code == 0
    assert obj["params"]["symmetry"] is True
    assert obj["params"]["invariants"] == ["leader-completeness"]


BAD_VALUES = st.sampled_from(["-1", "abc", "", "1.5", "--json"])
INT_FLAGS = {
    "explore": ["--servers", "--max-term", "--max-log-len", "--max-config-version", "--max-states"],
    "simulate": ["--seed", "--servers", "--duration-ms", "--write-period-ms", "--write-timeout-ms"],
    "experiment": ["--seed", "--steady-ms", "--total-ms", "--write-timeout-ms", "--writer-period-ms"],
}
BASE = {
    "explore": ["explore", "--servers", "2", "--max-term", "1"],
    "simulate": ["simulate", "--seed", "1", "--servers", "2", "--duration-ms", "50"],
    "experiment": ["experiment", "--backend", "logless", "--seed", "1", "--out", "/nonexistent-dir/x.csv",
                   "--total-ms", "6000"],
}


@settings(max_examples=80, deadline=None)
@given(st.sampled_from(sorted(INT_FLAGS)), st.data())
def test_malformed_flags_exit_two(command, data):
    flag = data.draw(st.sampled_from(INT_FLAGS[command]))
    value = data.draw(BAD_VALUES)
    if value == "-1" and flag in ("--seed", "--max-term", "--max-log-len", "--write-period-ms"):
        value = "abc"
    code, out, err = run(BASE[command] + [flag, value])
    assert code == 2
    assert err.strip()


@settings(max_examples=40, deadline=None)
@given(st.lists(st.sampled_from(["--bogus", "frobnicate", "--servers", "x", "-z", "--mode", "weird"]), max_size=4))
def test_unknown_tokens_exit_two(tokens):
    code, _, _ = run(["explore"] + tokens)
    assert code == 2


def test_no_command_exits_two():
    assert run([])[0] == 2
