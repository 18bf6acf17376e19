import json

import pytest

from logless_reconfig.core import DomainError
from logless_reconfig.experiment import (
    DEGRADED,
    STEADY,
    Backend,
    ExperimentParams,
    Phase,
    phase_schedule,
    run_availability_experiment,
    summarize,
    write_outputs,
)
from logless_reconfig.simnet import COMMITTED, TIMEOUT, LatencyRecord

SHORT = ExperimentParams(total_ms=16_000)


def test_phase_schedule_defaults():
    phases = phase_schedule(ExperimentParams())
    assert phases[:3] == [Phase(0, 5000, STEADY), Phase(5000, 7500, DEGRADED), Phase(7500, 12500, STEADY)]
    assert len([p for p in phases if p.kind == DEGRADED]) == 8
    assert phases[-1].end_ms == 60_000
    assert all(a.end_ms == b.start_ms for a, b in zip(phases, phases[1:]))


def test_phase_schedule_without_degradation():
    assert phase_schedule(ExperimentParams(degraded_ms=0, total_ms=12_000)) == [
        Phase(0, 5000, STEADY), Phase(5000, 10000, STEADY), Phase(10000, 12000, STEADY)
    ]


def test_params_validation():
    with pytest.raises(DomainError):
        ExperimentParams(write_timeout_ms=0)
    with pytest.raises(DomainError):
        ExperimentParams(universe_size=4)
    with pytest.raises(DomainError):
        Backend.parse("paxos")
    assert Backend.parse("raft-oplog") is Backend.RAFT_OPLOG


def test_summarize_examples():
    phases = [Phase(0, 100, DEGRADED)]
    empty = summarize([], phases)
    assert (empty.total_writes, empty.total_timeouts, empty.phases[0].recovery_ms) == (0, 0, None)
    recs = [LatencyRecord(10, 100, TIMEOUT), LatencyRecord(30, 4, COMMITTED)]
    st = summarize(recs, phases)
    p = st.phases[0]
    assert (p.writes, p.timeouts, p.recovery_ms, p.commits_before_end) == (2, 1, 30, 1)
    with pytest.raises(DomainError):
        summarize(list(reversed(recs)), phases)


def test_summarize_ignores_commits_after_phase_end():
    st = summarize([LatencyRecord(90, 20, COMMITTED)], [Phase(0, 100, DEGRADED)])
    assert st.phases[0].recovery_ms == 90 and st.phases[0].commits_before_end == 0


@pytest.mark.parametrize("backend", list(Backend))
def test_no_degradation_means_no_timeouts(backend):
    r = run_availability_experiment(backend, ExperimentParams(degraded_ms=0, total_ms=12_000))
    assert r.observer_verdict == "AllHold"
    assert r.stats.total_timeouts == 0 and r.stats.total_writes > 0


def test_logless_recovers_in_every_degraded_phase():
    r = run_availability_experiment(Backend.LOGLESS, SHORT)
    assert r.observer_verdict == "AllHold" and r.overlap_ok
    deg = r.degraded()
    assert deg and all(p.commits_before_end > 0 for p in deg)
    assert all(len(p.reconfig_completions) == 4 for p in deg)


def test_raft_oplog_stays_unavailable_while_degraded():
    r = run_availability_experiment(Backend.RAFT_OPLOG, SHORT)
    assert r.observer_verdict == "AllHold" and r.overlap_ok
    deg = r.degraded()
    assert deg and all(p.commits_before_end == 0 for p in deg)


def test_logless_times_out_less():
    a = run_availability_experiment(Backend.LOGLESS, SHORT)
    b = run_availability_experiment(Backend.RAFT_OPLOG, SHORT)
    for pa, pb in zip(a.degraded(), b.degraded()):
        assert pa.timeouts < pb.timeouts


def test_experiment_is_deterministic(tmp_path):
    outs = []
    for k in range(2):
        r = run_availability_experiment(Backend.LOGLESS, SHORT)
        paths = write_outputs(r, str(tmp_path / f"run{k}.csv"))
        outs.append([open(p, "rb").read() for p in paths])
    assert outs[0] == outs[1]
    header = outs[0][0].decode().splitlines()[0]
    assert header == "issued_at_ms,latency_ms,outcome"
    assert outs[0][1].decode().splitlines()[0] == "start_ms,end_ms,kind"
    assert json.loads(outs[0][2])["backend"] == "logless"


@pytest.mark.parametrize("backend", list(Backend))
def test_timeout_iff_latency_equals_timeout(backend):
    r = run_availability_experiment(backend, SHORT)
    assert all((rec.outcome == TIMEOUT) == (rec.latency_ms == SHORT.write_timeout_ms) for rec in r.records)
