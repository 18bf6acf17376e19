"""Availability under degraded secondaries, with and without logless
reconfiguration.

A writer sends one majority write every ``writer_period_ms`` to the
primary of a voting trio.  The run alternates steady and degraded phases;
each degraded phase pauses log replication on the two current voting
secondaries.  After a fixed detection delay a controller swaps in two
healthy standbys with four single-server membership changes.

Two backends run the identical scenario:

* ``logless``: each change is a Reconfig action and takes effect at once;
  the next change waits only for the Reconfig guard.
* ``raft-oplog``: each change also appends a no-op log entry, and the next
  change waits until that entry commits under the configuration in force.

Standbys that are not members replicate the log but hold no vote.
Experiment time 0 is the first election; all reported times are relative
to it.
"""

from __future__ import annotations

import csv
import enum
import io
import json
from dataclasses import asdict, dataclass
from typing import NamedTuple, Optional

from .core import (
    RECONFIG,
    ActionDescriptor,
    DomainError,
    ReconfigCheck,
    quorums_overlap,
    reconfig_enabled,
    server_ids,
)
from .simnet import (
    COMMITTED,
    TIMEOUT,
    ClientWorkload,
    Fault,
    FaultSchedule,
    PAUSE_REPLICATION,
    SimConfig,
    Simulation,
)

STEADY = "steady"
DEGRADED = "degraded"


class Backend(enum.Enum):
    LOGLESS = "logless"
    RAFT_OPLOG = "raft-oplog"

    @classmethod
    def parse(cls, value: str) -> "Backend":
        for b in cls:
            if b.value == value:
                return b
        raise DomainError(f"unknown backend {value!r} (expected logless or raft-oplog)")


@dataclass(frozen=True)
class ExperimentParams:
    steady_ms: int = 5000
    degraded_ms: int = 2500
    detection_delay_ms: int = 500
    write_timeout_ms: int = 100
    total_ms: int = 60_000
    writer_period_ms: int = 20
    seed: int = 0
    universe_size: int = 7
    voting: int = 3
    # How often the controller re-checks a change whose guard is not yet enabled.
    controller_retry_ms: int = 5

    def __post_init__(self):
        for name in ("steady_ms", "detection_delay_ms", "write_timeout_ms", "total_ms", "writer_period_ms",
                     "controller_retry_ms"):
            if getattr(self, name) <= 0:
                raise DomainError(f"{name} must be > 0")
        if self.degraded_ms < 0:
            raise DomainError("degraded_ms must be >= 0")
        if self.voting < 3:
            raise DomainError("voting must be >= 3 (two secondaries are degraded)")
        if self.universe_size < self.voting + 2:
            raise DomainError("universe_size must leave at least two standbys")

    def to_json(self) -> dict:
        return asdict(self)


class Phase(NamedTuple):
    start_ms: int
    end_ms: int
    kind: str


def phase_schedule(params: ExperimentParams) -> list:
    """Alternating steady/degraded windows covering ``[0, total_ms)``."""
    phases = []
    t = 0
    while t < params.total_ms:
        end = min(t + params.steady_ms, params.total_ms)
        phases.append(Phase(t, end, STEADY))
        t = end
        if t < params.total_ms and params.degraded_ms > 0:
            end = min(t + params.degraded_ms, params.total_ms)
            phases.append(Phase(t, end, DEGRADED))
            t = end
    return phases


class ReconfigCompletion(NamedTuple):
    phase: int
    step: int
    members: tuple
    time_ms: int


@dataclass
class PhaseStats:
    start_ms: int
    end_ms: int
    kind: str
    writes: int = 0
    timeouts: int = 0
    recovery_ms: Optional[int] = None
    # Writes issued at or after phase start that committed before phase end.
    commits_before_end: int = 0
    reconfig_completions: tuple = ()


@dataclass
class AvailabilityStats:
    phases: list
    total_writes: int
    total_timeouts: int

    def to_json(self) -> dict:
        return {
            "phases": [
                {**asdict(p), "reconfig_completions": [list(c) for c in p.reconfig_completions]} for p in self.phases
            ],
            "total_writes": self.total_writes,
            "total_timeouts": self.total_timeouts,
        }


def summarize(records, phases, completions=()) -> AvailabilityStats:
    """Per-phase write, timeout and recovery figures.

    Recovery time is the issue time of the first committed write issued in
    the phase, minus the phase start.
    """
    records = list(records)
    for a, b in zip(records, records[1:]):
        if b.issued_at_ms < a.issued_at_ms:
            raise DomainError("records must be ordered by issue time")
    out = []
    for n, ph in enumerate(phases):
        st = PhaseStats(ph.start_ms, ph.end_ms, ph.kind)
        for r in records:
            if not ph.start_ms <= r.issued_at_ms < ph.end_ms:
                continue
            st.writes += 1
            if r.outcome == TIMEOUT:
                st.timeouts += 1
            elif r.outcome == COMMITTED:
                if st.recovery_ms is None:
                    st.recovery_ms = r.issued_at_ms - ph.start_ms
                if r.issued_at_ms + r.latency_ms < ph.end_ms:
                    st.commits_before_end += 1
        st.reconfig_completions = tuple(c for c in completions if c.phase == n)
        out.append(st)
    return AvailabilityStats(out, len(records), sum(r.outcome == TIMEOUT for r in records))


class ExperimentSimulation(Simulation):
    def __init__(self, backend: Backend, params: ExperimentParams):
        ids = server_ids(params.universe_size, start=0)
        voting = frozenset(ids[: params.voting])
        # Long enough for the initial election plus the whole schedule.
        cfg = SimConfig(params.seed, ids, voting, duration_ms=params.total_ms + 10_000)
        super().__init__(cfg, FaultSchedule(), ClientWorkload(params.writer_period_ms, params.write_timeout_ms))
        self.backend = backend
        self.params = params
        self.phases = phase_schedule(params)
        self.t0: Optional[int] = None
        self.controller_phase: Optional[int] = None
        self.waiting: Optional[tuple] = None  # (primary, index, term, step) of an uncommitted no-op
        self.completions: list = []
        self.overlap_checks: list = []

    def run(self):
        while self.queue and self.verdict == "AllHold":
            if self.t0 is not None and self.queue[0][0] >= self.t0 + self.params.total_ms:
                break
            if self.queue[0][0] > self.cfg.duration_ms:
                break
            self.step_in_place()
        if self.t0 is None:
            raise DomainError("no primary was elected")
        self.finish()
        return self.output()

    def _on_start(self, data):
        # The writer starts with the experiment clock, at the first election.
        client, self.client = self.client, None
        super()._on_start(data)
        self.client = client

    def on_elected(self, sid):
        super().on_elected(sid)
        if self.t0 is None:
            self.t0 = self.now
            self.schedule(self.now, "client_write", None)
            for n, ph in enumerate(self.phases):
                if ph.kind == DEGRADED:
                    self.schedule(self.t0 + ph.start_ms, "degrade", n)

    # ---- degradation and recovery

    def _on_degrade(self, n: int):
        ph = self.phases[n]
        p = self.current_primary()
        members = self.g.server(p).config.members if p else self.cfg.m_init
        secondaries = sorted(members - {p})
        if len(secondaries) < 2:
            raise DomainError("degraded phase needs two voting secondaries")
        affected = frozenset(secondaries[:2])
        f = self.faults.add(Fault(self.now, self.t0 + ph.end_ms, affected, PAUSE_REPLICATION))
        self.log_event("fault_start", f.to_json())
        self.schedule(f.end_ms, "fault_end", f)
        self.schedule(self.now + self.params.detection_delay_ms, "detect", (n, affected))

    def _on_detect(self, data):
        n, degraded = data
        p = self.current_primary()
        if p is None:
            return
        members = self.g.server(p).config.members
        healthy = [s for s in self.cfg.universe if s not in members and self.faults.paused_until(s, self.now) is None]
        if len(healthy) < 2:
            raise DomainError("not enough healthy standbys to replace the degraded secondaries")
        a, b = healthy[:2]
        x, y = sorted(degraded)
        plan = [members | {a}]
        plan.append(plan[-1] - {x})
        plan.append(plan[-1] | {b})
        plan.append(plan[-1] - {y})
        prev = members
        for m in plan:
            self.overlap_checks.append(quorums_overlap(prev, m))
            prev = m
        self.controller_phase = n
        self.waiting = None
        self.log_event("controller_plan", {"phase": n, "steps": [sorted(m) for m in plan]})
        self.schedule(self.now, "controller", (n, 0, tuple(tuple(sorted(m)) for m in plan)))

    def _on_controller(self, data):
        n, k, plan = data
        if self.controller_phase != n or k >= len(plan):
            return
        if self.waiting is not None:
            return
        m_new = frozenset(plan[k])
        p = self.current_primary()
        if p is None or reconfig_enabled(self.g, p, m_new, self.rules) is not ReconfigCheck.OK:
            self.schedule(self.now + self.params.controller_retry_ms, "controller", data)
            return
        self.apply(ActionDescriptor(RECONFIG, p, members=m_new))
        self.broadcast_config(p)
        if self.backend is Backend.RAFT_OPLOG:
            entry = self.append_entry(p)
            if entry is not None and self.commit_index.get((p, entry[1]), 0) < entry[0]:
                self.waiting = (p, entry[0], entry[1], data)
                return
        self.step_done(data)

    def step_done(self, data):
        n, k, plan = data
        self.completions.append(ReconfigCompletion(n, k, plan[k], self.now - self.t0))
        self.log_event("reconfig_done", {"phase": n, "step": k, "members": list(plan[k])})
        if k + 1 < len(plan):
            self.schedule(self.now, "controller", (n, k + 1, plan))

    def on_commit(self, sid, ind, term):
        super().on_commit(sid, ind, term)
        if self.waiting is not None:
            p, idx, t, data = self.waiting
            if self.commit_index.get((p, t), 0) >= idx:
                self.waiting = None
                self.step_done(data)

    def relative_records(self) -> list:
        recs = sorted(self.records, key=lambda r: (r.issued_at_ms, r.outcome))
        return [r._replace(issued_at_ms=r.issued_at_ms - self.t0) for r in recs]


@dataclass
class ExperimentResult:
    backend: Backend
    params: ExperimentParams
    records: list
    phases: list
    stats: AvailabilityStats
    observer_verdict: str
    violation: Optional[dict]
    overlap_ok: bool
    sim_stats: dict

    def latency_csv(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["issued_at_ms", "latency_ms", "outcome"])
        for r in self.records:
            w.writerow([r.issued_at_ms, r.latency_ms, r.outcome])
        return buf.getvalue()

    def phase_csv(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["start_ms", "end_ms", "kind"])
        for ph in self.phases:
            w.writerow([ph.start_ms, ph.end_ms, ph.kind])
        return buf.getvalue()

    def stats_json(self) -> dict:
        return {
            "backend": self.backend.value,
            "params": self.params.to_json(),
            "observer_verdict": self.observer_verdict,
            "violation": self.violation,
            "overlap_preserved": self.overlap_ok,
            **self.stats.to_json(),
        }

    def degraded(self) -> list:
        return [p for p in self.stats.phases if p.kind == DEGRADED]


def run_availability_experiment(backend: Backend, params: ExperimentParams) -> ExperimentResult:
    sim = ExperimentSimulation(backend, params)
    out = sim.run()
    records = sim.relative_records()
    stats = summarize(records, sim.phases, sim.completions)
    return ExperimentResult(
        backend, params, records, sim.phases, stats, out.verdict, out.violation,
        all(sim.overlap_checks), out.stats,
    )


def write_outputs(result: ExperimentResult, csv_path: str) -> tuple:
    """Write the latency CSV to ``csv_path`` plus ``.phases.csv`` and
    ``.stats.json`` companions; returns the three paths."""
    base = csv_path[:-4] if csv_path.endswith(".csv") else csv_path
    phases_path, stats_path = base + ".phases.csv", base + ".stats.json"
    with open(csv_path, "w", newline="") as fh:
        fh.write(result.latency_csv())
    with open(phases_path, "w", newline="") as fh:
        fh.write(result.phase_csv())
    with open(stats_path, "w") as fh:
        fh.write(json.dumps(result.stats_json(), indent=2, sort_keys=True) + "\n")
    return csv_path, phases_path, stats_path
