"""Deterministic discrete-event simulation of the protocol over a network.

Servers exchange messages (heartbeats advertising config version and term,
vote requests, config transfers, log pulls and pushes) with random delays.
Every state change is one protocol action applied to a single shared
:class:`~logless_reconfig.core.GlobalState` at message delivery time, with
the action's guard re-checked against the current state; a message whose
action is no longer enabled is dropped as stale.  The recorded action
sequence therefore always replays as a valid trace.

The loop is single threaded.  Events are ordered by ``(time, seq)`` and
all randomness comes from one seeded generator, so identical inputs give
identical outputs.
"""

from __future__ import annotations

import copy
import heapq
import json
import random
from collections import Counter
from dataclasses import dataclass, field
from typing import NamedTuple, Optional

from . import codec
from .core import (
    BECOME_LEADER,
    CLIENT_REQUEST,
    COMMIT_ENTRY,
    EMPTY_LOG_TERM,
    FULL,
    GET_ENTRIES,
    PRIMARY,
    RECONFIG,
    ROLLBACK_ENTRIES,
    SECONDARY,
    SEND_CONFIG,
    UPDATE_TERMS,
    ActionDescriptor,
    Config,
    DomainError,
    GlobalState,
    GuardError,
    Rules,
    apply_action,
    config_geq,
    config_newer,
    in_log,
    initial_state,
    is_quorum,
    nonempty_subsets,
    quorums_overlap,
    server_ids,
)
from .explorer import Trace
from .invariants import election_safety, leader_completeness

PAUSE_REPLICATION = "PauseReplication"
ISOLATE = "Isolate"
FAULT_KINDS = (PAUSE_REPLICATION, ISOLATE)

COMMITTED = "Committed"
TIMEOUT = "Timeout"


class NoMoreEvents(Exception):
    pass


# --------------------------------------------------------------------------
# Configuration


@dataclass(frozen=True)
class SimConfig:
    seed: int
    universe: tuple
    m_init: frozenset
    duration_ms: int = 10_000
    heartbeat_interval_ms: int = 50
    election_timeout_min_ms: int = 150
    election_timeout_max_ms: int = 300
    message_delay_min_ms: int = 1
    message_delay_max_ms: int = 5
    # Fallback pull period for servers that missed pushes (e.g. after a pause).
    pull_interval_ms: int = 50
    # A new primary appends one entry in its own term right away.
    noop_on_election: bool = True

    def __post_init__(self):
        universe = tuple(self.universe)
        if not universe or len(set(universe)) != len(universe):
            raise DomainError("universe must be a non-empty list of distinct ids")
        object.__setattr__(self, "universe", universe)
        m = frozenset(self.m_init)
        if not m or not m <= set(universe):
            raise DomainError("m_init must be a non-empty subset of the universe")
        object.__setattr__(self, "m_init", m)
        if self.duration_ms <= 0:
            raise DomainError("duration_ms must be > 0")
        for lo, hi, what in (
            (self.election_timeout_min_ms, self.election_timeout_max_ms, "election timeout"),
            (self.message_delay_min_ms, self.message_delay_max_ms, "message delay"),
        ):
            if lo < 0 or lo > hi:
                raise DomainError(f"{what} range must satisfy 0 <= min <= max")
        if self.heartbeat_interval_ms <= 0 or self.pull_interval_ms <= 0:
            raise DomainError("heartbeat and pull intervals must be > 0")

    @classmethod
    def for_servers(cls, seed: int, n: int, duration_ms: int = 10_000, **kw) -> "SimConfig":
        if n < 1:
            raise DomainError("--servers must be >= 1")
        ids = server_ids(n)
        return cls(seed, ids, frozenset(ids), duration_ms, **kw)

    def to_json(self) -> dict:
        return {
            "seed": self.seed,
            "universe": list(self.universe),
            "m_init": sorted(self.m_init),
            "duration_ms": self.duration_ms,
            "heartbeat_interval_ms": self.heartbeat_interval_ms,
            "election_timeout_min_ms": self.election_timeout_min_ms,
            "election_timeout_max_ms": self.election_timeout_max_ms,
            "message_delay_min_ms": self.message_delay_min_ms,
            "message_delay_max_ms": self.message_delay_max_ms,
            "pull_interval_ms": self.pull_interval_ms,
            "noop_on_election": self.noop_on_election,
        }


class Fault(NamedTuple):
    start_ms: int
    end_ms: int
    affected: frozenset
    kind: str = PAUSE_REPLICATION

    def active(self, t: int) -> bool:
        return self.start_ms <= t < self.end_ms

    def to_json(self) -> dict:
        return {"start_ms": self.start_ms, "end_ms": self.end_ms, "affected": sorted(self.affected), "kind": self.kind}


@dataclass
class FaultSchedule:
    """Fault windows ``[start_ms, end_ms)``.

    ``PauseReplication`` defers all log replication handling on the
    affected servers to the end of the window; configuration, heartbeat
    and vote traffic is unaffected.  ``Isolate`` drops every message to or
    from the affected servers while the window is open.
    """

    faults: list = field(default_factory=list)

    def __post_init__(self):
        self.faults = [self.validate_fault(f) for f in self.faults]

    @staticmethod
    def validate_fault(f) -> Fault:
        f = Fault(int(f[0]), int(f[1]), frozenset(f[2]), f[3] if len(f) > 3 else PAUSE_REPLICATION)
        if f.start_ms < 0 or f.end_ms < f.start_ms:
            raise DomainError(f"fault window [{f.start_ms}, {f.end_ms}) is not well-formed")
        if f.kind not in FAULT_KINDS:
            raise DomainError(f"unknown fault kind {f.kind!r}")
        if not f.affected:
            raise DomainError("fault must affect at least one server")
        return f

    def add(self, f) -> Fault:
        f = self.validate_fault(f)
        self.faults.append(f)
        return f

    def check_universe(self, universe) -> None:
        for f in self.faults:
            if not f.affected <= set(universe):
                raise DomainError(f"fault affects unknown servers {sorted(f.affected - set(universe))}")

    def paused_until(self, sid: str, t: int) -> Optional[int]:
        """End of the latest pause window covering ``sid`` at ``t``, if any."""
        end = None
        for f in self.faults:
            if f.kind == PAUSE_REPLICATION and sid in f.affected and f.active(t):
                end = f.end_ms if end is None else max(end, f.end_ms)
        return end

    def isolated(self, sid: str, t: int) -> bool:
        return any(f.kind == ISOLATE and sid in f.affected and f.active(t) for f in self.faults)

    def to_json(self) -> dict:
        return {"faults": [f.to_json() for f in self.faults]}

    @classmethod
    def from_json(cls, obj) -> "FaultSchedule":
        items = obj.get("faults") if isinstance(obj, dict) else obj
        if not isinstance(items, list):
            raise DomainError("fault schedule must be a list or an object with 'faults'")
        try:
            return cls([(f["start_ms"], f["end_ms"], f["affected"], f.get("kind", PAUSE_REPLICATION)) for f in items])
        except (KeyError, TypeError, ValueError) as exc:
            if isinstance(exc, DomainError):
                raise
            raise DomainError(f"malformed fault entry: {exc!r}") from exc

    @classmethod
    def load(cls, path) -> "FaultSchedule":
        with open(path) as fh:
            try:
                obj = json.load(fh)
            except json.JSONDecodeError as exc:
                raise DomainError(f"{path}: not valid JSON ({exc})") from exc
        return cls.from_json(obj)


def random_fault_schedule(rng: random.Random, universe, duration_ms: int, max_faults: int = 3) -> FaultSchedule:
    """A few random pause/isolate windows over random server subsets."""
    universe = sorted(universe)
    faults = []
    for _ in range(rng.randint(0, max_faults)):
        start = rng.randrange(0, duration_ms)
        end = min(duration_ms, start + rng.randint(50, max(50, duration_ms // 3)))
        k = rng.randint(1, len(universe))
        affected = frozenset(rng.sample(universe, k))
        faults.append((start, end, affected, rng.choice(FAULT_KINDS)))
    return FaultSchedule(faults)


@dataclass(frozen=True)
class ClientWorkload:
    """One write every ``period_ms``, sent to the current primary and
    acknowledged once committed; unacknowledged writes time out."""

    period_ms: int = 20
    timeout_ms: int = 100
    start_ms: int = 0

    def __post_init__(self):
        if self.period_ms <= 0 or self.timeout_ms <= 0 or self.start_ms < 0:
            raise DomainError("client period and timeout must be > 0")


@dataclass(frozen=True)
class ReconfigWorkload:
    """Every ``period_ms`` the current primary attempts a membership change
    to a random member set whose quorums overlap its current one."""

    period_ms: int = 200

    def __post_init__(self):
        if self.period_ms <= 0:
            raise DomainError("reconfig period must be > 0")


class LatencyRecord(NamedTuple):
    issued_at_ms: int
    latency_ms: int
    outcome: str


# --------------------------------------------------------------------------
# Messages


class Heartbeat(NamedTuple):
    term: int
    config_version: int
    config_term: int


class ConfigRequest(NamedTuple):
    pass


class ConfigTransfer(NamedTuple):
    config: Config


class VoteRequest(NamedTuple):
    term: int
    last_log_term: int
    log_len: int
    config_version: int
    config_term: int


class VoteResponse(NamedTuple):
    granted: bool
    term: int


class EntriesPull(NamedTuple):
    log_len: int
    last_term: int
    term: int


class EntriesPush(NamedTuple):
    entry: Optional[int]  # None asks the receiver to roll back one entry
    at_index: int


class TermUpdate(NamedTuple):
    term: int


REPLICATION_PAYLOADS = (EntriesPull, EntriesPush)


class Message(NamedTuple):
    src: str
    dst: str
    sent_ms: int
    deliver_at_ms: int
    payload: tuple


@dataclass
class NodeLocal:
    """Per-server bookkeeping that is not part of the protocol state."""

    voted_term: int = 0
    voted_at_ms: int = -1
    candidate_term: Optional[int] = None
    grants: set = field(default_factory=set)
    election_token: int = 0
    leader_hint: Optional[str] = None
    # Latest (log_len, last_term, term) reported by each puller; primaries only.
    match: dict = field(default_factory=dict)


class PendingWrite(NamedTuple):
    issued_at_ms: int
    server: Optional[str]
    index: int
    term: int


@dataclass
class SimOutput:
    events: list
    verdict: str
    violation: Optional[dict]
    trace: Trace
    stats: dict
    records: list

    @property
    def ok(self) -> bool:
        return self.verdict == "AllHold"

    def event_lines(self) -> str:
        return "".join(
            json.dumps({"timeMs": t, "kind": k, "details": d}, separators=(",", ":"), sort_keys=True) + "\n"
            for t, k, d in self.events
        )

    def summary(self) -> dict:
        return {"verdict": self.verdict, "violation": self.violation, "stats": self.stats}


# --------------------------------------------------------------------------
# Simulation


class Simulation:
    """Event loop state plus handlers.  Subclasses may add event kinds by
    defining ``_on_<kind>`` methods."""

    def __init__(
        self,
        cfg: SimConfig,
        faults: Optional[FaultSchedule] = None,
        client: Optional[ClientWorkload] = None,
        rules: Rules = FULL,
        full_check: bool = False,
        reconfigs: Optional[ReconfigWorkload] = None,
    ):
        self.cfg = cfg
        self.reconfigs = reconfigs
        self.faults = faults if faults is not None else FaultSchedule()
        self.faults.check_universe(cfg.universe)
        self.client = client
        self.rules = rules
        self.full_check = full_check
        self.rng = random.Random(cfg.seed)
        self.now = 0
        self.seq = 0
        self.queue: list = []
        self.init = initial_state(cfg.universe, cfg.m_init)
        self.g = self.init
        self.nodes = {sid: NodeLocal() for sid in cfg.universe}
        self.steps: list = []
        self.events: list = []
        self.stats: Counter = Counter()
        self.verdict = "AllHold"
        self.violation: Optional[dict] = None
        self.pending: dict = {}
        self.next_write = 0
        self.acked: list = []  # (index, term) of acknowledged writes
        self.commit_index: dict = {}  # (primary, term) -> highest index it committed
        self.records: list = []
        self.schedule(0, "start", None)

    # ---- queue

    def schedule(self, at: int, kind: str, data) -> None:
        heapq.heappush(self.queue, (at, self.seq, kind, data))
        self.seq += 1

    def send(self, src: str, dst: str, payload) -> None:
        delay = self.rng.randint(self.cfg.message_delay_min_ms, self.cfg.message_delay_max_ms)
        self.stats["messages_sent"] += 1
        self.schedule(self.now + delay, "deliver", Message(src, dst, self.now, self.now + delay, payload))

    def log_event(self, kind: str, details) -> None:
        self.events.append((self.now, kind, details))

    def step_in_place(self) -> None:
        if not self.queue:
            raise NoMoreEvents()
        at, _, kind, data = heapq.heappop(self.queue)
        self.now = at
        getattr(self, "_on_" + kind)(data)

    def run(self) -> SimOutput:
        end = self.cfg.duration_ms
        while self.queue and self.queue[0][0] <= end and self.verdict == "AllHold":
            self.step_in_place()
        self.finish()
        return self.output()

    def finish(self) -> None:
        # Writes whose timeout falls after the end of the run stay unresolved.
        if self.pending:
            self.stats["writes_unresolved"] = len(self.pending)

    def output(self) -> SimOutput:
        stats = dict(sorted(self.stats.items()))
        stats["final_time_ms"] = self.now
        return SimOutput(
            self.events, self.verdict, self.violation, Trace(self.init, list(self.steps), self.rules),
            stats, list(self.records),
        )

    # ---- protocol actions

    def apply(self, d: ActionDescriptor) -> bool:
        try:
            nxt = apply_action(self.g, d, self.rules)
        except GuardError as exc:
            self.stats[f"stale_{d.kind}"] += 1
            self.stats[f"stale_{d.kind}_{exc.reason}"] += 1
            return False
        pre, self.g = self.g, nxt
        self.steps.append(d)
        self.stats[f"action_{d.kind}"] += 1
        self.log_event("action", codec.descriptor_to_json(d))
        self.observe(pre, d)
        if d.kind == BECOME_LEADER:
            self.on_elected(d.i)
        elif d.kind == COMMIT_ENTRY:
            s = self.g.server(d.i)
            self.on_commit(d.i, len(s.log), s.term)
        elif d.kind == UPDATE_TERMS:
            self.nodes[d.j].candidate_term = None
        return True

    def observe(self, pre: GlobalState, d: ActionDescriptor) -> None:
        """Incremental election safety, leader completeness and write
        durability checks; with ``full_check`` the full checkers also run."""
        g = self.g
        problem = None
        if d.kind == BECOME_LEADER:
            p = g.server(d.i)
            for s in g.servers:
                if s.sid != p.sid and s.role == PRIMARY and s.term == p.term:
                    problem = {"property": "election-safety", "servers": sorted([s.sid, p.sid]), "term": p.term}
            for idx, t in sorted(g.committed):
                if problem is None and t < p.term and not in_log(idx, t, p):
                    problem = {"property": "leader-completeness", "server": p.sid, "entry": [idx, t]}
            for idx, t in self.acked:
                if problem is None and t < p.term and not in_log(idx, t, p):
                    problem = {"property": "acknowledged-write-durability", "server": p.sid, "entry": [idx, t]}
        elif d.kind == COMMIT_ENTRY:
            new = g.committed - pre.committed
            for idx, t in sorted(new):
                for s in g.servers:
                    if problem is None and s.role == PRIMARY and t < s.term and not in_log(idx, t, s):
                        problem = {"property": "leader-completeness", "server": s.sid, "entry": [idx, t]}
        if problem is None and self.full_check:
            for check in (election_safety, leader_completeness):
                rep = check(g)
                if not rep.holds:
                    problem = {"property": rep.name, **rep.witnesses[0]}
                    break
        if problem is not None:
            self.fail(problem)

    def fail(self, problem: dict) -> None:
        if self.verdict == "AllHold":
            self.verdict = "Violation"
            self.violation = problem
            self.log_event("violation", problem)

    # ---- timers

    def reset_election_timer(self, sid: str) -> None:
        node = self.nodes[sid]
        node.election_token += 1
        delay = self.rng.randint(self.cfg.election_timeout_min_ms, self.cfg.election_timeout_max_ms)
        self.schedule(self.now + delay, "election_timeout", (sid, node.election_token))

    def _on_start(self, _):
        for sid in self.cfg.universe:
            self.reset_election_timer(sid)
            self.schedule(self.rng.randint(1, self.cfg.pull_interval_ms), "pull_tick", sid)
        for f in sorted(self.faults.faults):
            self.schedule(f.start_ms, "fault_start", f)
            self.schedule(f.end_ms, "fault_end", f)
        if self.client is not None:
            self.schedule(self.client.start_ms, "client_write", None)
        if self.reconfigs is not None:
            self.schedule(self.reconfigs.period_ms, "reconfig_tick", None)

    def _on_fault_start(self, f: Fault):
        self.log_event("fault_start", f.to_json())

    def _on_fault_end(self, f: Fault):
        self.log_event("fault_end", f.to_json())

    def _on_election_timeout(self, data):
        sid, token = data
        node = self.nodes[sid]
        if token != node.election_token:
            return
        self.reset_election_timer(sid)
        s = self.g.server(sid)
        if s.role != SECONDARY or sid not in s.config.members:
            return
        proposed = s.term + 1
        if node.voted_term >= proposed and not self.vote_expired(node):
            return
        node.voted_term, node.voted_at_ms = proposed, self.now
        node.candidate_term = proposed
        node.grants = {sid}
        self.stats["candidacies"] += 1
        req = VoteRequest(proposed, s.last_term, len(s.log), s.config.version, s.config.term)
        for other in sorted(s.config.members - {sid}):
            self.send(sid, other, req)
        self.try_become_leader(sid)

    def vote_expired(self, node: NodeLocal) -> bool:
        # A vote only blocks other candidates for one maximal election timeout.
        return self.now - node.voted_at_ms >= self.cfg.election_timeout_max_ms

    def _on_heartbeat(self, data):
        sid, term = data
        s = self.g.server(sid)
        if s.role != PRIMARY or s.term != term:
            return
        hb = Heartbeat(s.term, s.config.version, s.config.term)
        for other in self.cfg.universe:
            if other != sid:
                self.send(sid, other, hb)
        self.schedule(self.now + self.cfg.heartbeat_interval_ms, "heartbeat", data)

    def _on_pull_tick(self, sid):
        until = self.faults.paused_until(sid, self.now)
        if until is not None:
            self.stats["pulls_deferred"] += 1
            self.schedule(until, "pull_tick", sid)
            return
        self.schedule(self.now + self.cfg.pull_interval_ms, "pull_tick", sid)
        self.send_pull(sid)

    def send_pull(self, sid: str) -> None:
        s = self.g.server(sid)
        src = self.nodes[sid].leader_hint
        if s.role != SECONDARY or src is None or src == sid or self.rules.logless:
            return
        self.send(sid, src, EntriesPull(len(s.log), s.last_term, s.term))

    # ---- delivery

    def _on_deliver(self, msg: Message):
        if self.faults.isolated(msg.src, self.now) or self.faults.isolated(msg.dst, self.now):
            self.stats["messages_dropped"] += 1
            return
        if isinstance(msg.payload, REPLICATION_PAYLOADS):
            until = self.faults.paused_until(msg.dst, self.now)
            if until is not None:
                self.stats["messages_deferred"] += 1
                self.schedule(until, "deliver", msg)
                return
        self.stats["messages_delivered"] += 1
        handler = getattr(self, "_recv_" + type(msg.payload).__name__)
        handler(msg.src, msg.dst, msg.payload)

    def adopt_higher_term(self, src: str, dst: str, term: int) -> None:
        if term > self.g.server(dst).term:
            self.apply(ActionDescriptor(UPDATE_TERMS, src, dst))

    def _recv_Heartbeat(self, src, dst, hb: Heartbeat):
        self.adopt_higher_term(src, dst, hb.term)
        me = self.g.server(dst)
        if hb.term < me.term:
            self.send(dst, src, TermUpdate(me.term))
            return
        node = self.nodes[dst]
        node.leader_hint = src
        if me.role == SECONDARY:
            self.reset_election_timer(dst)
        if config_newer(Config(frozenset(), hb.config_version, hb.config_term), me.config):
            self.send(dst, src, ConfigRequest())

    def _recv_ConfigRequest(self, src, dst, _):
        self.send(dst, src, ConfigTransfer(self.g.server(dst).config))

    def _recv_ConfigTransfer(self, src, dst, msg: ConfigTransfer):
        if config_newer(msg.config, self.g.server(dst).config):
            self.apply(ActionDescriptor(SEND_CONFIG, src, dst))

    def _recv_TermUpdate(self, src, dst, msg: TermUpdate):
        self.adopt_higher_term(src, dst, msg.term)

    def _recv_VoteRequest(self, src, dst, req: VoteRequest):
        me = self.g.server(dst)
        node = self.nodes[dst]
        cand_cfg = Config(frozenset(), req.config_version, req.config_term)
        log_ok = self.rules.logless or (
            req.last_log_term > me.last_term or (req.last_log_term == me.last_term and req.log_len >= len(me.log))
        )
        granted = (
            me.term < req.term
            and (node.voted_term < req.term or self.vote_expired(node))
            and config_geq(cand_cfg, me.config)
            and log_ok
        )
        if granted:
            node.voted_term, node.voted_at_ms = req.term, self.now
            self.reset_election_timer(dst)
        self.send(dst, src, VoteResponse(granted, me.term))

    def _recv_VoteResponse(self, src, dst, resp: VoteResponse):
        self.adopt_higher_term(src, dst, resp.term)
        node = self.nodes[dst]
        if not resp.granted or node.candidate_term is None:
            return
        node.grants.add(src)
        self.try_become_leader(dst)

    def try_become_leader(self, sid: str) -> None:
        node = self.nodes[sid]
        s = self.g.server(sid)
        if node.candidate_term != s.term + 1 or s.role != SECONDARY:
            node.candidate_term = None
            return
        q = frozenset(node.grants) & s.config.members
        if not is_quorum(q, s.config.members):
            return
        node.candidate_term = None
        self.apply(ActionDescriptor(BECOME_LEADER, sid, members=q))

    def on_elected(self, sid: str) -> None:
        s = self.g.server(sid)
        self.stats["elections"] += 1
        node = self.nodes[sid]
        node.match = {}
        node.leader_hint = sid
        self.log_event("elected", {"server": sid, "term": s.term})
        self.schedule(self.now, "heartbeat", (sid, s.term))
        if self.cfg.noop_on_election and not self.rules.logless:
            self.append_entry(sid)

    # ---- replication

    def append_entry(self, sid: str) -> Optional[tuple]:
        """ClientRequest on ``sid`` plus a push to every other server."""
        if not self.apply(ActionDescriptor(CLIENT_REQUEST, sid)):
            return None
        s = self.g.server(sid)
        push = EntriesPush(s.term, len(s.log))
        for other in self.cfg.universe:
            if other != sid:
                self.send(sid, other, push)
        self.try_commit(sid)
        return len(s.log), s.term

    def _recv_EntriesPull(self, src, dst, pull: EntriesPull):
        me = self.g.server(dst)
        if me.role == PRIMARY:
            self.nodes[dst].match[src] = (pull.log_len, pull.last_term, pull.term)
            self.try_commit(dst)
        ll, lt = pull.log_len, pull.last_term
        prefix = ll == 0 or (ll <= len(me.log) and me.log[ll - 1] == lt)
        if prefix:
            if len(me.log) > ll:
                self.send(dst, src, EntriesPush(me.log[ll], ll + 1))
        elif lt < me.last_term:
            self.send(dst, src, EntriesPush(None, ll))

    def _recv_EntriesPush(self, src, dst, push: EntriesPush):
        me = self.g.server(dst)
        if push.entry is None:
            if len(me.log) == push.at_index and self.apply(ActionDescriptor(ROLLBACK_ENTRIES, dst, src)):
                self.send_pull_to(dst, src)
            return
        if len(me.log) == push.at_index - 1 and self.apply(ActionDescriptor(GET_ENTRIES, dst, src)):
            self.send_pull_to(dst, src)

    def send_pull_to(self, sid: str, src: str) -> None:
        s = self.g.server(sid)
        self.send(sid, src, EntriesPull(len(s.log), s.last_term, s.term))

    def try_commit(self, sid: str) -> None:
        s = self.g.server(sid)
        if s.role != PRIMARY or not s.log or s.log[-1] != s.term:
            return
        ind, t = len(s.log), s.term
        if (ind, t) in self.g.committed:
            return
        have = {sid}
        for n, (ll, lt, nt) in self.nodes[sid].match.items():
            if lt == t and ll >= ind and nt == t:
                have.add(n)
        q = frozenset(have) & s.config.members
        if is_quorum(q, s.config.members):
            self.apply(ActionDescriptor(COMMIT_ENTRY, sid, members=q))

    def broadcast_config(self, sid: str) -> None:
        """Out-of-band heartbeat so other servers learn a new config quickly."""
        s = self.g.server(sid)
        hb = Heartbeat(s.term, s.config.version, s.config.term)
        for other in self.cfg.universe:
            if other != sid:
                self.send(sid, other, hb)

    def _on_reconfig_tick(self, _):
        self.schedule(self.now + self.reconfigs.period_ms, "reconfig_tick", None)
        p = self.current_primary()
        if p is None:
            return
        members = self.g.server(p).config.members
        options = [m for m in nonempty_subsets(self.cfg.universe) if m != members and quorums_overlap(members, m)]
        m_new = options[self.rng.randrange(len(options))]
        if self.apply(ActionDescriptor(RECONFIG, p, members=m_new)):
            self.broadcast_config(p)

    # ---- client

    def current_primary(self) -> Optional[str]:
        best = None
        for s in self.g.servers:
            if s.role == PRIMARY and (best is None or s.term > best.term):
                best = s
        return best.sid if best is not None else None

    def _on_client_write(self, _):
        self.schedule(self.now + self.client.period_ms, "client_write", None)
        self.issue_write()

    def issue_write(self) -> None:
        wid = self.next_write
        self.next_write += 1
        self.stats["writes_issued"] += 1
        p = self.current_primary()
        entry = self.append_entry(p) if p is not None else None
        if entry is None:
            w = PendingWrite(self.now, None, 0, EMPTY_LOG_TERM)
        else:
            w = PendingWrite(self.now, p, entry[0], entry[1])
        self.pending[wid] = w
        self.schedule(self.now + self.client.timeout_ms, "write_timeout", wid)
        # A single-member config commits at append time.
        self.on_commit_writes()

    def _on_write_timeout(self, wid):
        w = self.pending.pop(wid, None)
        if w is None:
            return
        self.stats["writes_timed_out"] += 1
        self.records.append(LatencyRecord(w.issued_at_ms, self.client.timeout_ms, TIMEOUT))
        self.log_event("write_timeout", {"issued_at_ms": w.issued_at_ms})

    def on_commit(self, sid: str, ind: int, term: int) -> None:
        key = (sid, term)
        self.commit_index[key] = max(ind, self.commit_index.get(key, 0))
        self.on_commit_writes()

    def on_commit_writes(self) -> None:
        if not self.pending:
            return
        done = []
        for wid, w in self.pending.items():
            if w.server is None:
                continue
            s = self.g.server(w.server)
            if s.role == PRIMARY and s.term == w.term and self.commit_index.get((w.server, w.term), 0) >= w.index:
                done.append(wid)
        for wid in sorted(done):
            w = self.pending.pop(wid)
            self.stats["writes_acked"] += 1
            self.acked.append((w.index, w.term))
            self.records.append(LatencyRecord(w.issued_at_ms, self.now - w.issued_at_ms, COMMITTED))
            self.log_event("write_ack", {"issued_at_ms": w.issued_at_ms, "index": w.index, "term": w.term})
            for s in self.g.servers:
                if s.role == PRIMARY and s.term > w.term and not in_log(w.index, w.term, s):
                    self.fail({"property": "acknowledged-write-durability", "server": s.sid, "entry": [w.index, w.term]})


def run_simulation(
    cfg: SimConfig,
    faults: Optional[FaultSchedule] = None,
    client: Optional[ClientWorkload] = None,
    rules: Rules = FULL,
    full_check: bool = False,
    reconfigs: Optional[ReconfigWorkload] = None,
) -> SimOutput:
    return Simulation(cfg, faults, client, rules, full_check, reconfigs).run()


def step(sim: Simulation) -> Simulation:
    """Process the least ``(time, seq)`` event on a copy of ``sim``."""
    if not sim.queue:
        raise NoMoreEvents()
    nxt = copy.deepcopy(sim)
    nxt.step_in_place()
    return nxt
