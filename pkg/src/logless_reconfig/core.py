"""Protocol state and guarded transitions for logless dynamic reconfiguration.

Every value here is immutable and every transition is a pure function from
one :class:`GlobalState` to the next.  A transition whose guard does not hold
raises :class:`GuardError`; the input state is never touched.

Servers are identified by strings (``"n1"``, ``"n2"``, ...).  Member sets are
``frozenset`` objects of server ids.  A log is a tuple of entry terms; the
position of an entry (1-based) is its index.
"""

from __future__ import annotations

import enum
from dataclasses import dataclass, field
from functools import lru_cache
from itertools import combinations
from typing import Iterable, Iterator, NamedTuple, Optional

PRIMARY = "Primary"
SECONDARY = "Secondary"
ROLES = (PRIMARY, SECONDARY)

# Sentinel last-term of an empty log.  Entry terms are always >= 1.
EMPTY_LOG_TERM = -1

# Declaration order doubles as the sort order of action descriptors.
RECONFIG = "Reconfig"
SEND_CONFIG = "SendConfig"
BECOME_LEADER = "BecomeLeader"
UPDATE_TERMS = "UpdateTerms"
CLIENT_REQUEST = "ClientRequest"
GET_ENTRIES = "GetEntries"
ROLLBACK_ENTRIES = "RollbackEntries"
COMMIT_ENTRY = "CommitEntry"
ACTION_KINDS = (
    RECONFIG,
    SEND_CONFIG,
    BECOME_LEADER,
    UPDATE_TERMS,
    CLIENT_REQUEST,
    GET_ENTRIES,
    ROLLBACK_ENTRIES,
    COMMIT_ENTRY,
)
LOGLESS_KINDS = (RECONFIG, SEND_CONFIG, BECOME_LEADER, UPDATE_TERMS)
_KIND_RANK = {k: n for n, k in enumerate(ACTION_KINDS)}

# Values stay far below any fixed-width overflow; asserted when states are built.
MAX_NATURAL = 2**62

MemberSet = frozenset


class DomainError(ValueError):
    """Malformed input: empty member sets, unknown servers, bad arguments."""


class GuardError(Exception):
    """A transition guard failed.  ``reason`` names the first failing check."""

    def __init__(self, reason: str, detail: str = ""):
        super().__init__(f"{reason}: {detail}" if detail else reason)
        self.reason = reason


class ConfigOrdering(enum.Enum):
    OLDER = "Older"
    EQUAL = "Equal"
    NEWER = "Newer"


class ReconfigCheck(enum.Enum):
    OK = "Ok"
    NOT_PRIMARY = "NotPrimary"
    Q1_FAILED = "Q1Failed"
    Q2_FAILED = "Q2Failed"
    P1_FAILED = "P1Failed"
    OVERLAP_FAILED = "OverlapFailed"


class Config(NamedTuple):
    members: frozenset
    version: int
    term: int

    @property
    def vt(self) -> tuple[int, int]:
        return (self.version, self.term)


class ServerState(NamedTuple):
    sid: str
    term: int
    role: str
    config: Config
    log: tuple = ()

    @property
    def last_term(self) -> int:
        return self.log[-1] if self.log else EMPTY_LOG_TERM


class GlobalState(NamedTuple):
    """Servers in universe order plus the ghost set of committed entries."""

    servers: tuple
    committed: frozenset = frozenset()

    @property
    def universe(self) -> tuple:
        return tuple(s.sid for s in self.servers)

    def server(self, sid: str) -> ServerState:
        for s in self.servers:
            if s.sid == sid:
                return s
        raise DomainError(f"unknown server id {sid!r}")

    def index(self, sid: str) -> int:
        for n, s in enumerate(self.servers):
            if s.sid == sid:
                return n
        raise DomainError(f"unknown server id {sid!r}")

    def replace_server(self, new: ServerState) -> "GlobalState":
        servers = tuple(new if s.sid == new.sid else s for s in self.servers)
        return self._replace(servers=servers)


class ActionDescriptor(NamedTuple):
    """One action instance.  Argument meaning follows the action
    signatures: ``Reconfig(i, m_new)``, ``SendConfig(i, j)`` (i sends to j),
    ``BecomeLeader(i, q)``, ``UpdateTerms(i, j)`` (j adopts i's term),
    ``ClientRequest(i)``, ``GetEntries(i, j)`` (i pulls from j),
    ``RollbackEntries(i, j)`` (i truncates against j), ``CommitEntry(i, q)``.
    """

    kind: str
    i: str
    j: Optional[str] = None
    members: Optional[frozenset] = None

    def sort_key(self):
        return (
            _KIND_RANK[self.kind],
            self.i,
            self.j or "",
            tuple(sorted(self.members)) if self.members is not None else (),
        )

    def __str__(self) -> str:
        args = [self.i]
        if self.j is not None:
            args.append(self.j)
        if self.members is not None:
            args.append("{" + ",".join(sorted(self.members)) + "}")
        return f"{self.kind}({', '.join(args)})"


def reconfig(i, m_new) -> ActionDescriptor:
    return ActionDescriptor(RECONFIG, i, members=frozenset(m_new))


def send_config(i, j) -> ActionDescriptor:
    return ActionDescriptor(SEND_CONFIG, i, j)


def become_leader(i, q) -> ActionDescriptor:
    return ActionDescriptor(BECOME_LEADER, i, members=frozenset(q))


def update_terms(i, j) -> ActionDescriptor:
    return ActionDescriptor(UPDATE_TERMS, i, j)


def client_request(i) -> ActionDescriptor:
    return ActionDescriptor(CLIENT_REQUEST, i)


def get_entries(i, j) -> ActionDescriptor:
    return ActionDescriptor(GET_ENTRIES, i, j)


def rollback_entries(i, j) -> ActionDescriptor:
    return ActionDescriptor(ROLLBACK_ENTRIES, i, j)


def commit_entry(i, q) -> ActionDescriptor:
    return ActionDescriptor(COMMIT_ENTRY, i, members=frozenset(q))


# Mutation flags weaken individual guards.  They exist only so tests can show
# the checker catches the bugs each guard prevents.
DROP_Q1 = "drop-q1"
DROP_Q2 = "drop-q2"
DROP_P1 = "drop-p1"
DROP_CONFIG_VOTE = "drop-config-vote"
DROP_CONFIG_TERM_REWRITE = "drop-config-term-rewrite"
MUTATIONS = (DROP_Q1, DROP_Q2, DROP_P1, DROP_CONFIG_VOTE, DROP_CONFIG_TERM_REWRITE)


@dataclass(frozen=True)
class Rules:
    """Which protocol is being run.

    ``logless`` selects the configuration-only subprotocol: only Reconfig,
    SendConfig, BecomeLeader and UpdateTerms exist, and the log-dependent
    guards (LogGeq when voting, P1 when reconfiguring) are dropped.
    """

    logless: bool = False
    mutations: frozenset = field(default_factory=frozenset)

    def __post_init__(self):
        unknown = set(self.mutations) - set(MUTATIONS)
        if unknown:
            raise DomainError(f"unknown mutation(s): {sorted(unknown)}")
        object.__setattr__(self, "mutations", frozenset(self.mutations))

    @property
    def kinds(self) -> tuple:
        return LOGLESS_KINDS if self.logless else ACTION_KINDS


FULL = Rules()
LOGLESS = Rules(logless=True)


# --------------------------------------------------------------------------
# Quorums


def _check_members(m) -> frozenset:
    m = frozenset(m)
    if not m:
        raise DomainError("member set must be non-empty")
    return m


@lru_cache(maxsize=None)
def _quorums(m: frozenset) -> tuple:
    ordered = sorted(m)
    n = len(ordered)
    out = []
    for k in range(n // 2 + 1, n + 1):
        out.extend(frozenset(c) for c in combinations(ordered, k))
    return tuple(out)


def quorums(m) -> frozenset:
    """All subsets ``s`` of ``m`` with ``2*|s| > |m|``."""
    return frozenset(_quorums(_check_members(m)))


def quorum_list(m: frozenset) -> tuple:
    """Quorums of ``m`` in a fixed order (by size, then lexicographically)."""
    return _quorums(_check_members(m))


def is_quorum(q, m) -> bool:
    q = frozenset(q)
    return q <= m and 2 * len(q) > len(m)


@lru_cache(maxsize=None)
def _overlap(m1: frozenset, m2: frozenset) -> bool:
    return all(q1 & q2 for q1 in _quorums(m1) for q2 in _quorums(m2))


def quorums_overlap(m1, m2) -> bool:
    """True iff every quorum of ``m1`` intersects every quorum of ``m2``."""
    return _overlap(_check_members(m1), _check_members(m2))


# --------------------------------------------------------------------------
# Orderings and log predicates


def compare_configs(c1: Config, c2: Config) -> ConfigOrdering:
    """Order configs by (term, version); member sets are ignored."""
    a, b = (c1.term, c1.version), (c2.term, c2.version)
    if a > b:
        return ConfigOrdering.NEWER
    if a < b:
        return ConfigOrdering.OLDER
    return ConfigOrdering.EQUAL


def config_newer(c1: Config, c2: Config) -> bool:
    return (c1.term, c1.version) > (c2.term, c2.version)


def config_geq(c1: Config, c2: Config) -> bool:
    return (c1.term, c1.version) >= (c2.term, c2.version)


def log_term(s: ServerState) -> int:
    return s.log[-1] if s.log else EMPTY_LOG_TERM


def log_geq(a: ServerState, b: ServerState) -> bool:
    ta, tb = log_term(a), log_term(b)
    return ta > tb or (ta == tb and len(a.log) >= len(b.log))


def in_log(index: int, term: int, s: ServerState) -> bool:
    return 1 <= index <= len(s.log) and s.log[index - 1] == term


def is_prefix(li: tuple, lj: tuple) -> bool:
    return len(li) <= len(lj) and lj[: len(li)] == li


def log_check(i: ServerState, j: ServerState) -> bool:
    """May ``i`` fetch the next entry from ``j``?"""
    n = len(i.log)
    return len(j.log) > n and (n == 0 or i.log[n - 1] == j.log[n - 1])


def can_rollback(i: ServerState, j: ServerState) -> bool:
    return log_term(i) < log_term(j) and not is_prefix(i.log, j.log)


def is_committed(g: GlobalState, index: int, term: int, q) -> bool:
    for sid in q:
        s = g.server(sid)
        if not (in_log(index, term, s) and s.term == term):
            return False
    return True


# --------------------------------------------------------------------------
# Construction


def initial_state(universe: Iterable[str], m_init) -> GlobalState:
    """Every server at term 0, Secondary, config ``(m_init, 1, 0)``, empty log."""
    universe = tuple(sorted(set(universe)))
    if not universe:
        raise DomainError("universe must be non-empty")
    m_init = _check_members(m_init)
    if not m_init <= set(universe):
        raise DomainError(f"m_init {sorted(m_init)} not within universe {list(universe)}")
    cfg = Config(m_init, 1, 0)
    return GlobalState(tuple(ServerState(sid, 0, SECONDARY, cfg, ()) for sid in universe))


def server_ids(n: int, prefix: str = "n", start: int = 1) -> tuple:
    if n < 1:
        raise DomainError("need at least one server")
    return tuple(f"{prefix}{k}" for k in range(start, start + n))


def validate_state(g: GlobalState) -> GlobalState:
    """Structural checks on a state built by hand or loaded from JSON."""
    ids = [s.sid for s in g.servers]
    if ids != sorted(set(ids)):
        raise DomainError("servers must be unique and sorted by id")
    universe = set(ids)
    for s in g.servers:
        if s.role not in ROLES:
            raise DomainError(f"{s.sid}: bad role {s.role!r}")
        if not (0 <= s.term < MAX_NATURAL):
            raise DomainError(f"{s.sid}: term out of range")
        c = s.config
        if not c.members or not c.members <= universe:
            raise DomainError(f"{s.sid}: config members must be a non-empty subset of the universe")
        if not (1 <= c.version < MAX_NATURAL and 0 <= c.term < MAX_NATURAL):
            raise DomainError(f"{s.sid}: config version/term out of range")
        if any((not isinstance(t, int)) or t < 0 or t >= MAX_NATURAL for t in s.log):
            raise DomainError(f"{s.sid}: bad log entry")
    for idx, t in g.committed:
        if idx < 1 or t < 1:
            raise DomainError(f"bad committed entry {(idx, t)}")
    return g


# --------------------------------------------------------------------------
# Guards and transitions


def _exists_quorum_all(m: frozenset, pred_members: frozenset) -> bool:
    # Some quorum of m lies entirely inside pred_members.
    return 2 * len(m & pred_members) > len(m)


def q1(g: GlobalState, i: str) -> bool:
    si = g.server(i)
    m = si.config.members
    same = frozenset(s.sid for s in g.servers if s.config.vt == si.config.vt)
    return _exists_quorum_all(m, same)


def q2(g: GlobalState, i: str) -> bool:
    si = g.server(i)
    m = si.config.members
    same = frozenset(s.sid for s in g.servers if s.term == si.term)
    return _exists_quorum_all(m, same)


def p1(g: GlobalState, i: str) -> bool:
    si = g.server(i)
    t = si.term
    at_term = [c for c in g.committed if c[1] == t]
    if not at_term:
        # P1a needs committed to be empty; P1b is then vacuous.
        return not g.committed
    ok = frozenset(
        s.sid for s in g.servers if s.term == t and all(in_log(idx, t, s) for idx, _ in at_term)
    )
    return _exists_quorum_all(si.config.members, ok)


def reconfig_precheck(g: GlobalState, i: str, rules: Rules = FULL) -> ReconfigCheck:
    """The member-set independent part of the Reconfig guard."""
    si = g.server(i)
    if si.role != PRIMARY:
        return ReconfigCheck.NOT_PRIMARY
    muts = rules.mutations
    if DROP_Q1 not in muts and not q1(g, i):
        return ReconfigCheck.Q1_FAILED
    if DROP_Q2 not in muts and not q2(g, i):
        return ReconfigCheck.Q2_FAILED
    if not rules.logless and DROP_P1 not in muts and not p1(g, i):
        return ReconfigCheck.P1_FAILED
    return ReconfigCheck.OK


def reconfig_enabled(g: GlobalState, i: str, m_new, rules: Rules = FULL) -> ReconfigCheck:
    """First failing Reconfig check in the order NotPrimary, Q1, Q2, P1, overlap."""
    m_new = _check_members(m_new)
    pre = reconfig_precheck(g, i, rules)
    if pre is not ReconfigCheck.OK:
        return pre
    if not m_new <= set(g.universe):
        raise DomainError(f"m_new {sorted(m_new)} not within the universe")
    if not quorums_overlap(g.server(i).config.members, m_new):
        return ReconfigCheck.OVERLAP_FAILED
    return ReconfigCheck.OK


def apply_reconfig(g: GlobalState, i: str, m_new, rules: Rules = FULL) -> GlobalState:
    check = reconfig_enabled(g, i, m_new, rules)
    if check is not ReconfigCheck.OK:
        raise GuardError(check.value)
    si = g.server(i)
    c = si.config
    return g.replace_server(si._replace(config=Config(frozenset(m_new), c.version + 1, c.term)))


def apply_send_config(g: GlobalState, i: str, j: str, rules: Rules = FULL) -> GlobalState:
    si, sj = g.server(i), g.server(j)
    if sj.role != SECONDARY:
        raise GuardError("ReceiverNotSecondary")
    if not config_newer(si.config, sj.config):
        raise GuardError("ConfigNotNewer")
    return g.replace_server(sj._replace(config=si.config))


def become_leader_check(g: GlobalState, i: str, q, rules: Rules = FULL) -> Optional[str]:
    """Name of the first failing BecomeLeader check, or None."""
    q = frozenset(q)
    si = g.server(i)
    if not is_quorum(q, si.config.members):
        return "NotAQuorum"
    if i not in q:
        return "CandidateNotInQuorum"
    voters = [g.server(v) for v in sorted(q)]
    if DROP_CONFIG_VOTE not in rules.mutations:
        if not all(config_geq(si.config, v.config) for v in voters):
            return "VoterHasNewerConfig"
    if not all(si.term + 1 > v.term for v in voters):
        return "VoterTermTooHigh"
    if not rules.logless and not all(log_geq(si, v) for v in voters):
        return "VoterLogAhead"
    return None


def apply_become_leader(g: GlobalState, i: str, q, rules: Rules = FULL) -> GlobalState:
    q = frozenset(q)
    failed = become_leader_check(g, i, q, rules)
    if failed:
        raise GuardError(failed)
    si = g.server(i)
    new_term = si.term + 1
    servers = []
    for s in g.servers:
        if s.sid == i:
            cfg = s.config
            if DROP_CONFIG_TERM_REWRITE not in rules.mutations:
                cfg = cfg._replace(term=new_term)
            s = s._replace(term=new_term, role=PRIMARY, config=cfg)
        elif s.sid in q:
            s = s._replace(term=new_term, role=SECONDARY)
        servers.append(s)
    return g._replace(servers=tuple(servers))


def apply_update_terms(g: GlobalState, i: str, j: str, rules: Rules = FULL) -> GlobalState:
    si, sj = g.server(i), g.server(j)
    if not si.term > sj.term:
        raise GuardError("TermNotGreater")
    return g.replace_server(sj._replace(term=si.term, role=SECONDARY))


def _require_log_actions(rules: Rules):
    if rules.logless:
        raise GuardError("NotInMode", "log actions do not exist in the logless subprotocol")


def apply_client_request(g: GlobalState, i: str, rules: Rules = FULL) -> GlobalState:
    _require_log_actions(rules)
    si = g.server(i)
    if si.role != PRIMARY:
        raise GuardError("NotPrimary")
    return g.replace_server(si._replace(log=si.log + (si.term,)))


def apply_get_entries(g: GlobalState, i: str, j: str, rules: Rules = FULL) -> GlobalState:
    _require_log_actions(rules)
    si, sj = g.server(i), g.server(j)
    if si.role != SECONDARY:
        raise GuardError("NotSecondary")
    if not log_check(si, sj):
        raise GuardError("LogCheckFailed")
    new = si._replace(log=si.log + (sj.log[len(si.log)],))
    # Holds whenever log matching holds; a failure here means the state was
    # not reachable.
    assert is_prefix(new.log, sj.log), "GetEntries must leave a prefix of the source log"
    return g.replace_server(new)


def apply_rollback_entries(g: GlobalState, i: str, j: str, rules: Rules = FULL) -> GlobalState:
    _require_log_actions(rules)
    si, sj = g.server(i), g.server(j)
    if si.role != SECONDARY:
        raise GuardError("NotSecondary")
    if not can_rollback(si, sj):
        raise GuardError("CannotRollback")
    return g.replace_server(si._replace(log=si.log[:-1]))


def apply_commit_entry(g: GlobalState, i: str, q, rules: Rules = FULL) -> GlobalState:
    _require_log_actions(rules)
    q = frozenset(q)
    si = g.server(i)
    if si.role != PRIMARY:
        raise GuardError("NotPrimary")
    if not is_quorum(q, si.config.members):
        raise GuardError("NotAQuorum")
    if not is_committed(g, len(si.log), si.term, q):
        raise GuardError("NotReplicatedOnQuorum")
    return g._replace(committed=g.committed | {(len(si.log), si.term)})


def apply_action(g: GlobalState, d: ActionDescriptor, rules: Rules = FULL) -> GlobalState:
    """Apply one descriptor; raises :class:`GuardError` if it is not enabled."""
    if d.kind not in rules.kinds:
        raise GuardError("NotInMode", d.kind)
    k = d.kind
    if k == RECONFIG:
        return apply_reconfig(g, d.i, d.members, rules)
    if k == SEND_CONFIG:
        return apply_send_config(g, d.i, d.j, rules)
    if k == BECOME_LEADER:
        return apply_become_leader(g, d.i, d.members, rules)
    if k == UPDATE_TERMS:
        return apply_update_terms(g, d.i, d.j, rules)
    if k == CLIENT_REQUEST:
        return apply_client_request(g, d.i, rules)
    if k == GET_ENTRIES:
        return apply_get_entries(g, d.i, d.j, rules)
    if k == ROLLBACK_ENTRIES:
        return apply_rollback_entries(g, d.i, d.j, rules)
    if k == COMMIT_ENTRY:
        return apply_commit_entry(g, d.i, d.members, rules)
    raise DomainError(f"unknown action kind {k!r}")


# --------------------------------------------------------------------------
# Successor generation


class Limits(NamedTuple):
    """State constraint: every server within these bounds."""

    max_term: int
    max_log_len: int
    max_config_version: int

    def admits(self, g: GlobalState) -> bool:
        for s in g.servers:
            if (
                s.term > self.max_term
                or len(s.log) > self.max_log_len
                or s.config.version > self.max_config_version
            ):
                return False
        return True


@lru_cache(maxsize=None)
def nonempty_subsets(universe: tuple) -> tuple:
    ordered = sorted(universe)
    out = []
    for k in range(1, len(ordered) + 1):
        out.extend(frozenset(c) for c in combinations(ordered, k))
    out.sort(key=lambda m: tuple(sorted(m)))
    return tuple(out)


def successors(g: GlobalState, limits: Optional[Limits] = None, rules: Rules = FULL) -> Iterator:
    """Yield ``(descriptor, next_state)`` for every enabled action, in
    descriptor order.  Successors outside ``limits`` are discarded."""
    ids = [s.sid for s in g.servers]
    kinds = rules.kinds
    out = []

    def emit(d, nxt):
        if limits is None or limits.admits(nxt):
            out.append((d, nxt))

    for i in ids:
        if reconfig_precheck(g, i, rules) is not ReconfigCheck.OK:
            continue
        si = g.server(i)
        for m_new in nonempty_subsets(tuple(ids)):
            if _overlap(si.config.members, m_new):
                c = si.config
                emit(
                    ActionDescriptor(RECONFIG, i, members=m_new),
                    g.replace_server(si._replace(config=Config(m_new, c.version + 1, c.term))),
                )
    for i in ids:
        for j in ids:
            if i != j:
                try:
                    emit(ActionDescriptor(SEND_CONFIG, i, j), apply_send_config(g, i, j, rules))
                except GuardError:
                    pass
    for i in ids:
        for q in quorum_list(g.server(i).config.members):
            if i in q:
                try:
                    emit(ActionDescriptor(BECOME_LEADER, i, members=q), apply_become_leader(g, i, q, rules))
                except GuardError:
                    pass
    for i in ids:
        for j in ids:
            if i != j:
                try:
                    emit(ActionDescriptor(UPDATE_TERMS, i, j), apply_update_terms(g, i, j, rules))
                except GuardError:
                    pass
    if CLIENT_REQUEST in kinds:
        for i in ids:
            try:
                emit(ActionDescriptor(CLIENT_REQUEST, i), apply_client_request(g, i, rules))
            except GuardError:
                pass
        for i in ids:
            for j in ids:
                if i != j:
                    try:
                        emit(ActionDescriptor(GET_ENTRIES, i, j), apply_get_entries(g, i, j, rules))
                    except GuardError:
                        pass
        for i in ids:
            for j in ids:
                if i != j:
                    try:
                        emit(ActionDescriptor(ROLLBACK_ENTRIES, i, j), apply_rollback_entries(g, i, j, rules))
                    except GuardError:
                        pass
        for i in ids:
            si = g.server(i)
            if si.role != PRIMARY:
                continue
            for q in quorum_list(si.config.members):
                try:
                    emit(ActionDescriptor(COMMIT_ENTRY, i, members=q), apply_commit_entry(g, i, q, rules))
                except GuardError:
                    pass
    out.sort(key=lambda pair: pair[0].sort_key())
    return iter(out)


def enabled_transitions(g: GlobalState, limits: Optional[Limits] = None, rules: Rules = FULL) -> list:
    """Every enabled descriptor whose successor respects ``limits``.

    Reconfig ranges over all non-empty subsets of the universe; BecomeLeader
    and CommitEntry range over quorums of the actor's config.  Order: kind in
    declaration order, then actor, then second server, then sorted members.
    """
    return [d for d, _ in successors(g, limits, rules)]
