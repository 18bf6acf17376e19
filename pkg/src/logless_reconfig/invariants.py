"""Safety properties as executable checks.

Each checker transcribes one quantified statement and evaluates it by plain
enumeration over servers, quorums, log indices and committed entries.  The
first violating assignment found (in sorted enumeration order) is reported as
the witness.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable

from .core import (
    PRIMARY,
    Config,
    DomainError,
    GlobalState,
    config_geq,
    config_newer,
    in_log,
    quorum_list,
    quorums_overlap,
)


@dataclass
class InvariantReport:
    name: str
    holds: bool
    witnesses: list = field(default_factory=list)

    def to_json(self) -> dict:
        return {"name": self.name, "holds": self.holds, "witnesses": self.witnesses}


def _report(name: str, witness) -> InvariantReport:
    if witness is None:
        return InvariantReport(name, True, [])
    return InvariantReport(name, False, [witness])


def _members(m) -> list:
    return sorted(m)


def _committed(g: GlobalState) -> list:
    return sorted(g.committed)


# --------------------------------------------------------------------------
# Activeness


def is_deactivated(g: GlobalState, c: Config) -> bool:
    """Every quorum of ``c`` holds some server whose config is newer than ``c``."""
    for q in quorum_list(c.members):
        if not any(config_newer(g.server(n).config, c) for n in sorted(q)):
            return False
    return True


def active_config_set(g: GlobalState) -> frozenset:
    return frozenset(s.sid for s in g.servers if not is_deactivated(g, s.config))


# --------------------------------------------------------------------------
# Headline properties


def election_safety(g: GlobalState) -> InvariantReport:
    def find():
        for s in g.servers:
            for t in g.servers:
                if s.sid < t.sid and s.role == PRIMARY and t.role == PRIMARY and s.term == t.term:
                    return {"servers": [s.sid, t.sid], "term": s.term}
        return None

    return _report("election-safety", find())


def leader_completeness(g: GlobalState) -> InvariantReport:
    def find():
        for s in g.servers:
            if s.role != PRIMARY:
                continue
            for cindex, cterm in _committed(g):
                if cterm < s.term and not in_log(cindex, cterm, s):
                    return {"server": s.sid, "term": s.term, "entry": [cindex, cterm]}
        return None

    return _report("leader-completeness", find())


def log_matching(g: GlobalState) -> InvariantReport:
    def find():
        for s in g.servers:
            for t in g.servers:
                if s.sid >= t.sid:
                    continue
                for ind in range(1, min(len(s.log), len(t.log)) + 1):
                    if s.log[ind - 1] == t.log[ind - 1] and s.log[:ind] != t.log[:ind]:
                        return {"servers": [s.sid, t.sid], "index": ind}
        return None

    return _report("log-matching", find())


# --------------------------------------------------------------------------
# Auxiliary state lemmas


def primary_term_equals_config_term(g: GlobalState) -> InvariantReport:
    def find():
        for s in g.servers:
            if s.role == PRIMARY and s.config.term != s.term:
                return {"server": s.sid, "term": s.term, "config_term": s.config.term}
        return None

    return _report("primary-term-equals-config-term", find())


def config_version_term_unique(g: GlobalState) -> InvariantReport:
    def find():
        for i in g.servers:
            for j in g.servers:
                if i.config.vt == j.config.vt and i.config.members != j.config.members:
                    return {
                        "servers": [i.sid, j.sid],
                        "version": i.config.version,
                        "config_term": i.config.term,
                    }
        return None

    return _report("config-version-term-unique", find())


def primary_contains_newest_config_of_term(g: GlobalState) -> InvariantReport:
    def find():
        for i in g.servers:
            for j in g.servers:
                if i.role == PRIMARY and j.config.term == i.term and j.config.version > i.config.version:
                    return {"primary": i.sid, "server": j.sid, "term": i.term}
        return None

    return _report("primary-contains-newest-config-of-term", find())


def active_configs_overlap(g: GlobalState) -> InvariantReport:
    def find():
        active = sorted(active_config_set(g))
        for s in active:
            for t in active:
                ms, mt = g.server(s).config.members, g.server(t).config.members
                if not quorums_overlap(ms, mt):
                    return {"servers": [s, t], "members": [_members(ms), _members(mt)]}
        return None

    return _report("active-configs-overlap", find())


def active_configs_safe_from_past_terms(g: GlobalState) -> InvariantReport:
    def find():
        active = sorted(active_config_set(g))
        for s in g.servers:
            for t in active:
                for q in quorum_list(g.server(t).config.members):
                    if not any(g.server(n).term >= s.config.term for n in sorted(q)):
                        return {"config_of": s.sid, "active": t, "quorum": _members(q)}
        return None

    return _report("active-configs-safe-from-past-terms", find())


def primary_term_gte_log_term(g: GlobalState) -> InvariantReport:
    def find():
        for s in g.servers:
            if s.role != PRIMARY:
                continue
            for ind, t in enumerate(s.log, start=1):
                if s.term < t:
                    return {"server": s.sid, "index": ind, "entry_term": t, "term": s.term}
        return None

    return _report("primary-term-gte-log-term", find())


def log_entry_terms_monotonic(g: GlobalState) -> InvariantReport:
    def find():
        for s in g.servers:
            n = len(s.log)
            for a in range(1, n + 1):
                for b in range(a + 1, n + 1):
                    if s.log[a - 1] > s.log[b - 1]:
                        return {"server": s.sid, "indices": [a, b]}
        return None

    return _report("log-entry-terms-monotonic", find())


def uniform_log_entries_in_term(g: GlobalState) -> InvariantReport:
    def find():
        for i in g.servers:
            for j in g.servers:
                for ind_i in range(1, len(i.log) + 1):
                    for ind_j in range(1, len(j.log) + 1):
                        if (
                            ind_j < ind_i
                            and i.log[ind_i - 1] == j.log[ind_j - 1]
                            and i.log[ind_j - 1] != i.log[ind_i - 1]
                        ):
                            return {"servers": [i.sid, j.sid], "indices": [ind_i, ind_j]}
        return None

    return _report("uniform-log-entries-in-term", find())


def log_entry_in_term_implies_config_in_term(g: GlobalState) -> InvariantReport:
    def find():
        for s in g.servers:
            for ind, t in enumerate(s.log, start=1):
                if not any(n.config.term >= t for n in g.servers):
                    return {"server": s.sid, "entry": [ind, t]}
        return None

    return _report("log-entry-in-term-implies-config-in-term", find())


def primary_has_entries_it_created(g: GlobalState) -> InvariantReport:
    def find():
        for holder in g.servers:
            for ind, t in enumerate(holder.log, start=1):
                for s in g.servers:
                    if s.role == PRIMARY and s.term == t and not in_log(ind, t, s):
                        return {"primary": s.sid, "holder": holder.sid, "entry": [ind, t]}
        return None

    return _report("primary-has-entries-it-created", find())


def logs_later_than_committed_contain_committed(g: GlobalState) -> InvariantReport:
    def find():
        for s in g.servers:
            for index, term in _committed(g):
                for ind_s in range(1, len(s.log) + 1):
                    if term < s.log[ind_s - 1] and not in_log(index, term, s):
                        return {"server": s.sid, "committed": [index, term], "index": ind_s}
        return None

    return _report("logs-later-than-committed-contain-committed", find())


def active_configs_overlap_committed(g: GlobalState) -> InvariantReport:
    def find():
        for s in sorted(active_config_set(g)):
            for index, term in _committed(g):
                for q in quorum_list(g.server(s).config.members):
                    if not any(in_log(index, term, g.server(n)) for n in sorted(q)):
                        return {"active": s, "committed": [index, term], "quorum": _members(q)}
        return None

    return _report("active-configs-overlap-committed", find())


def newer_configs_disable_commits(g: GlobalState) -> InvariantReport:
    def find():
        for s in g.servers:
            for t in g.servers:
                if t.role == PRIMARY and t.term < s.config.term:
                    for q in quorum_list(t.config.members):
                        if not any(g.server(n).term > t.term for n in sorted(q)):
                            return {"primary": t.sid, "newer_config_of": s.sid, "quorum": _members(q)}
        return None

    return _report("newer-configs-disable-commits", find())


# --------------------------------------------------------------------------
# Transition lemmas


def configs_increase_monotonically(pre: GlobalState, post: GlobalState) -> InvariantReport:
    def find():
        for a in pre.servers:
            b = post.server(a.sid)
            if not config_geq(b.config, a.config):
                return {
                    "server": a.sid,
                    "before": [a.config.version, a.config.term],
                    "after": [b.config.version, b.config.term],
                }
        return None

    return _report("configs-increase-monotonically", find())


def config_deactivation_stability(pre: GlobalState, post: GlobalState) -> InvariantReport:
    def find():
        seen = []
        for s in pre.servers:
            c = s.config
            if c in seen:
                continue
            seen.append(c)
            if is_deactivated(pre, c) and not is_deactivated(post, c):
                return {"config_of": s.sid, "version": c.version, "config_term": c.term}
        return None

    return _report("config-deactivation-stability", find())


# --------------------------------------------------------------------------
# Registries

HEADLINE = {
    "election-safety": election_safety,
    "leader-completeness": leader_completeness,
    "log-matching": log_matching,
}

STATE_LEMMAS = {
    "primary-term-equals-config-term": primary_term_equals_config_term,
    "config-version-term-unique": config_version_term_unique,
    "primary-contains-newest-config-of-term": primary_contains_newest_config_of_term,
    "active-configs-overlap": active_configs_overlap,
    "active-configs-safe-from-past-terms": active_configs_safe_from_past_terms,
    "primary-term-gte-log-term": primary_term_gte_log_term,
    "log-entry-terms-monotonic": log_entry_terms_monotonic,
    "uniform-log-entries-in-term": uniform_log_entries_in_term,
    "log-entry-in-term-implies-config-in-term": log_entry_in_term_implies_config_in_term,
    "primary-has-entries-it-created": primary_has_entries_it_created,
    "logs-later-than-committed-contain-committed": logs_later_than_committed_contain_committed,
    "active-configs-overlap-committed": active_configs_overlap_committed,
    "newer-configs-disable-commits": newer_configs_disable_commits,
}

STATE_INVARIANTS: dict[str, Callable] = {**HEADLINE, **STATE_LEMMAS}

TRANSITION_LEMMAS = {
    "configs-increase-monotonically": configs_increase_monotonically,
    "config-deactivation-stability": config_deactivation_stability,
}

ALL_NAMES = tuple(STATE_INVARIANTS) + tuple(TRANSITION_LEMMAS)


def state_lemma_suite(g: GlobalState) -> list:
    return [check(g) for check in STATE_LEMMAS.values()]


def transition_lemma_suite(pre: GlobalState, post: GlobalState) -> list:
    return [check(pre, post) for check in TRANSITION_LEMMAS.values()]


def resolve_names(names) -> tuple:
    """Expand ``"all"`` and validate invariant names (order preserved)."""
    if isinstance(names, str):
        names = [n for n in names.split(",") if n]
    out = []
    for n in names:
        if n == "all":
            out.extend(ALL_NAMES)
        elif n in STATE_INVARIANTS or n in TRANSITION_LEMMAS:
            out.append(n)
        else:
            raise DomainError(f"unknown invariant {n!r}")
    seen = set()
    return tuple(n for n in out if not (n in seen or seen.add(n)))
