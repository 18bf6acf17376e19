"""Bounded breadth-first exploration of the protocol state space.

States are deduplicated exactly (no fingerprints).  With symmetry enabled,
each state is replaced by its canonical representative: the least relabeling
under every permutation of server ids.  The transition relation and every
checked property are invariant under relabeling, so the reachable orbits are
the same whether or not the initial member set is symmetric.  Counterexamples are rebuilt as concrete traces from the
initial state, so they always replay under the rules that produced them.
"""

from __future__ import annotations

import enum
import json
import random
from collections import deque
from dataclasses import dataclass, field
from functools import lru_cache
from itertools import permutations
from typing import Optional

from . import codec
from .core import (
    FULL,
    LOGLESS_KINDS,
    ActionDescriptor,
    Config,
    DomainError,
    GlobalState,
    GuardError,
    Limits,
    Rules,
    SECONDARY,
    ServerState,
    apply_action,
    initial_state,
    server_ids,
    successors,
)
from .invariants import STATE_INVARIANTS, TRANSITION_LEMMAS, resolve_names


class ProtocolMode(enum.Enum):
    FULL = "full"
    LOGLESS_ONLY = "logless"


@dataclass(frozen=True)
class Bounds:
    server_count: int
    max_term: int
    max_log_len: int = 0
    max_config_version: int = 1
    m_init: Optional[frozenset] = None

    def __post_init__(self):
        if self.server_count < 1:
            raise DomainError("server_count must be >= 1")
        if self.max_config_version < 1:
            raise DomainError("max_config_version must be >= 1")
        if self.max_term < 0 or self.max_log_len < 0:
            raise DomainError("bounds must be non-negative")
        if self.m_init is not None:
            m = frozenset(self.m_init)
            if not m or not m <= set(self.universe):
                raise DomainError(f"m_init must be a non-empty subset of {list(self.universe)}")
            object.__setattr__(self, "m_init", m)

    @property
    def universe(self) -> tuple:
        return server_ids(self.server_count)

    @property
    def initial_members(self) -> frozenset:
        return self.m_init if self.m_init is not None else frozenset(self.universe)

    @property
    def limits(self) -> Limits:
        return Limits(self.max_term, self.max_log_len, self.max_config_version)

    def initial_state(self) -> GlobalState:
        return initial_state(self.universe, self.initial_members)

    def to_json(self) -> dict:
        return {
            "servers": self.server_count,
            "max_term": self.max_term,
            "max_log_len": self.max_log_len,
            "max_config_version": self.max_config_version,
            "m_init": sorted(self.initial_members),
        }


# Large overnight-scale bounds, exposed as CLI presets.
PRESETS = {
    "fig2a": (ProtocolMode.FULL, Bounds(4, max_term=3, max_log_len=2, max_config_version=3)),
    "fig2b": (ProtocolMode.LOGLESS_ONLY, Bounds(5, max_term=4, max_log_len=0, max_config_version=4)),
}


def rules_for(mode: ProtocolMode, mutations=()) -> Rules:
    return Rules(logless=mode is ProtocolMode.LOGLESS_ONLY, mutations=frozenset(mutations))


@dataclass
class Trace:
    init: GlobalState
    steps: list = field(default_factory=list)
    rules: Rules = FULL

    def to_json(self) -> dict:
        out = {
            "init": codec.state_to_json(self.init),
            "steps": [codec.descriptor_to_json(d) for d in self.steps],
        }
        out.update(codec.rules_to_json(self.rules))
        return out

    @classmethod
    def from_json(cls, obj) -> "Trace":
        if not isinstance(obj, dict) or "init" not in obj or "steps" not in obj:
            raise DomainError("trace must be an object with 'init' and 'steps'")
        if not isinstance(obj["steps"], list):
            raise DomainError("'steps' must be a list")
        return cls(
            codec.state_from_json(obj["init"]),
            [codec.descriptor_from_json(d) for d in obj["steps"]],
            codec.rules_from_json(obj),
        )

    def dumps(self) -> str:
        return codec.dumps(self.to_json(), pretty=True)

    @classmethod
    def load(cls, path) -> "Trace":
        with open(path) as fh:
            try:
                obj = json.load(fh)
            except json.JSONDecodeError as exc:
                raise DomainError(f"{path}: not valid JSON ({exc})") from exc
        return cls.from_json(obj)


@dataclass
class ExplorationReport:
    mode: ProtocolMode
    bounds: Bounds
    symmetry: bool
    invariants: tuple
    distinct_states: int
    max_depth: int
    edges: int
    verdict: str  # "AllHold" | "Violation"
    per_invariant: list
    violated: Optional[str] = None
    witness: Optional[dict] = None
    counterexample: Optional[Trace] = None
    # Every stored (canonical) state; only kept when requested.
    states: Optional[frozenset] = None

    @property
    def ok(self) -> bool:
        return self.verdict == "AllHold"

    def to_json(self) -> dict:
        return {
            "mode": self.mode.value,
            "bounds": self.bounds.to_json(),
            "symmetry": self.symmetry,
            "invariants": list(self.invariants),
            "verdict": self.verdict,
            "distinct_states": self.distinct_states,
            "max_depth": self.max_depth,
            "edges": self.edges,
            "per_invariant": [{"name": n, "checked": c} for n, c in self.per_invariant],
            "violated": self.violated,
            "witness": self.witness,
            "counterexample_length": len(self.counterexample.steps) if self.counterexample else None,
        }

    def to_text(self) -> str:
        b = self.bounds
        lines = [
            f"mode={self.mode.value} servers={b.server_count} max_term={b.max_term} "
            f"max_log_len={b.max_log_len} max_config_version={b.max_config_version} "
            f"symmetry={'on' if self.symmetry else 'off'}",
            f"verdict: {self.verdict}",
            f"distinct states: {self.distinct_states}",
            f"max depth: {self.max_depth}",
            f"edges: {self.edges}",
        ]
        for name, count in self.per_invariant:
            lines.append(f"  {name}: checked {count}")
        if self.violated:
            lines.append(f"violated: {self.violated} {json.dumps(self.witness)}")
            lines.append(f"counterexample ({len(self.counterexample.steps)} steps):")
            lines.extend(f"  {k}. {d}" for k, d in enumerate(self.counterexample.steps, 1))
        return "\n".join(lines) + "\n"


# --------------------------------------------------------------------------
# Symmetry


@lru_cache(maxsize=None)
def _symmetry_group(universe: tuple, m_init: frozenset) -> tuple:
    """Relabelings of ``universe`` that fix ``m_init`` setwise."""
    group = []
    for image in permutations(universe):
        pi = dict(zip(universe, image))
        if frozenset(pi[x] for x in m_init) == m_init:
            group.append(pi)
    return tuple(group)


class _Canonicalizer:
    def __init__(self, universe: tuple, m_init: frozenset):
        self.universe = universe
        self.group = _symmetry_group(universe, m_init)
        self._bit = {sid: 1 << k for k, sid in enumerate(universe)}
        self._mask_cache: dict = {}

    def _mask(self, n: int, pi: dict, members: frozenset) -> int:
        key = (n, members)
        v = self._mask_cache.get(key)
        if v is None:
            bit = self._bit
            v = 0
            for x in members:
                v |= bit[pi[x]]
            self._mask_cache[key] = v
        return v

    def __call__(self, g: GlobalState) -> GlobalState:
        universe = self.universe
        best_key = None
        best_n = 0
        for n, pi in enumerate(self.group):
            # Server at position k of the relabeled state is the one mapped onto universe[k].
            inv = {pi[s.sid]: s for s in g.servers}
            key = tuple(
                (s.term, s.role, self._mask(n, pi, s.config.members), s.config.version, s.config.term, s.log)
                for s in (inv[sid] for sid in universe)
            )
            if best_key is None or key < best_key:
                best_key, best_n = key, n
        if best_n == 0 and all(pi_x == x for x, pi_x in self.group[0].items()):
            return g
        return relabel(g, self.group[best_n])


def relabel(g: GlobalState, pi: dict) -> GlobalState:
    """Apply a server-id permutation to every server id, member set and slot."""
    servers = []
    for s in g.servers:
        c = s.config
        servers.append(
            ServerState(pi[s.sid], s.term, s.role, Config(frozenset(pi[x] for x in c.members), c.version, c.term), s.log)
        )
    servers.sort(key=lambda s: s.sid)
    return GlobalState(tuple(servers), g.committed)


def relabel_descriptor(d: ActionDescriptor, pi: dict) -> ActionDescriptor:
    return ActionDescriptor(
        d.kind,
        pi[d.i],
        pi[d.j] if d.j is not None else None,
        frozenset(pi[x] for x in d.members) if d.members is not None else None,
    )


def canonicalize(g: GlobalState, m_init: Optional[frozenset] = None) -> GlobalState:
    """Least relabeling of ``g`` under all permutations fixing ``m_init``
    (default: all permutations).  Servers are compared by (term, role,
    member bitmask, config version, config term, log) in id order."""
    universe = g.universe
    m = frozenset(universe) if m_init is None else frozenset(m_init)
    return _canonicalizer(universe, m)(g)


@lru_cache(maxsize=16)
def _canonicalizer(universe: tuple, m_init: frozenset) -> _Canonicalizer:
    return _Canonicalizer(universe, m_init)


# --------------------------------------------------------------------------
# Exploration


class _Intern:
    """Shares equal server states between stored global states."""

    def __init__(self):
        self.table: dict = {}

    def __call__(self, g: GlobalState) -> GlobalState:
        t = self.table
        return GlobalState(tuple(t.setdefault(s, s) for s in g.servers), t.setdefault(g.committed, g.committed))


def explore(
    mode: ProtocolMode,
    bounds: Bounds,
    invariants=("all",),
    symmetry: bool = False,
    mutations=(),
    max_states: Optional[int] = None,
    keep_states: bool = False,
) -> ExplorationReport:
    """Breadth-first reachability from the initial state within ``bounds``.

    Every newly discovered state is checked against the selected state
    invariants and every traversed edge against the selected transition
    lemmas.  Stops at the first violation and returns the shortest trace to
    it.  ``max_states`` aborts with :class:`DomainError` once exceeded.
    """
    names = resolve_names(invariants)
    rules = rules_for(mode, mutations)
    state_checks = [(n, STATE_INVARIANTS[n]) for n in names if n in STATE_INVARIANTS]
    edge_checks = [(n, TRANSITION_LEMMAS[n]) for n in names if n in TRANSITION_LEMMAS]
    counts = {n: 0 for n in names}
    limits = bounds.limits
    universe = bounds.universe
    canon = _canonicalizer(universe, frozenset(universe)) if symmetry else None
    intern = _Intern()

    init = bounds.initial_state()
    if canon is not None:
        init = canon(init)
    init = intern(init)
    parent: dict = {init: None}
    depth_of = {init: 0}
    queue = deque([init])
    max_depth = 0
    edges = 0

    def violation(name, witness, state, extra_step=None):
        trace = _concrete_trace(parent, state, bounds, rules, canon, extra_step)
        return ExplorationReport(
            mode, bounds, symmetry, names, len(parent), max_depth, edges, "Violation",
            [(n, counts[n]) for n in names], name, witness, trace,
        )

    def check_state(g):
        for n, fn in state_checks:
            counts[n] += 1
            rep = fn(g)
            if not rep.holds:
                return n, rep.witnesses[0]
        return None

    bad = check_state(init)
    if bad:
        return violation(bad[0], bad[1], init)

    while queue:
        g = queue.popleft()
        d_here = depth_of[g]
        for d, nxt in successors(g, limits, rules):
            edges += 1
            for n, fn in edge_checks:
                counts[n] += 1
                rep = fn(g, nxt)
                if not rep.holds:
                    return violation(n, rep.witnesses[0], g, (d, nxt))
            key = canon(nxt) if canon is not None else nxt
            if key in parent:
                continue
            key = intern(key)
            parent[key] = g
            depth_of[key] = d_here + 1
            if d_here + 1 > max_depth:
                max_depth = d_here + 1
            bad = check_state(key)
            if bad:
                return violation(bad[0], bad[1], key)
            queue.append(key)
            if max_states is not None and len(parent) > max_states:
                raise DomainError(f"state limit {max_states} exceeded")
    return ExplorationReport(
        mode, bounds, symmetry, names, len(parent), max_depth, edges, "AllHold",
        [(n, counts[n]) for n in names], states=frozenset(parent) if keep_states else None,
    )


def _concrete_trace(parent, state, bounds, rules, canon, extra_step=None) -> Trace:
    """Rebuild a replayable trace from the initial state to ``state``
    (then one more step if ``extra_step`` is given)."""
    chain = []
    node = state
    while node is not None:
        chain.append(node)
        node = parent[node]
    chain.reverse()
    init = bounds.initial_state()
    cur = init
    steps = []
    key_of = canon if canon is not None else (lambda x: x)
    if key_of(cur) != chain[0]:
        raise AssertionError("initial state does not match the search root")
    for target in chain[1:]:
        for d, nxt in successors(cur, bounds.limits, rules):
            if key_of(nxt) == target:
                steps.append(d)
                cur = nxt
                break
        else:
            raise AssertionError("could not rebuild counterexample trace")
    if extra_step is not None:
        d, nxt = extra_step
        # The edge was found from the stored representative; map it onto the concrete state.
        if cur != chain[-1]:
            for pi in _symmetry_group(bounds.universe, frozenset(bounds.universe)):
                if relabel(chain[-1], pi) == cur:
                    d = relabel_descriptor(d, pi)
                    break
        steps.append(d)
    return Trace(init, steps, rules)


# --------------------------------------------------------------------------
# Replay and refinement


@dataclass
class ReplayResult:
    valid: bool
    final: Optional[GlobalState] = None
    step: Optional[int] = None  # 1-based index of the failing step
    reason: Optional[str] = None

    def to_json(self) -> dict:
        if self.valid:
            return {"result": "Valid", "final": codec.state_to_json(self.final)}
        return {"result": "InvalidAtStep", "step": self.step, "reason": self.reason}


def replay(trace: Trace, rules: Optional[Rules] = None) -> ReplayResult:
    rules = trace.rules if rules is None else rules
    g = trace.init
    for k, d in enumerate(trace.steps, 1):
        try:
            g = apply_action(g, d, rules)
        except GuardError as exc:
            return ReplayResult(False, None, k, exc.reason)
        except DomainError as exc:
            return ReplayResult(False, None, k, f"DomainError: {exc}")
    return ReplayResult(True, g)


def states_along(trace: Trace) -> list:
    """Initial state followed by the state after each step (trace must be valid)."""
    g = trace.init
    out = [g]
    for d in trace.steps:
        g = apply_action(g, d, trace.rules)
        out.append(g)
    return out


def project_logless(g: GlobalState) -> GlobalState:
    """Keep only term, role and config of each server."""
    return GlobalState(tuple(s._replace(log=()) for s in g.servers), frozenset())


def is_logless_initial(g: GlobalState) -> bool:
    cfgs = {s.config for s in g.servers}
    if len(cfgs) != 1:
        return False
    (c,) = cfgs
    return (
        c.version == 1
        and c.term == 0
        and bool(c.members)
        and all(s.term == 0 and s.role == SECONDARY and not s.log for s in g.servers)
        and not g.committed
    )


@dataclass
class RefinementResult:
    refines: bool
    step: Optional[int] = None  # 0 = initial state, k = k-th step (1-based)
    reason: Optional[str] = None

    def to_json(self) -> dict:
        if self.refines:
            return {"result": "Refines"}
        return {"result": "FailsAtStep", "step": self.step, "reason": self.reason}


def project_and_check_refinement(trace: Trace) -> RefinementResult:
    """Check that the logless projection of a valid full-protocol trace is a
    behavior of the logless subprotocol (log actions project to stutters)."""
    if trace.rules.logless:
        raise DomainError("refinement checking expects a full-protocol trace")
    r = replay(trace)
    if not r.valid:
        raise DomainError(f"trace is not valid: step {r.step} failed with {r.reason}")
    states = states_along(trace)
    if not is_logless_initial(project_logless(states[0])):
        return RefinementResult(False, 0, "projected initial state is not a logless initial state")
    sub = Rules(logless=True, mutations=trace.rules.mutations)
    for k, d in enumerate(trace.steps, 1):
        pre, post = project_logless(states[k - 1]), project_logless(states[k])
        if d.kind not in LOGLESS_KINDS:
            if pre != post:
                return RefinementResult(False, k, f"{d.kind} changed logless variables")
            continue
        try:
            nxt = apply_action(pre, d, sub)
        except GuardError as exc:
            return RefinementResult(False, k, f"{d} not enabled in the logless subprotocol: {exc.reason}")
        if nxt != post:
            return RefinementResult(False, k, f"{d} leads to a different logless state")
    return RefinementResult(True)


def random_trace(rng: random.Random, universe, m_init=None, length: int = 20, rules: Rules = FULL) -> Trace:
    """Random walk of at most ``length`` enabled steps from the initial state."""
    universe = tuple(universe)
    init = initial_state(universe, universe if m_init is None else m_init)
    g = init
    steps = []
    for _ in range(length):
        options = list(successors(g, None, rules))
        if not options:
            break
        d, g = options[rng.randrange(len(options))]
        steps.append(d)
    return Trace(init, steps, rules)
