import json
import random
import sys
from itertools import permutations

import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

import naive_model
from logless_reconfig.core import (
    FULL,
    LOGLESS,
    DomainError,
    apply_action,
    become_leader,
    client_request,
    reconfig,
    send_config,
    server_ids,
)
from logless_reconfig.explorer import (
    Bounds,
    ProtocolMode,
    Trace,
    canonicalize,
    explore,
    project_and_check_refinement,
    random_trace,
    relabel,
    replay,
)
from logless_reconfig.invariants import STATE_INVARIANTS

sys.setrecursionlimit(100000)


def naive_states(mode, b):
    return naive_model.enumerate_reachable(
        b.universe, b.max_term, b.max_log_len, b.max_config_version, logless=mode is ProtocolMode.LOGLESS_ONLY
    )


@pytest.mark.parametrize(
    "mode,bounds",
    [
        (ProtocolMode.FULL, Bounds(2, 1, 0, 1)),
        (ProtocolMode.FULL, Bounds(2, 2, 1, 2)),
        (ProtocolMode.LOGLESS_ONLY, Bounds(3, 1, 0, 2)),
        (ProtocolMode.FULL, Bounds(3, 1, 1, 2)),
    ],
)
def test_state_set_equals_naive_enumeration(mode, bounds):
    rep = explore(mode, bounds, keep_states=True)
    assert rep.ok
    ours = {naive_model.from_global(g) for g in rep.states}
    assert ours == naive_states(mode, bounds)
    assert rep.distinct_states == len(ours)


@pytest.mark.parametrize(
    "mode,bounds",
    [
        (ProtocolMode.FULL, Bounds(3, 2, 1, 2)),
        (ProtocolMode.LOGLESS_ONLY, Bounds(3, 3, 0, 3)),
    ],
)
def test_symmetry_agrees_with_plain_search(mode, bounds):
    plain = explore(mode, bounds, invariants=("election-safety", "leader-completeness"))
    sym = explore(mode, bounds, invariants=("election-safety", "leader-completeness"), symmetry=True)
    assert plain.verdict == sym.verdict
    assert sym.distinct_states < plain.distinct_states
    assert sym.max_depth == plain.max_depth


@pytest.mark.parametrize("mutation,bounds", [("drop-q1", Bounds(3, 2, 0, 3)), ("drop-q2", Bounds(3, 1, 0, 3))])
def test_symmetry_agrees_on_violations(mutation, bounds):
    heads = ("election-safety", "leader-completeness", "log-matching")
    plain = explore(ProtocolMode.FULL, bounds, heads, mutations=[mutation])
    sym = explore(ProtocolMode.FULL, bounds, heads, symmetry=True, mutations=[mutation])
    assert plain.verdict == sym.verdict == "Violation"
    # Relabeling preserves depth, so shortest counterexamples have equal length.
    assert len(plain.counterexample.steps) == len(sym.counterexample.steps)


def test_symmetry_orbits_cover_plain_state_set():
    b = Bounds(3, 2, 1, 2)
    plain = explore(ProtocolMode.FULL, b, keep_states=True)
    sym = explore(ProtocolMode.FULL, b, symmetry=True, keep_states=True)
    assert {canonicalize(g) for g in plain.states} == set(sym.states)


def test_canonicalize_examples():
    init = Bounds(3, 1).initial_state()
    assert canonicalize(init) == init
    g = apply_action(init, become_leader("n1", {"n1", "n2"}))
    h = apply_action(init, become_leader("n2", {"n1", "n2"}))
    assert g != h and canonicalize(g) == canonicalize(h)


@settings(max_examples=40, deadline=None)
@given(st.integers(0, 10**6), st.integers(0, 15), st.integers(0, 23))
def test_canonicalize_idempotent_and_permutation_invariant(seed, length, perm_index):
    ids = server_ids(4)
    t = random_trace(random.Random(seed), ids, length=length)
    r = replay(t)
    assert r.valid
    g = r.final
    c = canonicalize(g)
    assert canonicalize(c) == c
    perm = list(permutations(ids))[perm_index]
    pi = dict(zip(ids, perm))
    assert canonicalize(relabel(g, pi)) == c


def test_replay_examples():
    init = Bounds(3, 1).initial_state()
    ok = replay(Trace(init, [become_leader("n1", {"n1", "n2"})]))
    assert ok.valid and ok.final.server("n1").role == "Primary"
    bad = replay(Trace(init, [reconfig("n1", {"n1", "n2", "n3", "n4"})]))
    assert (bad.valid, bad.step, bad.reason) == (False, 1, "NotPrimary")
    assert bad.to_json() == {"result": "InvalidAtStep", "step": 1, "reason": "NotPrimary"}


def test_trace_json_round_trip():
    t = random_trace(random.Random(5), server_ids(3), length=15)
    again = Trace.from_json(json.loads(t.dumps()))
    assert again.to_json() == t.to_json()
    assert list(t.to_json())[:2] == ["init", "steps"]
    with pytest.raises(DomainError):
        Trace.from_json({"steps": []})


@pytest.mark.parametrize(
    "mutation,bounds",
    [("drop-q2", Bounds(3, 1, 0, 3)), ("drop-p1", Bounds(3, 2, 1, 3)), ("drop-config-vote", Bounds(3, 2, 0, 3))],
)
def test_counterexamples_are_self_consistent(mutation, bounds):
    rep = explore(ProtocolMode.FULL, bounds, ("all",), symmetry=True, mutations=[mutation])
    assert rep.verdict == "Violation" and rep.counterexample is not None
    r = replay(rep.counterexample)
    assert r.valid
    if rep.violated in STATE_INVARIANTS:
        assert not STATE_INVARIANTS[rep.violated](r.final).holds


def test_report_verdict_matches_counterexample_presence():
    ok = explore(ProtocolMode.FULL, Bounds(2, 1, 0, 1))
    assert ok.verdict == "AllHold" and ok.counterexample is None
    bad = explore(ProtocolMode.FULL, Bounds(3, 1, 0, 3), mutations=["drop-q2"])
    assert bad.verdict == "Violation" and bad.counterexample is not None


def test_unknown_invariant_is_rejected():
    with pytest.raises(DomainError):
        explore(ProtocolMode.FULL, Bounds(2, 1), invariants=("bogus",))


def test_exploration_is_deterministic():
    a = explore(ProtocolMode.FULL, Bounds(3, 2, 1, 2), symmetry=True)
    b = explore(ProtocolMode.FULL, Bounds(3, 2, 1, 2), symmetry=True)
    assert json.dumps(a.to_json()) == json.dumps(b.to_json())
    assert a.to_text() == b.to_text()


def test_bounds_validation():
    with pytest.raises(DomainError):
        Bounds(0, 1)
    with pytest.raises(DomainError):
        Bounds(2, 1, 0, 0)
    with pytest.raises(DomainError):
        Bounds(2, 1, m_init={"n3"})


def test_refinement_examples():
    init = Bounds(3, 1).initial_state()
    worked = [
        become_leader("n1", {"n1", "n2"}),
        send_config("n1", "n3"),
        client_request("n1"),
        reconfig("n1", {"n1", "n2"}),
    ]
    assert project_and_check_refinement(Trace(init, worked)).refines
    elected = apply_action(init, become_leader("n1", {"n1", "n2"}))
    stutters = Trace(elected, [client_request("n1"), client_request("n1")])
    # Starts from a non-initial state, so step 0 fails the check.
    res = project_and_check_refinement(stutters)
    assert not res.refines and res.step == 0
    with pytest.raises(DomainError):
        project_and_check_refinement(Trace(init, [], LOGLESS))
    with pytest.raises(DomainError):
        project_and_check_refinement(Trace(init, [client_request("n1")]))


def test_random_traces_refine():
    rng = random.Random(11)
    for _ in range(200):
        t = random_trace(rng, server_ids(3), length=rng.randint(0, 20), rules=FULL)
        assert project_and_check_refinement(t).refines
