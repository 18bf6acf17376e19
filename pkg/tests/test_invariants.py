import pytest

from logless_reconfig.core import (
    PRIMARY,
    SECONDARY,
    Config,
    DomainError,
    GlobalState,
    ServerState,
    apply_send_config,
    initial_state,
    server_ids,
)
from logless_reconfig.explorer import Bounds, ProtocolMode, explore
from logless_reconfig.invariants import (
    ALL_NAMES,
    STATE_LEMMAS,
    active_config_set,
    configs_increase_monotonically,
    config_deactivation_stability,
    election_safety,
    is_deactivated,
    leader_completeness,
    log_matching,
    resolve_names,
    state_lemma_suite,
    transition_lemma_suite,
)

N3 = server_ids(3)
M3 = frozenset(N3)


def srv(sid, term=0, role=SECONDARY, members=M3, v=1, t=0, log=()):
    return ServerState(sid, term, role, Config(frozenset(members), v, t), tuple(log))


def state(*servers, committed=()):
    return GlobalState(tuple(sorted(servers, key=lambda s: s.sid)), frozenset(committed))


def test_is_deactivated_examples():
    g = initial_state(N3, M3)
    assert not is_deactivated(g, Config(M3, 1, 0))
    g2 = state(srv("n1", v=2), srv("n2", v=2), srv("n3", v=2))
    assert is_deactivated(g2, Config(M3, 1, 0))
    g3 = state(srv("n1", v=2), srv("n2"), srv("n3"))
    assert not is_deactivated(g3, Config(M3, 1, 0))


def test_active_config_set_is_recomputable():
    g = state(srv("n1", v=2), srv("n2", v=2), srv("n3"))
    assert active_config_set(g) == active_config_set(g) == frozenset({"n1", "n2"})


def test_election_safety_examples():
    assert election_safety(initial_state(N3, M3)).holds
    assert election_safety(state(srv("n1", 1, PRIMARY, t=1), srv("n2", 2, PRIMARY, t=2), srv("n3"))).holds
    r = election_safety(state(srv("n1", 1, PRIMARY, t=1), srv("n2", 1, PRIMARY, t=1), srv("n3")))
    assert not r.holds and r.witnesses


def test_leader_completeness_examples():
    assert leader_completeness(state(srv("n1", 1, PRIMARY, t=1), srv("n2"), srv("n3"))).holds
    assert not leader_completeness(state(srv("n1", 2, PRIMARY, t=2), srv("n2"), srv("n3"), committed={(1, 1)})).holds
    assert leader_completeness(state(srv("n1", 1, PRIMARY, t=1), srv("n2"), srv("n3"), committed={(1, 1)})).holds


def test_log_matching_examples():
    assert log_matching(state(srv("n1", log=[1, 2]), srv("n2", log=[1, 3]), srv("n3"))).holds
    r = log_matching(state(srv("n1", log=[1, 2]), srv("n2", log=[3, 2]), srv("n3")))
    assert not r.holds
    assert log_matching(state(srv("n1", log=[1, 1]), srv("n2"), srv("n3"))).holds


def test_report_holds_iff_no_witnesses():
    for g in (initial_state(N3, M3), state(srv("n1", 1, PRIMARY, t=0), srv("n2"), srv("n3"))):
        for r in state_lemma_suite(g):
            assert r.holds == (not r.witnesses)


def test_state_lemmas_on_initial_state():
    reports = state_lemma_suite(initial_state(N3, M3))
    assert len(reports) == 13 == len(STATE_LEMMAS)
    assert all(r.holds for r in reports)


def test_primary_term_equals_config_term_violation():
    g = state(srv("n1", 1, PRIMARY, t=0), srv("n2"), srv("n3"))
    bad = [r.name for r in state_lemma_suite(g) if not r.holds]
    assert "primary-term-equals-config-term" in bad


def test_transition_lemma_examples():
    g = state(srv("n1", 1, PRIMARY, t=1), srv("n2", 1), srv("n3"))
    post = apply_send_config(g, "n1", "n2")
    assert configs_increase_monotonically(g, post).holds
    assert all(r.holds for r in transition_lemma_suite(g, g))
    backwards = g.replace_server(g.server("n1")._replace(config=Config(M3, 1, 0)))
    assert not configs_increase_monotonically(g, backwards).holds
    assert config_deactivation_stability(g, post).holds


def test_checkers_do_not_mutate():
    g = state(srv("n1", 1, PRIMARY, t=1, log=[1]), srv("n2", 1, log=[1]), srv("n3"), committed={(1, 1)})
    snapshot = (g.servers, g.committed)
    state_lemma_suite(g)
    transition_lemma_suite(g, g)
    assert (g.servers, g.committed) == snapshot


def test_resolve_names():
    assert resolve_names("all") == ALL_NAMES
    assert resolve_names("election-safety,election-safety") == ("election-safety",)
    with pytest.raises(DomainError):
        resolve_names(["no-such-invariant"])


def test_every_invariant_holds_on_every_reachable_state():
    """All headline properties, 13 state lemmas and both transition lemmas."""
    rep = explore(ProtocolMode.FULL, Bounds(3, 2, 1, 2), invariants=("all",), keep_states=True)
    assert rep.verdict == "AllHold"
    assert rep.states and len(rep.states) == rep.distinct_states
    assert {n for n, _ in rep.per_invariant} == set(ALL_NAMES)
