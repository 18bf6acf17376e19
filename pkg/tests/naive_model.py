"""Independent reference model used as a test oracle.

Written directly from the protocol rules with plain tuples and brute-force
subset enumeration; it shares no code with the package.  A state is

    (servers, committed)

where ``servers`` is a tuple of ``(sid, term, role, members, version,
config_term, log)`` sorted by id (``members`` a sorted tuple) and
``committed`` a sorted tuple of ``(index, term)`` pairs.
"""

from itertools import combinations

P, S = "Primary", "Secondary"


def subsets(xs):
    xs = sorted(xs)
    for k in range(len(xs) + 1):
        for c in combinations(xs, k):
            yield c


def quorums(members):
    return [q for q in subsets(members) if 2 * len(q) > len(members)]


def overlap(m1, m2):
    return all(set(a) & set(b) for a in quorums(m1) for b in quorums(m2))


def newer(a, b):
    # a, b are (version, term)
    return a[1] > b[1] or (a[1] == b[1] and a[0] > b[0])


def last_term(log):
    return log[-1] if log else -1


def init(universe, members):
    m = tuple(sorted(members))
    return (tuple((sid, 0, S, m, 1, 0, ()) for sid in sorted(universe)), ())


def _get(servers, sid):
    return next(s for s in servers if s[0] == sid)


def _put(servers, new):
    return tuple(new if s[0] == new[0] else s for s in servers)


def successors(state, logless=False):
    servers, committed = state
    ids = [s[0] for s in servers]
    out = []
    # Reconfig
    for s in servers:
        sid, term, role, m, v, t, log = s
        if role != P:
            continue
        if not any(all((_get(servers, n)[4], _get(servers, n)[5]) == (v, t) for n in q) for q in quorums(m)):
            continue
        if not any(all(_get(servers, n)[1] == term for n in q) for q in quorums(m)):
            continue
        if not logless:
            at_term = [c for c in committed if c[1] == term]
            p1a = (not committed) or bool(at_term)
            p1b = any(
                all(
                    all(
                        len(_get(servers, n)[6]) >= idx
                        and _get(servers, n)[6][idx - 1] == ct
                        and _get(servers, n)[1] == ct
                        for (idx, ct) in at_term
                    )
                    for n in q
                )
                for q in quorums(m)
            )
            if not (p1a and p1b):
                continue
        for m_new in subsets(ids):
            if m_new and overlap(m, m_new):
                out.append((_put(servers, (sid, term, role, m_new, v + 1, t, log)), committed))
    # SendConfig
    for a in servers:
        for b in servers:
            if a[0] != b[0] and b[2] == S and newer((a[4], a[5]), (b[4], b[5])):
                out.append((_put(servers, (b[0], b[1], b[2], a[3], a[4], a[5], b[6])), committed))
    # BecomeLeader
    for s in servers:
        sid, term, role, m, v, t, log = s
        for q in quorums(m):
            if sid not in q:
                continue
            voters = [_get(servers, n) for n in q]
            if any(newer((x[4], x[5]), (v, t)) for x in voters):
                continue
            if not all(term + 1 > x[1] for x in voters):
                continue
            if not logless and not all(
                last_term(log) > last_term(x[6]) or (last_term(log) == last_term(x[6]) and len(log) >= len(x[6]))
                for x in voters
            ):
                continue
            new = []
            for x in servers:
                if x[0] == sid:
                    x = (sid, term + 1, P, m, v, term + 1, log)
                elif x[0] in q:
                    x = (x[0], term + 1, S) + x[3:]
                new.append(x)
            out.append((tuple(new), committed))
    # UpdateTerms
    for a in servers:
        for b in servers:
            if a[1] > b[1]:
                out.append((_put(servers, (b[0], a[1], S) + b[3:]), committed))
    if logless:
        return out
    # ClientRequest
    for s in servers:
        if s[2] == P:
            out.append((_put(servers, s[:6] + (s[6] + (s[1],),)), committed))
    # GetEntries
    for a in servers:
        for b in servers:
            if a[0] == b[0] or a[2] != S:
                continue
            la, lb = a[6], b[6]
            if len(lb) > len(la) and (not la or la[-1] == lb[len(la) - 1]):
                out.append((_put(servers, a[:6] + (la + (lb[len(la)],),)), committed))
    # RollbackEntries
    for a in servers:
        for b in servers:
            if a[0] == b[0] or a[2] != S:
                continue
            la, lb = a[6], b[6]
            if last_term(la) < last_term(lb) and not (len(la) <= len(lb) and lb[: len(la)] == la):
                out.append((_put(servers, a[:6] + (la[:-1],),), committed))
    # CommitEntry
    for s in servers:
        sid, term, role, m, v, t, log = s
        if role != P:
            continue
        for q in quorums(m):
            ind = len(log)
            if ind and all(
                len(_get(servers, n)[6]) >= ind and _get(servers, n)[6][ind - 1] == term and _get(servers, n)[1] == term
                for n in q
            ):
                out.append((servers, tuple(sorted(set(committed) | {(ind, term)}))))
    return out


def within(state, max_term, max_log_len, max_version):
    return all(s[1] <= max_term and len(s[6]) <= max_log_len and s[4] <= max_version for s in state[0])


def enumerate_reachable(universe, max_term, max_log_len, max_version, logless=False, members=None):
    """Depth-first recursive closure of the successor relation from the
    initial state, discarding out-of-bounds successors."""
    start = init(universe, universe if members is None else members)
    seen = {start}

    def visit(state):
        for nxt in successors(state, logless):
            if nxt not in seen and within(nxt, max_term, max_log_len, max_version):
                seen.add(nxt)
                visit(nxt)

    visit(start)
    return seen


def from_global(g):
    """Convert a package GlobalState into this module's tuple form."""
    servers = tuple(
        (s.sid, s.term, s.role, tuple(sorted(s.config.members)), s.config.version, s.config.term, tuple(s.log))
        for s in g.servers
    )
    return (servers, tuple(sorted(g.committed)))
