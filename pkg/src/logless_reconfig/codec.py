"""JSON encoding of states, action descriptors and traces.

Field order is fixed so that identical values always serialize to identical
bytes:

* state: ``{"servers": [...], "committed": [[index, term], ...]}``; each
  server is ``{"id", "term", "role", "config": {"members", "version",
  "term"}, "log"}``; members and committed entries are sorted.
* descriptor: ``{"kind": ..., "args": {...}}`` with args ``i`` and then one
  of ``j`` / ``m_new`` (Reconfig) / ``q`` (BecomeLeader, CommitEntry).
* trace: ``{"init": state, "steps": [descriptor, ...], "mode": ...,
  "mutations": [...]}``; ``mode`` and ``mutations`` are optional on input.
"""

from __future__ import annotations

import json
from typing import Any

from .core import (
    ACTION_KINDS,
    BECOME_LEADER,
    CLIENT_REQUEST,
    COMMIT_ENTRY,
    RECONFIG,
    ActionDescriptor,
    Config,
    DomainError,
    GlobalState,
    Rules,
    ServerState,
    validate_state,
)

_MEMBER_ARG = {RECONFIG: "m_new", BECOME_LEADER: "q", COMMIT_ENTRY: "q"}


def state_to_json(g: GlobalState) -> dict:
    return {
        "servers": [
            {
                "id": s.sid,
                "term": s.term,
                "role": s.role,
                "config": {
                    "members": sorted(s.config.members),
                    "version": s.config.version,
                    "term": s.config.term,
                },
                "log": list(s.log),
            }
            for s in g.servers
        ],
        "committed": [list(c) for c in sorted(g.committed)],
    }


def _int(v, what):
    if isinstance(v, bool) or not isinstance(v, int):
        raise DomainError(f"{what} must be an integer, got {v!r}")
    return v


def state_from_json(obj: Any) -> GlobalState:
    try:
        servers = []
        for s in obj["servers"]:
            c = s["config"]
            servers.append(
                ServerState(
                    str(s["id"]),
                    _int(s["term"], "term"),
                    s["role"],
                    Config(frozenset(map(str, c["members"])), _int(c["version"], "version"), _int(c["term"], "config term")),
                    tuple(_int(t, "log entry") for t in s.get("log", [])),
                )
            )
        servers.sort(key=lambda s: s.sid)
        committed = frozenset((_int(i, "index"), _int(t, "term")) for i, t in obj.get("committed", []))
    except (KeyError, TypeError, ValueError) as exc:
        if isinstance(exc, DomainError):
            raise
        raise DomainError(f"malformed state: {exc!r}") from exc
    return validate_state(GlobalState(tuple(servers), committed))


def descriptor_to_json(d: ActionDescriptor) -> dict:
    args: dict = {"i": d.i}
    if d.kind in _MEMBER_ARG:
        args[_MEMBER_ARG[d.kind]] = sorted(d.members)
    elif d.kind != CLIENT_REQUEST:
        args["j"] = d.j
    return {"kind": d.kind, "args": args}


def descriptor_from_json(obj: Any) -> ActionDescriptor:
    try:
        kind = obj["kind"]
        args = obj["args"]
        if kind not in ACTION_KINDS:
            raise DomainError(f"unknown action kind {kind!r}")
        i = str(args["i"])
        if kind in _MEMBER_ARG:
            return ActionDescriptor(kind, i, members=frozenset(map(str, args[_MEMBER_ARG[kind]])))
        if kind == CLIENT_REQUEST:
            return ActionDescriptor(kind, i)
        return ActionDescriptor(kind, i, str(args["j"]))
    except (KeyError, TypeError) as exc:
        raise DomainError(f"malformed action descriptor: {exc!r}") from exc


def rules_to_json(rules: Rules) -> dict:
    return {"mode": "logless" if rules.logless else "full", "mutations": sorted(rules.mutations)}


def rules_from_json(obj: dict) -> Rules:
    mode = obj.get("mode", "full")
    if mode not in ("full", "logless"):
        raise DomainError(f"unknown mode {mode!r}")
    return Rules(logless=mode == "logless", mutations=frozenset(obj.get("mutations", [])))


def dumps(obj: Any, pretty: bool = False) -> str:
    if pretty:
        return json.dumps(obj, indent=2) + "\n"
    return json.dumps(obj, separators=(",", ":")) + "\n"
