"""Command-line entry point.

Exit status: 0 when everything holds (AllHold / Valid / Refines), 1 when a
violation or invalid step is found, 2 on usage or input errors.
"""

from __future__ import annotations

import argparse
import json
import os
import sys
from typing import Optional

from . import codec
from .core import MUTATIONS, DomainError
from .experiment import Backend, ExperimentParams, run_availability_experiment, write_outputs
from .explorer import (
    PRESETS,
    Bounds,
    ProtocolMode,
    Trace,
    explore,
    project_and_check_refinement,
    replay,
)
from .invariants import resolve_names
from .simnet import (
    ClientWorkload,
    FaultSchedule,
    ReconfigWorkload,
    SimConfig,
    run_simulation,
)

PROG = "logless-reconfig"

# Guard-dropping mutations are only offered when this is set (test builds).
TEST_BUILD_ENV = "LOGLESS_RECONFIG_TEST_BUILD"

PRESET_INVARIANTS = {"fig2a": "leader-completeness", "fig2b": "election-safety"}


class UsageError(Exception):
    def __init__(self, flag: str, message: str):
        super().__init__(f"{flag}: {message}")
        self.flag = flag


def is_test_build() -> bool:
    return os.environ.get(TEST_BUILD_ENV, "") not in ("", "0")


def _build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--json", action="store_true", help="print a JSON envelope {command, params, result}")

    parser = argparse.ArgumentParser(prog=PROG, description=__doc__.splitlines()[0])
    sub = parser.add_subparsers(dest="command", required=True, metavar="COMMAND")

    ex = sub.add_parser("explore", parents=[common], help="exhaustive bounded exploration")
    ex.add_argument("--servers", type=int)
    ex.add_argument("--max-term", type=int)
    ex.add_argument("--max-log-len", type=int)
    ex.add_argument("--max-config-version", type=int)
    ex.add_argument("--mode", choices=["full", "logless"])
    ex.add_argument("--symmetry", action="store_true", default=None)
    ex.add_argument("--invariants", help="comma-separated invariant names, or 'all'")
    ex.add_argument("--trace-out", metavar="FILE", help="write the counterexample trace here on violation")
    ex.add_argument("--preset", choices=sorted(PRESETS))
    ex.add_argument("--max-states", type=int, help="give up (exit 2) beyond this many distinct states")
    if is_test_build():
        ex.add_argument("--mutate", action="append", choices=MUTATIONS, help="disable one guard (test builds only)")

    rp = sub.add_parser("replay", parents=[common], help="replay a trace file")
    rp.add_argument("file", metavar="FILE")

    rf = sub.add_parser("refine", parents=[common], help="check a full-protocol trace refines the logless subprotocol")
    rf.add_argument("file", metavar="FILE")

    sm = sub.add_parser("simulate", parents=[common], help="run the discrete-event simulator")
    sm.add_argument("--seed", type=int, required=True)
    sm.add_argument("--servers", type=int, required=True)
    sm.add_argument("--duration-ms", type=int, required=True)
    sm.add_argument("--faults", metavar="FILE", help="JSON fault schedule")
    sm.add_argument("--out", metavar="FILE", help="event log (JSON lines)")
    sm.add_argument("--trace-out", metavar="FILE", help="abstract action trace")
    sm.add_argument("--write-period-ms", type=int, default=0, help="client write period; 0 disables the client")
    sm.add_argument("--write-timeout-ms", type=int, default=100)
    sm.add_argument("--reconfig-period-ms", type=int, default=0, help="random reconfiguration period; 0 disables")

    xp = sub.add_parser("experiment", parents=[common], help="availability experiment with degraded secondaries")
    xp.add_argument("--backend", required=True, choices=[b.value for b in Backend])
    xp.add_argument("--seed", type=int, required=True)
    xp.add_argument("--out", metavar="FILE.csv", required=True)
    defaults = ExperimentParams()
    for name in ("steady_ms", "degraded_ms", "detection_delay_ms", "write_timeout_ms", "total_ms", "writer_period_ms"):
        xp.add_argument("--" + name.replace("_", "-"), type=int, default=getattr(defaults, name))
    return parser


def _positive(flag: str, value: Optional[int], minimum: int) -> None:
    if value is not None and value < minimum:
        raise UsageError(flag, f"must be >= {minimum}, got {value}")


def _emit(args, params: dict, result: dict, text: str) -> None:
    if args.json:
        sys.stdout.write(codec.dumps({"command": args.command, "params": params, "result": result}, pretty=True))
    else:
        sys.stdout.write(text)


def _load_trace(path: str) -> Trace:
    try:
        trace = Trace.load(path)
    except OSError as exc:
        raise UsageError("FILE", f"cannot read {path}: {exc.strerror or exc}") from exc
    except DomainError as exc:
        raise UsageError("FILE", f"{path}: {exc}") from exc
    if trace.rules.mutations and not is_test_build():
        raise UsageError("FILE", f"{path} uses guard mutations, which only test builds accept")
    return trace


def _write(path: str, flag: str, data: str) -> None:
    try:
        with open(path, "w") as fh:
            fh.write(data)
    except OSError as exc:
        raise UsageError(flag, f"cannot write {path}: {exc.strerror or exc}") from exc


def cmd_explore(args) -> int:
    mode_name, servers, max_term = args.mode, args.servers, args.max_term
    max_log_len, mcv, symmetry, invariants = args.max_log_len, args.max_config_version, args.symmetry, args.invariants
    if args.preset:
        pmode, pb = PRESETS[args.preset]
        mode_name = mode_name or pmode.value
        servers = pb.server_count if servers is None else servers
        max_term = pb.max_term if max_term is None else max_term
        max_log_len = pb.max_log_len if max_log_len is None else max_log_len
        mcv = pb.max_config_version if mcv is None else mcv
        symmetry = True if symmetry is None else symmetry
        invariants = invariants or PRESET_INVARIANTS[args.preset]
    if servers is None:
        raise UsageError("--servers", "required (or use --preset)")
    if max_term is None:
        raise UsageError("--max-term", "required (or use --preset)")
    mode_name = mode_name or "full"
    max_log_len = 0 if max_log_len is None else max_log_len
    mcv = 1 if mcv is None else mcv
    symmetry = bool(symmetry)
    invariants = invariants or "all"
    _positive("--servers", servers, 1)
    _positive("--max-term", max_term, 0)
    _positive("--max-log-len", max_log_len, 0)
    _positive("--max-config-version", mcv, 1)
    _positive("--max-states", args.max_states, 1)
    if servers > 8:
        raise UsageError("--servers", "at most 8 servers are supported")
    try:
        names = resolve_names(invariants)
    except DomainError as exc:
        raise UsageError("--invariants", str(exc)) from exc
    if not names:
        raise UsageError("--invariants", "no invariants selected")
    mode = ProtocolMode(mode_name)
    bounds = Bounds(servers, max_term, max_log_len, mcv)
    mutations = sorted(set(getattr(args, "mutate", None) or ()))
    try:
        report = explore(mode, bounds, names, symmetry, mutations, max_states=args.max_states)
    except DomainError as exc:
        raise UsageError("--max-states", str(exc)) from exc
    result = report.to_json()
    if report.counterexample is not None:
        result["counterexample"] = report.counterexample.to_json()
        if args.trace_out:
            _write(args.trace_out, "--trace-out", report.counterexample.dumps())
    params = {
        "mode": mode.value,
        **bounds.to_json(),
        "symmetry": symmetry,
        "invariants": list(names),
        "mutations": mutations,
        "trace_out": args.trace_out,
    }
    text = report.to_text()
    if report.counterexample is not None and args.trace_out:
        text += f"counterexample written to {args.trace_out}\n"
    _emit(args, params, result, text)
    return 0 if report.ok else 1


def cmd_replay(args) -> int:
    trace = _load_trace(args.file)
    res = replay(trace)
    if res.valid:
        text = f"Valid ({len(trace.steps)} steps)\n"
    else:
        text = f"InvalidAtStep {res.step}: {trace.steps[res.step - 1]}: {res.reason}\n"
    _emit(args, {"file": args.file, **codec.rules_to_json(trace.rules)}, res.to_json(), text)
    return 0 if res.valid else 1


def cmd_refine(args) -> int:
    trace = _load_trace(args.file)
    try:
        res = project_and_check_refinement(trace)
    except DomainError as exc:
        raise UsageError("FILE", str(exc)) from exc
    text = "Refines\n" if res.refines else f"FailsAtStep {res.step}: {res.reason}\n"
    _emit(args, {"file": args.file}, res.to_json(), text)
    return 0 if res.refines else 1


def cmd_simulate(args) -> int:
    _positive("--servers", args.servers, 1)
    _positive("--duration-ms", args.duration_ms, 1)
    _positive("--write-period-ms", args.write_period_ms, 0)
    _positive("--write-timeout-ms", args.write_timeout_ms, 1)
    _positive("--reconfig-period-ms", args.reconfig_period_ms, 0)
    cfg = SimConfig.for_servers(args.seed, args.servers, args.duration_ms)
    faults = FaultSchedule()
    if args.faults:
        try:
            faults = FaultSchedule.load(args.faults)
            faults.check_universe(cfg.universe)
        except OSError as exc:
            raise UsageError("--faults", f"cannot read {args.faults}: {exc.strerror or exc}") from exc
        except DomainError as exc:
            raise UsageError("--faults", str(exc)) from exc
    client = ClientWorkload(args.write_period_ms, args.write_timeout_ms) if args.write_period_ms else None
    reconfigs = ReconfigWorkload(args.reconfig_period_ms) if args.reconfig_period_ms else None
    out = run_simulation(cfg, faults, client, reconfigs=reconfigs)
    if args.out:
        _write(args.out, "--out", out.event_lines())
    if args.trace_out:
        _write(args.trace_out, "--trace-out", out.trace.dumps())
    params = {
        **cfg.to_json(),
        "faults": faults.to_json()["faults"],
        "write_period_ms": args.write_period_ms,
        "write_timeout_ms": args.write_timeout_ms,
        "reconfig_period_ms": args.reconfig_period_ms,
    }
    text = f"verdict: {out.verdict}\n"
    if out.violation:
        text += f"violation: {json.dumps(out.violation, sort_keys=True)}\n"
    text += "".join(f"{k}: {v}\n" for k, v in out.stats.items())
    _emit(args, params, out.summary(), text)
    return 0 if out.ok else 1


def cmd_experiment(args) -> int:
    for name in ("steady_ms", "detection_delay_ms", "write_timeout_ms", "total_ms", "writer_period_ms"):
        _positive("--" + name.replace("_", "-"), getattr(args, name), 1)
    _positive("--degraded-ms", args.degraded_ms, 0)
    params = ExperimentParams(
        steady_ms=args.steady_ms,
        degraded_ms=args.degraded_ms,
        detection_delay_ms=args.detection_delay_ms,
        write_timeout_ms=args.write_timeout_ms,
        total_ms=args.total_ms,
        writer_period_ms=args.writer_period_ms,
        seed=args.seed,
    )
    result = run_availability_experiment(Backend.parse(args.backend), params)
    try:
        paths = write_outputs(result, args.out)
    except OSError as exc:
        raise UsageError("--out", f"cannot write {args.out}: {exc.strerror or exc}") from exc
    stats = result.stats_json()
    lines = [f"backend: {args.backend}", f"observer: {result.observer_verdict}"]
    for p in result.degraded():
        lines.append(
            f"degraded [{p.start_ms}, {p.end_ms}): writes={p.writes} timeouts={p.timeouts} "
            f"recovery_ms={p.recovery_ms} commits_before_end={p.commits_before_end}"
        )
    lines.append("wrote " + ", ".join(paths))
    _emit(args, {"backend": args.backend, **params.to_json(), "out": args.out}, stats, "\n".join(lines) + "\n")
    return 0 if result.observer_verdict == "AllHold" else 1


COMMANDS = {
    "explore": cmd_explore,
    "replay": cmd_replay,
    "refine": cmd_refine,
    "simulate": cmd_simulate,
    "experiment": cmd_experiment,
}


def main(argv=None) -> int:
    parser = _build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code) if isinstance(exc.code, int) else 2
    try:
        return COMMANDS[args.command](args)
    except UsageError as exc:
        sys.stderr.write(f"{PROG} {args.command}: error: {exc}\n")
        return 2
    except DomainError as exc:
        sys.stderr.write(f"{PROG} {args.command}: error: {exc}\n")
        return 2


if __name__ == "__main__":
    sys.exit(main())
