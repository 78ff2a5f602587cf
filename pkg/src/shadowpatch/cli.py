"""Command-line entry point.

Two families of subcommands:

  shadowpatch run --app shop [--config FILE] [--replay FILE]
      Boot the full topology (production app server, shadower proxy,
      patch + regression services, control API) and serve until
      SIGINT/SIGTERM. With --replay, issue a recorded workload through
      the shadower and exit.

  shadowpatch experiment rq1|rq2|rq3|rq4 [options] [--out FILE]
      Run one of the four experiment protocols and print an aligned
      text report; --out additionally writes the full JSON document.

Exit codes: 0 success, 2 experiment assertion failed, 3 environment
error (bad config, unknown profile/scenario, port in use).
"""

from __future__ import annotations

import argparse
import errno
import json
import signal
import sys
import threading
import time
from dataclasses import dataclass

from . import appsim, harness
from .control_api import ControlApi, serve_control_api
from .events import EventLog
from .harness import BadConfig
from .httpserve import HttpClient, ProxyUpstream, serve_app, serve_shadower
from .patch_service import PatchService, ReExecutionMismatch
from .regression_service import RegressionService
from .runtime import ProgramRef
from .shadower import Shadower


class PortInUse(OSError):
    pass


# --- run ----------------------------------------------------------------------


@dataclass
class RunConfig:
    """Key/value config for `run` (format: docs/formats.md)."""

    app_listen: str = "127.0.0.1:0"
    listen: str = "127.0.0.1:8470"        # shadower proxy
    control_listen: str = "127.0.0.1:8471"
    oracle: str = "content"
    patch_queue_capacity: int = 256
    regression_queue_capacity: int = 1024

    @classmethod
    def load(cls, path) -> "RunConfig":
        return cls.parse(open(path, encoding="utf-8").read())

    @classmethod
    def parse(cls, text: str) -> "RunConfig":
        cfg = cls()
        for lineno, line in enumerate(text.splitlines(), 1):
            line = line.strip()
            if not line or line.startswith("#"):
                continue
            if "=" not in line:
                raise BadConfig(f"config line {lineno}: expected key=value")
            key, value = (part.strip() for part in line.split("=", 1))
            key = key.replace("-", "_")
            if not hasattr(cfg, key):
                raise BadConfig(f"config line {lineno}: unknown key {key!r}")
            if key.endswith("capacity"):
                value = int(value)
            setattr(cfg, key, value)
        return cfg


def _host_port(spec: str):
    host, _, port = spec.rpartition(":")
    return host or "127.0.0.1", int(port)


class RunTopology:
    """Everything `run` boots, with ordered shutdown."""

    def __init__(self, profile: str, cfg: RunConfig, fault: str = None):
        if profile not in appsim.PROFILES:
            raise BadConfig(f"unknown app profile {profile!r}")
        if cfg.oracle not in ("status", "content",
                              "method-coverage", "block-coverage"):
            raise BadConfig(f"unknown oracle {cfg.oracle!r}")
        program = appsim.load_shop_program()
        if fault is not None:
            # demo mode: boot with a known bug so there is traffic to fix
            try:
                program, _ = appsim.scripted_fault(program, fault)
            except LookupError as exc:
                raise BadConfig(str(exc)) from exc
        self.log = EventLog()
        self.program_ref = ProgramRef(program)
        self.store = appsim.initial_store()
        self.patch_service = PatchService(self.program_ref, self.store,
                                          self.log)
        self.regression = RegressionService(
            self.program_ref, self.store, oracle=cfg.oracle, log=self.log,
            failure_count_of=self.patch_service.failure_count_of)
        self.patch_service.sink = self.regression.push_valid

        self.app = self._bind(serve_app, self.program_ref, self.store,
                              spec=cfg.app_listen)
        self.shadower = Shadower(
            ProxyUpstream("127.0.0.1", self.app.port),
            self._patch_sink, self._regression_sink, log=self.log,
            patch_capacity=cfg.patch_queue_capacity,
            regression_capacity=cfg.regression_queue_capacity)
        self.proxy = self._bind(serve_shadower, self.shadower,
                                spec=cfg.listen)
        api = ControlApi(self.patch_service, self.regression, self.log)
        self.control = self._bind(serve_control_api, api,
                                  spec=cfg.control_listen)
        self.shadower.start_workers()

    @staticmethod
    def _bind(factory, *args, spec: str):
        _, port = _host_port(spec)
        try:
            server = factory(*args, port=port)
        except OSError as exc:
            if exc.errno == errno.EADDRINUSE:
                raise PortInUse(spec) from exc
            raise
        if not getattr(server, "_thread", None):
            server.start()
        return server

    def _patch_sink(self, req, answer):
        try:
            self.patch_service.on_failing_request(req, answer.pre_state)
        except ReExecutionMismatch:
            pass  # already in the event log

    def _regression_sink(self, req, answer):
        self.regression.on_success_request(req, answer.response,
                                           answer.pre_state, answer.result)

    def stop(self):
        self.proxy.stop()
        self.shadower.stop_workers()
        self.control.stop()
        self.app.stop()


def cmd_run(args) -> int:
    cfg = RunConfig.load(args.config) if args.config else RunConfig()
    topo = RunTopology(args.app, cfg, fault=args.seed_fault)
    print(f"app         http://127.0.0.1:{topo.app.port}")
    print(f"shadower    http://127.0.0.1:{topo.proxy.port}")
    print(f"control-api http://127.0.0.1:{topo.control.port}")
    sys.stdout.flush()
    try:
        if args.replay:
            _replay(topo, args.replay)
        else:
            _serve_until_signal()
    finally:
        topo.stop()
    if args.events_out:
        with open(args.events_out, "w", encoding="utf-8") as fh:
            fh.write(topo.log.serialize())
    return 0


def _replay(topo: RunTopology, path: str) -> None:
    workload = appsim.Workload.deserialize(
        open(path, encoding="utf-8").read())
    client = HttpClient("127.0.0.1", topo.proxy.port)
    statuses = {}
    try:
        for r in workload.all_requests():
            resp = client.call(r)
            statuses[resp.status] = statuses.get(resp.status, 0) + 1
    finally:
        client.close()
    # let the shadow queues settle before shutdown
    deadline = time.monotonic() + 10
    while time.monotonic() < deadline:
        if not any(topo.shadower.queues[t] for t in topo.shadower.TARGETS):
            break
        time.sleep(0.05)
    total = sum(statuses.values())
    print(f"replayed {total} requests: " + ", ".join(
        f"{status}x{count}" for status, count in sorted(statuses.items())))


def _serve_until_signal() -> None:
    stop = threading.Event()
    for sig in (signal.SIGINT, signal.SIGTERM):
        signal.signal(sig, lambda *_: stop.set())
    print("serving; Ctrl-C to stop")
    sys.stdout.flush()
    stop.wait()


# --- experiment reports ---------------------------------------------------------


def _table(headers, rows) -> str:
    widths = [max(len(str(h)), *(len(str(r[i])) for r in rows)) if rows
              else len(str(h)) for i, h in enumerate(headers)]
    def fmt(cells):
        return "  ".join(str(c).ljust(w) for c, w in zip(cells, widths))
    lines = [fmt(headers), fmt(["-" * w for w in widths])]
    lines += [fmt(r) for r in rows]
    return "\n".join(lines)


def _print_rq1(rep) -> None:
    rows = []
    for fault in rep["faults"]:
        for sig, by_model in fault["classification"].items():
            for model, counts in by_model.items():
                rows.append([fault["fault"], sig, model, counts["valid"],
                             counts["invalid"],
                             fault["space_sizes"][sig].get(model, 0)])
    print(_table(["fault", "signature", "model", "valid", "invalid",
                  "space"], rows))
    print(f"\nfaults: {rep['seeded_faults']}  passed: {rep['passed']}")


def _print_rq2(rep) -> None:
    oracles = ["status", "content", "method-coverage", "block-coverage"]
    rows = []
    for patch in rep["patches"]:
        cells = [patch["label"], patch["known"] or "-"]
        for oracle in oracles:
            o = patch["oracles"][oracle]
            mark = "x" if o["flagged"] else "."
            cells.append(f"{mark} {o['mean_magnitude']:.4f}")
        rows.append(cells)
    print(_table(["patch", "known"] + oracles, rows))
    print(f"\nrequests: {rep['requests']}  passed: {rep['passed']}")


def _print_rq3(rep) -> None:
    print(f"requests        {rep['requests']}")
    print(f"mean direct     {rep['mean_direct_ms']} ms")
    print(f"mean proxied    {rep['mean_proxied_ms']} ms")
    print(f"overhead        {rep['overhead_pct']}%")
    ref = rep["reference"]
    print(f"reference       {ref['mean_direct_ms']} -> "
          f"{ref['mean_proxied_ms']} ms ({ref['overhead_pct']}%), "
          "original measurement, not asserted")
    print(f"passed          {rep['passed']}")


def _print_rq4(rep) -> None:
    rows = [[r["id"], r["model"], r["strategy"], r["state"],
             r["failure_count"], r["regression_success_count"]]
            for r in rep["ranked"]]
    print(f"scenario: {rep['scenario']}  fault: {rep['fault']}")
    print(_table(["patch", "model", "strategy", "state", "failures",
                  "regressions-clean"], rows))
    print(f"\noutput-equal to human fix: "
          f"{', '.join(rep['surviving_output_equal']) or '(none)'}")
    for r in rep["ranked"]:
        if r["id"] in rep["surviving_output_equal"]:
            print(f"\n--- {r['id']} ---")
            print(r["diff"], end="")
    print(f"\npassed: {rep['passed']}")


def cmd_experiment(args) -> int:
    if args.rq == "rq1":
        rep = harness.rq1(faults=args.faults, seed=args.seed)
        _print_rq1(rep)
    elif args.rq == "rq2":
        if args.oracle != "all":
            raise BadConfig("rq2 always evaluates all four oracles")
        rep = harness.rq2(seed=args.seed)
        _print_rq2(rep)
    elif args.rq == "rq3":
        rep = harness.rq3(requests=args.requests)
        _print_rq3(rep)
    else:
        rep = harness.rq4(scenario=args.scenario, seed=args.seed)
        _print_rq4(rep)
    if args.out:
        with open(args.out, "w", encoding="utf-8") as fh:
            json.dump(rep, fh, sort_keys=True, indent=2)
            fh.write("\n")
    return 0 if rep["passed"] else 2


# --- entry --------------------------------------------------------------------


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="shadowpatch",
        description="shadow-traffic patch generation and validation")
    sub = parser.add_subparsers(dest="command", required=True)

    run = sub.add_parser("run", help="boot the full serving topology")
    run.add_argument("--app", default="shop", help="application profile")
    run.add_argument("--config", help="key=value config file")
    run.add_argument("--replay", help="workload file to replay, then exit")
    run.add_argument("--seed-fault", choices=("shipping", "admin-email"),
                     help="boot with a scripted bug (demo mode)")
    run.add_argument("--events-out", help="write the event log on shutdown")
    run.set_defaults(fn=cmd_run)

    exp = sub.add_parser("experiment", help="run an experiment protocol")
    rq = exp.add_subparsers(dest="rq", required=True)

    rq1 = rq.add_parser("rq1", help="fault seeding / patch classification")
    rq1.add_argument("--faults", type=int, default=10)
    rq1.add_argument("--seed", type=int, default=42)

    rq2 = rq.add_parser("rq2", help="oracle divergence matrix")
    rq2.add_argument("--oracle", default="all")
    rq2.add_argument("--seed", type=int, default=42)

    rq3 = rq.add_parser("rq3", help="shadower overhead")
    rq3.add_argument("--requests", type=int, default=10000)

    rq4 = rq.add_parser("rq4", help="end-to-end bug scenario")
    rq4.add_argument("--scenario", default="shipping",
                     choices=("shipping", "admin-email"))
    rq4.add_argument("--seed", type=int, default=42)

    for p in (rq1, rq2, rq3, rq4):
        p.add_argument("--out", help="also write the JSON report here")
        p.set_defaults(fn=cmd_experiment)
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.fn(args)
    except (BadConfig, PortInUse, appsim.UnknownProfile,
            FileNotFoundError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 3


if __name__ == "__main__":
    sys.exit(main())
