"""foglet command line.

Subcommands fall in three groups: `serve` runs the HTTP service over a
topology; `run` executes a scenario script against an embedded engine with
a virtual clock; the rest (`load`, `submit`, `status`, `explain`, `report`)
are thin clients of a running server or local validators.

Exit codes: 0 ok, 1 engine/document error, 2 usage error, 3 scenario
assertion failure.
"""

from __future__ import annotations

import argparse
import csv
import json
import logging
import os
import sys
import urllib.error
import urllib.request
from typing import Optional

from .config import EngineConfig, config_from_document
from .documents import DocumentError, load_scenario, load_yaml
from .engine import Engine
from .model import ReferenceError_, ValidationError
from .scenario import ScenarioError, build_engine, run_scenario
from .topology import TopologyError, load_topology

EXIT_OK = 0
EXIT_ENGINE = 1
EXIT_USAGE = 2
EXIT_ASSERT = 3

DEFAULT_SERVER = "http://127.0.0.1:8080"

log = logging.getLogger("foglet")


def _setup_logging(fmt: str) -> None:
    handler = logging.StreamHandler()
    if fmt == "json":
        class JsonFormatter(logging.Formatter):
            def format(self, record):
                return json.dumps({
                    "level": record.levelname.lower(),
                    "logger": record.name,
                    "message": record.getMessage(),
                }, sort_keys=True)

        handler.setFormatter(JsonFormatter())
    else:
        handler.setFormatter(logging.Formatter("%(levelname)s %(name)s: %(message)s"))
    logging.basicConfig(level=logging.INFO, handlers=[handler])


def _load_config(path: Optional[str]) -> EngineConfig:
    path = path or os.environ.get("FOGLET_CONFIG")
    if not path:
        return EngineConfig()
    return config_from_document(load_yaml(path), EngineConfig())


def _api(server: str, method: str, path: str, body: Optional[dict] = None) -> dict:
    url = server.rstrip("/") + path
    data = json.dumps(body).encode() if body is not None else None
    req = urllib.request.Request(url, data=data, method=method)
    if data is not None:
        req.add_header("Content-Type", "application/json")
    try:
        with urllib.request.urlopen(req, timeout=30) as resp:
            return json.loads(resp.read())
    except urllib.error.HTTPError as exc:
        try:
            detail = json.loads(exc.read())
        except Exception:
            detail = {"error": str(exc)}
        raise RuntimeError(f"{method} {path} -> {exc.code}: {json.dumps(detail)}")


def _print_report(report: dict, as_json: bool) -> None:
    if as_json:
        print(json.dumps(report, sort_keys=True))
        return
    print(f"report at t={report['horizon_s']:g}s")
    print("  links:")
    for link in report["links"]:
        print(
            f"    {link['link_id']}: offered={link['offered_mbps']:g} Mbit/s "
            f"reserved={link['reserved_mbps']:g} capacity={link['capacity_mbps']:g} "
            f"utilization={link['utilization']:.3f} {'up' if link['up'] else 'down'}"
        )
    print("  flows:")
    for flow in report["flows"]:
        print(
            f"    {flow['flow_id']} {flow['source']} -> {flow['sink']} "
            f"[{flow['state']}] rate={flow['rate_mbps']:g} "
            f"sourced={flow['bytes_sourced']:g}B delivered={flow['bytes_delivered']:g}B "
            f"cached={flow['bytes_cached']:g}B lost={flow['bytes_lost']:g}B"
        )
    if report.get("caches"):
        print("  caches:")
        for node, occupied in report["caches"].items():
            print(f"    {node}: occupied={occupied:g}B")


def _write_csv(path: str, reports: list) -> None:
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow([
            "kind", "t_s", "id", "offered_mbps", "utilization",
            "bytes_sourced", "bytes_delivered", "bytes_cached", "bytes_lost",
        ])
        for report in reports:
            t = report["horizon_s"]
            for link in report["links"]:
                writer.writerow([
                    "link", t, link["link_id"],
                    link["offered_mbps"], link["utilization"], "", "", "", "",
                ])
            for flow in report["flows"]:
                writer.writerow([
                    "flow", t, flow["flow_id"], "", "",
                    flow["bytes_sourced"], flow["bytes_delivered"],
                    flow["bytes_cached"], flow["bytes_lost"],
                ])


def cmd_serve(args) -> int:
    from .http_api import ApiServer

    topo = load_topology(load_yaml(args.topology))
    engine = Engine(topo, config=_load_config(args.config))
    host, _, port = args.listen.rpartition(":")
    server = ApiServer(engine, (host or "127.0.0.1", int(port)))
    log.info("serving on %s:%d (topology %s)", server.server_address[0],
             server.port, args.topology)
    try:
        server.serve_forever()
    except KeyboardInterrupt:
        server.shutdown()
    return EXIT_OK


def cmd_load(args) -> int:
    topo = load_topology(load_yaml(args.topology))
    hostable = sum(1 for n in topo.nodes.values() if n.tier.hostable)
    print(
        f"topology ok: {len(topo.nodes)} nodes ({hostable} hostable), "
        f"{len(topo.links)} links, {len(topo.endpoints)} endpoints, "
        f"regions: {', '.join(sorted(topo.regions)) or '-'}"
    )
    return EXIT_OK


def cmd_submit(args) -> int:
    doc = load_yaml(args.request)
    answer = _api(args.server, "POST", "/v1/requests", doc)
    print(json.dumps(answer, sort_keys=True))
    return EXIT_OK


def cmd_status(args) -> int:
    if args.request_id:
        payload = _api(args.server, "GET", f"/v1/requests/{args.request_id}")
    else:
        payload = {
            "requests": _api(args.server, "GET", "/v1/requests"),
            "placements": _api(args.server, "GET", "/v1/placements"),
        }
    print(json.dumps(payload, sort_keys=True, indent=2))
    return EXIT_OK


def cmd_explain(args) -> int:
    record = _api(args.server, "GET", f"/v1/requests/{args.request_id}/explain")
    print(f"request {record['request_id']} ({record['component']}): {record['outcome']}"
          + (f" on {record['node_id']}" if record.get("node_id") else ""))
    print("  filter verdicts:")
    for verdict in record["verdicts"]:
        mark = "pass" if verdict["passed"] else "FAIL"
        print(f"    {verdict['node_id']}: {mark}")
        for check in verdict["checks"]:
            cmark = "ok" if check["passed"] else "failed"
            print(f"      {check['name']}: {cmark} ({check['detail']})")
    if record["scores"]:
        print("  scores:")
        for score in sorted(record["scores"], key=lambda s: -s["score"]):
            subs = ", ".join(f"{k}={v:.4f}" for k, v in sorted(score["subscores"].items()))
            print(f"    {score['node_id']}: {score['score']:.4f} ({subs})")
    if record["reasons"]:
        print("  rejection reasons:")
        for node, check, detail in record["reasons"]:
            print(f"    {node}: [{check}] {detail}")
    return EXIT_OK


def cmd_report(args) -> int:
    report = _api(args.server, "GET", "/v1/report")
    _print_report(report, args.json)
    return EXIT_OK


def cmd_run(args) -> int:
    script = load_scenario(args.scenario)
    engine = build_engine(script)
    result = run_scenario(script, engine)
    for outcome in result.outcomes:
        line = f"{outcome['request_id']} ({outcome['component']}): {outcome['outcome']}"
        if outcome.get("node_id"):
            line += f" on {outcome['node_id']}"
        print(line)
    if args.csv:
        _write_csv(args.csv, result.reports + [result.final_report])
    _print_report(result.final_report, args.json)
    if not result.ok:
        for failure in result.failures:
            print(f"ASSERTION FAILED: {failure}", file=sys.stderr)
        return EXIT_ASSERT
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="foglet",
        description="negotiate, place, and simulate workloads on a fog topology",
    )
    parser.add_argument("--log-format", choices=("text", "json"), default="text")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("serve", help="run the HTTP service")
    p.add_argument("--topology", required=True)
    p.add_argument("--config", default=None)
    p.add_argument("--listen", default="127.0.0.1:8080")
    p.set_defaults(fn=cmd_serve)

    p = sub.add_parser("load", help="validate a topology file")
    p.add_argument("topology")
    p.set_defaults(fn=cmd_load)

    p = sub.add_parser("submit", help="submit a request document to a server")
    p.add_argument("request")
    p.add_argument("--server", default=DEFAULT_SERVER)
    p.set_defaults(fn=cmd_submit)

    p = sub.add_parser("status", help="show request/placement state")
    p.add_argument("request_id", nargs="?")
    p.add_argument("--server", default=DEFAULT_SERVER)
    p.set_defaults(fn=cmd_status)

    p = sub.add_parser("explain", help="show the stored decision for a request")
    p.add_argument("request_id")
    p.add_argument("--server", default=DEFAULT_SERVER)
    p.set_defaults(fn=cmd_explain)

    p = sub.add_parser("report", help="print the current metrics report")
    p.add_argument("--server", default=DEFAULT_SERVER)
    p.add_argument("--json", action="store_true")
    p.set_defaults(fn=cmd_report)

    p = sub.add_parser("run", help="execute a scenario script on an embedded engine")
    p.add_argument("scenario")
    p.add_argument("--csv", default=None, help="write a per-report time series CSV")
    p.add_argument("--json", action="store_true")
    p.set_defaults(fn=cmd_run)

    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    _setup_logging(args.log_format)
    try:
        return args.fn(args)
    except (DocumentError, TopologyError, ValidationError, ReferenceError_,
            ScenarioError, RuntimeError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_ENGINE


if __name__ == "__main__":
    sys.exit(main())
