"""opttune command line: create and manage tuning tasks, run the model
sanitizer, serve the HTTP API.

Exit codes: 0 success, 1 domain error (validation, unknown task, parse
failure), 2 usage error. Every informational command takes --format json
for machine consumption.
"""

from __future__ import annotations

import argparse
import json
import signal
import socket
import sys
import time
from pathlib import Path

from .errors import OptTuneError, SanitizerError, ValidationError
from .sanitizer import FORMATS, NameMap, anonymize, deanonymize, verify_map
from .taskman import TaskManager, default_home


def _manager(args) -> TaskManager:
    return TaskManager(Path(args.home) if args.home else None)


def _print(doc, as_json: bool, render=None) -> None:
    if as_json:
        print(json.dumps(doc, indent=2, sort_keys=True, default=str))
    elif render:
        render(doc)
    else:
        print(doc)


def cmd_create_task(args) -> int:
    mgr = _manager(args)
    config: dict = {}
    if args.config:
        try:
            config = json.loads(Path(args.config).read_text(encoding="utf-8"))
        except (OSError, json.JSONDecodeError) as e:
            print(f"error: cannot read task config {args.config}: {e}", file=sys.stderr)
            return 1
    config["solver"] = args.solver
    if args.problem:
        existing = config.get("problems") or []
        if isinstance(existing, str):
            existing = [existing]
        config["problems"] = list(existing) + list(args.problem)
    if args.name:
        config["name"] = args.name
    overrides = {
        "max-tuning-time": args.max_tuning_time,
        "max-eval-time": args.max_eval_time,
        "max-distinct-para-combos": args.max_distinct_para_combos,
        "parameters": args.parameters,
        "strategy": args.strategy,
        "seed": args.seed,
        "tuning-objective": args.tuning_objective,
        "concurrency": args.concurrency,
        "runs-per-config": args.runs_per_config,
    }
    for key, value in overrides.items():
        if value is not None:
            config[key] = value
    task_id = mgr.create_task(config)
    print(task_id)
    if args.run:
        state = mgr.run_task(task_id)
        if state.status != "finished":
            print(f"task {task_id} {state.status}: {state.error}", file=sys.stderr)
            return 1
    return 0


def cmd_list(args) -> int:
    mgr = _manager(args)
    tasks = mgr.list_tasks(args.state)

    def render(rows):
        if not rows:
            print("no tasks")
            return
        width = max(len(r["task_id"]) for r in rows)
        for r in rows:
            print(f"{r['task_id']:<{width}}  {r['status']:<9} "
                  f"{r['progress']:>6.1%}  {r['termination_reason'] or '-'}")

    _print(tasks, args.format == "json", render)
    return 0


def cmd_status(args) -> int:
    mgr = _manager(args)
    if not args.follow:
        doc = mgr.task_status(args.task_id)
        _print(doc, args.format == "json",
               lambda d: print(f"{d['task_id']}: {d['state']} progress={d['progress']:.1%} "
                               f"{d['termination_reason'] or ''}".rstrip()))
        return 0
    cursor = 0
    while True:
        lines, cursor = mgr.output_lines(args.task_id, cursor)
        for line in lines:
            print(line)
        doc = mgr.task_status(args.task_id)
        if doc["state"] not in ("created", "running"):
            print(f"-- task {doc['state']}"
                  + (f" ({doc['termination_reason']})" if doc["termination_reason"] else ""))
            return 0
        time.sleep(0.5)


def cmd_stop(args) -> int:
    state = _manager(args).stop_task(args.task_id)
    print(f"{args.task_id}: {state.status}")
    return 0


def cmd_delete(args) -> int:
    _manager(args).delete_task(args.task_id)
    print(f"{args.task_id}: deleted")
    return 0


def cmd_report(args) -> int:
    mgr = _manager(args)
    report = mgr.report(args.task_id)
    doc = report.to_dict()

    def render(d):
        print(f"task {d['task_id']}: speed-up {d['speedup']:.2f}x "
              f"(default {d['baseline_cost']:.4g} -> tuned {d['best_cost']:.4g})")
        print(f"best config {d['best_config_id']}: "
              + " ".join(f"{k}={v}" for k, v in sorted(d["best_config"].items())))
        print(f"{d['evaluations']} evaluations over {d['distinct_configs']} distinct configs; "
              f"stopped by {d['termination_reason'] or 'n/a'}")
        for row in d["per_instance"]:
            ratio = row.get("ratio")
            print(f"  {row['instance']}: default {row['default']:.4g} tuned "
                  f"{row['tuned']:.4g}" + (f" ({ratio:.2f}x)" if ratio else ""))

    _print(doc, args.format == "json", render)
    return 0


def cmd_sanitize(args) -> int:
    path = Path(args.file)
    fmt = args.format
    if fmt is None:
        ext = path.suffix.lower().lstrip(".")
        if ext not in FORMATS:
            print(f"error: cannot infer format of '{path.name}'; "
                  f"pass --format with one of: {', '.join(FORMATS)}", file=sys.stderr)
            return 2
        fmt = ext
    out, _ = anonymize(path, fmt, output_path=args.output)
    print(out)
    print(path.with_name(path.name + ".namemap"))
    return 0


def cmd_desanitize(args) -> int:
    name_map = NameMap.load(args.map)
    if args.model:
        if not verify_map(name_map, args.model):
            print(f"error: name map {args.map} does not match {args.model} "
                  "(digest or names differ)", file=sys.stderr)
            return 1
    out = deanonymize(args.file, name_map, output_path=args.output)
    print(out)
    return 0


def cmd_serve(args) -> int:
    import uvicorn

    from .httpapi import create_app

    host, _, port_text = args.addr.rpartition(":")
    host = host or "127.0.0.1"
    try:
        port = int(port_text)
    except ValueError:
        print(f"error: bad --addr {args.addr!r}, expected host:port", file=sys.stderr)
        return 2
    probe = socket.socket()
    try:
        probe.bind((host, port))
    except OSError as e:
        print(f"error: cannot bind {host}:{port}: {e}", file=sys.stderr)
        return 1
    finally:
        probe.close()

    mgr = _manager(args)
    webui = Path(args.webui) if args.webui else None
    app = create_app(mgr, webui_dir=webui)
    server = uvicorn.Server(uvicorn.Config(app, host=host, port=port, log_level="warning"))

    def handle_sigint(_sig, _frame):
        mgr.stop_all_running()
        server.should_exit = True

    signal.signal(signal.SIGINT, handle_sigint)
    signal.signal(signal.SIGTERM, handle_sigint)
    print(f"serving on http://{host}:{port} (task home: {mgr.home})")
    server.run()
    mgr.stop_all_running()
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="opttune",
                                     description="automatic solver hyperparameter tuning")
    parser.add_argument("--home", help="task home directory (default: $OPTTUNE_HOME)")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("create-task", help="create (and optionally run) a tuning task")
    p.add_argument("--solver", required=True, help="registered solver adapter id")
    p.add_argument("--problem", action="append", default=[], help="problem file (repeatable)")
    p.add_argument("--config", help="task-config JSON file")
    p.add_argument("--name", help="display name for the task")
    p.add_argument("--max-tuning-time", type=int)
    p.add_argument("--max-eval-time", type=int)
    p.add_argument("--max-distinct-para-combos", type=int)
    p.add_argument("--parameters", help="comma-separated parameter names to tune")
    p.add_argument("--strategy", choices=["random", "grid", "surrogate"])
    p.add_argument("--seed", type=int)
    p.add_argument("--tuning-objective")
    p.add_argument("--concurrency", type=int)
    p.add_argument("--runs-per-config", type=int)
    p.add_argument("--run", action="store_true", help="run the task immediately")
    p.set_defaults(func=cmd_create_task)

    p = sub.add_parser("list", help="list tasks")
    p.add_argument("--state", choices=["active", "deleted", "all"], default="active")
    p.add_argument("--format", choices=["table", "json"], default="table")
    p.set_defaults(func=cmd_list)

    p = sub.add_parser("status", help="show task status")
    p.add_argument("task_id")
    p.add_argument("--follow", action="store_true", help="stream live output")
    p.add_argument("--format", choices=["table", "json"], default="table")
    p.set_defaults(func=cmd_status)

    p = sub.add_parser("stop", help="stop a running task")
    p.add_argument("task_id")
    p.set_defaults(func=cmd_stop)

    p = sub.add_parser("delete", help="delete a task (keeps config and report)")
    p.add_argument("task_id")
    p.set_defaults(func=cmd_delete)

    p = sub.add_parser("report", help="print the tuning report")
    p.add_argument("task_id")
    p.add_argument("--format", choices=["table", "json"], default="table")
    p.set_defaults(func=cmd_report)

    p = sub.add_parser("sanitize", help="anonymize a model file")
    p.add_argument("file")
    p.add_argument("--format", choices=list(FORMATS))
    p.add_argument("-o", "--output")
    p.set_defaults(func=cmd_sanitize)

    p = sub.add_parser("desanitize", help="restore identifiers in a result file")
    p.add_argument("file")
    p.add_argument("--map", required=True, help="namemap file written by sanitize")
    p.add_argument("--model", help="original model file, to verify the map against")
    p.add_argument("-o", "--output")
    p.set_defaults(func=cmd_desanitize)

    p = sub.add_parser("serve", help="serve the HTTP task API (and web panel)")
    p.add_argument("--addr", default="127.0.0.1:8817", help="host:port to bind")
    p.add_argument("--webui", help="directory of built web panel assets")
    p.set_defaults(func=cmd_serve)

    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except SanitizerError as e:
        print(f"error: {e}", file=sys.stderr)
        return 1
    except ValidationError as e:
        print(f"error: {e}", file=sys.stderr)
        return 1
    except OptTuneError as e:
        print(f"error: {e}", file=sys.stderr)
        return 1
    except KeyboardInterrupt:
        return 130


if __name__ == "__main__":
    sys.exit(main())
