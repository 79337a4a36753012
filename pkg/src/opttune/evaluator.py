"""Single-evaluation execution: spawn one solver process per (config,
instance) with an enforced wallclock cap, capture and parse its log, and
emit an append-only EvaluationRecord.

The child is never run through a shell; the argument vector is rendered
from the adapter's command template. A run that exceeds its cap is sent
SIGTERM and, after a 5 s grace period, SIGKILL. Failed evaluations carry
a PAR-10 penalized cost (10x the cap), the standard convention when a
capped run yields no usable time.
"""

from __future__ import annotations

import datetime as _dt
import json
import shlex
import subprocess
import threading
import time
from dataclasses import dataclass, field
from pathlib import Path
from typing import Optional

from .errors import AdapterError, ValidationError
from .logparse import LogRule, MetricSet, load_rules, parse_log_file
from .paramspace import ParamConfig

PARAM_STYLES = ("flag-value", "equals", "file")
PENALTY_FACTOR = 10.0
KILL_GRACE_SECONDS = 5.0


@dataclass(frozen=True)
class SolverAdapter:
    solver_id: str
    command: str  # template; must contain {problem}, may contain {params}, {seed}
    param_style: str = "flag-value"
    rules_file: Optional[Path] = None

    def __post_init__(self):
        if self.param_style not in PARAM_STYLES:
            raise AdapterError(f"adapter '{self.solver_id}': unknown param-style {self.param_style!r}")
        if "{problem}" not in self.command:
            raise AdapterError(f"adapter '{self.solver_id}': command template lacks {{problem}}")

    def load_adapter_rules(self) -> list[LogRule]:
        if self.rules_file is None:
            return []
        return load_rules(self.rules_file)


def load_adapter(adapter_file: str | Path) -> SolverAdapter:
    """Adapter file: JSON {solver-id, command, param-style, rules-file};
    relative paths resolve against the adapter file's directory."""
    path = Path(adapter_file)
    try:
        doc = json.loads(path.read_text(encoding="utf-8"))
    except OSError as e:
        raise AdapterError(f"cannot read adapter {path}: {e}") from e
    except json.JSONDecodeError as e:
        raise AdapterError(f"malformed adapter {path}: {e}") from e
    rules = doc.get("rules-file")
    rules_path = None
    if rules:
        rules_path = Path(rules)
        if not rules_path.is_absolute():
            rules_path = path.parent / rules_path
    command = doc["command"].replace("{here}", str(path.parent))
    return SolverAdapter(
        solver_id=doc.get("solver-id", path.stem),
        command=command,
        param_style=doc.get("param-style", "flag-value"),
        rules_file=rules_path,
    )


def _value_text(value) -> str:
    if isinstance(value, bool):
        return "true" if value else "false"
    return str(value)


def render_params(param_style: str, config: ParamConfig, params_file: Optional[Path] = None) -> list[str]:
    items = sorted(config.assignments.items())
    if param_style == "flag-value":
        out = []
        for name, value in items:
            out += [f"-{name}", _value_text(value)]
        return out
    if param_style == "equals":
        return [f"--{name}={_value_text(value)}" for name, value in items]
    if params_file is None:
        raise AdapterError("param-style=file requires a params file path")
    params_file.write_text(
        "".join(f"{name} {_value_text(value)}\n" for name, value in items), encoding="utf-8"
    )
    return ["--params-file", str(params_file)]


def render_args(
    adapter: SolverAdapter,
    config: ParamConfig,
    instance: str | Path,
    seed: int = 0,
    params_file: Optional[Path] = None,
) -> list[str]:
    """Deterministic, shell-safe argument vector from the command template.

    {params} expands in place to the rendered parameter arguments; when the
    template omits it, they are appended before {problem}'s position only if
    the style produced any. Unknown {placeholders} are an error.
    """
    tokens = shlex.split(adapter.command)
    rendered = render_params(adapter.param_style, config, params_file)
    out: list[str] = []
    saw_params = False
    for tok in tokens:
        if tok == "{params}":
            out.extend(rendered)
            saw_params = True
        elif tok == "{problem}":
            out.append(str(instance))
        elif tok == "{seed}":
            out.append(str(seed))
        else:
            if "{" in tok and "}" in tok:
                known = tok.replace("{problem}", str(instance)).replace("{seed}", str(seed))
                if "{" in known and "}" in known:
                    raise AdapterError(f"adapter '{adapter.solver_id}': unresolved placeholder in {tok!r}")
                out.append(known)
            else:
                out.append(tok)
    if not saw_params and rendered:
        # insert before the problem path, the common CLI convention
        idx = out.index(str(instance))
        out[idx:idx] = rendered
    return out


@dataclass
class EvaluationRecord:
    config_id: str
    instance: str
    seed: int
    status: str  # ok | timeout | crash | parse-error
    wallclock_seconds: float
    cap_seconds: float
    exit_code: Optional[int]
    metrics: MetricSet
    started_at: str
    finished_at: str
    worker_id: str
    penalized_cost: float
    log_path: str = ""
    assignments: dict = field(default_factory=dict)

    def to_json(self) -> dict:
        return {
            "config_id": self.config_id,
            "instance": self.instance,
            "seed": self.seed,
            "status": self.status,
            "wallclock_seconds": self.wallclock_seconds,
            "cap_seconds": self.cap_seconds,
            "exit_code": self.exit_code,
            "metrics": self.metrics.to_json(),
            "started_at": self.started_at,
            "finished_at": self.finished_at,
            "worker_id": self.worker_id,
            "penalized_cost": self.penalized_cost,
            "log_path": self.log_path,
            "assignments": self.assignments,
        }

    @classmethod
    def from_json(cls, doc: dict) -> "EvaluationRecord":
        return cls(
            config_id=doc["config_id"],
            instance=doc["instance"],
            seed=int(doc["seed"]),
            status=doc["status"],
            wallclock_seconds=float(doc["wallclock_seconds"]),
            cap_seconds=float(doc["cap_seconds"]),
            exit_code=doc.get("exit_code"),
            metrics=MetricSet.from_json(doc.get("metrics", {})),
            started_at=doc.get("started_at", ""),
            finished_at=doc.get("finished_at", ""),
            worker_id=doc.get("worker_id", ""),
            penalized_cost=float(doc["penalized_cost"]),
            log_path=doc.get("log_path", ""),
            assignments=dict(doc.get("assignments", {})),
        )


def _now_iso() -> str:
    return _dt.datetime.now(_dt.timezone.utc).isoformat(timespec="milliseconds")


def run_once(
    adapter: SolverAdapter,
    config: ParamConfig,
    instance: str | Path,
    cap_seconds: float,
    seed: int = 0,
    out_dir: str | Path | None = None,
    rules: Optional[list[LogRule]] = None,
    proc_sink: Optional[set] = None,
) -> EvaluationRecord:
    """Run one solver process, enforce the cap, parse the captured log.

    `proc_sink`, when given, receives the live Popen handle so a scheduler
    can terminate in-flight work on cancel-all.
    """
    if cap_seconds <= 0:
        raise ValidationError("cap-seconds must be > 0")
    if rules is None:
        rules = adapter.load_adapter_rules()
    out = Path(out_dir) if out_dir is not None else Path.cwd()
    out.mkdir(parents=True, exist_ok=True)
    log_path = out / f"{seed}.log"
    params_file = out / f"{seed}.params" if adapter.param_style == "file" else None

    started_at = _now_iso()
    worker = threading.current_thread().name
    status = "ok"
    exit_code: Optional[int] = None
    t0 = time.monotonic()
    try:
        argv = render_args(adapter, config, instance, seed=seed, params_file=params_file)
        with open(log_path, "wb") as log_fh:
            proc = subprocess.Popen(argv, stdout=log_fh, stderr=subprocess.STDOUT,
                                    stdin=subprocess.DEVNULL)
            if proc_sink is not None:
                proc_sink.add(proc)
            try:
                exit_code = proc.wait(timeout=cap_seconds)
            except subprocess.TimeoutExpired:
                status = "timeout"
                proc.terminate()
                try:
                    proc.wait(timeout=KILL_GRACE_SECONDS)
                except subprocess.TimeoutExpired:
                    proc.kill()
                    proc.wait()
            finally:
                if proc_sink is not None:
                    proc_sink.discard(proc)
    except (OSError, AdapterError) as e:
        status = "crash"
        log_path.write_bytes(f"spawn failure: {e}\n".encode())
    wallclock = time.monotonic() - t0
    finished_at = _now_iso()

    if status == "ok" and exit_code is not None and exit_code != 0:
        status = "crash"
    metrics = parse_log_file(rules, log_path) if log_path.exists() else MetricSet()
    if status == "ok" and not metrics.complete:
        status = "parse-error"

    penalized = wallclock if status == "ok" else PENALTY_FACTOR * cap_seconds
    record = EvaluationRecord(
        config_id=config.config_id,
        instance=str(instance),
        seed=seed,
        status=status,
        wallclock_seconds=wallclock,
        cap_seconds=cap_seconds,
        exit_code=exit_code,
        metrics=metrics,
        started_at=started_at,
        finished_at=finished_at,
        worker_id=worker,
        penalized_cost=penalized,
        log_path=str(log_path),
        assignments=dict(config.assignments),
    )
    record_path = out / f"{seed}.record"
    record_path.write_text(json.dumps(record.to_json(), sort_keys=True) + "\n", encoding="utf-8")
    return record
