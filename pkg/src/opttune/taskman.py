"""Task lifecycle: create, run, monitor, stop, delete, report.

A task owns a directory under the task home (env ``OPTTUNE_HOME``):

    tasks/<task-id>/
        task.json                normalized configuration
        state.json               lifecycle status, progress, reason
        history.jsonl            one line per completed config aggregate
        tuner.log                human-readable progress stream
        report.json              final tuning report
        recommended_params.json  best-found configuration
        problems/                uploaded instances
        evals/<config-id>/<instance>/<seed>.{log,record}

history.jsonl intentionally carries only deterministic fields (configs,
per-eval status, objective values); volatile timing lives in the per-eval
record files, so a fixed-seed single-worker task is bit-reproducible.

The run loop evaluates the default configuration first (the speed-up
baseline), then repeats propose -> schedule -> update until a stopping
condition from the task configuration is reached: distinct-combo budget,
tuning-time budget (soft for proposals, hard at +max-eval-time), space
exhaustion, or a user stop.
"""

from __future__ import annotations

import json
import math
import os
import queue
import secrets
import threading
import time
import datetime as _dt
import shutil
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path
from typing import Callable, Iterable, Optional

from .errors import TaskError, UnknownTaskError, ValidationError
from .evaluator import EvaluationRecord, SolverAdapter, load_adapter, run_once
from .logparse import load_rules
from .paramspace import ParamConfig, ParamDef, ParamSpace, default_config, load_space, make_config
from .search import CostAggregate, SearchState, next_cap, propose, update

DATA_DIR = Path(__file__).parent / "data"

GEOMEAN_SHIFT = 1.0

TASK_CONFIG_DEFAULTS = {
    "tuning-objective": "wallclock",
    "max-distinct-para-combos": 200,
    "max-tuning-time": 3600,
    "max-eval-time": 900,
    "log-level": "info",
    "verbose": 1,
    "concurrency": 4,
    "runs-per-config": 1,
    "seed": 0,
    "strategy": "surrogate",
    "capping": "adaptive",
}

_INT_KEYS = ("max-distinct-para-combos", "max-tuning-time", "max-eval-time",
             "verbose", "concurrency", "runs-per-config", "seed")
LOG_LEVELS = ("debug", "info", "warn", "error")
ACTIVE_STATES = ("created", "running", "finished", "failed")


def default_home() -> Path:
    env = os.environ.get("OPTTUNE_HOME")
    return Path(env) if env else Path.home() / ".opttune"


def _atomic_write_text(path: Path, text: str) -> None:
    """Replace the file contents atomically: concurrent readers (status
    pollers, the HTTP API) must never observe a truncated document."""
    tmp = path.with_name(f".{path.name}.tmp{os.getpid()}")
    tmp.write_text(text, encoding="utf-8")
    os.replace(tmp, path)


def _canon_key(key: str) -> str:
    return key.replace("_", "-")


@dataclass
class TaskConfig:
    solver: str
    problems: list[str]
    parameters: list[str] = field(default_factory=list)  # empty = tune all
    tuning_objective: str = "wallclock"
    max_distinct_para_combos: int = 200
    max_tuning_time: float = 3600
    max_eval_time: float = 900
    log_level: str = "info"
    verbose: int = 1
    concurrency: int = 4
    runs_per_config: int = 1
    seed: int = 0
    strategy: str = "surrogate"
    capping: str = "adaptive"
    name: str = ""

    @classmethod
    def from_dict(cls, doc: dict) -> "TaskConfig":
        """Normalize a raw task-config document. Hyphenated keys are
        canonical; underscore aliases are accepted and folded in."""
        norm: dict = {}
        for key, value in doc.items():
            norm[_canon_key(str(key))] = value
        if "problem" in norm and "problems" not in norm:
            p = norm.pop("problem")
            norm["problems"] = [p] if isinstance(p, str) else list(p)
        known = {"solver", "problems", "parameters", "name", *TASK_CONFIG_DEFAULTS}
        unknown = sorted(set(norm) - known)
        if unknown:
            raise ValidationError(f"{unknown[0]}: unknown task-config key")
        merged = {**TASK_CONFIG_DEFAULTS, **norm}
        solver = merged.get("solver")
        if not solver or not isinstance(solver, str):
            raise ValidationError("solver: required and must be a string")
        problems = merged.get("problems", [])
        if isinstance(problems, str):
            problems = [problems]
        parameters = merged.get("parameters", [])
        if isinstance(parameters, str):
            parameters = [s.strip() for s in parameters.split(",") if s.strip()]
        for key in _INT_KEYS:
            try:
                merged[key] = int(merged[key])
            except (TypeError, ValueError):
                raise ValidationError(f"{key}: expected an integer, got {merged[key]!r}")
        for key in ("max-distinct-para-combos", "max-tuning-time", "max-eval-time",
                    "concurrency", "runs-per-config"):
            if merged[key] <= 0:
                raise ValidationError(f"{key}: must be > 0")
        if merged["verbose"] not in (0, 1, 2):
            raise ValidationError("verbose: must be 0, 1 or 2")
        if merged["log-level"] not in LOG_LEVELS:
            raise ValidationError(f"log-level: must be one of {', '.join(LOG_LEVELS)}")
        if merged["strategy"] not in ("random", "grid", "surrogate"):
            raise ValidationError("strategy: must be random, grid or surrogate")
        if merged["capping"] not in ("adaptive", "off"):
            raise ValidationError("capping: must be adaptive or off")
        if not isinstance(merged["tuning-objective"], str) or not merged["tuning-objective"]:
            raise ValidationError("tuning-objective: must be a metric name or 'wallclock'")
        return cls(
            solver=solver,
            problems=[str(p) for p in problems],
            parameters=[str(p) for p in parameters],
            tuning_objective=merged["tuning-objective"],
            max_distinct_para_combos=merged["max-distinct-para-combos"],
            max_tuning_time=float(merged["max-tuning-time"]),
            max_eval_time=float(merged["max-eval-time"]),
            log_level=merged["log-level"],
            verbose=merged["verbose"],
            concurrency=merged["concurrency"],
            runs_per_config=merged["runs-per-config"],
            seed=merged["seed"],
            strategy=merged["strategy"],
            capping=merged["capping"],
            name=str(merged.get("name", "")),
        )

    def to_dict(self) -> dict:
        return {
            "solver": self.solver,
            "problems": list(self.problems),
            "parameters": list(self.parameters),
            "tuning-objective": self.tuning_objective,
            "max-distinct-para-combos": self.max_distinct_para_combos,
            "max-tuning-time": self.max_tuning_time,
            "max-eval-time": self.max_eval_time,
            "log-level": self.log_level,
            "verbose": self.verbose,
            "concurrency": self.concurrency,
            "runs-per-config": self.runs_per_config,
            "seed": self.seed,
            "strategy": self.strategy,
            "capping": self.capping,
            "name": self.name,
        }


@dataclass
class TaskState:
    status: str = "created"  # created | running | finished | failed | deleted
    progress: float = 0.0
    started_at: str = ""
    finished_at: str = ""
    termination_reason: str = ""  # combo-budget | time-budget | exhausted | user-stop | error
    error: str = ""

    def to_dict(self) -> dict:
        return {
            "status": self.status,
            "progress": self.progress,
            "started_at": self.started_at,
            "finished_at": self.finished_at,
            "termination_reason": self.termination_reason,
            "error": self.error,
        }

    @classmethod
    def from_dict(cls, doc: dict) -> "TaskState":
        return cls(
            status=doc.get("status", "created"),
            progress=float(doc.get("progress", 0.0)),
            started_at=doc.get("started_at", ""),
            finished_at=doc.get("finished_at", ""),
            termination_reason=doc.get("termination_reason", ""),
            error=doc.get("error", ""),
        )


# ---------------------------------------------------------------------------
# cost aggregation and report arithmetic


def record_objective_value(record: EvaluationRecord, objective: str) -> float:
    """Objective value of one evaluation: measured wallclock or a parsed log
    metric; failed or metric-less runs carry the PAR-10 penalty (10x cap)."""
    if record.status != "ok":
        return 10.0 * record.cap_seconds
    if objective == "wallclock":
        return record.wallclock_seconds
    value = record.metrics.values.get(objective)
    if not isinstance(value, (int, float)) or isinstance(value, bool):
        return 10.0 * record.cap_seconds
    return float(value)


def aggregate_cost(records: Iterable[EvaluationRecord], objective: str = "wallclock") -> float:
    """Shifted geometric mean (shift 1 s) over problems of the per-problem
    mean penalized cost; a single problem reduces to the plain mean."""
    by_problem: dict[str, list[float]] = {}
    for r in records:
        by_problem.setdefault(r.instance, []).append(record_objective_value(r, objective))
    if not by_problem:
        raise ValidationError("aggregate_cost: no records")
    means = [sum(v) / len(v) for v in by_problem.values()]
    return combine_problem_costs(means)


def combine_problem_costs(means: list[float]) -> float:
    if len(means) == 1:
        return means[0]
    logs = [math.log(m + GEOMEAN_SHIFT) for m in means]
    return math.exp(sum(logs) / len(logs)) - GEOMEAN_SHIFT


SPEEDUP_BUCKETS = ("<2x", "2-4x", "4-32x", "32-100x", ">=100x")


def speedup_buckets(ratios: Iterable[float]) -> dict[str, int]:
    """Histogram of speed-up ratios over the report's standard bins."""
    out = {b: 0 for b in SPEEDUP_BUCKETS}
    for r in ratios:
        if r < 2:
            out["<2x"] += 1
        elif r < 4:
            out["2-4x"] += 1
        elif r < 32:
            out["4-32x"] += 1
        elif r < 100:
            out["32-100x"] += 1
        else:
            out[">=100x"] += 1
    return out


def solvable_curve(pairs: Iterable[tuple[float, float]], budgets: Iterable[float]) -> dict:
    """Count solvable problems per time budget, default vs tuned columns."""
    pairs = list(pairs)
    budgets = list(budgets)
    default_counts = [sum(1 for d, _ in pairs if d <= b) for b in budgets]
    tuned_counts = [sum(1 for _, t in pairs if t <= b) for b in budgets]
    return {"budgets": budgets, "default": default_counts, "tuned": tuned_counts}


@dataclass
class TuningReport:
    task_id: str
    best_config: dict
    best_config_id: str
    baseline_cost: float
    best_cost: float
    speedup: float
    per_instance: list[dict]
    evaluations: int
    distinct_configs: int
    task_wallclock_seconds: float
    termination_reason: str

    def to_dict(self) -> dict:
        return {
            "task_id": self.task_id,
            "best_config": self.best_config,
            "best_config_id": self.best_config_id,
            "baseline_cost": self.baseline_cost,
            "best_cost": self.best_cost,
            "speedup": self.speedup,
            "per_instance": self.per_instance,
            "evaluations": self.evaluations,
            "distinct_configs": self.distinct_configs,
            "task_wallclock_seconds": self.task_wallclock_seconds,
            "termination_reason": self.termination_reason,
        }


def compute_report(task_id: str, history_lines: list[dict], task_wallclock: float = 0.0,
                   termination_reason: str = "") -> TuningReport:
    """Pure function of the persisted history: baseline is the seq-0 line
    (the default config, always evaluated first), best is the lowest-cost
    all-ok line; the speed-up of a task whose best IS the default is 1.0
    exactly."""
    if not history_lines:
        raise TaskError("cannot report on an empty history")
    baseline = history_lines[0]
    ok_lines = [h for h in history_lines if h["all_ok"]]
    best = min(ok_lines or history_lines, key=lambda h: h["cost"])
    t_default = float(baseline["cost"])
    t_tuned = float(best["cost"])
    if best["config_id"] == baseline["config_id"]:
        ratio = 1.0
    else:
        ratio = t_default / t_tuned if t_tuned > 0 else math.inf

    def per_instance_means(line: dict) -> dict[str, float]:
        acc: dict[str, list[float]] = {}
        for ev in line.get("evals", []):
            acc.setdefault(ev["instance"], []).append(float(ev["value"]))
        return {k: sum(v) / len(v) for k, v in acc.items()}

    base_by_inst = per_instance_means(baseline)
    best_by_inst = per_instance_means(best)
    per_instance = []
    for inst in base_by_inst:
        d = base_by_inst[inst]
        t = best_by_inst.get(inst)
        row = {"instance": inst, "default": d, "tuned": t}
        if t is not None:
            row["ratio"] = 1.0 if best["config_id"] == baseline["config_id"] else (
                d / t if t > 0 else math.inf)
        per_instance.append(row)
    evaluations = sum(len(h.get("evals", [])) for h in history_lines)
    distinct = len({h["config_id"] for h in history_lines})
    return TuningReport(
        task_id=task_id,
        best_config=dict(best["assignments"]),
        best_config_id=best["config_id"],
        baseline_cost=t_default,
        best_cost=t_tuned,
        speedup=ratio,
        per_instance=per_instance,
        evaluations=evaluations,
        distinct_configs=distinct,
        task_wallclock_seconds=task_wallclock,
        termination_reason=termination_reason,
    )


# ---------------------------------------------------------------------------
# scheduling backend


@dataclass(frozen=True)
class EvalJob:
    job_id: int
    config: ParamConfig
    instance: str
    run_index: int
    seed: int
    cap_seconds: float


class LocalPoolBackend:
    """In-process worker pool over subprocesses: at most `concurrency`
    evaluations in flight, completions delivered unordered via poll().
    The remote-cluster backend of a cloud deployment would implement the
    same four operations (submit, poll, cancel_all, capacity)."""

    def __init__(self, concurrency: int, runner: Callable[[EvalJob], EvaluationRecord]):
        if concurrency < 1:
            raise ValidationError("concurrency: must be >= 1")
        self._concurrency = concurrency
        self._runner = runner
        self._pool = ThreadPoolExecutor(max_workers=concurrency, thread_name_prefix="opttune-worker")
        self._completions: "queue.Queue[tuple[EvalJob, object]]" = queue.Queue()
        self._cancelled = threading.Event()
        self._futures: list = []
        self.procs: set = set()  # live Popen handles, terminated on cancel_all
        self._submitted = 0
        self._delivered = 0
        self._lock = threading.Lock()

    def capacity(self) -> int:
        return self._concurrency

    def submit(self, job: EvalJob) -> None:
        if self._cancelled.is_set():
            raise TaskError("backend cancelled")

        def work():
            if self._cancelled.is_set():
                return
            try:
                result: object = self._runner(job)
            except Exception as e:  # delivered to the coordinator, not raised here
                result = e
            if not self._cancelled.is_set():
                self._completions.put((job, result))

        with self._lock:
            self._submitted += 1
            self._futures.append(self._pool.submit(work))

    def poll(self, timeout: Optional[float] = None) -> list[tuple[EvalJob, object]]:
        """Block up to `timeout` for at least one completion, then drain
        whatever else is ready. Returns [] on timeout or cancellation."""
        out: list[tuple[EvalJob, object]] = []
        try:
            out.append(self._completions.get(timeout=timeout))
        except queue.Empty:
            return out
        while True:
            try:
                out.append(self._completions.get_nowait())
            except queue.Empty:
                break
        self._delivered += len(out)
        return out

    def pending(self) -> int:
        with self._lock:
            return self._submitted - self._delivered - self._completions.qsize()

    def cancel_all(self) -> None:
        self._cancelled.set()
        for f in self._futures:
            f.cancel()
        for proc in list(self.procs):
            try:
                proc.terminate()
            except OSError:
                pass

    def shutdown(self) -> None:
        self.cancel_all()
        self._pool.shutdown(wait=True, cancel_futures=True)


# ---------------------------------------------------------------------------
# the run loop


def _now_iso() -> str:
    return _dt.datetime.now(_dt.timezone.utc).isoformat(timespec="milliseconds")


def build_tuned_space(space: ParamSpace, parameters: list[str]) -> ParamSpace:
    """Restrict tuning to the listed parameter names; the remaining ones are
    pinned at their defaults when configs are rendered for the solver."""
    if not parameters:
        return space
    for name in parameters:
        if name not in space:
            raise ValidationError(f"parameters: '{name}' is not in the {space.solver_id} space")
    chosen = set(parameters)
    pinned = {p.name: p.default for p in space.params if p.name not in chosen}
    defs = []
    for p in space.params:
        if p.name not in chosen:
            continue
        cond = p.condition
        if cond is not None and cond.parent not in chosen:
            parent = space[cond.parent]
            if pinned[cond.parent] == parent.normalize(cond.equals):
                cond = None  # pinned parent keeps the child always active
            else:
                raise ValidationError(
                    f"parameters: '{p.name}' is never active because its parent "
                    f"'{cond.parent}' is pinned to a non-activating default"
                )
        defs.append(ParamDef(name=p.name, kind=p.kind, domain=p.domain,
                             default=p.default, scale=p.scale, condition=cond))
    return ParamSpace(solver_id=space.solver_id, params=defs, version=space.version)


def merge_with_defaults(space: ParamSpace, tuned: ParamConfig) -> ParamConfig:
    """Expand a tuned-subspace config to a full-space config (pinned params at
    defaults, conditional activation re-resolved)."""
    acc: dict = {}
    for p in space._topo:
        if space.is_active(p.name, acc):
            acc[p.name] = tuned.assignments.get(p.name, p.default)
    return make_config(space, acc)


class TaskRunner:
    """Executes one task's tuning loop. Owns the search state and the history
    file; only ever runs on one thread per task."""

    def __init__(self, task_dir: Path, config: TaskConfig, space: ParamSpace,
                 adapter: SolverAdapter):
        self.task_dir = task_dir
        self.config = config
        self.space = space
        self.tuned_space = build_tuned_space(space, config.parameters)
        self.adapter = adapter
        self.rules = adapter.load_adapter_rules()
        self.stop_event = threading.Event()
        self._stop_file = task_dir / "stop.requested"
        self._state_lock = threading.Lock()
        self.state = TaskState()
        self._history_seq = 0
        self._instance_dirs = self._assign_instance_dirs(config.problems)
        self._t0 = 0.0
        self.search: Optional[SearchState] = None

    # -- persistence helpers

    def _assign_instance_dirs(self, problems: list[str]) -> dict[str, str]:
        names: dict[str, str] = {}
        used: set[str] = set()
        for p in problems:
            base = Path(p).name or "problem"
            name = base
            i = 1
            while name in used:
                name = f"{base}__{i}"
                i += 1
            used.add(name)
            names[p] = name
        return names

    def write_state(self) -> None:
        with self._state_lock:
            _atomic_write_text(self.task_dir / "state.json",
                               json.dumps(self.state.to_dict(), indent=2) + "\n")

    def log(self, message: str, level: str = "info") -> None:
        order = {"debug": 0, "info": 1, "warn": 2, "error": 3}
        if order[level] < order.get(self.config.log_level, 1):
            return
        line = f"{_now_iso()} {level.upper():5s} {message}\n"
        with open(self.task_dir / "tuner.log", "a", encoding="utf-8") as fh:
            fh.write(line)

    def _append_history(self, config: ParamConfig, cost: float, all_ok: bool,
                        evals: list[dict]) -> None:
        line = {
            "seq": self._history_seq,
            "config_id": config.config_id,
            "assignments": config.assignments,
            "cost": cost,
            "all_ok": all_ok,
            "evals": evals,
        }
        self._history_seq += 1
        with open(self.task_dir / "history.jsonl", "a", encoding="utf-8") as fh:
            fh.write(json.dumps(line, sort_keys=True) + "\n")

    # -- progress & stopping

    def elapsed(self) -> float:
        return time.monotonic() - self._t0

    def progress_now(self, distinct: int) -> float:
        c = self.config
        frac = max(self.elapsed() / c.max_tuning_time, distinct / c.max_distinct_para_combos)
        return min(1.0, frac)

    def stop_requested(self) -> bool:
        return self.stop_event.is_set() or self._stop_file.exists()

    # -- evaluation plumbing

    def _eval_dir(self, config: ParamConfig, instance: str) -> Path:
        return self.task_dir / "evals" / config.config_id / self._instance_dirs[instance]

    def _make_runner(self, backend_ref: list) -> Callable[[EvalJob], EvaluationRecord]:
        def runner(job: EvalJob) -> EvaluationRecord:
            full = merge_with_defaults(self.space, job.config)
            rec = run_once(
                self.adapter,
                full,
                job.instance,
                cap_seconds=job.cap_seconds,
                seed=job.seed,
                out_dir=self._eval_dir(job.config, job.instance),
                rules=self.rules,
                proc_sink=backend_ref[0].procs if backend_ref else None,
            )
            # the record tracks the tuned config identity, not the expansion
            rec.config_id = job.config.config_id
            return rec

        return runner

    def _jobs_for(self, config: ParamConfig, cap: float, job_counter: list[int]) -> list[EvalJob]:
        jobs = []
        for instance in self.config.problems:
            for run_index in range(self.config.runs_per_config):
                job_counter[0] += 1
                jobs.append(EvalJob(
                    job_id=job_counter[0],
                    config=config,
                    instance=instance,
                    run_index=run_index,
                    seed=self.config.seed + run_index,
                    cap_seconds=cap,
                ))
        return jobs

    def _aggregate(self, config: ParamConfig, records: list[EvaluationRecord]) -> CostAggregate:
        objective = self.config.tuning_objective
        cost = aggregate_cost(records, objective)
        all_ok = all(r.status == "ok" for r in records)
        wallclock = max(r.wallclock_seconds for r in records)
        below_full = any(
            r.status == "timeout" and r.cap_seconds < self.config.max_eval_time - 1e-9
            for r in records
        )
        return CostAggregate(
            config=config, cost=cost, all_ok=all_ok,
            wallclock=wallclock, any_timeout_below_full_cap=below_full,
        )

    def _history_evals(self, records: list[EvaluationRecord]) -> list[dict]:
        objective = self.config.tuning_objective
        ordered = sorted(records, key=lambda r: (self.config.problems.index(r.instance), r.seed))
        return [
            {
                "instance": self._instance_dirs[r.instance],
                "run": r.seed - self.config.seed,
                "seed": r.seed,
                "status": r.status,
                "value": record_objective_value(r, objective),
            }
            for r in ordered
        ]

    # -- main loop

    def run(self) -> TaskState:
        c = self.config
        self._t0 = time.monotonic()
        self.state.status = "running"
        self.state.started_at = _now_iso()
        self.write_state()
        self.log(f"task started: solver={c.solver} strategy={c.strategy} "
                 f"problems={len(c.problems)} seed={c.seed}")

        try:
            self._validate_problems()
            search = SearchState(space=self.tuned_space, rng_seed=c.seed,
                                 strategy_id=c.strategy)
            self.search = search
            reason = self._loop(search)
            self.state.status = "finished"
            self.state.termination_reason = reason
            self.state.progress = 1.0
            self.state.finished_at = _now_iso()
            self._finalize(search)
            self.log(f"task finished: reason={reason} distinct={search.distinct_count} "
                     f"best={search.incumbent[1] if search.incumbent else 'n/a'}")
        except Exception as e:  # backend/validation failures fail the task
            self.state.status = "failed"
            self.state.termination_reason = "error"
            self.state.error = str(e)
            self.state.finished_at = _now_iso()
            self.log(f"task failed: {e}", level="error")
        finally:
            self.write_state()
        return self.state

    def _validate_problems(self) -> None:
        if not self.config.problems:
            raise ValidationError("problems: at least one problem file is required")
        for p in self.config.problems:
            if not Path(p).is_file():
                raise ValidationError(f"problems: '{p}' is not readable")

    def _loop(self, search: SearchState) -> str:
        c = self.config
        backend_ref: list = []
        backend = LocalPoolBackend(c.concurrency, self._make_runner(backend_ref))
        backend_ref.append(backend)
        job_counter = [0]
        hard_deadline = self._t0 + c.max_tuning_time + c.max_eval_time
        requeued: set[str] = set()
        reason = ""
        try:
            while True:
                if self.stop_requested():
                    return "user-stop"
                if search.distinct_count >= c.max_distinct_para_combos:
                    return "combo-budget"
                if self.elapsed() >= c.max_tuning_time:
                    return "time-budget"
                remaining = c.max_distinct_para_combos - search.distinct_count
                batch = propose(search, self.tuned_space, min(c.concurrency, remaining))
                if not batch:
                    return "exhausted"
                self.log(f"proposing {len(batch)} configs "
                         f"({[cfg.config_id for cfg in batch]})", level="debug")
                stopped = self._run_batch(search, backend, batch, job_counter,
                                          hard_deadline, requeued)
                if stopped:
                    return stopped
                self.state.progress = max(self.state.progress,
                                          self.progress_now(search.distinct_count))
                self.write_state()
        finally:
            backend.shutdown()

    def _run_batch(self, search: SearchState, backend: LocalPoolBackend,
                   batch: list[ParamConfig], job_counter: list[int],
                   hard_deadline: float, requeued: set[str]) -> str:
        c = self.config
        expected: dict[str, int] = {}
        collected: dict[str, list[EvaluationRecord]] = {}
        config_by_id: dict[str, ParamConfig] = {}
        outstanding = 0
        for cfg in batch:
            cap = next_cap(search, c.max_eval_time) if c.capping == "adaptive" \
                else c.max_eval_time
            jobs = self._jobs_for(cfg, cap, job_counter)
            expected[cfg.config_id] = len(jobs)
            collected[cfg.config_id] = []
            config_by_id[cfg.config_id] = cfg
            for job in jobs:
                backend.submit(job)
                outstanding += 1

        while outstanding > 0:
            if time.monotonic() > hard_deadline:
                backend.cancel_all()
                self.log("hard time budget reached; cancelling in-flight evaluations",
                         level="warn")
                return "time-budget"
            if self.stop_requested():
                backend.cancel_all()
                return "user-stop"
            for job, result in backend.poll(timeout=0.2):
                outstanding -= 1
                if isinstance(result, Exception):
                    raise TaskError(f"backend failure: {result}") from result
                record = result
                cid = job.config.config_id
                collected[cid].append(record)
                if self.config.verbose >= 2:
                    self.log(f"eval {cid} {self._instance_dirs[job.instance]} "
                             f"seed={job.seed} status={record.status} "
                             f"wallclock={record.wallclock_seconds:.3f}")
                if len(collected[cid]) < expected[cid]:
                    continue
                agg = self._aggregate(config_by_id[cid], collected[cid])
                if (agg.any_timeout_below_full_cap and cid not in requeued
                        and self._should_requeue(search, config_by_id[cid])):
                    requeued.add(cid)
                    self.log(f"re-queueing {cid} at full cap after capped timeout")
                    collected[cid] = []
                    jobs = self._jobs_for(config_by_id[cid], c.max_eval_time, job_counter)
                    expected[cid] = len(jobs)
                    for j in jobs:
                        backend.submit(j)
                        outstanding += 1
                    continue
                update(search, agg)
                self._append_history(config_by_id[cid], agg.cost, agg.all_ok,
                                     self._history_evals(collected[cid]))
                inc = search.incumbent
                self.log(f"config {cid} cost={agg.cost:.6g} "
                         f"{'ok' if agg.all_ok else 'penalized'}"
                         + (f" | incumbent {inc[0].config_id} cost={inc[1]:.6g}" if inc else ""))
        return ""

    def _should_requeue(self, search: SearchState, config: ParamConfig) -> bool:
        model = getattr(search, "_last_model", None)
        if model is None:
            return True  # no prediction available: cannot rule the config out
        if search.incumbent is None:
            return True
        predicted = float(model.predict_cost(config)[0])
        return predicted < search.incumbent[1]

    def _finalize(self, search: SearchState) -> None:
        lines = read_history(self.task_dir)
        if not lines:
            return
        report = compute_report(
            self.task_dir.name, lines,
            task_wallclock=self.elapsed(),
            termination_reason=self.state.termination_reason,
        )
        _atomic_write_text(self.task_dir / "report.json",
                           json.dumps(report.to_dict(), indent=2, sort_keys=True) + "\n")
        recommended = {
            "solver": self.config.solver,
            "config_id": report.best_config_id,
            "parameters": report.best_config,
        }
        _atomic_write_text(self.task_dir / "recommended_params.json",
                           json.dumps(recommended, indent=2, sort_keys=True) + "\n")


def read_history(task_dir: Path) -> list[dict]:
    """Parse history.jsonl. Records are newline-delimited; a process killed
    mid-append can leave one unterminated fragment at the tail, which is not
    a completed record and is ignored."""
    path = task_dir / "history.jsonl"
    if not path.exists():
        return []
    text = path.read_text(encoding="utf-8")
    raw_lines = text.split("\n")
    terminated = raw_lines[:-1]  # split leaves "" or a partial record last
    lines = []
    for raw in terminated:
        raw = raw.strip()
        if raw:
            lines.append(json.loads(raw))
    return lines


# ---------------------------------------------------------------------------
# the manager (registry + lifecycle facade shared by CLI and HTTP API)


class TaskManager:
    def __init__(self, home: Optional[Path] = None):
        self.home = Path(home) if home else default_home()
        self.tasks_dir = self.home / "tasks"
        self.tasks_dir.mkdir(parents=True, exist_ok=True)
        self._lock = threading.RLock()
        self._runners: dict[str, TaskRunner] = {}
        self._threads: dict[str, threading.Thread] = {}

    # -- solver registry

    def adapter_search_dirs(self) -> list[Path]:
        return [self.home / "adapters", DATA_DIR]

    def available_solvers(self) -> list[str]:
        seen = []
        for d in self.adapter_search_dirs():
            if not d.is_dir():
                continue
            for f in sorted(d.glob("*.adapter")):
                if f.stem not in seen:
                    seen.append(f.stem)
        return seen

    def resolve_solver(self, solver: str) -> tuple[SolverAdapter, ParamSpace]:
        for d in self.adapter_search_dirs():
            adapter_file = d / f"{solver}.adapter"
            space_file = d / f"{solver}.params"
            if adapter_file.is_file():
                if not space_file.is_file():
                    raise ValidationError(
                        f"solver: '{solver}' has an adapter but no parameter descriptor"
                    )
                return load_adapter(adapter_file), load_space(space_file)
        raise ValidationError(
            f"solver: unknown solver '{solver}' (available: {', '.join(self.available_solvers())})"
        )

    # -- lifecycle

    def _task_dir(self, task_id: str) -> Path:
        d = self.tasks_dir / task_id
        if not d.is_dir():
            raise UnknownTaskError(f"unknown task-id '{task_id}'")
        return d

    def create_task(self, config: dict | TaskConfig, validate_problems: bool = True) -> str:
        cfg = config if isinstance(config, TaskConfig) else TaskConfig.from_dict(config)
        adapter, space = self.resolve_solver(cfg.solver)
        build_tuned_space(space, cfg.parameters)  # validates parameter names
        if validate_problems:
            for p in cfg.problems:
                if not Path(p).is_file():
                    raise ValidationError(f"problems: '{p}' is not readable")
        with self._lock:
            task_id = f"{_dt.datetime.now().strftime('%Y%m%d-%H%M%S')}-{secrets.token_hex(3)}"
            while (self.tasks_dir / task_id).exists():
                task_id = f"{_dt.datetime.now().strftime('%Y%m%d-%H%M%S')}-{secrets.token_hex(3)}"
            task_dir = self.tasks_dir / task_id
            (task_dir / "problems").mkdir(parents=True)
            if not cfg.name:
                cfg.name = task_id
            _atomic_write_text(task_dir / "task.json",
                               json.dumps(cfg.to_dict(), indent=2, sort_keys=True) + "\n")
            state = TaskState()
            _atomic_write_text(task_dir / "state.json",
                               json.dumps(state.to_dict(), indent=2) + "\n")
        return task_id

    def load_config(self, task_id: str) -> TaskConfig:
        doc = json.loads((self._task_dir(task_id) / "task.json").read_text(encoding="utf-8"))
        return TaskConfig.from_dict(doc)

    def load_state(self, task_id: str) -> TaskState:
        path = self._task_dir(task_id) / "state.json"
        return TaskState.from_dict(json.loads(path.read_text(encoding="utf-8")))

    def save_config(self, task_id: str, cfg: TaskConfig) -> None:
        _atomic_write_text(self._task_dir(task_id) / "task.json",
                           json.dumps(cfg.to_dict(), indent=2, sort_keys=True) + "\n")

    def add_problem(self, task_id: str, filename: str, payload: bytes) -> str:
        task_dir = self._task_dir(task_id)
        state = self.load_state(task_id)
        if state.status != "created":
            raise TaskError(f"cannot add problems to a {state.status} task")
        safe = Path(filename).name or "problem.dat"
        dest = task_dir / "problems" / safe
        i = 1
        while dest.exists():
            dest = task_dir / "problems" / f"{Path(safe).stem}_{i}{Path(safe).suffix}"
            i += 1
        dest.write_bytes(payload)
        cfg = self.load_config(task_id)
        cfg.problems.append(str(dest))
        self.save_config(task_id, cfg)
        return str(dest)

    def run_task(self, task_id: str, block: bool = True) -> TaskState:
        with self._lock:
            task_dir = self._task_dir(task_id)
            state = self.load_state(task_id)
            if state.status != "created":
                raise TaskError(f"illegal transition: cannot run a {state.status} task")
            cfg = self.load_config(task_id)
            adapter, space = self.resolve_solver(cfg.solver)
            runner = TaskRunner(task_dir, cfg, space, adapter)
            self._runners[task_id] = runner
            if block:
                return runner.run()
            # reflect the transition before the thread races ahead
            runner.state.status = "running"
            thread = threading.Thread(target=runner.run, name=f"task-{task_id}", daemon=True)
            self._threads[task_id] = thread
            thread.start()
            return runner.state

    def stop_task(self, task_id: str) -> TaskState:
        task_dir = self._task_dir(task_id)
        state = self.load_state(task_id)
        runner = self._runners.get(task_id)
        if state.status != "running" and not (runner and runner.state.status == "running"):
            raise TaskError(f"illegal transition: cannot stop a {state.status} task")
        (task_dir / "stop.requested").touch()
        if runner:
            runner.stop_event.set()
        thread = self._threads.get(task_id)
        if thread:
            thread.join(timeout=60)
        return self.load_state(task_id)

    def delete_task(self, task_id: str) -> None:
        task_dir = self._task_dir(task_id)
        state = self.load_state(task_id)
        if state.status == "running":
            raise TaskError("illegal transition: stop the task before deleting it")
        # drop evaluation artifacts; keep config and final report
        for sub in ("evals", "problems"):
            shutil.rmtree(task_dir / sub, ignore_errors=True)
        for f in ("history.jsonl", "tuner.log", "stop.requested"):
            try:
                (task_dir / f).unlink()
            except FileNotFoundError:
                pass
        state.status = "deleted"
        _atomic_write_text(task_dir / "state.json",
                           json.dumps(state.to_dict(), indent=2) + "\n")

    def list_tasks(self, state_filter: str = "active") -> list[dict]:
        out = []
        for d in sorted(self.tasks_dir.iterdir()):
            if not (d / "state.json").is_file():
                continue
            state = TaskState.from_dict(json.loads((d / "state.json").read_text(encoding="utf-8")))
            live = self._runners.get(d.name)
            if live and state.status not in ("deleted",):
                state = live.state
            if state_filter == "active" and state.status not in ACTIVE_STATES:
                continue
            if state_filter == "deleted" and state.status != "deleted":
                continue
            name = d.name
            try:
                name = json.loads((d / "task.json").read_text(encoding="utf-8")).get("name") or d.name
            except (OSError, json.JSONDecodeError):
                pass
            out.append({
                "task_id": d.name,
                "name": name,
                "status": state.status,
                "progress": state.progress,
                "termination_reason": state.termination_reason,
            })
        return out

    def task_status(self, task_id: str) -> dict:
        self._task_dir(task_id)
        runner = self._runners.get(task_id)
        if runner is not None and runner.state.status == "running":
            state = runner.state
            if runner.search is not None:
                # live progress from the counters, monotone via the stored max
                state.progress = max(state.progress,
                                     runner.progress_now(runner.search.distinct_count))
        else:
            state = self.load_state(task_id)
        return {
            "task_id": task_id,
            "state": state.status,
            "progress": state.progress,
            "termination_reason": state.termination_reason,
            "error": state.error,
        }

    def output_lines(self, task_id: str, since: int = 0) -> tuple[list[str], int]:
        """Lines of tuner.log from index `since`; returns (lines, next_index).
        Only newline-terminated lines count, so a poll racing the writer can
        never deliver (and advance past) a truncated line."""
        path = self._task_dir(task_id) / "tuner.log"
        if not path.exists():
            return [], since
        text = path.read_text(encoding="utf-8")
        lines = text.split("\n")[:-1]
        return lines[since:], len(lines)

    def report(self, task_id: str) -> TuningReport:
        task_dir = self._task_dir(task_id)
        state = self.load_state(task_id)
        if state.status not in ("finished", "deleted"):
            raise TaskError(f"task is {state.status}; report requires a finished task")
        report_file = task_dir / "report.json"
        if report_file.is_file():
            doc = json.loads(report_file.read_text(encoding="utf-8"))
            return TuningReport(**doc)
        lines = read_history(task_dir)
        return compute_report(task_id, lines, termination_reason=state.termination_reason)

    def task_file(self, task_id: str, kind: str) -> Path:
        names = {
            "recommended": "recommended_params.json",
            "log": "tuner.log",
            "history": "history.jsonl",
            "report": "report.json",
        }
        if kind not in names:
            raise TaskError(f"unknown file kind '{kind}'")
        path = self._task_dir(task_id) / names[kind]
        if not path.is_file():
            raise TaskError(f"no {kind} file for task {task_id}")
        return path

    def stop_all_running(self) -> None:
        for task_id, runner in list(self._runners.items()):
            if runner.state.status == "running":
                runner.stop_event.set()
        for task_id, thread in list(self._threads.items()):
            thread.join(timeout=60)
