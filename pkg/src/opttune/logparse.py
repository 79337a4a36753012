"""Metric extraction from solver logs via user-configurable regex rules.

Rules apply per line, one capture group each; the parser is single-pass,
line-streaming, and tolerates arbitrary bytes (invalid UTF-8 is dropped).
"""

from __future__ import annotations

import json
import re
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Iterable, Iterator, Optional, Union

from .errors import RulesError

VALUE_KINDS = ("real", "integer", "string")


@dataclass(frozen=True)
class LogRule:
    metric_name: str
    pattern: str
    value_kind: str = "string"
    pick: str = "first"  # or "last"
    required: bool = False

    def compiled(self) -> re.Pattern:
        return re.compile(self.pattern)


def _validate_rule(rule: LogRule) -> re.Pattern:
    if rule.value_kind not in VALUE_KINDS:
        raise RulesError(f"rule '{rule.metric_name}': unknown kind {rule.value_kind!r}")
    if rule.pick not in ("first", "last"):
        raise RulesError(f"rule '{rule.metric_name}': pick must be first or last")
    try:
        rx = re.compile(rule.pattern)
    except re.error as e:
        raise RulesError(f"rule '{rule.metric_name}': pattern does not compile: {e}") from e
    if rx.groups != 1:
        raise RulesError(
            f"rule '{rule.metric_name}': pattern must have exactly one capture group "
            f"(has {rx.groups})"
        )
    return rx


@dataclass
class MetricSet:
    """Typed metric values plus provenance (byte offset of each match)."""

    values: dict[str, Any] = field(default_factory=dict)
    provenance: dict[str, int] = field(default_factory=dict)
    missing: list[str] = field(default_factory=list)  # required rules with no value
    errors: dict[str, str] = field(default_factory=dict)  # per-metric conversion failures

    @property
    def complete(self) -> bool:
        return not self.missing

    def to_json(self) -> dict:
        return {
            "values": self.values,
            "provenance": self.provenance,
            "missing": self.missing,
            "errors": self.errors,
            "complete": self.complete,
        }

    @classmethod
    def from_json(cls, doc: dict) -> "MetricSet":
        return cls(
            values=dict(doc.get("values", {})),
            provenance={k: int(v) for k, v in doc.get("provenance", {}).items()},
            missing=list(doc.get("missing", [])),
            errors=dict(doc.get("errors", {})),
        )


def load_rules(rules_file: str | Path) -> list[LogRule]:
    """Load a JSON rules file: a list of {name, pattern, kind, pick, required}."""
    path = Path(rules_file)
    try:
        doc = json.loads(path.read_text(encoding="utf-8"))
    except OSError as e:
        raise RulesError(f"cannot read rules file {path}: {e}") from e
    except json.JSONDecodeError as e:
        raise RulesError(f"malformed rules file {path}: {e}") from e
    if not isinstance(doc, list):
        raise RulesError(f"rules file {path}: expected a list")
    rules = []
    for entry in doc:
        if not isinstance(entry, dict) or "name" not in entry or "pattern" not in entry:
            raise RulesError(f"rules file {path}: entry needs name and pattern: {entry!r}")
        rule = LogRule(
            metric_name=entry["name"],
            pattern=entry["pattern"],
            value_kind=entry.get("kind", "string"),
            pick=entry.get("pick", "first"),
            required=bool(entry.get("required", False)),
        )
        _validate_rule(rule)
        rules.append(rule)
    return rules


def _convert(kind: str, text: str) -> Any:
    if kind == "integer":
        return int(text, 10)
    if kind == "real":
        return float(text)
    return text


def _iter_lines(stream: Union[bytes, Iterable[bytes]]) -> Iterator[tuple[int, bytes]]:
    """Yield (byte offset of line start, line bytes without newline), buffering
    only until each newline so memory stays bounded by the longest line."""
    if isinstance(stream, bytes):
        stream = (stream,)
    buf = bytearray()
    offset = 0
    for chunk in stream:
        buf.extend(chunk)
        while True:
            nl = buf.find(b"\n")
            if nl < 0:
                break
            line = bytes(buf[:nl])
            del buf[: nl + 1]
            if line.endswith(b"\r"):
                line = line[:-1]
            yield offset, line
            offset += nl + 1
    if buf:
        yield offset, bytes(buf)


def parse_log(rules: list[LogRule], log: Union[bytes, Iterable[bytes]]) -> MetricSet:
    """Apply every rule line by line over a byte stream.

    pick=first keeps the first match, pick=last the most recent one. A rule
    whose captured text fails conversion records a per-metric error and never
    invents a value; missing required rules mark the set incomplete.
    """
    compiled = [(rule, _validate_rule(rule)) for rule in rules]
    found: dict[str, tuple[str, int]] = {}  # name -> (captured text, byte offset)
    done: set[str] = set()
    for line_off, raw in _iter_lines(log):
        line = raw.decode("utf-8", errors="ignore")
        for rule, rx in compiled:
            name = rule.metric_name
            if rule.pick == "first" and name in done:
                continue
            m = rx.search(line)
            if not m:
                continue
            found[name] = (m.group(1), line_off + m.start(1))
            if rule.pick == "first":
                done.add(name)

    out = MetricSet()
    for rule, _ in compiled:
        name = rule.metric_name
        if name not in found:
            if rule.required:
                out.missing.append(name)
            continue
        text, off = found[name]
        try:
            out.values[name] = _convert(rule.value_kind, text)
            out.provenance[name] = off
        except (ValueError, OverflowError) as e:
            out.errors[name] = f"{text!r}: {e}"
            if rule.required:
                out.missing.append(name)
    return out


def parse_log_file(rules: list[LogRule], path: str | Path, chunk_size: int = 1 << 16) -> MetricSet:
    """Stream a log file from disk through `parse_log`."""

    def chunks() -> Iterator[bytes]:
        with open(path, "rb") as fh:
            while True:
                block = fh.read(chunk_size)
                if not block:
                    return
                yield block

    return parse_log(rules, chunks())
