"""MPS model reader/writer for anonymization.

Handles fixed and free MPS alike by whitespace tokenization: sections NAME,
ROWS, COLUMNS (with integrality MARKER lines), RHS, RANGES, BOUNDS, ENDATA.
Coefficient and bound values are carried as the original text and copied
through verbatim; only identifiers and comments change. Re-serialization
normalizes whitespace but preserves structure and numeric text exactly.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from pathlib import Path

from ..errors import SanitizerError
from .namemap import NameMap, file_digest

SECTIONS = ("NAME", "ROWS", "COLUMNS", "RHS", "RANGES", "BOUNDS", "ENDATA")
ROW_SENSES = ("N", "L", "G", "E")
BOUND_TYPES_VALUED = ("LO", "UP", "FX", "LI", "UI")
BOUND_TYPES_BARE = ("FR", "MI", "PL", "BV")


@dataclass
class MpsModel:
    name: str | None = None
    has_name_line: bool = False
    rows: list[tuple[str, str]] = field(default_factory=list)  # (sense, name), N rows included
    # COLUMNS entries in file order: ("coef", column, [(row, value_text), ...])
    # or ("marker", marker_name, "INTORG"|"INTEND")
    column_entries: list[tuple] = field(default_factory=list)
    rhs: list[tuple[str | None, str, str]] = field(default_factory=list)
    ranges: list[tuple[str | None, str, str]] = field(default_factory=list)
    bounds: list[tuple[str, str | None, str, str | None]] = field(default_factory=list)
    sections_present: list[str] = field(default_factory=list)
    comments: list[str] = field(default_factory=list)

    @property
    def objective_name(self) -> str | None:
        for sense, name in self.rows:
            if sense == "N":
                return name
        return None

    def column_order(self) -> list[str]:
        seen: list[str] = []
        have = set()
        for entry in self.column_entries:
            if entry[0] == "coef" and entry[1] not in have:
                have.add(entry[1])
                seen.append(entry[1])
        for _, _, col, _ in self.bounds:
            if col not in have:
                have.add(col)
                seen.append(col)
        return seen

    def integer_columns(self) -> set[str]:
        out: set[str] = set()
        inside = False
        for entry in self.column_entries:
            if entry[0] == "marker":
                inside = entry[2] == "INTORG"
            elif inside:
                out.add(entry[1])
        return out

    def coefficients(self) -> dict[tuple[str, str], float]:
        """(row, column) -> accumulated numeric value, for semantic checks."""
        acc: dict[tuple[str, str], float] = {}
        for entry in self.column_entries:
            if entry[0] != "coef":
                continue
            _, col, pairs = entry
            for row, text in pairs:
                acc[(row, col)] = acc.get((row, col), 0.0) + float(text)
        return acc


def parse_mps(text: str) -> MpsModel:
    model = MpsModel()
    section = None
    row_names: set[str] = set()
    for lineno, raw in enumerate(text.splitlines(), start=1):
        if raw.startswith("*"):
            model.comments.append(raw)
            continue
        if not raw.strip():
            continue
        tokens = raw.split()
        head = tokens[0]
        is_section_line = not raw[0].isspace()
        if is_section_line and head.upper() in SECTIONS:
            section = head.upper()
            if section == "NAME":
                model.has_name_line = True
                model.name = tokens[1] if len(tokens) > 1 else None
                section = None
            elif section == "ENDATA":
                break
            else:
                model.sections_present.append(section)
            continue
        if is_section_line:
            raise SanitizerError(f"unsupported MPS section or stray line {head!r}", line=lineno)
        if section is None:
            raise SanitizerError(f"data before any section: {raw.strip()!r}", line=lineno)

        if section == "ROWS":
            if len(tokens) != 2 or tokens[0].upper() not in ROW_SENSES:
                raise SanitizerError(f"malformed ROWS line: {raw.strip()!r}", line=lineno)
            sense, name = tokens[0].upper(), tokens[1]
            if name in row_names:
                raise SanitizerError(f"duplicate row name {name!r}", line=lineno)
            row_names.add(name)
            model.rows.append((sense, name))
        elif section == "COLUMNS":
            if len(tokens) >= 3 and tokens[1] == "'MARKER'":
                kind = tokens[2].strip("'")
                if kind not in ("INTORG", "INTEND"):
                    raise SanitizerError(f"unknown MARKER kind {tokens[2]!r}", line=lineno)
                model.column_entries.append(("marker", tokens[0], kind))
                continue
            if len(tokens) < 3 or len(tokens) % 2 == 0:
                raise SanitizerError(f"malformed COLUMNS line: {raw.strip()!r}", line=lineno)
            pairs = []
            for i in range(1, len(tokens) - 1, 2):
                row, value = tokens[i], tokens[i + 1]
                if row not in row_names:
                    raise SanitizerError(f"COLUMNS references unknown row {row!r}", line=lineno)
                _check_number(value, lineno)
                pairs.append((row, value))
            model.column_entries.append(("coef", tokens[0], pairs))
        elif section in ("RHS", "RANGES"):
            target = model.rhs if section == "RHS" else model.ranges
            if len(tokens) % 2 == 1:  # leading set name present
                set_name, rest = tokens[0], tokens[1:]
            else:
                set_name, rest = None, tokens
            if not rest:
                raise SanitizerError(f"malformed {section} line: {raw.strip()!r}", line=lineno)
            for i in range(0, len(rest) - 1, 2):
                row, value = rest[i], rest[i + 1]
                if row not in row_names:
                    raise SanitizerError(f"{section} references unknown row {row!r}", line=lineno)
                _check_number(value, lineno)
                target.append((set_name, row, value))
        elif section == "BOUNDS":
            btype = tokens[0].upper()
            if btype in BOUND_TYPES_VALUED:
                if len(tokens) == 4:
                    _, set_name, col, value = tokens
                elif len(tokens) == 3:
                    set_name, col, value = None, tokens[1], tokens[2]
                else:
                    raise SanitizerError(f"malformed BOUNDS line: {raw.strip()!r}", line=lineno)
                _check_number(value, lineno)
                model.bounds.append((btype, set_name, col, value))
            elif btype in BOUND_TYPES_BARE:
                if len(tokens) == 3:
                    _, set_name, col = tokens
                elif len(tokens) == 2:
                    set_name, col = None, tokens[1]
                else:
                    raise SanitizerError(f"malformed BOUNDS line: {raw.strip()!r}", line=lineno)
                model.bounds.append((btype, set_name, col, None))
            else:
                raise SanitizerError(f"unknown bound type {tokens[0]!r}", line=lineno)
    return model


def _check_number(text: str, lineno: int) -> None:
    try:
        float(text)
    except ValueError:
        raise SanitizerError(f"expected a number, got {text!r}", line=lineno) from None


def _pad(fields: list[str]) -> str:
    out = []
    for i, f in enumerate(fields):
        if i == len(fields) - 1:
            out.append(f)
        else:
            out.append(f.ljust(max(9, len(f)) + 1))
    return ("    " + "".join(out)).rstrip()


def write_mps(model: MpsModel, rename=None) -> str:
    """Serialize; `rename` is an optional callable (kind, name) -> new name
    with kind in {model, row, column, rhs_set, range_set, bound_set, marker}."""
    ident = rename or (lambda kind, name: name)
    lines: list[str] = []
    if model.has_name_line:
        header = ident("model", model.name) if model.name else None
        lines.append(f"NAME          {header}" if header else "NAME")
    for section in model.sections_present:
        if section == "ROWS":
            lines.append("ROWS")
            for sense, name in model.rows:
                lines.append(f" {sense}  {ident('row', name)}")
        elif section == "COLUMNS":
            lines.append("COLUMNS")
            for entry in model.column_entries:
                if entry[0] == "marker":
                    _, mname, kind = entry
                    lines.append(_pad([ident("marker", mname), "'MARKER'", f"'{kind}'"]))
                else:
                    _, col, pairs = entry
                    fields = [ident("column", col)]
                    for row, value in pairs:
                        fields += [ident("row", row), value]
                    lines.append(_pad(fields))
        elif section == "RHS":
            lines.append("RHS")
            for set_name, row, value in model.rhs:
                fields = ([ident("rhs_set", set_name)] if set_name else []) + [ident("row", row), value]
                lines.append(_pad(fields))
        elif section == "RANGES":
            lines.append("RANGES")
            for set_name, row, value in model.ranges:
                fields = ([ident("range_set", set_name)] if set_name else []) + [ident("row", row), value]
                lines.append(_pad(fields))
        elif section == "BOUNDS":
            lines.append("BOUNDS")
            for btype, set_name, col, value in model.bounds:
                fields = [btype] + ([ident("bound_set", set_name)] if set_name else []) \
                    + [ident("column", col)] + ([value] if value is not None else [])
                lines.append(_pad(fields))
    lines.append("ENDATA")
    return "\n".join(lines) + "\n"


def anonymize_mps_text(text: str, source_path: str | Path | None = None) -> tuple[str, NameMap]:
    """Strip comments and replace identifiers with generic markers; numeric
    text passes through bit-identical."""
    model = parse_mps(text)
    name_map = NameMap()
    if source_path is not None:
        name_map.digest = file_digest(source_path)
    if model.name:
        name_map.add_model_name(model.name)
    objective = model.objective_name
    for sense, row in model.rows:
        if row == objective:
            name_map.add_objective(row)
        else:
            name_map.add_constraint(row)
    for col in model.column_order():
        name_map.add_variable(col)

    def rename(kind: str, name: str) -> str:
        if kind == "model":
            return "MODEL"
        if kind == "row":
            if name == objective:
                return "OBJ"
            return name_map.constraint(name) or name
        if kind == "column":
            return name_map.variable(name) or name
        return {"rhs_set": "RHS", "range_set": "RNG", "bound_set": "BND", "marker": "MARKER"}[kind]

    return write_mps(model, rename), name_map
