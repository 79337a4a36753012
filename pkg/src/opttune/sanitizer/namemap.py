"""Bidirectional original <-> generic identifier maps for model anonymization.

Generic names follow fixed schemes per partition: the objective row becomes
OBJ (and the model header MODEL), variables become X1, X2, ... and
constraints CON1, CON2, ..., numbered in first-appearance order. The map is
persisted as a human-inspectable text file headed by the digest of the file
it was generated from, so a stale map is detectable.
"""

from __future__ import annotations

import hashlib
import re
from dataclasses import dataclass, field
from pathlib import Path

from ..errors import SanitizerError

MAP_HEADER = "# opttune namemap v1"


def file_digest(path: str | Path) -> str:
    return "sha256:" + hashlib.sha256(Path(path).read_bytes()).hexdigest()


@dataclass
class NameMap:
    digest: str = ""
    generic_to_original: dict[str, str] = field(default_factory=dict)
    original_by_partition: dict[str, dict[str, str]] = field(
        default_factory=lambda: {"objective": {}, "variables": {}, "constraints": {}}
    )
    _var_count: int = 0
    _con_count: int = 0

    def _add(self, partition: str, generic: str, original: str) -> str:
        part = self.original_by_partition[partition]
        if original in part:
            return part[original]
        if generic in self.generic_to_original and self.generic_to_original[generic] != original:
            raise SanitizerError(f"generic name collision on {generic}")
        part[original] = generic
        self.generic_to_original[generic] = original
        return generic

    def add_objective(self, original: str) -> str:
        return self._add("objective", "OBJ", original)

    def add_model_name(self, original: str) -> str:
        return self._add("objective", "MODEL", original)

    def add_variable(self, original: str) -> str:
        part = self.original_by_partition["variables"]
        if original in part:
            return part[original]
        self._var_count += 1
        return self._add("variables", f"X{self._var_count}", original)

    def add_constraint(self, original: str) -> str:
        part = self.original_by_partition["constraints"]
        if original in part:
            return part[original]
        self._con_count += 1
        return self._add("constraints", f"CON{self._con_count}", original)

    def variable(self, original: str) -> str | None:
        return self.original_by_partition["variables"].get(original)

    def constraint(self, original: str) -> str | None:
        return self.original_by_partition["constraints"].get(original)

    def __len__(self) -> int:
        return len(self.generic_to_original)

    # -- persistence

    def dump(self, path: str | Path) -> None:
        lines = [MAP_HEADER, f"# digest: {self.digest}"]
        for generic, original in self.generic_to_original.items():
            lines.append(f"{generic}\t{original}")
        Path(path).write_text("\n".join(lines) + "\n", encoding="utf-8")

    @classmethod
    def load(cls, path: str | Path) -> "NameMap":
        text = Path(path).read_text(encoding="utf-8")
        lines = text.splitlines()
        if not lines or lines[0].strip() != MAP_HEADER:
            raise SanitizerError(f"{path}: not a namemap file (missing header)")
        m = cls()
        for i, line in enumerate(lines[1:], start=2):
            if line.startswith("# digest:"):
                m.digest = line.split(":", 1)[1].strip()
                continue
            if not line.strip() or line.startswith("#"):
                continue
            if "\t" not in line:
                raise SanitizerError(f"{path}: malformed map line", line=i)
            generic, original = line.split("\t", 1)
            if generic == "OBJ" or generic == "MODEL":
                m._add("objective", generic, original)
            elif re.fullmatch(r"X\d+", generic):
                m._add("variables", generic, original)
                m._var_count = max(m._var_count, int(generic[1:]))
            elif re.fullmatch(r"CON\d+", generic):
                m._add("constraints", generic, original)
                m._con_count = max(m._con_count, int(generic[3:]))
            else:
                raise SanitizerError(f"{path}: unknown generic name {generic!r}", line=i)
        return m


def deanonymize_text(text: str, name_map: NameMap) -> str:
    """Replace whole-token occurrences of generic names by their originals.
    Token boundaries keep X1 from matching inside X12; unknown tokens pass
    through untouched."""
    if not name_map.generic_to_original:
        return text
    names = sorted(name_map.generic_to_original, key=len, reverse=True)
    pattern = re.compile(r"\b(?:" + "|".join(re.escape(n) for n in names) + r")\b")
    return pattern.sub(lambda m: name_map.generic_to_original[m.group(0)], text)


def verify_map(name_map: NameMap, model_file: str | Path) -> bool:
    """True iff the digest matches and every original name occurs in the
    file; guards against applying a stale or foreign map."""
    path = Path(model_file)
    if name_map.digest and name_map.digest != file_digest(path):
        return False
    text = path.read_text(encoding="utf-8", errors="ignore")
    return all(original in text for original in name_map.generic_to_original.values())
