"""Model-file anonymization: strip comments, replace identifiers with
generic markers (OBJ, X1..., CON1...), keep every numeric character
untouched, and record the bijection in a local map file for later
de-anonymization of solutions and logs."""

from __future__ import annotations

from pathlib import Path

from ..errors import SanitizerError
from .lp import anonymize_lp_text, parse_lp, write_lp
from .mps import anonymize_mps_text, parse_mps, write_mps
from .namemap import NameMap, deanonymize_text, file_digest, verify_map

FORMATS = ("mps", "lp")

__all__ = [
    "FORMATS",
    "NameMap",
    "anonymize",
    "deanonymize",
    "deanonymize_text",
    "detect_format",
    "file_digest",
    "parse_lp",
    "parse_mps",
    "verify_map",
    "write_lp",
    "write_mps",
]


def detect_format(path: str | Path) -> str:
    ext = Path(path).suffix.lower().lstrip(".")
    if ext not in FORMATS:
        raise SanitizerError(
            f"cannot infer model format from '{Path(path).name}'; "
            f"supported formats: {', '.join(FORMATS)}"
        )
    return ext


def anonymize(input_path: str | Path, fmt: str | None = None,
              output_path: str | Path | None = None,
              map_path: str | Path | None = None) -> tuple[Path, NameMap]:
    """Anonymize a model file; writes `<input>.san.<ext>` and
    `<input>.namemap` beside it unless overridden. Returns (output, map)."""
    src = Path(input_path)
    fmt = fmt or detect_format(src)
    if fmt not in FORMATS:
        raise SanitizerError(f"unsupported format {fmt!r}; supported: {', '.join(FORMATS)}")
    text = src.read_text(encoding="utf-8")
    if fmt == "mps":
        sanitized, name_map = anonymize_mps_text(text, source_path=src)
    else:
        sanitized, name_map = anonymize_lp_text(text, source_path=src)
    out = Path(output_path) if output_path else src.with_name(src.name + f".san.{fmt}")
    out.write_text(sanitized, encoding="utf-8")
    mp = Path(map_path) if map_path else src.with_name(src.name + ".namemap")
    name_map.dump(mp)
    return out, name_map


def deanonymize(result_path: str | Path, name_map: NameMap | str | Path,
                output_path: str | Path | None = None) -> Path:
    """Restore original identifiers in a result file (solution, log, ...);
    tokens not present in the map pass through untouched."""
    if not isinstance(name_map, NameMap):
        name_map = NameMap.load(name_map)
    src = Path(result_path)
    restored = deanonymize_text(src.read_text(encoding="utf-8"), name_map)
    out = Path(output_path) if output_path else src.with_name(src.name + ".restored")
    out.write_text(restored, encoding="utf-8")
    return out
