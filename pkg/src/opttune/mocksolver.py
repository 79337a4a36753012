"""Deterministic stand-in solver for desk-scale experiments.

Reads a JSON spec describing a hidden optimal configuration and a response
surface mapping normalized configuration distance to simulated runtime,
sleeps that long, and prints a solver-shaped log. Runtime at the hidden
optimum equals base_time and grows monotonically with distance, so search
quality is measurable without a real solver.

This module is spawned thousands of times by the test suite, so it imports
only cheap stdlib modules and works on raw descriptor dicts; the in-process
oracle (MockSolverSpec) shares the exact same distance/runtime code paths.
"""

from __future__ import annotations

import json
import math
import sys
import time

SURFACE_FAMILIES = ("linear", "quadratic")


class MockSpecError(ValueError):
    pass


# -- raw-descriptor helpers (no opttune.paramspace import: keep startup lean)


def _load_descriptor(path: str) -> list[dict]:
    with open(path, "r", encoding="utf-8") as fh:
        doc = json.load(fh)
    params = doc.get("parameters")
    if not isinstance(params, list):
        raise MockSpecError(f"descriptor {path}: missing parameters list")
    order: dict[str, dict] = {p["name"]: p for p in params}
    for p in params:
        cond = p.get("condition")
        if cond and cond.get("parent") not in order:
            raise MockSpecError(f"descriptor {path}: condition parent missing for {p['name']}")
    return params


def _is_active(param: dict, assignments: dict) -> bool:
    cond = param.get("condition")
    if not cond:
        return True
    return assignments.get(cond["parent"]) == cond["equals"]


def _resolve(params: list[dict], overrides: dict) -> dict:
    """Fill unassigned active parameters with defaults, drop inactive ones.
    Resolution runs in passes so declaration order does not matter."""
    acc: dict = {}
    decided: set[str] = set()
    remaining = list(params)
    while remaining:
        progressed = False
        rest = []
        for p in remaining:
            cond = p.get("condition")
            if cond and cond["parent"] not in decided:
                rest.append(p)
                continue
            decided.add(p["name"])
            if _is_active(p, acc):
                acc[p["name"]] = overrides.get(p["name"], p.get("default"))
            progressed = True
        if not progressed:
            break  # unreachable parents: leftovers stay inactive
        remaining = rest
    return acc


def _unit(param: dict, value) -> float:
    lo, hi = param["domain"]
    if lo == hi:
        return 0.0
    if param.get("scale") == "log":
        return (math.log(value) - math.log(lo)) / (math.log(hi) - math.log(lo))
    return (value - lo) / (hi - lo)


def raw_distance(params: list[dict], a: dict, b: dict) -> float:
    """Mean per-parameter normalized distance in [0, 1]: numeric
    |unit(v)-unit(w)|, categorical/boolean 0/1, activation mismatch 1."""
    total = 0.0
    for p in params:
        va = a.get(p["name"])
        vb = b.get(p["name"])
        if va is None and vb is None:
            continue
        if va is None or vb is None:
            total += 1.0
        elif p["kind"] in ("integer", "real"):
            total += abs(_unit(p, va) - _unit(p, vb))
        else:
            total += 0.0 if va == vb else 1.0
    return total / len(params)


def raw_runtime(params: list[dict], optimum: dict, assignments: dict,
                base_time: float, family: str, max_factor: float,
                noise: tuple[float, float], noise_key: str = "") -> float:
    d = raw_distance(params, assignments, optimum)
    g = d * d if family == "quadratic" else d
    t = base_time * (1.0 + (max_factor - 1.0) * g)
    lo, hi = noise
    if lo == 1.0 and hi == 1.0:
        return t
    import hashlib

    h = hashlib.sha256(noise_key.encode()).digest()
    u = int.from_bytes(h[:8], "big") / 2**64
    return t * (lo + u * (hi - lo))


def _load_spec_doc(spec_path: str) -> tuple[dict, list[dict], dict]:
    with open(spec_path, "r", encoding="utf-8") as fh:
        doc = json.load(fh)
    space_path = doc["space"]
    if not space_path.startswith("/"):
        base = spec_path.rsplit("/", 1)[0] if "/" in spec_path else "."
        space_path = f"{base}/{space_path}"
    params = _load_descriptor(space_path)
    surface = doc.get("surface", {})
    family = surface.get("family", "quadratic")
    max_factor = float(surface.get("max_factor", 10.0))
    base_time = float(doc.get("base_time", 0.0))
    noise = doc.get("noise", [1.0, 1.0])
    if family not in SURFACE_FAMILIES:
        raise MockSpecError(f"unknown surface family {family!r}")
    if max_factor < 1.0:
        raise MockSpecError("surface max_factor must be >= 1")
    if base_time <= 0:
        raise MockSpecError("base_time must be > 0")
    if not (0 < float(noise[0]) <= float(noise[1])):
        raise MockSpecError("noise range must be 0 < lo <= hi")
    optimum = _resolve(params, doc.get("hidden_optimum", {}))
    meta = {"base_time": base_time, "family": family, "max_factor": max_factor,
            "noise": (float(noise[0]), float(noise[1]))}
    return meta, params, optimum


class MockSolverSpec:
    """In-process oracle over the same code paths the subprocess runs."""

    def __init__(self, spec_path: str):
        self.meta, self.params, self.optimum = _load_spec_doc(str(spec_path))
        self.base_time = self.meta["base_time"]
        self.family = self.meta["family"]
        self.max_factor = self.meta["max_factor"]
        self.noise = self.meta["noise"]

    @classmethod
    def load(cls, spec_file) -> "MockSolverSpec":
        return cls(str(spec_file))

    @property
    def space(self):
        # lazy: only the in-process oracle side needs the ParamSpace view
        if not hasattr(self, "_space"):
            self._space = _space_from_params(self.params)
        return self._space

    @property
    def hidden_optimum(self):
        from .paramspace import make_config
        return make_config(self.space, self.optimum)

    @staticmethod
    def _assignments(config_or_dict) -> dict:
        if isinstance(config_or_dict, dict):
            return config_or_dict
        return config_or_dict.assignments

    def distance(self, config) -> float:
        return raw_distance(self.params, self._assignments(config), self.optimum)

    def runtime(self, config, seed: int = 0) -> float:
        assignments = self._assignments(config)
        key = f"{json.dumps(sorted(assignments.items()), default=str)}:{seed}"
        return raw_runtime(self.params, self.optimum, assignments,
                           self.base_time, self.family, self.max_factor,
                           self.noise, noise_key=key)


def _space_from_params(params: list[dict]):
    from .paramspace import Condition, ParamDef, ParamSpace

    defs = []
    for p in params:
        kind = p["kind"]
        domain = (False, True) if kind == "boolean" else tuple(p["domain"])
        default = p.get("default")
        if kind == "real" and isinstance(default, int) and not isinstance(default, bool):
            default = float(default)
        cond = None
        if p.get("condition"):
            cond = Condition(parent=p["condition"]["parent"], equals=p["condition"]["equals"])
        defs.append(ParamDef(name=p["name"], kind=kind, domain=domain, default=default,
                             scale=p.get("scale", "linear"), condition=cond))
    return ParamSpace("mock", defs)


def _parse_value(param: dict, text: str):
    kind = param["kind"]
    if kind == "boolean":
        return text.lower() in ("true", "1", "on", "yes")
    if kind == "integer":
        return int(text)
    if kind == "real":
        return float(text)
    return text


def _parse_argv(params: list[dict], argv: list[str]) -> tuple[dict, list[str]]:
    """Recover an assignment map from rendered CLI arguments: flag-value
    (-name value), equals (--name=value) or params-file style."""
    by_name = {p["name"]: p for p in params}
    assignments: dict = {}
    positionals: list[str] = []
    i = 0
    while i < len(argv):
        tok = argv[i]
        if tok.startswith("--") and "=" in tok:
            name, _, value = tok[2:].partition("=")
            if name in by_name:
                assignments[name] = _parse_value(by_name[name], value)
            i += 1
        elif tok.startswith("-") and len(tok) > 1 and tok[1:] in by_name:
            name = tok[1:]
            if i + 1 >= len(argv):
                raise MockSpecError(f"flag -{name} missing its value")
            assignments[name] = _parse_value(by_name[name], argv[i + 1])
            i += 2
        elif tok == "--params-file":
            with open(argv[i + 1], "r", encoding="utf-8") as fh:
                for line in fh:
                    line = line.strip()
                    if not line:
                        continue
                    name, _, value = line.partition(" ")
                    if name in by_name:
                        assignments[name] = _parse_value(by_name[name], value)
            i += 2
        else:
            positionals.append(tok)
            i += 1
    return assignments, positionals


def main(argv: list[str] | None = None) -> int:
    argv = list(sys.argv[1:] if argv is None else argv)
    spec_path = None
    seed = 0
    rest: list[str] = []
    i = 0
    while i < len(argv):
        if argv[i] == "--spec":
            spec_path = argv[i + 1]
            i += 2
        elif argv[i] == "--seed":
            seed = int(argv[i + 1])
            i += 2
        else:
            rest.append(argv[i])
            i += 1
    if spec_path is None:
        print("mocksolver: --spec <file> is required", file=sys.stderr)
        return 2
    try:
        meta, params, optimum = _load_spec_doc(spec_path)
    except (OSError, ValueError, KeyError) as e:
        print(f"mocksolver: bad spec {spec_path}: {e}", file=sys.stderr)
        return 2
    try:
        overrides, positionals = _parse_argv(params, rest)
        assignments = _resolve(params, overrides)
    except (MockSpecError, ValueError) as e:
        print(f"mocksolver: bad arguments: {e}", file=sys.stderr)
        return 2

    problem = positionals[0] if positionals else "<none>"
    key = f"{json.dumps(sorted(assignments.items()), default=str)}:{seed}"
    sim = raw_runtime(params, optimum, assignments, meta["base_time"], meta["family"],
                      meta["max_factor"], meta["noise"], noise_key=key)
    print("MockSolver 1.0")
    print(f"Problem: {problem}")
    print(f"Seed: {seed}")
    sys.stdout.flush()
    time.sleep(sim)
    d = raw_distance(params, assignments, optimum)
    print(f"Objective value: {100.0 * d:.9f}")
    print(f"Simulated time: {sim:.9f}")
    print("Enumerated nodes: 0")
    print("Result - Optimal solution found")
    return 0


if __name__ == "__main__":
    sys.exit(main())
