"""Solver parameter spaces: declaration, validation, sampling, numeric encoding.

A space is declared in a JSON descriptor file (see `load_space`) and holds an
ordered list of parameter definitions. Configurations are immutable value
assignments identified by a canonical digest, so "distinct combos" are counted
by id. Encoding maps a configuration onto a fixed-width numeric vector for the
surrogate model: numerics normalized to [0, 1] (log-transformed when declared),
categoricals one-hot, booleans 0/1, inactive conditional slots -1.
"""

from __future__ import annotations

import hashlib
import json
import math
import random
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Iterator, Optional, Sequence

from .errors import DescriptorError, ValidationError

KINDS = ("categorical", "integer", "real", "boolean")
SCALES = ("linear", "log")

INACTIVE_SLOT = -1.0


@dataclass(frozen=True)
class Condition:
    """Single-parent equality gate: the parameter is active only when
    `parent` is active and assigned `equals`."""

    parent: str
    equals: Any


@dataclass(frozen=True)
class ParamDef:
    name: str
    kind: str
    domain: tuple  # value tuple (categorical/boolean) or (lo, hi)
    default: Any
    scale: str = "linear"
    condition: Optional[Condition] = None

    def validate(self) -> None:
        if not self.name or not isinstance(self.name, str):
            raise ValidationError(f"parameter name must be a non-empty string, got {self.name!r}")
        if self.kind not in KINDS:
            raise ValidationError(f"parameter '{self.name}': unknown kind {self.kind!r}")
        if self.scale not in SCALES:
            raise ValidationError(f"parameter '{self.name}': unknown scale {self.scale!r}")
        if self.kind == "categorical":
            if len(self.domain) == 0:
                raise ValidationError(f"parameter '{self.name}': empty categorical domain")
            if len(set(self.domain)) != len(self.domain):
                raise ValidationError(f"parameter '{self.name}': duplicate categorical values")
        elif self.kind == "boolean":
            if self.domain != (False, True):
                raise ValidationError(f"parameter '{self.name}': boolean domain is implicit")
            if self.scale == "log":
                raise ValidationError(f"parameter '{self.name}': log scale on boolean")
        else:
            if len(self.domain) != 2:
                raise ValidationError(f"parameter '{self.name}': numeric domain must be [lo, hi]")
            lo, hi = self.domain
            if not (isinstance(lo, (int, float)) and isinstance(hi, (int, float))):
                raise ValidationError(f"parameter '{self.name}': non-numeric bounds")
            if lo > hi:
                raise ValidationError(f"parameter '{self.name}': lo > hi")
            if self.scale == "log" and lo <= 0:
                raise ValidationError(f"parameter '{self.name}': log scale requires lo > 0")
        if not self.contains(self.default):
            raise ValidationError(
                f"parameter '{self.name}': default {self.default!r} outside domain"
            )

    def contains(self, value: Any) -> bool:
        """True iff `value` lies in this parameter's domain."""
        if self.kind == "categorical":
            return value in self.domain
        if self.kind == "boolean":
            return isinstance(value, bool)
        if self.kind == "integer":
            if isinstance(value, bool) or not isinstance(value, int):
                return False
            return self.domain[0] <= value <= self.domain[1]
        if isinstance(value, bool) or not isinstance(value, (int, float)):
            return False
        return self.domain[0] <= value <= self.domain[1]

    def normalize(self, value: Any) -> Any:
        """Coerce a raw (e.g. JSON-loaded) value to the canonical type."""
        if self.kind == "real" and isinstance(value, int) and not isinstance(value, bool):
            return float(value)
        return value

    @property
    def width(self) -> int:
        """Number of encoding slots this parameter occupies."""
        return len(self.domain) if self.kind == "categorical" else 1


class ParamSpace:
    """Ordered, validated set of parameter definitions for one solver."""

    def __init__(self, solver_id: str, params: Sequence[ParamDef], version: str = ""):
        self.solver_id = solver_id
        self.version = version
        self.params = tuple(params)
        self._by_name = {}
        for p in self.params:
            if p.name in self._by_name:
                raise ValidationError(f"parameter '{p.name}': duplicate name")
            self._by_name[p.name] = p
        for p in self.params:
            p.validate()
        self._topo = self._topo_order()
        # slot offsets in canonical (declaration) order
        self._offsets = {}
        off = 0
        for p in self.params:
            self._offsets[p.name] = off
            off += p.width
        self.encoding_width = off

    def _topo_order(self) -> tuple[ParamDef, ...]:
        """Dependency order (parents before children); rejects cycles and
        dangling condition parents."""
        order: list[ParamDef] = []
        state: dict[str, int] = {}  # 0 visiting, 1 done

        def visit(p: ParamDef, chain: tuple[str, ...]):
            if state.get(p.name) == 1:
                return
            if state.get(p.name) == 0:
                raise ValidationError(f"parameter '{p.name}': cyclic condition chain {chain}")
            state[p.name] = 0
            if p.condition is not None:
                parent = self._by_name.get(p.condition.parent)
                if parent is None:
                    raise ValidationError(
                        f"parameter '{p.name}': condition parent "
                        f"'{p.condition.parent}' does not exist"
                    )
                if not parent.contains(parent.normalize(p.condition.equals)):
                    raise ValidationError(
                        f"parameter '{p.name}': condition value "
                        f"{p.condition.equals!r} outside parent domain"
                    )
                visit(parent, chain + (p.name,))
            state[p.name] = 1
            order.append(p)

        for p in self.params:
            visit(p, ())
        return tuple(order)

    def __getitem__(self, name: str) -> ParamDef:
        return self._by_name[name]

    def __contains__(self, name: str) -> bool:
        return name in self._by_name

    @property
    def names(self) -> tuple[str, ...]:
        return tuple(p.name for p in self.params)

    def slot_range(self, name: str) -> tuple[int, int]:
        p = self._by_name[name]
        off = self._offsets[name]
        return off, off + p.width

    def is_active(self, name: str, assignments: dict) -> bool:
        p = self._by_name[name]
        if p.condition is None:
            return True
        parent = p.condition.parent
        if parent not in assignments:
            return False
        return assignments[parent] == self._by_name[parent].normalize(p.condition.equals)

    def active_names(self, assignments: dict) -> list[str]:
        """Active parameter set induced by `assignments` (dependency-resolved)."""
        active: dict[str, Any] = {}
        for p in self._topo:
            if self.is_active(p.name, active) and p.name in assignments:
                active[p.name] = assignments[p.name]
        return [p.name for p in self.params if p.name in active]

    def size(self, cap: int = 1_000_000) -> Optional[int]:
        """Number of distinct configurations, or None if infinite (any real
        parameter) or larger than `cap`."""
        if any(p.kind == "real" for p in self.params):
            return None
        n = 0
        for _ in self.enumerate():
            n += 1
            if n > cap:
                return None
        return n

    def enumerate(self) -> Iterator["ParamConfig"]:
        """Deterministic enumeration of all configurations of a finite space.
        Parameters vary in dependency order, domain order, last parameter
        fastest. Raises on real-valued parameters."""
        for p in self.params:
            if p.kind == "real":
                raise ValidationError(f"parameter '{p.name}': cannot enumerate a real domain")

        def values(p: ParamDef):
            if p.kind == "integer":
                lo, hi = p.domain
                return range(int(lo), int(hi) + 1)
            return p.domain

        def rec(i: int, acc: dict):
            if i == len(self._topo):
                yield make_config(self, dict(acc))
                return
            p = self._topo[i]
            if not self.is_active(p.name, acc):
                yield from rec(i + 1, acc)
                return
            for v in values(p):
                acc[p.name] = v
                yield from rec(i + 1, acc)
            del acc[p.name]

        yield from rec(0, {})


@dataclass(frozen=True)
class ParamConfig:
    """One concrete assignment covering exactly the active parameters.
    Hash/equality follow the canonical digest."""

    assignments: dict = field(compare=False)
    config_id: str = field(compare=True)

    def __hash__(self):
        return hash(self.config_id)

    def get(self, name: str, default=None):
        return self.assignments.get(name, default)


def compute_config_id(assignments: dict) -> str:
    """Deterministic digest over sorted (name, value) pairs."""
    blob = json.dumps(sorted(assignments.items()), separators=(",", ":"), sort_keys=False)
    return hashlib.sha256(blob.encode("utf-8")).hexdigest()[:16]


def make_config(space: ParamSpace, assignments: dict) -> ParamConfig:
    """Validate assignments against the space and build the canonical config."""
    normalized = {}
    for name, value in assignments.items():
        if name not in space:
            raise ValidationError(f"parameter '{name}': not in space '{space.solver_id}'")
        p = space[name]
        v = p.normalize(value)
        if not p.contains(v):
            raise ValidationError(f"parameter '{name}': value {value!r} outside domain")
        normalized[name] = v
    active = set(space.active_names(normalized))
    extra = set(normalized) - active
    if extra:
        raise ValidationError(
            f"parameter '{sorted(extra)[0]}': assigned but inactive under its condition"
        )
    missing = active - set(normalized)
    if missing:
        raise ValidationError(f"parameter '{sorted(missing)[0]}': active but unassigned")
    return ParamConfig(assignments=normalized, config_id=compute_config_id(normalized))


def load_space(descriptor_file: str | Path) -> ParamSpace:
    """Load and validate a parameter-space descriptor.

    Descriptor format (JSON): top-level `solver`, `version`, `parameters`
    list; each entry `name`, `kind`, `domain`, `default`, optional `scale`,
    optional `condition: {parent, equals}`. Boolean parameters omit `domain`.
    """
    path = Path(descriptor_file)
    try:
        doc = json.loads(path.read_text(encoding="utf-8"))
    except OSError as e:
        raise DescriptorError(f"cannot read descriptor {path}: {e}") from e
    except json.JSONDecodeError as e:
        raise DescriptorError(f"malformed descriptor {path}: {e}") from e
    if not isinstance(doc, dict) or "parameters" not in doc:
        raise DescriptorError(f"descriptor {path}: missing 'parameters' list")
    defs = []
    for entry in doc["parameters"]:
        if not isinstance(entry, dict) or "name" not in entry:
            raise DescriptorError(f"descriptor {path}: parameter entry without a name")
        name = entry["name"]
        kind = entry.get("kind", "")
        if kind == "boolean":
            domain = (False, True)
        else:
            raw = entry.get("domain")
            if not isinstance(raw, list):
                raise DescriptorError(f"parameter '{name}': missing or non-list domain")
            domain = tuple(raw)
        cond = None
        if entry.get("condition") is not None:
            c = entry["condition"]
            if not isinstance(c, dict) or "parent" not in c or "equals" not in c:
                raise DescriptorError(f"parameter '{name}': condition needs parent and equals")
            cond = Condition(parent=c["parent"], equals=c["equals"])
        default = entry.get("default")
        if kind == "real" and isinstance(default, int) and not isinstance(default, bool):
            default = float(default)
        defs.append(
            ParamDef(
                name=name,
                kind=kind,
                domain=domain,
                default=default,
                scale=entry.get("scale", "linear"),
                condition=cond,
            )
        )
    return ParamSpace(
        solver_id=doc.get("solver", ""), params=defs, version=str(doc.get("version", ""))
    )


def default_config(space: ParamSpace) -> ParamConfig:
    """Every active parameter at its default; conditionals resolved against
    defaults, so children of non-activating defaults are absent."""
    acc: dict[str, Any] = {}
    for p in space._topo:
        if space.is_active(p.name, acc):
            acc[p.name] = p.default
    return make_config(space, acc)


def _draw(p: ParamDef, rng: random.Random) -> Any:
    if p.kind == "categorical":
        return p.domain[rng.randrange(len(p.domain))]
    if p.kind == "boolean":
        return bool(rng.randrange(2))
    lo, hi = p.domain
    if p.kind == "integer":
        lo, hi = int(lo), int(hi)
        if p.scale == "log":
            v = math.exp(rng.uniform(math.log(lo), math.log(hi)))
            return _round_half_to_lo(v, lo, hi)
        return rng.randint(lo, hi)
    if p.scale == "log":
        # exp(log(hi)) can land 1 ulp outside the domain
        return min(hi, max(lo, math.exp(rng.uniform(math.log(lo), math.log(hi)))))
    return min(hi, max(lo, rng.uniform(lo, hi)))


def sample(space: ParamSpace, rng_seed: int, n: int) -> list[ParamConfig]:
    """Draw `n` independent uniform configurations (log-uniform where the
    parameter declares log scale). Identical seed, identical output."""
    if n < 1:
        raise ValidationError("sample: n must be >= 1")
    rng = random.Random(rng_seed)
    out = []
    for _ in range(n):
        out.append(sample_one(space, rng))
    return out


def sample_one(space: ParamSpace, rng: random.Random) -> ParamConfig:
    acc: dict[str, Any] = {}
    for p in space._topo:
        if space.is_active(p.name, acc):
            acc[p.name] = _draw(p, rng)
    return make_config(space, acc)


def mutate_one(space: ParamSpace, config: ParamConfig, rng: random.Random) -> ParamConfig:
    """Re-draw one active parameter; children gained through the change take
    defaults, children lost are dropped."""
    names = space.active_names(config.assignments)
    target = names[rng.randrange(len(names))]
    acc: dict[str, Any] = {}
    for p in space._topo:
        if not space.is_active(p.name, acc):
            continue
        if p.name == target:
            acc[p.name] = _draw(p, rng)
        elif p.name in config.assignments:
            acc[p.name] = config.assignments[p.name]
        else:
            acc[p.name] = p.default  # newly activated by the mutation
    return make_config(space, acc)


def _unit(p: ParamDef, value: Any) -> float:
    """Map a numeric value into [0, 1] honoring the declared scale."""
    lo, hi = p.domain
    if lo == hi:
        return 0.0
    if p.scale == "log":
        return (math.log(value) - math.log(lo)) / (math.log(hi) - math.log(lo))
    return (value - lo) / (hi - lo)


def _from_unit(p: ParamDef, x: float) -> float:
    lo, hi = p.domain
    x = min(1.0, max(0.0, x))
    if lo == hi:
        return float(lo)
    if p.scale == "log":
        v = math.exp(math.log(lo) + x * (math.log(hi) - math.log(lo)))
    else:
        v = lo + x * (hi - lo)
    return min(hi, max(lo, v))


def _round_half_to_lo(v: float, lo: int, hi: int) -> int:
    """Nearest integer, exact halves toward lo."""
    f = math.floor(v)
    r = f + 1 if (v - f) > 0.5 else f
    return min(hi, max(lo, r))


def encode(space: ParamSpace, config: ParamConfig) -> list[float]:
    """Fixed-width numeric vector in canonical order; inactive slots -1."""
    vec = [INACTIVE_SLOT] * space.encoding_width
    for name, value in config.assignments.items():
        if name not in space:
            raise ValidationError(f"parameter '{name}': not in space '{space.solver_id}'")
        p = space[name]
        off = space.slot_range(name)[0]
        if p.kind == "categorical":
            for i in range(p.width):
                vec[off + i] = 0.0
            vec[off + p.domain.index(value)] = 1.0
        elif p.kind == "boolean":
            vec[off] = 1.0 if value else 0.0
        else:
            vec[off] = _unit(p, value)
    return vec


def decode(space: ParamSpace, vector: Sequence[float]) -> ParamConfig:
    """Inverse of encode on its image: integers snap to the nearest in-domain
    value (ties toward lo), one-hot by argmax. Activation is re-derived from
    decoded parents, so inactive slots are ignored."""
    if len(vector) != space.encoding_width:
        raise ValidationError(
            f"vector width {len(vector)} != space encoding width {space.encoding_width}"
        )
    acc: dict[str, Any] = {}
    for p in space._topo:
        if not space.is_active(p.name, acc):
            continue
        lo_slot, hi_slot = space.slot_range(p.name)
        slots = vector[lo_slot:hi_slot]
        if p.kind == "categorical":
            best = max(range(len(slots)), key=lambda i: (slots[i], -i))
            acc[p.name] = p.domain[best]
        elif p.kind == "boolean":
            acc[p.name] = slots[0] >= 0.5
        elif p.kind == "integer":
            lo, hi = int(p.domain[0]), int(p.domain[1])
            acc[p.name] = _round_half_to_lo(_from_unit(p, slots[0]), lo, hi)
        else:
            acc[p.name] = _from_unit(p, slots[0])
    return make_config(space, acc)
