import json
import sys
from pathlib import Path

import pytest

from opttune.paramspace import load_space

DATA_DIR = Path(__file__).parent.parent / "src" / "opttune" / "data"
FIXTURES = Path(__file__).parent / "fixtures"


@pytest.fixture
def mock_space():
    return load_space(DATA_DIR / "mocksolver.params")


@pytest.fixture
def cbc_space():
    return load_space(DATA_DIR / "cbc.params")


def write_json(path: Path, doc) -> Path:
    path.write_text(json.dumps(doc, indent=2), encoding="utf-8")
    return path


def make_mock_solver_files(
    tmp_path: Path,
    space_doc: dict,
    hidden_optimum: dict,
    base_time: float = 0.01,
    family: str = "quadratic",
    max_factor: float = 8.0,
    noise=(1.0, 1.0),
) -> dict:
    """Write a self-contained mock-solver bundle (descriptor, spec, rules,
    adapter) into tmp_path and return the paths."""
    tmp_path.mkdir(parents=True, exist_ok=True)
    space_file = write_json(tmp_path / "mock.params", space_doc)
    spec_file = write_json(tmp_path / "mock.spec", {
        "space": "mock.params",
        "hidden_optimum": hidden_optimum,
        "base_time": base_time,
        "surface": {"family": family, "max_factor": max_factor},
        "noise": list(noise),
    })
    rules_file = write_json(tmp_path / "mock.rules", [
        {"name": "status", "pattern": "^Result - (.+)$", "kind": "string",
         "pick": "last", "required": True},
        {"name": "objective", "pattern": "^Objective value:\\s+([-+0-9.eE]+)",
         "kind": "real", "pick": "last", "required": True},
        {"name": "time", "pattern": "^Simulated time:\\s+([-+0-9.eE]+)",
         "kind": "real", "pick": "last", "required": True},
    ])
    adapter_file = write_json(tmp_path / "mock.adapter", {
        "solver-id": "mock",
        "command": f"{sys.executable} -m opttune.mocksolver --spec {spec_file} "
                   "--seed {seed} {params} {problem}",
        "param-style": "flag-value",
        "rules-file": str(rules_file),
    })
    problem = tmp_path / "instance.mps"
    problem.write_text("* placeholder problem data\n", encoding="utf-8")
    return {
        "space": space_file,
        "spec": spec_file,
        "rules": rules_file,
        "adapter": adapter_file,
        "problem": problem,
    }


def install_mock_solver(home: Path, files: dict, solver_id: str = "mock") -> None:
    """Register the bundle under <home>/adapters so a TaskManager can
    resolve it by solver id."""
    adapters = home / "adapters"
    adapters.mkdir(parents=True, exist_ok=True)
    doc = json.loads(files["adapter"].read_text())
    doc["solver-id"] = solver_id
    write_json(adapters / f"{solver_id}.adapter", doc)
    (adapters / f"{solver_id}.params").write_text(files["space"].read_text(), encoding="utf-8")


SMALL_MIXED_SPACE = {
    "solver": "mock",
    "version": "1",
    "parameters": [
        {"name": "presolve", "kind": "categorical", "domain": ["off", "fast", "thorough"],
         "default": "fast"},
        {"name": "cuts", "kind": "categorical", "domain": ["off", "on", "aggressive"],
         "default": "on"},
        {"name": "heuristics", "kind": "boolean", "default": True},
        {"name": "pivot_rule", "kind": "categorical", "domain": ["dantzig", "steepest", "hybrid"],
         "default": "hybrid"},
        {"name": "effort", "kind": "real", "domain": [0.1, 10.0], "default": 1.0, "scale": "log"},
        {"name": "rounds", "kind": "integer", "domain": [0, 8], "default": 2},
    ],
}

SMALL_MIXED_OPTIMUM = {
    "presolve": "thorough",
    "cuts": "aggressive",
    "heuristics": True,
    "pivot_rule": "steepest",
    "effort": 2.5,
    "rounds": 4,
}

# finite space for exhaustion/capping experiments: 3 * 4 * 2 = 24 configs
FINITE_SPACE = {
    "solver": "mock",
    "version": "1",
    "parameters": [
        {"name": "presolve", "kind": "categorical", "domain": ["off", "fast", "thorough"],
         "default": "fast"},
        {"name": "cuts", "kind": "categorical", "domain": ["off", "low", "mid", "high"],
         "default": "low"},
        {"name": "heuristics", "kind": "boolean", "default": False},
    ],
}

FINITE_OPTIMUM = {"presolve": "thorough", "cuts": "high", "heuristics": True}
