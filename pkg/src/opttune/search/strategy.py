"""Proposal strategies (random, grid, surrogate-guided) and incumbent state.

The first proposal of any task is always the space's default configuration,
so the baseline cost the speed-up ratio divides by is measured in-band.
Proposals never repeat an already-proposed config-id unless the space is
exhausted. Surrogate proposals rank a candidate pool (random samples plus
one-parameter mutations of the incumbent) by expected improvement under a
tree-ensemble model of log(1 + cost), with a coarse categorical-first pass
ahead of full-model refinement.
"""

from __future__ import annotations

import math
import random
from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from ..errors import ValidationError
from ..paramspace import (
    ParamConfig,
    ParamDef,
    ParamSpace,
    default_config,
    encode,
    make_config,
    mutate_one,
    sample_one,
)
from .forest import RegressionForest

STRATEGIES = ("random", "grid", "surrogate")

CANDIDATE_POOL_RANDOM = 500
CANDIDATE_POOL_MUTATIONS = 500
COARSE_KEEP = 200
GRID_LEVELS = 5
CAP_FACTOR = 2.0
CAP_FLOOR_SECONDS = 1.0
ENSEMBLE_SIZE = 32


@dataclass
class CostAggregate:
    """One config's aggregated evaluation outcome, as consumed by update().
    `wallclock` is the slowest of the config's evaluations; adaptive capping
    keys off it so the incumbent's own runtime always fits under the cap."""

    config: ParamConfig
    cost: float
    all_ok: bool
    wallclock: Optional[float] = None
    any_timeout_below_full_cap: bool = False


@dataclass
class HistoryEntry:
    config: ParamConfig
    cost: float
    all_ok: bool


@dataclass
class SearchState:
    space: ParamSpace
    rng_seed: int
    strategy_id: str = "surrogate"
    history: list[HistoryEntry] = field(default_factory=list)
    incumbent: Optional[tuple[ParamConfig, float]] = None
    incumbent_wallclock: Optional[float] = None
    proposed_ids: set = field(default_factory=set)
    distinct_count: int = 0
    _rng: random.Random = None  # type: ignore[assignment]
    _size_cache: object = "unset"
    _last_model: object = None  # most recent surrogate, for re-queue decisions

    def __post_init__(self):
        if self.strategy_id not in STRATEGIES:
            raise ValidationError(f"unknown strategy {self.strategy_id!r}")
        if self._rng is None:
            self._rng = random.Random(self.rng_seed)

    def space_size(self) -> Optional[int]:
        if self._size_cache == "unset":
            self._size_cache = self.space.size(cap=100_000)
        return self._size_cache  # type: ignore[return-value]

    @property
    def incumbent_cost(self) -> Optional[float]:
        return self.incumbent[1] if self.incumbent else None


def update(state: SearchState, aggregate: CostAggregate) -> SearchState:
    """Append a completed aggregate; the incumbent moves only on a strictly
    lower cost whose runs were all ok."""
    cid = aggregate.config.config_id
    if cid not in state.proposed_ids:
        raise ValidationError(f"unknown config-id {cid}: result for a config never proposed")
    state.history.append(
        HistoryEntry(config=aggregate.config, cost=aggregate.cost, all_ok=aggregate.all_ok)
    )
    state.distinct_count = len({h.config.config_id for h in state.history})
    if aggregate.all_ok and (state.incumbent is None or aggregate.cost < state.incumbent[1]):
        state.incumbent = (aggregate.config, aggregate.cost)
        state.incumbent_wallclock = aggregate.wallclock
    return state


def next_cap(state: SearchState, max_eval_time: float) -> float:
    """min(max-eval-time, 2x incumbent wallclock) once an ok incumbent exists,
    never below 1 s."""
    if max_eval_time <= 0:
        raise ValidationError("max-eval-time must be > 0")
    if state.incumbent is None or state.incumbent_wallclock is None:
        return float(max_eval_time)
    return max(CAP_FLOOR_SECONDS, min(float(max_eval_time), CAP_FACTOR * state.incumbent_wallclock))


def _grid_levels(p: ParamDef) -> list:
    if p.kind == "categorical":
        return list(p.domain)
    if p.kind == "boolean":
        return [False, True]
    lo, hi = p.domain
    if p.kind == "integer":
        lo, hi = int(lo), int(hi)
        if p.scale == "log":
            pts = [math.exp(math.log(lo) + i * (math.log(hi) - math.log(lo)) / (GRID_LEVELS - 1))
                   for i in range(GRID_LEVELS)]
            vals = [min(hi, max(lo, round(x))) for x in pts]
        else:
            vals = [lo + round(i * (hi - lo) / (GRID_LEVELS - 1)) for i in range(GRID_LEVELS)]
        out = []
        for v in vals:
            if v not in out:
                out.append(int(v))
        return out
    if p.scale == "log":
        return [min(hi, max(lo, math.exp(
            math.log(lo) + i * (math.log(hi) - math.log(lo)) / (GRID_LEVELS - 1))))
            for i in range(GRID_LEVELS)]
    return [min(hi, max(lo, lo + i * (hi - lo) / (GRID_LEVELS - 1)))
            for i in range(GRID_LEVELS)]


def _grid_iter(space: ParamSpace):
    """Lattice points in dependency order, last axis fastest, conditionals
    respected; numeric axes quantized to GRID_LEVELS levels."""
    topo = space._topo

    def rec(i: int, acc: dict):
        if i == len(topo):
            yield make_config(space, dict(acc))
            return
        p = topo[i]
        if not space.is_active(p.name, acc):
            yield from rec(i + 1, acc)
            return
        for v in _grid_levels(p):
            acc[p.name] = v
            yield from rec(i + 1, acc)
        del acc[p.name]

    yield from rec(0, {})


def _space_exhausted(state: SearchState, space: ParamSpace) -> bool:
    size = state.space_size()
    return size is not None and len(state.proposed_ids) >= size


def propose(state: SearchState, space: ParamSpace, batch: int) -> list[ParamConfig]:
    """Next `batch` configurations to evaluate. May return fewer (or none)
    when the space is exhausted; never raises for exhaustion."""
    if batch < 1:
        raise ValidationError("batch must be >= 1")
    out: list[ParamConfig] = []

    def take(cfg: ParamConfig) -> bool:
        if cfg.config_id in state.proposed_ids:
            return False
        state.proposed_ids.add(cfg.config_id)
        out.append(cfg)
        return True

    if not state.proposed_ids:
        take(default_config(space))

    while len(out) < batch:
        want = batch - len(out)
        if state.strategy_id == "grid":
            added = 0
            for cfg in _grid_iter(space):
                if cfg.config_id not in state.proposed_ids:
                    take(cfg)
                    added += 1
                    if len(out) >= batch:
                        break
            if added == 0:
                break  # lattice exhausted: grid's search space is done
        elif state.strategy_id == "surrogate" and state.history:
            model = fit_surrogate(
                state.history, space, seed=_derived_seed(state.rng_seed, len(state.history))
            )
            state._last_model = model
            cands = acquire(model, space, state, want, rng=state._rng)
            for cfg in cands:
                take(cfg)
            if not cands:
                # candidate pool exhausted; a small finite space may still
                # hold unseen configs the random pool missed
                if state.space_size() is not None:
                    for cfg in space.enumerate():
                        if take(cfg) and len(out) >= batch:
                            break
                break
        else:  # random, or surrogate before any history beyond the default
            attempts = 0
            max_attempts = max(200 * want, 1000)
            added = 0
            while added < want and attempts < max_attempts:
                attempts += 1
                if take(sample_one(space, state._rng)):
                    added += 1
            if added < want:
                break
        if _space_exhausted(state, space):
            break
    return out


@dataclass
class Surrogate:
    """Tree-ensemble regressor over encoded configs; targets are
    log(1 + cost). predict() returns per-point (mean, stddev across trees)."""

    space: ParamSpace
    forest: RegressionForest
    train_x: np.ndarray
    train_y: np.ndarray
    train_w: np.ndarray
    seed: int

    def predict(self, configs_or_vectors) -> tuple[np.ndarray, np.ndarray]:
        X = _as_matrix(self.space, configs_or_vectors)
        return self.forest.predict(X)

    def predict_cost(self, configs_or_vectors) -> np.ndarray:
        mean, _ = self.predict(configs_or_vectors)
        return np.expm1(mean)


def _as_matrix(space: ParamSpace, items) -> np.ndarray:
    if isinstance(items, np.ndarray):
        return items if items.ndim == 2 else items.reshape(1, -1)
    if isinstance(items, ParamConfig):
        items = [items]
    rows = []
    for it in items:
        rows.append(encode(space, it) if isinstance(it, ParamConfig) else list(it))
    return np.asarray(rows, dtype=np.float64)


def _derived_seed(base: int, n: int) -> int:
    return (base * 1_000_003 + n) % (2**31 - 1)


def fit_surrogate(history, space: ParamSpace, seed: int = 0,
                  use_numba: Optional[bool] = None) -> Surrogate:
    """Fit the 32-tree bootstrap ensemble on (encoded config, log1p(cost))."""
    if not history:
        raise ValidationError("cannot fit a surrogate on an empty history")
    X = np.asarray([encode(space, h.config) for h in history], dtype=np.float64)
    y = np.log1p(np.asarray([h.cost for h in history], dtype=np.float64))
    w = np.ones(len(history))
    forest = RegressionForest(
        n_trees=ENSEMBLE_SIZE, feature_fraction=0.8, min_leaf_weight=2.0,
        seed=seed, use_numba=use_numba,
    ).fit(X, y, w)
    return Surrogate(space=space, forest=forest, train_x=X, train_y=y, train_w=w, seed=seed)


def _phi(z: np.ndarray) -> np.ndarray:
    return np.exp(-0.5 * z * z) / math.sqrt(2.0 * math.pi)


def _Phi(z: np.ndarray) -> np.ndarray:
    return 0.5 * (1.0 + np.array([math.erf(v / math.sqrt(2.0)) for v in np.atleast_1d(z)]))


def expected_improvement(mean: np.ndarray, std: np.ndarray, best: float) -> np.ndarray:
    """EI for minimization under a normal predictive distribution; the
    zero-variance limit is max(0, best - mean)."""
    mean = np.asarray(mean, dtype=np.float64)
    std = np.asarray(std, dtype=np.float64)
    ei = np.maximum(0.0, best - mean)
    pos = std > 0
    if pos.any():
        z = (best - mean[pos]) / std[pos]
        ei_pos = (best - mean[pos]) * _Phi(z) + std[pos] * _phi(z)
        ei[pos] = np.maximum(0.0, ei_pos)
    return ei


def _cat_bool_columns(space: ParamSpace) -> list[int]:
    cols = []
    for p in space.params:
        lo, hi = space.slot_range(p.name)
        if p.kind in ("categorical", "boolean"):
            cols.extend(range(lo, hi))
    return cols


def acquire(model: Surrogate, space: ParamSpace, state: SearchState, batch: int,
            rng: random.Random, seed: Optional[int] = None) -> list[ParamConfig]:
    """Score a 500+500 candidate pool by expected improvement and return the
    top `batch` unseen configs.

    Two-level pass: a coarse model fit only on categorical/boolean slots
    ranks the pool first and keeps COARSE_KEEP candidates; the full model
    refines the survivors. Ties break by higher predictive stddev, then by
    the proposal rng.
    """
    incumbent = state.incumbent
    if incumbent is None:
        # no ok result yet: fall back to the best (penalized) history cost
        if not state.history:
            return []
        best_cost = min(h.cost for h in state.history)
        incumbent_cfg = min(state.history, key=lambda h: h.cost).config
    else:
        incumbent_cfg, best_cost = incumbent
    f_star = math.log1p(best_cost)

    pool: list[ParamConfig] = []
    seen: set[str] = set()
    for _ in range(CANDIDATE_POOL_RANDOM):
        c = sample_one(space, rng)
        if c.config_id not in seen:
            seen.add(c.config_id)
            pool.append(c)
    for _ in range(CANDIDATE_POOL_MUTATIONS):
        c = mutate_one(space, incumbent_cfg, rng)
        if c.config_id not in seen:
            seen.add(c.config_id)
            pool.append(c)
    pool = [c for c in pool if c.config_id not in state.proposed_ids]
    if not pool:
        return []

    X = _as_matrix(space, pool)
    cat_cols = _cat_bool_columns(space)
    num_cols = [i for i in range(space.encoding_width) if i not in cat_cols]
    if cat_cols and num_cols and len(pool) > COARSE_KEEP:
        coarse = RegressionForest(
            n_trees=ENSEMBLE_SIZE, feature_fraction=0.8, min_leaf_weight=2.0,
            seed=_derived_seed(model.seed, 1), use_numba=model.forest.use_numba,
        ).fit(model.train_x[:, cat_cols], model.train_y, model.train_w)
        c_mean, c_std = coarse.predict(X[:, cat_cols])
        c_ei = expected_improvement(c_mean, c_std, f_star)
        keep = np.argsort(-c_ei, kind="stable")[:COARSE_KEEP]
        keep = np.sort(keep)  # preserve pool order within the kept set
        pool = [pool[i] for i in keep]
        X = X[keep]

    mean, std = model.forest.predict(X)
    ei = expected_improvement(mean, std, f_star)
    tiebreak = [rng.random() for _ in pool]
    order = sorted(range(len(pool)), key=lambda i: (-ei[i], -std[i], tiebreak[i]))
    return [pool[i] for i in order[:batch]]
