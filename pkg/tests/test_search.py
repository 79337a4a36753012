import math
import random

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from opttune.errors import ValidationError
from opttune.paramspace import ParamDef, ParamSpace, default_config, encode, sample
from opttune.search import (
    CostAggregate,
    SearchState,
    acquire,
    expected_improvement,
    fit_surrogate,
    next_cap,
    propose,
    update,
)
from opttune.search.forest import RegressionForest, numba_available
from opttune.search.strategy import HistoryEntry, _grid_iter


def small_space() -> ParamSpace:
    return ParamSpace("t", (
        ParamDef("c", "categorical", ("a", "b", "c"), "a"),
        ParamDef("flag", "boolean", (False, True), False),
        ParamDef("x", "real", (0.0, 1.0), 0.5),
        ParamDef("n", "integer", (0, 10), 5),
    ))


def boolean_space() -> ParamSpace:
    return ParamSpace("t", (ParamDef("flag", "boolean", (False, True), False),))


# -- forest


def test_forest_single_point_predicts_target():
    f = RegressionForest(seed=0, use_numba=False).fit([[0.2, 0.8]], [3.5])
    mean, std = f.predict([[0.9, 0.1]])
    assert mean[0] == 3.5
    assert std[0] == 0.0


def test_forest_rank_correlation_on_linear_function():
    rng = np.random.default_rng(42)
    X = rng.random((200, 6))
    w = np.array([3.0, -2.0, 1.0, 0.5, 0.0, 0.0])
    y = X @ w
    Xh = rng.random((200, 6))
    yh = Xh @ w
    f = RegressionForest(seed=7).fit(X, y)
    pred, _ = f.predict(Xh)
    from scipy.stats import spearmanr
    rho = spearmanr(pred, yh).statistic
    assert rho >= 0.8


def test_forest_duplicates_equal_weights():
    rng = np.random.default_rng(3)
    X = rng.random((50, 4))
    y = rng.random(50)
    dup = RegressionForest(seed=11).fit(np.vstack([X, X]), np.concatenate([y, y]))
    weighted = RegressionForest(seed=11).fit(X, y, weights=np.full(50, 2.0))
    q = rng.random((30, 4))
    m1, s1 = dup.predict(q)
    m2, s2 = weighted.predict(q)
    assert np.array_equal(m1, m2)
    assert np.array_equal(s1, s2)


@pytest.mark.skipif(not numba_available(), reason="numba not installed")
def test_forest_backends_bit_identical():
    rng = np.random.default_rng(0)
    X = rng.random((150, 8))
    y = X[:, 0] * 2 - X[:, 3] + 0.05 * rng.standard_normal(150)
    fa = RegressionForest(seed=5, use_numba=True).fit(X, y)
    fb = RegressionForest(seed=5, use_numba=False).fit(X, y)
    q = rng.random((60, 8))
    ma, sa = fa.predict(q)
    mb, sb = fb.predict(q)
    assert np.array_equal(ma, mb)
    assert np.array_equal(sa, sb)


def test_forest_env_flag(monkeypatch):
    from opttune.search import forest as fmod
    monkeypatch.setenv("OPTTUNE_NUMBA", "0")
    assert fmod.numba_enabled() is False
    monkeypatch.setenv("OPTTUNE_NUMBA", "auto")
    assert fmod.numba_enabled() == numba_available()


def test_forest_fit_empty_rejected():
    with pytest.raises(ValueError):
        RegressionForest().fit(np.empty((0, 3)), np.empty(0))


def test_fit_surrogate_empty_history_forbidden():
    with pytest.raises(ValidationError):
        fit_surrogate([], small_space())


# -- expected improvement


def test_ei_arithmetic_zero_variance():
    ei = expected_improvement(np.array([5.0, 9.0]), np.array([0.0, 0.0]), best=10.0)
    assert ei[0] == pytest.approx(5.0)
    assert ei[1] == pytest.approx(1.0)
    assert ei[0] > ei[1]


def test_ei_all_worse_zero_variance_is_zero():
    ei = expected_improvement(np.array([11.0, 12.0]), np.array([0.0, 0.0]), best=10.0)
    assert ei[0] == 0.0
    assert ei[1] == 0.0


def test_ei_positive_with_uncertainty():
    ei = expected_improvement(np.array([11.0]), np.array([2.0]), best=10.0)
    assert ei[0] > 0.0


def test_ei_matches_quadrature():
    """EI closed form vs numeric integration of E[max(0, best - N(mu, sd))]."""
    mu, sd, best = 8.0, 1.5, 10.0
    zs = np.linspace(mu - 8 * sd, mu + 8 * sd, 200_001)
    pdf = np.exp(-0.5 * ((zs - mu) / sd) ** 2) / (sd * math.sqrt(2 * math.pi))
    numeric = np.trapezoid(np.maximum(0.0, best - zs) * pdf, zs)
    closed = expected_improvement(np.array([mu]), np.array([sd]), best)[0]
    assert closed == pytest.approx(numeric, rel=1e-6)


# -- next_cap


def test_next_cap_no_incumbent():
    st_ = SearchState(space=small_space(), rng_seed=0)
    assert next_cap(st_, 600) == 600


def test_next_cap_two_times_incumbent():
    st_ = SearchState(space=small_space(), rng_seed=0)
    cfg = default_config(small_space())
    st_.proposed_ids.add(cfg.config_id)
    update(st_, CostAggregate(config=cfg, cost=30.0, all_ok=True, wallclock=30.0))
    assert next_cap(st_, 600) == 60.0


def test_next_cap_floor_one_second():
    st_ = SearchState(space=small_space(), rng_seed=0)
    cfg = default_config(small_space())
    st_.proposed_ids.add(cfg.config_id)
    update(st_, CostAggregate(config=cfg, cost=0.3, all_ok=True, wallclock=0.3))
    assert next_cap(st_, 600) == 1.0


# -- update


def make_state(space=None):
    return SearchState(space=space or small_space(), rng_seed=0)


def test_update_better_ok_swaps_incumbent():
    sp = small_space()
    st_ = make_state(sp)
    a, b = sample(sp, 1, 2)
    st_.proposed_ids.update([a.config_id, b.config_id])
    update(st_, CostAggregate(a, 10.0, True, 10.0))
    update(st_, CostAggregate(b, 5.0, True, 5.0))
    assert st_.incumbent[0].config_id == b.config_id
    assert st_.distinct_count == 2


def test_update_not_ok_never_takes_incumbent():
    sp = small_space()
    st_ = make_state(sp)
    a, b = sample(sp, 2, 2)
    st_.proposed_ids.update([a.config_id, b.config_id])
    update(st_, CostAggregate(a, 10.0, True, 10.0))
    update(st_, CostAggregate(b, 1.0, False, 1.0))  # guarded even if cheaper
    assert st_.incumbent[0].config_id == a.config_id


def test_update_equal_cost_first_wins():
    sp = small_space()
    st_ = make_state(sp)
    a, b = sample(sp, 3, 2)
    st_.proposed_ids.update([a.config_id, b.config_id])
    update(st_, CostAggregate(a, 7.0, True, 7.0))
    update(st_, CostAggregate(b, 7.0, True, 7.0))
    assert st_.incumbent[0].config_id == a.config_id


def test_update_unknown_config_rejected():
    sp = small_space()
    st_ = make_state(sp)
    (a,) = sample(sp, 4, 1)
    with pytest.raises(ValidationError, match="unknown config-id"):
        update(st_, CostAggregate(a, 1.0, True, 1.0))


@settings(max_examples=50, deadline=None)
@given(costs=st.lists(st.tuples(st.floats(0.01, 1e6), st.booleans()), min_size=1, max_size=40))
def test_incumbent_cost_monotone_nonincreasing(costs):
    sp = small_space()
    st_ = make_state(sp)
    configs = sample(sp, 99, len(costs))
    best_so_far = math.inf
    for cfg, (cost, ok) in zip(configs, costs):
        st_.proposed_ids.add(cfg.config_id)
        update(st_, CostAggregate(cfg, cost, ok, cost))
        if st_.incumbent is not None:
            assert st_.incumbent[1] <= best_so_far + 1e-12
            best_so_far = st_.incumbent[1]


# -- propose


def test_first_proposal_is_default_for_every_strategy():
    for strategy in ("random", "grid", "surrogate"):
        sp = small_space()
        st_ = SearchState(space=sp, rng_seed=3, strategy_id=strategy)
        batch = propose(st_, sp, 1)
        assert len(batch) == 1
        assert batch[0].config_id == default_config(sp).config_id


def test_propose_random_deterministic():
    sp = small_space()
    a = SearchState(space=sp, rng_seed=5, strategy_id="random")
    b = SearchState(space=sp, rng_seed=5, strategy_id="random")
    batch_a = [c.config_id for c in propose(a, sp, 6)] + [c.config_id for c in propose(a, sp, 6)]
    batch_b = [c.config_id for c in propose(b, sp, 6)] + [c.config_id for c in propose(b, sp, 6)]
    assert batch_a == batch_b


def test_propose_never_repeats_ids():
    sp = small_space()
    st_ = SearchState(space=sp, rng_seed=1, strategy_id="random")
    seen = set()
    for _ in range(10):
        for cfg in propose(st_, sp, 5):
            assert cfg.config_id not in seen
            seen.add(cfg.config_id)


def test_propose_exhausts_boolean_space():
    sp = boolean_space()
    st_ = SearchState(space=sp, rng_seed=0, strategy_id="random")
    first = propose(st_, sp, 4)
    assert len(first) == 2  # default + the only other config
    assert propose(st_, sp, 4) == []


def test_grid_covers_lattice_in_order():
    sp = ParamSpace("t", (
        ParamDef("c", "categorical", ("u", "v"), "u"),
        ParamDef("n", "integer", (0, 4), 0),
    ))
    st_ = SearchState(space=sp, rng_seed=0, strategy_id="grid")
    out = propose(st_, sp, 20)
    # 2 * 5 lattice; default (u, 0) is also the first lattice point
    assert len(out) == 10
    assert len({c.config_id for c in out}) == 10


def test_grid_quantizes_reals_to_five_levels():
    sp = ParamSpace("t", (ParamDef("x", "real", (0.0, 1.0), 0.0),))
    pts = [c.assignments["x"] for c in _grid_iter(sp)]
    assert pts == [0.0, 0.25, 0.5, 0.75, 1.0]


def test_surrogate_batch_beats_random_median(mock_space):
    """Proposals from a 50-point history predict better than the median of
    1000 random candidates under the same model."""
    sp = mock_space
    rng = random.Random(0)
    st_ = SearchState(space=sp, rng_seed=0, strategy_id="surrogate")
    target = default_config(sp)
    t_enc = np.array(encode(sp, target))

    def toy_cost(cfg):
        v = np.array(encode(sp, cfg))
        return 1.0 + float(np.abs(v - t_enc).sum())

    for cfg in sample(sp, 123, 50):
        st_.proposed_ids.add(cfg.config_id)
        update(st_, CostAggregate(cfg, toy_cost(cfg), True, 1.0))
    model = fit_surrogate(st_.history, sp, seed=9)
    batch = acquire(model, sp, st_, 5, rng=rng)
    assert batch
    batch_pred, _ = model.predict(batch)
    rand_pred, _ = model.predict(sample(sp, 321, 1000))
    assert batch_pred.mean() <= float(np.median(rand_pred))


def test_acquire_hierarchical_smoke(mock_space):
    sp = mock_space
    st_ = SearchState(space=sp, rng_seed=2, strategy_id="surrogate")
    for cfg in sample(sp, 7, 30):
        st_.proposed_ids.add(cfg.config_id)
        update(st_, CostAggregate(cfg, 1.0 + random.Random(cfg.config_id).random(), True, 1.0))
    model = fit_surrogate(st_.history, sp, seed=1)
    batch = acquire(model, sp, st_, 4, rng=random.Random(1))
    assert len(batch) == 4
    assert len({c.config_id for c in batch}) == 4
    for c in batch:
        assert c.config_id not in st_.proposed_ids


def test_distinct_count_tracks_unique_ids():
    sp = small_space()
    st_ = SearchState(space=sp, rng_seed=0, strategy_id="random")
    batch = propose(st_, sp, 5)
    for cfg in batch:
        update(st_, CostAggregate(cfg, 1.0, True, 1.0))
    # a re-queued (repeat) aggregate for an already-known id
    update(st_, CostAggregate(batch[0], 0.5, True, 0.5))
    assert st_.distinct_count == 5
    assert len(st_.history) == 6
