"""Bootstrap ensemble of CART regression trees over encoded configurations.

This is the numeric hot path of the search loop: tree construction and batch
prediction are written as kernels over flat numpy arrays. When numba is
available the build/predict kernels run JIT-compiled; otherwise (or when the
``OPTTUNE_NUMBA`` env flag disables it) a pure-numpy path runs the same
algorithm. ``benchmarks/bench_forest.py`` compares the two.

Splits maximize weighted variance reduction; leaves stop below a minimum
total weight of 2. Duplicate (x, y) rows are merged into sample weights
before any randomness is drawn, so a duplicated dataset and a deduplicated
weighted one produce bit-identical forests.
"""

from __future__ import annotations

import os
from typing import Optional

import numpy as np

_TINY = 1e-300  # guards 0/0 in masked-out split candidates
_jit_cache: dict[str, object] = {}


def numba_available() -> bool:
    try:
        import numba  # noqa: F401
    except ImportError:
        return False
    return True


def numba_enabled() -> bool:
    """Resolve the OPTTUNE_NUMBA env flag: '0'/'false'/'off' forces the numpy
    path, '1'/'true'/'on' requires numba, unset auto-detects."""
    flag = os.environ.get("OPTTUNE_NUMBA", "").strip().lower()
    if flag in ("0", "false", "off", "no"):
        return False
    if flag in ("1", "true", "on", "yes"):
        if not numba_available():
            raise RuntimeError("OPTTUNE_NUMBA=1 but numba is not importable")
        return True
    return numba_available()


def _build_tree_kernel(X, y, w, feat_ids, min_leaf_w):
    """Grow one tree; returns (feature, thresh, left, right, value, n_nodes).

    feature[i] < 0 marks a leaf. The open-node stack, stable argsort and
    first-best tie-breaking make construction fully deterministic. The body
    is restricted to constructs numba's nopython mode supports so the same
    source serves both backends.
    """
    n = X.shape[0]
    max_nodes = 2 * n + 1
    feature = np.full(max_nodes, -1, np.int64)
    thresh = np.zeros(max_nodes, np.float64)
    left = np.full(max_nodes, -1, np.int64)
    right = np.full(max_nodes, -1, np.int64)
    value = np.zeros(max_nodes, np.float64)

    idx = np.arange(n)
    stack_node = np.zeros(max_nodes, np.int64)
    stack_lo = np.zeros(max_nodes, np.int64)
    stack_hi = np.zeros(max_nodes, np.int64)
    sp = 0
    stack_node[0] = 0
    stack_lo[0] = 0
    stack_hi[0] = n
    sp = 1
    n_nodes = 1

    while sp > 0:
        sp -= 1
        node = stack_node[sp]
        lo = stack_lo[sp]
        hi = stack_hi[sp]
        rows = idx[lo:hi]
        ww = w[rows]
        yy = y[rows]
        # total sums via cumsum: sequential accumulation in both backends,
        # so the numba and numpy paths produce bit-identical trees
        sw = np.cumsum(ww)[-1]
        sy = np.cumsum(ww * yy)[-1]
        syy = np.cumsum(ww * yy * yy)[-1]
        value[node] = sy / sw
        sse_total = syy - sy * sy / sw
        if sw < 2.0 * min_leaf_w or sse_total <= 1e-12:
            continue

        best_gain = 0.0
        best_f = -1
        best_thr = 0.0
        for k in range(feat_ids.shape[0]):
            f = feat_ids[k]
            v = X[rows, f]
            order = np.argsort(v, kind="mergesort")
            vs = v[order]
            ws = ww[order]
            ys = yy[order]
            cw = np.cumsum(ws)
            cy = np.cumsum(ws * ys)
            cyy = np.cumsum(ws * ys * ys)
            lw = cw[:-1]
            ly = cy[:-1]
            lyy = cyy[:-1]
            rw = sw - lw
            ry = sy - ly
            ryy = syy - lyy
            valid = (vs[:-1] != vs[1:]) & (lw >= min_leaf_w) & (rw >= min_leaf_w)
            sse = (lyy - ly * ly / np.maximum(lw, _TINY)) + (
                ryy - ry * ry / np.maximum(rw, _TINY)
            )
            gain = sse_total - sse
            gain = np.where(valid, gain, -1.0)
            if gain.shape[0] == 0:
                continue
            i = int(np.argmax(gain))
            if gain[i] > best_gain:
                best_gain = gain[i]
                best_f = f
                best_thr = 0.5 * (vs[i] + vs[i + 1])

        if best_f < 0:
            continue

        go_left = X[rows, best_f] <= best_thr
        left_rows = rows[go_left]
        right_rows = rows[~go_left]
        nl = left_rows.shape[0]
        idx[lo : lo + nl] = left_rows
        idx[lo + nl : hi] = right_rows

        feature[node] = best_f
        thresh[node] = best_thr
        left[node] = n_nodes
        right[node] = n_nodes + 1
        stack_node[sp] = n_nodes
        stack_lo[sp] = lo
        stack_hi[sp] = lo + nl
        sp += 1
        stack_node[sp] = n_nodes + 1
        stack_lo[sp] = lo + nl
        stack_hi[sp] = hi
        sp += 1
        n_nodes += 2

    return feature, thresh, left, right, value, n_nodes


def _predict_rows_kernel(feature, thresh, left, right, value, X, out):
    """Per-row tree descent; out accumulates the tree's predictions."""
    for r in range(X.shape[0]):
        node = 0
        while feature[node] >= 0:
            if X[r, feature[node]] <= thresh[node]:
                node = left[node]
            else:
                node = right[node]
        out[r] = value[node]


def _predict_rows_numpy(feature, thresh, left, right, value, X, out):
    """Level-synchronous vectorized descent: the numpy path iterates tree
    depth, not rows."""
    n = X.shape[0]
    node = np.zeros(n, np.int64)
    active = feature[node] >= 0
    while active.any():
        rows = np.where(active)[0]
        cur = node[rows]
        go_left = X[rows, feature[cur]] <= thresh[cur]
        node[rows] = np.where(go_left, left[cur], right[cur])
        active = feature[node] >= 0
    out[:] = value[node]


def _get_kernels(use_numba: bool):
    if not use_numba:
        return _build_tree_kernel, _predict_rows_numpy
    if "build" not in _jit_cache:
        from numba import njit

        _jit_cache["build"] = njit(cache=True)(_build_tree_kernel)
        _jit_cache["predict"] = njit(cache=True)(_predict_rows_kernel)
    return _jit_cache["build"], _jit_cache["predict"]


def _merge_duplicates(X, y, w):
    """Canonicalize by merging identical (x, y) rows, summing weights.
    Independent of input row order, so duplicated rows and pre-weighted
    deduplicated rows yield identical training arrays."""
    rows = np.concatenate([X, y.reshape(-1, 1)], axis=1)
    uniq, inverse = np.unique(rows, axis=0, return_inverse=True)
    w_merged = np.bincount(inverse.ravel(), weights=w, minlength=uniq.shape[0])
    return np.ascontiguousarray(uniq[:, :-1]), np.ascontiguousarray(uniq[:, -1]), w_merged


class RegressionForest:
    """Ensemble of `n_trees` CART trees fit on bootstrap resamples with a
    per-tree feature subset. predict() returns (mean, stddev across trees);
    stddev is exactly 0 where all trees agree."""

    def __init__(
        self,
        n_trees: int = 32,
        feature_fraction: float = 0.8,
        min_leaf_weight: float = 2.0,
        seed: int = 0,
        use_numba: Optional[bool] = None,
    ):
        self.n_trees = n_trees
        self.feature_fraction = feature_fraction
        self.min_leaf_weight = min_leaf_weight
        self.seed = seed
        self.use_numba = numba_enabled() if use_numba is None else use_numba
        self._trees: list[tuple] = []
        self.n_features = 0

    def fit(self, X, y, weights=None) -> "RegressionForest":
        X = np.asarray(X, dtype=np.float64)
        y = np.asarray(y, dtype=np.float64)
        if X.ndim != 2 or X.shape[0] == 0:
            raise ValueError("fit requires a non-empty 2-d sample matrix")
        w = np.ones(X.shape[0]) if weights is None else np.asarray(weights, dtype=np.float64)
        X, y, w = _merge_duplicates(X, y, w)
        self.n_features = X.shape[1]
        build, _ = _get_kernels(self.use_numba)
        rng = np.random.default_rng(self.seed)
        total = int(round(w.sum()))
        total = max(total, 1)
        p = w / w.sum()
        k = max(1, int(round(self.feature_fraction * self.n_features)))
        self._trees = []
        for _ in range(self.n_trees):
            counts = rng.multinomial(total, p).astype(np.float64)
            feat_ids = np.sort(rng.choice(self.n_features, size=k, replace=False)).astype(np.int64)
            live = counts > 0
            tree = build(
                np.ascontiguousarray(X[live]),
                np.ascontiguousarray(y[live]),
                np.ascontiguousarray(counts[live]),
                feat_ids,
                float(self.min_leaf_weight),
            )
            self._trees.append(tree)
        return self

    def predict(self, X):
        if not self._trees:
            raise ValueError("predict before fit")
        X = np.ascontiguousarray(np.asarray(X, dtype=np.float64))
        if X.ndim == 1:
            X = X.reshape(1, -1)
        _, predict_rows = _get_kernels(self.use_numba)
        preds = np.empty((self.n_trees, X.shape[0]))
        for t, (feature, thresh, left, right, value, _n) in enumerate(self._trees):
            predict_rows(feature, thresh, left, right, value, X, preds[t])
        return preds.mean(axis=0), preds.std(axis=0)

    @property
    def backend(self) -> str:
        return "numba" if self.use_numba else "numpy"
