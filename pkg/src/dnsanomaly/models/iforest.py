"""Isolation forest for unsupervised anomaly scoring.

Each tree is grown on a random subsample of size psi: nodes pick a uniform
random feature (within the tree's feature subset) whose values still vary,
then a uniform split value inside that feature's range, until single points
are isolated or the height cap ceil(log2 psi) is hit. The anomaly score is

    s(x) = 2 ** ( -E[h(x)] / c(psi) )

where h(x) is the split-path depth plus the average-path adjustment c(size)
at the terminal node, and c(n) = 2 H(n-1) - 2 (n-1)/n with exact harmonic
numbers (c(2) = 1). The decision threshold is the (1 - contamination)
quantile of the training scores: exactly ceil(contamination * n) training
points score strictly above it when scores are distinct.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from functools import lru_cache

import numpy as np

from ..errors import CorpusTooSmall, DimensionMismatch


@dataclass
class IsolationForestParams:
    n_estimators: int = 100
    max_features: float = 1.0  # fraction of feature dims available per tree
    contamination: float = 0.1  # in (0, 0.5]
    subsample_size: int = 256  # psi

    def __post_init__(self):
        if not 0.0 < self.contamination <= 0.5:
            raise ValueError(f"contamination must be in (0, 0.5], got {self.contamination}")
        if not 0.0 < self.max_features <= 1.0:
            raise ValueError(f"max_features must be in (0, 1], got {self.max_features}")


@lru_cache(maxsize=None)
def _harmonic(k: int) -> float:
    return sum(1.0 / i for i in range(1, k + 1))


def average_path_length(n: int) -> float:
    """c(n): expected search depth of an unsuccessful BST lookup in n points."""
    if n <= 1:
        return 0.0
    return 2.0 * _harmonic(n - 1) - 2.0 * (n - 1) / n


@dataclass
class IsoTree:
    """Flat tree; feature == -1 marks an external node with `size` points."""

    feature: np.ndarray  # int32
    value: np.ndarray  # float64 split values
    left: np.ndarray  # int32
    right: np.ndarray  # int32
    size: np.ndarray  # int32 training points at external nodes

    def path_lengths(self, X: np.ndarray) -> np.ndarray:
        n = X.shape[0]
        node = np.zeros(n, dtype=np.int64)
        depth = np.zeros(n, dtype=np.float64)
        out = np.zeros(n, dtype=np.float64)
        active = np.arange(n)
        while active.size:
            feats = self.feature[node[active]]
            external = feats < 0
            done = active[external]
            sizes = self.size[node[done]]
            out[done] = depth[done] + np.array([average_path_length(int(s)) for s in sizes])
            active = active[~external]
            if not active.size:
                break
            cur = node[active]
            go_left = X[active, self.feature[cur]] < self.value[cur]
            node[active] = np.where(go_left, self.left[cur], self.right[cur])
            depth[active] += 1.0
        return out

    def to_dict(self) -> dict:
        return {
            "feature": self.feature.tolist(),
            "value": self.value.tolist(),
            "left": self.left.tolist(),
            "right": self.right.tolist(),
            "size": self.size.tolist(),
        }

    @classmethod
    def from_dict(cls, doc: dict) -> "IsoTree":
        return cls(
            feature=np.asarray(doc["feature"], dtype=np.int32),
            value=np.asarray(doc["value"], dtype=np.float64),
            left=np.asarray(doc["left"], dtype=np.int32),
            right=np.asarray(doc["right"], dtype=np.int32),
            size=np.asarray(doc["size"], dtype=np.int32),
        )


@dataclass
class IsolationForestModel:
    trees: list[IsoTree]
    params: IsolationForestParams
    subsample_size: int
    n_features: int
    score_threshold: float
    seed: int = 0

    def to_dict(self) -> dict:
        return {
            "params": {
                "n_estimators": self.params.n_estimators,
                "max_features": self.params.max_features,
                "contamination": self.params.contamination,
                "subsample_size": self.params.subsample_size,
            },
            "subsample_size": self.subsample_size,
            "n_features": self.n_features,
            "score_threshold": self.score_threshold,
            "seed": self.seed,
            "trees": [t.to_dict() for t in self.trees],
        }

    @classmethod
    def from_dict(cls, doc: dict) -> "IsolationForestModel":
        return cls(
            trees=[IsoTree.from_dict(t) for t in doc["trees"]],
            params=IsolationForestParams(**doc["params"]),
            subsample_size=doc["subsample_size"],
            n_features=doc["n_features"],
            score_threshold=doc["score_threshold"],
            seed=doc["seed"],
        )


class _IsoTreeBuilder:
    def __init__(self, X: np.ndarray, features: np.ndarray, height_limit: int,
                 rng: np.random.Generator):
        self.X = X
        self.features = features
        self.height_limit = height_limit
        self.rng = rng
        self.feature: list[int] = []
        self.value: list[float] = []
        self.left: list[int] = []
        self.right: list[int] = []
        self.size: list[int] = []

    def _new_node(self) -> int:
        self.feature.append(-1)
        self.value.append(0.0)
        self.left.append(-1)
        self.right.append(-1)
        self.size.append(0)
        return len(self.feature) - 1

    def grow(self, rows: np.ndarray, depth: int) -> int:
        node = self._new_node()
        if depth >= self.height_limit or len(rows) <= 1:
            self.size[node] = len(rows)
            return node
        sub = self.X[np.ix_(rows, self.features)]
        lo = sub.min(axis=0)
        hi = sub.max(axis=0)
        usable = np.flatnonzero(lo < hi)
        if usable.size == 0:
            self.size[node] = len(rows)
            return node
        pick = usable[int(self.rng.integers(usable.size))]
        f = int(self.features[pick])
        split = float(self.rng.uniform(lo[pick], hi[pick]))
        mask = self.X[rows, f] < split
        lrows = rows[mask]
        rrows = rows[~mask]
        if len(lrows) == 0 or len(rrows) == 0:  # degenerate boundary draw
            self.size[node] = len(rows)
            return node
        self.feature[node] = f
        self.value[node] = split
        self.left[node] = self.grow(lrows, depth + 1)
        self.right[node] = self.grow(rrows, depth + 1)
        return node

    def build(self, rows: np.ndarray) -> IsoTree:
        self.grow(rows, 0)
        return IsoTree(
            feature=np.asarray(self.feature, dtype=np.int32),
            value=np.asarray(self.value, dtype=np.float64),
            left=np.asarray(self.left, dtype=np.int32),
            right=np.asarray(self.right, dtype=np.int32),
            size=np.asarray(self.size, dtype=np.int32),
        )


def _raw_scores(trees: list[IsoTree], psi: int, X: np.ndarray) -> np.ndarray:
    depths = np.zeros(X.shape[0], dtype=np.float64)
    for tree in trees:
        depths += tree.path_lengths(X)
    mean_depth = depths / len(trees)
    return np.exp2(-mean_depth / average_path_length(psi))


def train_iforest(X_clean: np.ndarray, params: IsolationForestParams | None = None,
                  seed: int = 0) -> IsolationForestModel:
    """Grow the forest on clean data and calibrate the score threshold.

    Trees get independent spawned seeds, so per-tree growth is order
    independent and reproducible.
    """
    params = params or IsolationForestParams()
    X = np.asarray(X_clean, dtype=np.float64)
    if X.ndim != 2:
        raise DimensionMismatch(f"expected 2-D matrix, got shape {X.shape}")
    n, d = X.shape
    psi = params.subsample_size
    if n < psi:
        raise CorpusTooSmall(f"need at least subsample_size={psi} rows, got {n}")
    height_limit = max(1, math.ceil(math.log2(psi)))
    n_sub_features = max(1, math.ceil(params.max_features * d))

    seeds = np.random.SeedSequence(seed).spawn(params.n_estimators)
    trees = []
    for tree_seed in seeds:
        rng = np.random.default_rng(tree_seed)
        rows = rng.choice(n, size=psi, replace=False)
        if n_sub_features < d:
            features = np.sort(rng.choice(d, size=n_sub_features, replace=False))
        else:
            features = np.arange(d)
        local = np.arange(psi)
        builder = _IsoTreeBuilder(X[rows], features, height_limit, rng)
        trees.append(builder.build(local))

    train_scores = _raw_scores(trees, psi, X)
    k = math.ceil(params.contamination * n)
    sorted_desc = np.sort(train_scores)[::-1]
    threshold = float(sorted_desc[min(k, n - 1)])

    return IsolationForestModel(trees=trees, params=params, subsample_size=psi,
                                n_features=d, score_threshold=threshold, seed=seed)


@dataclass
class IsoScore:
    score: float
    label: bool  # anomalous iff score strictly above threshold


def score_iforest_batch(model: IsolationForestModel,
                        X: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    X = np.atleast_2d(np.asarray(X, dtype=np.float64))
    if X.shape[1] != model.n_features:
        raise DimensionMismatch(
            f"expected {model.n_features} features, got {X.shape[1]}")
    scores = _raw_scores(model.trees, model.subsample_size, X)
    return scores, scores > model.score_threshold


def score_iforest(model: IsolationForestModel, x: np.ndarray) -> IsoScore:
    scores, labels = score_iforest_batch(model, np.atleast_2d(x))
    return IsoScore(score=float(scores[0]), label=bool(labels[0]))
