"""Gradient-boosted binary decision trees on logistic loss.

Second-order boosting: each round fits a regression tree to the gradient
and hessian of the logistic loss at the current margins, with exact greedy
splits maximizing

    gain = 1/2 [ GL^2/(HL+lambda) + GR^2/(HR+lambda) - G^2/(H+lambda) ] - gamma

and leaf weights -G/(H+lambda). A node only splits when the best gain is
strictly positive, so adding a tree never increases training loss at
moderate learning rates. Training is deterministic: ties between candidate
splits resolve to the lowest feature index, then the lowest threshold.

Per-node instance counts (cover) are recorded for the exact tree
attribution in the analysis module.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from ..errors import DimensionMismatch, SingleClassCorpus


@dataclass
class GbdtParams:
    n_trees: int = 20
    max_depth: int = 3
    learning_rate: float = 0.3
    reg_lambda: float = 1.0
    gamma: float = 0.0


@dataclass
class TreeNodes:
    """Flat binary tree; feature == -1 marks a leaf."""

    feature: np.ndarray  # int32
    threshold: np.ndarray  # float64
    left: np.ndarray  # int32
    right: np.ndarray  # int32
    value: np.ndarray  # float64, leaf weight (0 on internal nodes)
    cover: np.ndarray  # float64, training instances through the node

    def n_nodes(self) -> int:
        return len(self.feature)

    def predict(self, X: np.ndarray) -> np.ndarray:
        n = X.shape[0]
        node = np.zeros(n, dtype=np.int64)
        out = np.zeros(n, dtype=np.float64)
        active = np.arange(n)
        while active.size:
            feats = self.feature[node[active]]
            at_leaf = feats < 0
            leaf_rows = active[at_leaf]
            out[leaf_rows] = self.value[node[leaf_rows]]
            active = active[~at_leaf]
            if not active.size:
                break
            cur = node[active]
            go_left = X[active, self.feature[cur]] < self.threshold[cur]
            node[active] = np.where(go_left, self.left[cur], self.right[cur])
        return out

    def to_dict(self) -> dict:
        return {
            "feature": self.feature.tolist(),
            "threshold": self.threshold.tolist(),
            "left": self.left.tolist(),
            "right": self.right.tolist(),
            "value": self.value.tolist(),
            "cover": self.cover.tolist(),
        }

    @classmethod
    def from_dict(cls, doc: dict) -> "TreeNodes":
        return cls(
            feature=np.asarray(doc["feature"], dtype=np.int32),
            threshold=np.asarray(doc["threshold"], dtype=np.float64),
            left=np.asarray(doc["left"], dtype=np.int32),
            right=np.asarray(doc["right"], dtype=np.int32),
            value=np.asarray(doc["value"], dtype=np.float64),
            cover=np.asarray(doc["cover"], dtype=np.float64),
        )


@dataclass
class GbdtModel:
    trees: list[TreeNodes]
    params: GbdtParams
    base_score: float  # log-odds prior
    n_features: int
    seed: int = 0

    @property
    def learning_rate(self) -> float:
        return self.params.learning_rate

    def margin(self, X: np.ndarray) -> np.ndarray:
        X = np.atleast_2d(np.asarray(X, dtype=np.float64))
        if X.shape[1] != self.n_features:
            raise DimensionMismatch(
                f"expected {self.n_features} features, got {X.shape[1]}")
        out = np.full(X.shape[0], self.base_score, dtype=np.float64)
        for tree in self.trees:
            out += self.params.learning_rate * tree.predict(X)
        return out

    def to_dict(self) -> dict:
        return {
            "params": {
                "n_trees": self.params.n_trees,
                "max_depth": self.params.max_depth,
                "learning_rate": self.params.learning_rate,
                "reg_lambda": self.params.reg_lambda,
                "gamma": self.params.gamma,
            },
            "base_score": self.base_score,
            "n_features": self.n_features,
            "seed": self.seed,
            "trees": [t.to_dict() for t in self.trees],
        }

    @classmethod
    def from_dict(cls, doc: dict) -> "GbdtModel":
        return cls(
            trees=[TreeNodes.from_dict(t) for t in doc["trees"]],
            params=GbdtParams(**doc["params"]),
            base_score=doc["base_score"],
            n_features=doc["n_features"],
            seed=doc["seed"],
        )


class _TreeBuilder:
    def __init__(self, X, g, h, params: GbdtParams):
        self.X = X
        self.g = g
        self.h = h
        self.p = params
        self.feature: list[int] = []
        self.threshold: list[float] = []
        self.left: list[int] = []
        self.right: list[int] = []
        self.value: list[float] = []
        self.cover: list[float] = []

    def _new_node(self) -> int:
        self.feature.append(-1)
        self.threshold.append(0.0)
        self.left.append(-1)
        self.right.append(-1)
        self.value.append(0.0)
        self.cover.append(0.0)
        return len(self.feature) - 1

    def _best_split(self, rows: np.ndarray, G: float, H: float):
        lam = self.p.reg_lambda
        parent = G * G / (H + lam) if H + lam > 0 else 0.0
        best = None  # (gain, feature, threshold, left_rows, right_rows)
        gs = self.g[rows]
        hs = self.h[rows]
        for f in range(self.X.shape[1]):
            vals = self.X[rows, f]
            order = np.argsort(vals, kind="stable")
            sv = vals[order]
            if sv[0] == sv[-1]:
                continue
            gl = np.cumsum(gs[order])[:-1]
            hl = np.cumsum(hs[order])[:-1]
            boundary = sv[1:] != sv[:-1]
            if not boundary.any():
                continue
            gr = G - gl
            hr = H - hl
            gain = 0.5 * (gl * gl / (hl + lam) + gr * gr / (hr + lam) - parent) - self.p.gamma
            gain = np.where(boundary, gain, -np.inf)
            k = int(np.argmax(gain))
            if gain[k] > 0 and (best is None or gain[k] > best[0]):
                thr = (sv[k] + sv[k + 1]) / 2.0
                mask = vals < thr
                best = (float(gain[k]), f, float(thr), rows[mask], rows[~mask])
        return best

    def grow(self, rows: np.ndarray, depth: int) -> int:
        node = self._new_node()
        G = float(self.g[rows].sum())
        H = float(self.h[rows].sum())
        self.cover[node] = float(len(rows))
        split = None
        if depth < self.p.max_depth and len(rows) >= 2:
            split = self._best_split(rows, G, H)
        if split is None:
            denom = H + self.p.reg_lambda
            self.value[node] = -G / denom if denom > 0 else 0.0
            return node
        _, f, thr, lrows, rrows = split
        self.feature[node] = f
        self.threshold[node] = thr
        self.left[node] = self.grow(lrows, depth + 1)
        self.right[node] = self.grow(rrows, depth + 1)
        return node

    def build(self) -> TreeNodes:
        self.grow(np.arange(len(self.g)), 0)
        return TreeNodes(
            feature=np.asarray(self.feature, dtype=np.int32),
            threshold=np.asarray(self.threshold, dtype=np.float64),
            left=np.asarray(self.left, dtype=np.int32),
            right=np.asarray(self.right, dtype=np.int32),
            value=np.asarray(self.value, dtype=np.float64),
            cover=np.asarray(self.cover, dtype=np.float64),
        )


def _sigmoid(z: np.ndarray) -> np.ndarray:
    out = np.empty_like(z)
    pos = z >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-z[pos]))
    ez = np.exp(z[~pos])
    out[~pos] = ez / (1.0 + ez)
    return out


def train_gbdt(X: np.ndarray, y: np.ndarray, params: GbdtParams | None = None,
               seed: int = 0) -> GbdtModel:
    """Fit a boosted ensemble on binary labels (1 = anomalous).

    The split search is exact and deterministic, so the seed only labels the
    artifact; identical inputs produce bit-identical models.
    """
    params = params or GbdtParams()
    X = np.asarray(X, dtype=np.float64)
    y = np.asarray(y, dtype=np.float64).ravel()
    if X.ndim != 2 or X.shape[0] != y.shape[0]:
        raise DimensionMismatch(f"X {X.shape} does not align with y {y.shape}")
    if X.shape[0] == 0:
        raise DimensionMismatch("empty training set")
    pos = float(y.sum())
    if pos == 0 or pos == len(y):
        raise SingleClassCorpus("training labels contain a single class")

    p0 = pos / len(y)
    base_score = float(np.log(p0 / (1.0 - p0)))
    margins = np.full(len(y), base_score, dtype=np.float64)

    trees: list[TreeNodes] = []
    for _ in range(params.n_trees):
        prob = _sigmoid(margins)
        g = prob - y
        h = prob * (1.0 - prob)
        tree = _TreeBuilder(X, g, h, params).build()
        trees.append(tree)
        margins += params.learning_rate * tree.predict(X)

    return GbdtModel(trees=trees, params=params, base_score=base_score,
                     n_features=X.shape[1], seed=seed)


@dataclass
class GbdtPrediction:
    score: float  # probability of the anomalous class
    label: bool


def predict_gbdt(model: GbdtModel, x: np.ndarray, threshold: float = 0.5) -> GbdtPrediction:
    score = float(_sigmoid(model.margin(np.atleast_2d(x)))[0])
    return GbdtPrediction(score=score, label=score >= threshold)


def predict_gbdt_batch(model: GbdtModel, X: np.ndarray,
                       threshold: float = 0.5) -> tuple[np.ndarray, np.ndarray]:
    scores = _sigmoid(model.margin(X))
    return scores, scores >= threshold


def training_log_loss(model: GbdtModel, X: np.ndarray, y: np.ndarray,
                      n_trees: int | None = None) -> float:
    """Mean logistic loss using the first n_trees rounds (all by default)."""
    X = np.atleast_2d(np.asarray(X, dtype=np.float64))
    y = np.asarray(y, dtype=np.float64).ravel()
    margins = np.full(X.shape[0], model.base_score)
    use = model.trees if n_trees is None else model.trees[:n_trees]
    for tree in use:
        margins += model.params.learning_rate * tree.predict(X)
    # log(1 + e^m) - y*m, numerically stable
    loss = np.logaddexp(0.0, margins) - y * margins
    return float(loss.mean())
