"""Exhaustive hyperparameter search and k-fold cross-validation."""

from __future__ import annotations

import itertools
from dataclasses import dataclass
from typing import Callable, Mapping, Sequence

import numpy as np

from ..errors import CorpusTooSmall
from ..evaluation import Metrics, compute_metrics


def expand_grid(grid: Mapping[str, Sequence]) -> list[dict]:
    """Cartesian product of the axes, in key order then value order."""
    keys = list(grid)
    combos = itertools.product(*(grid[k] for k in keys))
    return [dict(zip(keys, combo)) for combo in combos]


@dataclass
class GridCell:
    params: dict
    score: float


def grid_search(train, val, grid, objective: Callable) -> tuple[dict, list[GridCell]]:
    """Evaluate every cell with objective(train, val, params) -> float.

    Returns the argmax cell's params plus the full per-cell report. Ties
    keep the earliest cell in grid order.
    """
    if isinstance(grid, Mapping):
        cells = expand_grid(grid)
    else:
        cells = [dict(c) for c in grid]
    if not cells:
        raise ValueError("empty hyperparameter grid")
    report = []
    best: GridCell | None = None
    for params in cells:
        score = float(objective(train, val, params))
        cell = GridCell(params=params, score=score)
        report.append(cell)
        if best is None or cell.score > best.score:
            best = cell
    return dict(best.params), report


@dataclass
class CvReport:
    fold_metrics: list[Metrics]
    mean: dict[str, float | None]
    stddev: dict[str, float | None]


_CV_FIELDS = ("tpr", "fpr", "tnr", "fnr", "accuracy", "precision")


def kfold_cv(X: np.ndarray, y: np.ndarray, k: int,
             fit_predict: Callable, seed: int = 0) -> CvReport:
    """Seeded contiguous-shuffle fold assignment.

    fit_predict(X_train, y_train, X_test) must return predicted boolean
    labels for X_test. Folds are disjoint and their union is the corpus.
    """
    if k < 2:
        raise ValueError("k must be >= 2")
    X = np.asarray(X)
    y = np.asarray(y)
    n = X.shape[0]
    if n < k:
        raise CorpusTooSmall(f"need at least k={k} rows, got {n}")
    rng = np.random.default_rng(seed)
    perm = rng.permutation(n)
    folds = np.array_split(perm, k)

    fold_metrics = []
    for fold in folds:
        mask = np.zeros(n, dtype=bool)
        mask[fold] = True
        preds = fit_predict(X[~mask], y[~mask], X[mask])
        fold_metrics.append(compute_metrics(y[mask], preds))

    mean: dict[str, float | None] = {}
    stddev: dict[str, float | None] = {}
    for name in _CV_FIELDS:
        vals = [getattr(m, name) for m in fold_metrics]
        vals = [v for v in vals if v is not None]
        if not vals:
            mean[name] = stddev[name] = None
        else:
            arr = np.asarray(vals, dtype=np.float64)
            mean[name] = float(arr.mean())
            stddev[name] = float(arr.std())
    return CvReport(fold_metrics=fold_metrics, mean=mean, stddev=stddev)
