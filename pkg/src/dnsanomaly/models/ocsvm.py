"""Linear one-class SVM trained with stochastic subgradient descent.

Minimizes, over weights w and offset rho,

    J(w, rho) = 1/2 ||w||^2 + 1/(nu n) sum_i max(0, rho - w.x_i) - rho

with one pass per epoch over a seeded shuffle of the rows and step size
eta_t = 1 / (lr_lambda * t) on the global step counter. The full-batch
objective is recorded after every epoch.

After the last epoch the offset is refit exactly (holding w fixed): the
minimizer of J in rho alone is the ceil(nu*n)-th smallest projection
w.x_i. This final coordinate step never increases the objective and pins
the boundary to a training point, so at most a nu fraction of training
rows scores strictly negative - without it the final SGD iterate can land
on either side of the optimum by a vanishing but sign-flipping margin.
Disable with exact_offset_refit=False to keep the raw final iterate.

The decision function is the signed margin w.x - rho; a record is labeled
anomalous when its margin is strictly negative (the boundary itself is
normal).
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from ..errors import DimensionMismatch


@dataclass
class OcsvmParams:
    nu: float = 0.1  # in (0, 1]
    max_iterations: int = 40  # epochs over the training set
    lr_lambda: float = 1.0  # eta_t = 1 / (lr_lambda * t)
    exact_offset_refit: bool = True

    def __post_init__(self):
        if not 0.0 < self.nu <= 1.0:
            raise ValueError(f"nu must be in (0, 1], got {self.nu}")
        if self.max_iterations < 1:
            raise ValueError("max_iterations must be >= 1")


@dataclass
class LinearOcsvmModel:
    weights: np.ndarray
    rho: float
    nu: float
    max_iterations: int
    objective_curve: list[float] = field(default_factory=list)
    seed: int = 0

    def to_dict(self) -> dict:
        return {
            "weights": self.weights.tolist(),
            "rho": self.rho,
            "nu": self.nu,
            "max_iterations": self.max_iterations,
            "objective_curve": list(self.objective_curve),
            "seed": self.seed,
        }

    @classmethod
    def from_dict(cls, doc: dict) -> "LinearOcsvmModel":
        return cls(
            weights=np.asarray(doc["weights"], dtype=np.float64),
            rho=doc["rho"],
            nu=doc["nu"],
            max_iterations=doc["max_iterations"],
            objective_curve=list(doc["objective_curve"]),
            seed=doc["seed"],
        )


def ocsvm_objective(w: np.ndarray, rho: float, X: np.ndarray, nu: float) -> float:
    margins = rho - X @ w
    hinge = np.maximum(margins, 0.0).sum()
    return float(0.5 * w @ w + hinge / (nu * len(X)) - rho)


def train_ocsvm_sgd(X_clean: np.ndarray, params: OcsvmParams | None = None,
                    seed: int = 0) -> LinearOcsvmModel:
    params = params or OcsvmParams()
    X = np.atleast_2d(np.asarray(X_clean, dtype=np.float64))
    n, d = X.shape
    if n == 0:
        raise DimensionMismatch("empty training set")

    rng = np.random.default_rng(seed)
    w = np.zeros(d, dtype=np.float64)
    rho = 0.0
    inv_nu = 1.0 / params.nu
    t = 0
    curve: list[float] = []
    for _ in range(params.max_iterations):
        for i in rng.permutation(n):
            t += 1
            eta = 1.0 / (params.lr_lambda * t)
            xi = X[i]
            active = (xi @ w - rho) < 0.0
            # d/dw = w - [active] x_i / nu ; d/drho = [active]/nu - 1
            w *= 1.0 - eta
            if active:
                w += (eta * inv_nu) * xi
                rho -= eta * (inv_nu - 1.0)
            else:
                rho += eta
        curve.append(ocsvm_objective(w, rho, X, params.nu))

    if params.exact_offset_refit:
        k = min(math.ceil(params.nu * n), n)
        dots = X @ w
        rho = float(np.partition(dots, k - 1)[k - 1])
        curve.append(ocsvm_objective(w, rho, X, params.nu))

    return LinearOcsvmModel(weights=w, rho=float(rho), nu=params.nu,
                            max_iterations=params.max_iterations,
                            objective_curve=curve, seed=seed)


def decision_ocsvm_batch(model: LinearOcsvmModel, X: np.ndarray) -> np.ndarray:
    X = np.atleast_2d(np.asarray(X, dtype=np.float64))
    if X.shape[1] != model.weights.shape[0]:
        raise DimensionMismatch(
            f"expected {model.weights.shape[0]} features, got {X.shape[1]}")
    return X @ model.weights - model.rho


def decision_ocsvm(model: LinearOcsvmModel, x: np.ndarray) -> float:
    """Signed margin; anomalous iff strictly negative."""
    return float(decision_ocsvm_batch(model, np.atleast_2d(x))[0])
