from .gbdt import GbdtModel, GbdtParams, predict_gbdt, predict_gbdt_batch, train_gbdt
from .iforest import (
    IsolationForestModel,
    IsolationForestParams,
    score_iforest,
    score_iforest_batch,
    train_iforest,
)
from .ocsvm import (
    LinearOcsvmModel,
    OcsvmParams,
    decision_ocsvm,
    decision_ocsvm_batch,
    ocsvm_objective,
    train_ocsvm_sgd,
)
from .search import expand_grid, grid_search, kfold_cv
from .artifact import load_model, save_model

__all__ = [
    "GbdtModel", "GbdtParams", "train_gbdt", "predict_gbdt", "predict_gbdt_batch",
    "IsolationForestModel", "IsolationForestParams", "train_iforest",
    "score_iforest", "score_iforest_batch",
    "LinearOcsvmModel", "OcsvmParams", "train_ocsvm_sgd", "decision_ocsvm",
    "decision_ocsvm_batch", "ocsvm_objective",
    "expand_grid", "grid_search", "kfold_cv",
    "save_model", "load_model",
]
