"""Self-describing model artifact files.

One JSON document per model, embedding the family, hyperparameters, seed,
the feature-schema hash the model was trained against, and every parameter.
Loading verifies the schema hash when the caller supplies one; a mismatch
is an error rather than a silently misaligned prediction.
"""

from __future__ import annotations

import json
from pathlib import Path

from ..errors import ArtifactError
from .gbdt import GbdtModel
from .iforest import IsolationForestModel
from .ocsvm import LinearOcsvmModel

ARTIFACT_FORMAT = "dnsanomaly.model.v1"

FAMILY_GBDT = "gbdt"
FAMILY_IFOREST = "iforest"
FAMILY_OCSVM = "ocsvm"

_FAMILIES = {
    GbdtModel: FAMILY_GBDT,
    IsolationForestModel: FAMILY_IFOREST,
    LinearOcsvmModel: FAMILY_OCSVM,
}
_LOADERS = {
    FAMILY_GBDT: GbdtModel.from_dict,
    FAMILY_IFOREST: IsolationForestModel.from_dict,
    FAMILY_OCSVM: LinearOcsvmModel.from_dict,
}

Model = GbdtModel | IsolationForestModel | LinearOcsvmModel


def model_family(model: Model) -> str:
    family = _FAMILIES.get(type(model))
    if family is None:
        raise ArtifactError(f"unknown model type {type(model).__name__}")
    return family


def save_model(path: str | Path, model: Model, schema_hash: str,
               config_hash: str = "") -> None:
    doc = {
        "format": ARTIFACT_FORMAT,
        "family": model_family(model),
        "schema_hash": schema_hash,
        "config_hash": config_hash,
        "model": model.to_dict(),
    }
    Path(path).write_text(json.dumps(doc, sort_keys=True, separators=(",", ":")))


def load_model(path: str | Path, expect_schema_hash: str | None = None
               ) -> tuple[Model, dict]:
    """Returns (model, header) where header carries family/hashes."""
    try:
        doc = json.loads(Path(path).read_text())
    except (OSError, json.JSONDecodeError) as exc:
        raise ArtifactError(f"cannot read model artifact {path}: {exc}") from exc
    if doc.get("format") != ARTIFACT_FORMAT:
        raise ArtifactError(f"{path} is not a {ARTIFACT_FORMAT} file")
    family = doc.get("family")
    loader = _LOADERS.get(family)
    if loader is None:
        raise ArtifactError(f"unknown model family {family!r} in {path}")
    if expect_schema_hash is not None and doc.get("schema_hash") != expect_schema_hash:
        raise ArtifactError(
            f"model {path} was trained against schema {doc.get('schema_hash')}, "
            f"expected {expect_schema_hash}")
    header = {k: doc[k] for k in ("format", "family", "schema_hash", "config_hash")}
    return loader(doc["model"]), header
