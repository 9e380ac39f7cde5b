"""Columnar persistence for normalized records, labels and matrices.

The record file is a gzip-compressed JSON document with one array per
normalized field and the platform-specific payload as a nested ``raw``
column::

    {
      "format": "dnsanomaly.records.v1",
      "config_hash": "...",          # provenance of the producing run
      "count": N,
      "platform": "satellite",
      "columns": {
        "record_id": [...], "country": [...], "probe_time": [...],
        "test_domain": [...], "probe_asn": [...], "resolver_asn": [...],
        "response_ips": [[...], ...], "platform_anomaly": [...],
        "raw": [{...}, ...]
      }
    }

Writes are byte-deterministic: keys are sorted and the gzip member carries
a zeroed mtime, so identical inputs produce identical files.
"""

from __future__ import annotations

import csv
import gzip
import io
import json
from dataclasses import dataclass
from datetime import datetime, timezone
from pathlib import Path

import numpy as np

from .errors import ArtifactError
from .ingest import (
    PLATFORM_OONI,
    PLATFORM_SATELLITE,
    NormalizedRecord,
    parse_ooni_measurement,
    parse_satellite_line,
)

RECORDS_FORMAT = "dnsanomaly.records.v1"

_COLUMNS = (
    "record_id",
    "country",
    "probe_time",
    "test_domain",
    "probe_asn",
    "resolver_asn",
    "response_ips",
    "platform_anomaly",
    "raw",
)


def _dump_deterministic(payload: dict, path: Path) -> None:
    text = json.dumps(payload, sort_keys=True, separators=(",", ":"))
    buf = io.BytesIO()
    with gzip.GzipFile(fileobj=buf, mode="wb", mtime=0) as gz:
        gz.write(text.encode("utf-8"))
    path.write_bytes(buf.getvalue())


def write_records(path: str | Path, records: list[NormalizedRecord],
                  platform: str, config_hash: str = "") -> None:
    columns: dict[str, list] = {name: [] for name in _COLUMNS}
    for rec in records:
        if rec.platform != platform:
            raise ArtifactError(
                f"record {rec.record_id} has platform {rec.platform!r}, file is {platform!r}")
        columns["record_id"].append(rec.record_id)
        columns["country"].append(rec.country)
        columns["probe_time"].append(
            rec.probe_time.astimezone(timezone.utc).strftime("%Y-%m-%dT%H:%M:%SZ"))
        columns["test_domain"].append(rec.test_domain)
        columns["probe_asn"].append(rec.probe_asn)
        columns["resolver_asn"].append(rec.resolver_asn)
        columns["response_ips"].append(list(rec.response_ips))
        columns["platform_anomaly"].append(rec.platform_anomaly)
        columns["raw"].append(rec.raw.to_doc())
    payload = {
        "format": RECORDS_FORMAT,
        "config_hash": config_hash,
        "count": len(records),
        "platform": platform,
        "columns": columns,
    }
    _dump_deterministic(payload, Path(path))


def read_records(path: str | Path) -> list[NormalizedRecord]:
    path = Path(path)
    try:
        with gzip.open(path, "rt", encoding="utf-8") as fh:
            payload = json.load(fh)
    except OSError as exc:
        raise ArtifactError(f"cannot read record file {path}: {exc}") from exc
    if payload.get("format") != RECORDS_FORMAT:
        raise ArtifactError(f"{path} is not a {RECORDS_FORMAT} file")
    platform = payload["platform"]
    cols = payload["columns"]
    records = []
    for i in range(payload["count"]):
        raw_doc = json.dumps(cols["raw"][i])
        if platform == PLATFORM_SATELLITE:
            raw = parse_satellite_line(raw_doc)
        elif platform == PLATFORM_OONI:
            raw = parse_ooni_measurement(raw_doc)
        else:
            raise ArtifactError(f"unknown platform {platform!r} in {path}")
        records.append(NormalizedRecord(
            record_id=cols["record_id"][i],
            platform=platform,
            country=cols["country"][i],
            probe_time=datetime.strptime(
                cols["probe_time"][i], "%Y-%m-%dT%H:%M:%SZ").replace(tzinfo=timezone.utc),
            test_domain=cols["test_domain"][i],
            probe_asn=cols["probe_asn"][i],
            resolver_asn=cols["resolver_asn"][i],
            response_ips=list(cols["response_ips"][i]),
            platform_anomaly=cols["platform_anomaly"][i],
            raw=raw,
        ))
    return records


# ---------------------------------------------------------------------------
# Label sidecar


@dataclass
class LabelRow:
    record_id: str
    platform_label: str  # anomaly | clean
    gfwatch_label: str | None  # censored | uncensored | None outside CN
    curated_class: str  # clean | anomalous


def write_labels(path: str | Path, rows: list[LabelRow], config_hash: str = "") -> None:
    with open(path, "w", newline="") as fh:
        fh.write(f"# config_hash={config_hash}\n")
        writer = csv.writer(fh)
        writer.writerow(["record_id", "platform_label", "gfwatch_label", "curated_class"])
        for row in rows:
            writer.writerow([
                row.record_id,
                row.platform_label,
                "" if row.gfwatch_label is None else row.gfwatch_label,
                row.curated_class,
            ])


def read_labels(path: str | Path) -> list[LabelRow]:
    rows = []
    with open(path, newline="") as fh:
        lines = (line for line in fh if not line.startswith("#"))
        reader = csv.DictReader(lines)
        for rec in reader:
            rows.append(LabelRow(
                record_id=rec["record_id"],
                platform_label=rec["platform_label"],
                gfwatch_label=rec["gfwatch_label"] or None,
                curated_class=rec["curated_class"],
            ))
    return rows


# ---------------------------------------------------------------------------
# Feature matrix persistence


def write_matrix(path: str | Path, matrix: np.ndarray, record_ids: list[str],
                 schema_hash: str, config_hash: str = "") -> None:
    meta = json.dumps({"schema_hash": schema_hash, "config_hash": config_hash},
                      sort_keys=True)
    np.savez_compressed(
        path,
        matrix=matrix.astype(np.float64),
        record_ids=np.asarray(record_ids, dtype="U"),
        meta=np.asarray(meta),
    )


def read_matrix(path: str | Path) -> tuple[np.ndarray, list[str], dict]:
    with np.load(path, allow_pickle=False) as data:
        matrix = data["matrix"]
        ids = [str(x) for x in data["record_ids"]]
        meta = json.loads(str(data["meta"]))
    return matrix, ids, meta
