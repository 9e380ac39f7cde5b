"""Feature schemas and dense featurization of normalized records.

Each platform has a fixed list of base features (17 for OONI, 68 for
Satellite counting the five repeated response-slot groups). Categorical
features are one-hot encoded over vocabularies observed in the schema-fit
corpus plus a reserved OTHER bucket that absorbs categories unseen at fit
time; numeric features are standardized with scale parameters fit on the
same corpus. Response IP addresses themselves never enter the vector.

Derived Satellite fields follow the raw dataset's slot conventions: up to
four test attempts and five response-IP slots, with -1 marking an unfilled
slot, -2 an unsuccessful attempt and -3 an unnecessary one.
"""

from __future__ import annotations

import hashlib
import json
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .errors import EmptyCorpus, SchemaMismatch
from .ingest import (
    PLATFORM_OONI,
    PLATFORM_SATELLITE,
    NormalizedRecord,
    RawOoniMeasurement,
    RawSatelliteProbe,
)

OTHER_CATEGORY = "__other__"

KIND_CONTINUOUS = "continuous"
KIND_ONEHOT = "onehot"

SCALING_ZSCORE = "zscore"
SCALING_MINMAX = "minmax"

N_IP_SLOTS = 5
N_ATTEMPTS = 4

ERROR_GROUP_NONE = "none"
ERROR_GROUP_OTHER = "other"

# Ordered substring rules; first hit wins. Inputs are lowercased.
_ERROR_RULES: tuple[tuple[str, str], ...] = (
    ("nxdomain", "dns_nxdomain"),
    ("name_not_resolved", "dns_nxdomain"),
    ("no such host", "dns_nxdomain"),
    ("servfail", "dns_servfail"),
    ("server_failure", "dns_servfail"),
    ("server failure", "dns_servfail"),
    ("timeout", "timeout"),
    ("timed_out", "timeout"),
    ("timed out", "timeout"),
    ("deadline", "timeout"),
    ("etimedout", "timeout"),
    ("connection_refused", "connection_refused"),
    ("econnrefused", "connection_refused"),
    ("connection refused", "connection_refused"),
    ("connection_reset", "connection_reset"),
    ("econnreset", "connection_reset"),
    ("reset_by_peer", "connection_reset"),
    ("reset by peer", "connection_reset"),
    ("ssl_", "tls_error"),
    ("ssl ", "tls_error"),
    ("tls", "tls_error"),
    ("certificate", "tls_error"),
    ("http", "http_error"),
    ("status", "http_error"),
)

ERROR_GROUPS = ("none", "dns_nxdomain", "dns_servfail", "timeout",
                "connection_refused", "connection_reset", "tls_error",
                "http_error", "other")


def group_error_string(s: str | None) -> str:
    """Total mapping of failure strings to coarse error groups."""
    if s is None or s == "":
        return ERROR_GROUP_NONE
    lowered = s.lower()
    for needle, group in _ERROR_RULES:
        if needle in lowered:
            return group
    return ERROR_GROUP_OTHER


# DNS RCODE registry names (response-code assignments 0..23); negative
# sentinels pass through as their own categories.
_RCODE_NAMES = {
    0: "NoError", 1: "FormErr", 2: "ServFail", 3: "NXDomain", 4: "NotImp",
    5: "Refused", 6: "YXDomain", 7: "YXRRSet", 8: "NXRRSet", 9: "NotAuth",
    10: "NotZone", 11: "Unassigned", 12: "Unassigned", 13: "Unassigned",
    14: "Unassigned", 15: "Unassigned", 16: "BADVERS", 17: "BADKEY",
    18: "BADTIME", 19: "BADMODE", 20: "BADNAME", 21: "BADALG",
    22: "BADTRUNC", 23: "BADCOOKIE",
    -1: "unfilled", -2: "unsuccessful", -3: "unnecessary",
}


def map_rcode(code: int, stats: dict[str, int] | None = None) -> str:
    """Map a response code (or slot sentinel) to its registry class name.

    Out-of-range codes fold into the OTHER category and are counted in the
    optional stats dict under "unknown_rcode".
    """
    name = _RCODE_NAMES.get(code)
    if name is None:
        if stats is not None:
            stats["unknown_rcode"] = stats.get("unknown_rcode", 0) + 1
        return OTHER_CATEGORY
    return name


# ---------------------------------------------------------------------------
# Base feature declarations


@dataclass(frozen=True)
class BaseFeature:
    name: str
    kind: str  # continuous | onehot
    starred: bool = False  # excluded when include_starred=False
    region: bool = False  # dropped when drop_region_features=True


def _satellite_base_features() -> list[BaseFeature]:
    feats = [
        BaseFeature("untagged_controls", KIND_CONTINUOUS),
        BaseFeature("untagged_response", KIND_CONTINUOUS),
        BaseFeature("passed_liveness", KIND_CONTINUOUS),
        BaseFeature("connect_error", KIND_CONTINUOUS),
        BaseFeature("in_control_group", KIND_CONTINUOUS),
        BaseFeature("excluded_below_threshold", KIND_CONTINUOUS),
        BaseFeature("delta_time", KIND_CONTINUOUS),
        BaseFeature("control_response_start_success", KIND_CONTINUOUS),
        BaseFeature("control_response_end_success", KIND_CONTINUOUS),
        BaseFeature("control_response_start_has_type_a", KIND_CONTINUOUS),
        BaseFeature("control_response_start_rcode", KIND_ONEHOT),
        BaseFeature("control_response_end_has_type_a", KIND_CONTINUOUS),
        BaseFeature("control_response_end_rcode", KIND_ONEHOT),
        BaseFeature("test_query_successful", KIND_CONTINUOUS),
        BaseFeature("test_query_unsuccessful_attempts", KIND_CONTINUOUS),
    ]
    for i in range(1, N_ATTEMPTS + 1):
        feats.append(BaseFeature(f"test_noresponse_{i}_has_type_a", KIND_ONEHOT))
        feats.append(BaseFeature(f"test_noresponse_{i}_rcode", KIND_ONEHOT))
    feats += [
        BaseFeature("test_response_has_type_a", KIND_ONEHOT),
        BaseFeature("test_response_rcode", KIND_ONEHOT),
        BaseFeature("test_response_IP_count", KIND_CONTINUOUS),
        BaseFeature("more_IPs", KIND_CONTINUOUS),
    ]
    for i in range(1, N_IP_SLOTS + 1):
        feats.append(BaseFeature(f"include_IP_{i}", KIND_CONTINUOUS))
        feats.append(BaseFeature(f"test_response_{i}_IP_match", KIND_ONEHOT))
        feats.append(BaseFeature(f"test_response_{i}_http_match", KIND_ONEHOT))
        feats.append(BaseFeature(f"test_response_{i}_cert_match", KIND_ONEHOT))
        feats.append(BaseFeature(f"test_response_{i}_asnum_match", KIND_ONEHOT))
        feats.append(BaseFeature(f"test_response_{i}_asname_match", KIND_ONEHOT))
        feats.append(BaseFeature(f"test_response_{i}_match_percentage", KIND_CONTINUOUS))
        feats.append(BaseFeature(f"test_response_{i}_asnum", KIND_ONEHOT,
                                 starred=True, region=True))
    feats.append(BaseFeature("average_matchrate", KIND_CONTINUOUS))
    return feats


def _ooni_base_features() -> list[BaseFeature]:
    return [
        BaseFeature("measurement_start_time", KIND_CONTINUOUS, starred=True),
        BaseFeature("probe_asn", KIND_ONEHOT, region=True),
        BaseFeature("probe_network_name", KIND_ONEHOT, region=True),
        BaseFeature("resolver_asn", KIND_ONEHOT, region=True),
        BaseFeature("resolver_network_name", KIND_ONEHOT, region=True),
        BaseFeature("test_runtime", KIND_CONTINUOUS),
        BaseFeature("test_start_time", KIND_CONTINUOUS, starred=True),
        BaseFeature("dns_experiment_failure", KIND_CONTINUOUS),
        BaseFeature("dns_consistency", KIND_CONTINUOUS),
        BaseFeature("http_experiment_failure", KIND_ONEHOT, starred=True),
        BaseFeature("body_length_match", KIND_CONTINUOUS),
        BaseFeature("body_proportion", KIND_CONTINUOUS),
        BaseFeature("status_code_match", KIND_CONTINUOUS),
        BaseFeature("headers_match", KIND_CONTINUOUS),
        BaseFeature("title_match", KIND_CONTINUOUS),
        BaseFeature("test_keys_asn", KIND_ONEHOT, region=True),
        BaseFeature("test_keys_as_org_name", KIND_ONEHOT, region=True),
    ]


def base_features(platform: str) -> list[BaseFeature]:
    if platform == PLATFORM_SATELLITE:
        return _satellite_base_features()
    if platform == PLATFORM_OONI:
        return _ooni_base_features()
    raise ValueError(f"unknown platform {platform!r}")


# ---------------------------------------------------------------------------
# Raw value extraction (kind: continuous -> float, onehot -> category string)


def _tri(value: bool | None) -> float:
    if value is None:
        return -1.0
    return 1.0 if value else 0.0


def satellite_values(raw: RawSatelliteProbe) -> dict[str, float | str]:
    v: dict[str, float | str] = {
        "untagged_controls": float(raw.untagged_controls),
        "untagged_response": float(raw.untagged_response),
        "passed_liveness": float(raw.passed_liveness),
        "connect_error": float(raw.connect_error),
        "in_control_group": float(raw.in_control_group),
        "excluded_below_threshold": float(raw.excluded_below_threshold),
        "delta_time": (raw.probe_end - raw.probe_start).total_seconds(),
    }

    first = raw.control_queries[0] if raw.control_queries else None
    last = raw.control_queries[-1] if raw.control_queries else None
    v["control_response_start_success"] = float(first is not None and first.rcode == 0)
    v["control_response_end_success"] = float(last is not None and last.rcode == 0)
    v["control_response_start_has_type_a"] = float(first is not None and bool(first.answers))
    v["control_response_start_rcode"] = map_rcode(first.rcode if first else -1)
    v["control_response_end_has_type_a"] = float(last is not None and bool(last.answers))
    v["control_response_end_rcode"] = map_rcode(last.rcode if last else -1)

    attempts = raw.test_queries
    v["test_query_successful"] = float(any(q.success for q in attempts))
    v["test_query_unsuccessful_attempts"] = float(sum(1 for q in attempts if not q.success))

    for i in range(1, N_ATTEMPTS + 1):
        if i <= len(attempts):
            q = attempts[i - 1]
            if q.success:
                has = "1" if q.answers else "0"
                rcode = map_rcode(q.rcode)
            else:
                has, rcode = "-2", map_rcode(-2)
        else:
            has, rcode = "-1", map_rcode(-3)  # attempt was unnecessary
        v[f"test_noresponse_{i}_has_type_a"] = has
        v[f"test_noresponse_{i}_rcode"] = rcode

    success = raw.successful_query()
    if success is not None:
        v["test_response_has_type_a"] = "1" if success.answers else "0"
        v["test_response_rcode"] = map_rcode(success.rcode)
    else:
        v["test_response_has_type_a"] = "-1"
        v["test_response_rcode"] = map_rcode(-2)

    ips = raw.response_ips()
    v["test_response_IP_count"] = float(len(ips)) if success is not None else -1.0
    v["more_IPs"] = float(len(ips) > N_IP_SLOTS)

    # Map unique response IPs (in answer order) onto the five slots.
    slot_answers = []
    if success is not None:
        seen = set()
        for ans in success.answers:
            if ans.ip not in seen:
                seen.add(ans.ip)
                slot_answers.append(ans)
    filled_pcts = []
    for i in range(1, N_IP_SLOTS + 1):
        if i <= len(slot_answers):
            ans = slot_answers[i - 1]
            flags = ans.flags()
            pct = sum(1 for f in flags if f is True) / len(flags)
            filled_pcts.append(pct)
            v[f"include_IP_{i}"] = 1.0
            v[f"test_response_{i}_IP_match"] = str(int(_tri(ans.ip_match)))
            v[f"test_response_{i}_http_match"] = str(int(_tri(ans.http_match)))
            v[f"test_response_{i}_cert_match"] = str(int(_tri(ans.cert_match)))
            v[f"test_response_{i}_asnum_match"] = str(int(_tri(ans.asnum_match)))
            v[f"test_response_{i}_asname_match"] = str(int(_tri(ans.asname_match)))
            v[f"test_response_{i}_match_percentage"] = pct
        else:
            v[f"include_IP_{i}"] = 0.0
            for part in ("IP_match", "http_match", "cert_match",
                         "asnum_match", "asname_match"):
                v[f"test_response_{i}_{part}"] = "-1"
            v[f"test_response_{i}_match_percentage"] = -1.0
        v[f"test_response_{i}_asnum"] = "-1"  # filled by the geo-aware wrapper
    v["average_matchrate"] = sum(filled_pcts) / len(filled_pcts) if filled_pcts else -1.0
    return v


def satellite_values_with_geo(rec: NormalizedRecord, geodb) -> dict[str, float | str]:
    """satellite_values plus per-slot AS numbers from the offline geo table."""
    v = satellite_values(rec.raw)
    success = rec.raw.successful_query()
    if success is not None:
        ips = rec.response_ips[:N_IP_SLOTS]
        for i, ip in enumerate(ips, start=1):
            geo = geodb.lookup(ip)
            v[f"test_response_{i}_asnum"] = str(geo.asn) if geo.tagged else "0"
    return v


def ooni_values(raw: RawOoniMeasurement) -> dict[str, float | str]:
    return {
        "measurement_start_time": raw.measurement_start_time.timestamp(),
        "probe_asn": f"AS{raw.probe_asn}",
        "probe_network_name": raw.probe_network_name,
        "resolver_asn": f"AS{raw.resolver_asn}",
        "resolver_network_name": raw.resolver_network_name,
        "test_runtime": raw.test_runtime,
        "test_start_time": raw.test_start_time.timestamp(),
        "dns_experiment_failure": float(raw.dns_experiment_failure is not None),
        "dns_consistency": float(raw.dns_consistency == "consistent"),
        "http_experiment_failure": group_error_string(raw.http_experiment_failure),
        "body_length_match": _tri(raw.body_length_match),
        "body_proportion": -1.0 if raw.body_proportion is None else raw.body_proportion,
        "status_code_match": _tri(raw.status_code_match),
        "headers_match": _tri(raw.headers_match),
        "title_match": _tri(raw.title_match),
        "test_keys_asn": f"AS{raw.test_keys_asn}",
        "test_keys_as_org_name": raw.test_keys_as_org_name,
    }


def record_values(rec: NormalizedRecord, geodb=None) -> dict[str, float | str]:
    if rec.platform == PLATFORM_SATELLITE:
        if geodb is not None:
            return satellite_values_with_geo(rec, geodb)
        return satellite_values(rec.raw)
    return ooni_values(rec.raw)


# ---------------------------------------------------------------------------
# Schema


@dataclass
class FeatureDescriptor:
    name: str
    kind: str
    vocabulary: list[str] | None = None  # onehot only; ends with OTHER
    offset: float = 0.0  # continuous only: zscore mean / minmax min
    scale: float = 0.0  # continuous only: zscore stddev / minmax range

    @property
    def dim(self) -> int:
        return 1 if self.kind == KIND_CONTINUOUS else len(self.vocabulary)


@dataclass
class FeatureOptions:
    drop_region_features: bool = False
    include_starred: bool = True
    scaling: str = SCALING_ZSCORE


@dataclass
class FeatureSchema:
    platform: str
    descriptors: list[FeatureDescriptor]
    options: FeatureOptions = field(default_factory=FeatureOptions)

    def __post_init__(self):
        names = [d.name for d in self.descriptors]
        assert len(names) == len(set(names)), "descriptor names must be unique"
        self._index: list[tuple[FeatureDescriptor, int, dict[str, int] | None]] = []
        pos = 0
        for d in self.descriptors:
            lookup = None
            if d.kind == KIND_ONEHOT:
                lookup = {cat: i for i, cat in enumerate(d.vocabulary)}
            self._index.append((d, pos, lookup))
            pos += d.dim
        self._total_dim = pos

    @property
    def total_dim(self) -> int:
        return self._total_dim

    def expanded_names(self) -> list[str]:
        names = []
        for d in self.descriptors:
            if d.kind == KIND_CONTINUOUS:
                names.append(d.name)
            else:
                names.extend(f"{d.name}={cat}" for cat in d.vocabulary)
        return names

    def group_slices(self) -> dict[str, slice]:
        """Dense-vector slice covered by each base feature."""
        out = {}
        for d, pos, _ in self._index:
            out[d.name] = slice(pos, pos + d.dim)
        return out

    def to_json_dict(self) -> dict:
        return {
            "platform": self.platform,
            "options": {
                "drop_region_features": self.options.drop_region_features,
                "include_starred": self.options.include_starred,
                "scaling": self.options.scaling,
            },
            "descriptors": [
                {
                    "name": d.name,
                    "kind": d.kind,
                    "vocabulary": d.vocabulary,
                    "offset": d.offset,
                    "scale": d.scale,
                }
                for d in self.descriptors
            ],
        }

    @classmethod
    def from_json_dict(cls, doc: dict) -> "FeatureSchema":
        opts = FeatureOptions(**doc["options"])
        descriptors = [FeatureDescriptor(**d) for d in doc["descriptors"]]
        return cls(platform=doc["platform"], descriptors=descriptors, options=opts)

    def schema_hash(self) -> str:
        blob = json.dumps(self.to_json_dict(), sort_keys=True).encode()
        return hashlib.blake2b(blob, digest_size=16).hexdigest()

    def save(self, path: str | Path, config_hash: str = "") -> None:
        doc = self.to_json_dict()
        doc["format"] = "dnsanomaly.schema.v1"
        doc["schema_hash"] = self.schema_hash()
        doc["total_dim"] = self.total_dim
        doc["config_hash"] = config_hash
        Path(path).write_text(json.dumps(doc, sort_keys=True, indent=1))

    @classmethod
    def load(cls, path: str | Path) -> "FeatureSchema":
        return cls.from_json_dict(json.loads(Path(path).read_text()))


def active_features(platform: str, options: FeatureOptions) -> list[BaseFeature]:
    feats = base_features(platform)
    if not options.include_starred:
        feats = [f for f in feats if not f.starred]
    if options.drop_region_features:
        feats = [f for f in feats if not f.region]
    return feats


def build_schema(records: list[NormalizedRecord], platform: str,
                 options: FeatureOptions | None = None,
                 geodb=None) -> FeatureSchema:
    """Fit vocabularies and scale parameters on the given records.

    Vocabularies keep first-seen order with the OTHER bucket appended;
    constant continuous features get scale 0 and always map to 0.
    """
    options = options or FeatureOptions()
    if not records:
        raise EmptyCorpus("cannot build a schema from zero records")
    feats = active_features(platform, options)

    vocabs: dict[str, list[str]] = {f.name: [] for f in feats if f.kind == KIND_ONEHOT}
    seen: dict[str, set[str]] = {name: set() for name in vocabs}
    acc: dict[str, list[float]] = {f.name: [0.0, 0.0, np.inf, -np.inf]
                                   for f in feats if f.kind == KIND_CONTINUOUS}
    n = 0
    for rec in records:
        if rec.platform != platform:
            raise SchemaMismatch(f"record platform {rec.platform!r} != schema platform {platform!r}")
        values = record_values(rec, geodb)
        n += 1
        for f in feats:
            v = values[f.name]
            if f.kind == KIND_ONEHOT:
                cat = str(v)
                if cat not in seen[f.name]:
                    seen[f.name].add(cat)
                    vocabs[f.name].append(cat)
            else:
                a = acc[f.name]
                x = float(v)
                a[0] += x
                a[1] += x * x
                a[2] = min(a[2], x)
                a[3] = max(a[3], x)

    descriptors = []
    for f in feats:
        if f.kind == KIND_ONEHOT:
            vocab = [c for c in vocabs[f.name] if c != OTHER_CATEGORY]
            vocab.append(OTHER_CATEGORY)
            descriptors.append(FeatureDescriptor(name=f.name, kind=f.kind, vocabulary=vocab))
        else:
            total, total_sq, lo, hi = acc[f.name]
            mean = total / n
            var = max(total_sq / n - mean * mean, 0.0)
            if options.scaling == SCALING_MINMAX:
                offset, scale = lo, hi - lo
            else:
                offset, scale = mean, float(np.sqrt(var))
            descriptors.append(FeatureDescriptor(name=f.name, kind=f.kind,
                                                 offset=offset, scale=scale))
    return FeatureSchema(platform=platform, descriptors=descriptors, options=options)


# ---------------------------------------------------------------------------
# Featurization


@dataclass
class FeatureVector:
    record_id: str
    values: np.ndarray


def _fill_vector(values: dict[str, float | str], schema: FeatureSchema,
                 out: np.ndarray) -> None:
    for d, pos, lookup in schema._index:
        if d.kind == KIND_CONTINUOUS:
            x = float(values[d.name])
            out[pos] = (x - d.offset) / d.scale if d.scale > 0.0 else 0.0
        else:
            idx = lookup.get(str(values[d.name]))
            if idx is None:
                idx = lookup[OTHER_CATEGORY]
            out[pos + idx] = 1.0


def featurize(rec: NormalizedRecord, schema: FeatureSchema, geodb=None) -> FeatureVector:
    if rec.platform != schema.platform:
        raise SchemaMismatch(
            f"record platform {rec.platform!r} != schema platform {schema.platform!r}")
    out = np.zeros(schema.total_dim, dtype=np.float64)
    _fill_vector(record_values(rec, geodb), schema, out)
    if not np.isfinite(out).all():
        raise SchemaMismatch(f"non-finite feature value for record {rec.record_id}")
    return FeatureVector(record_id=rec.record_id, values=out)


def featurize_corpus(records: list[NormalizedRecord], schema: FeatureSchema,
                     geodb=None) -> tuple[np.ndarray, list[str]]:
    """Row-per-record dense matrix in input order, plus the record-id index."""
    matrix = np.zeros((len(records), schema.total_dim), dtype=np.float64)
    ids = []
    for i, rec in enumerate(records):
        if rec.platform != schema.platform:
            raise SchemaMismatch(
                f"record platform {rec.platform!r} != schema platform {schema.platform!r}")
        _fill_vector(record_values(rec, geodb), schema, matrix[i])
        ids.append(rec.record_id)
    if not np.isfinite(matrix).all():
        raise SchemaMismatch("non-finite feature values in corpus")
    return matrix, ids
