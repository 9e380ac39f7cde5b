"""Parsers for raw Satellite and OONI measurement documents.

Both platforms publish newline-delimited JSON, one measurement per line.
The field subsets parsed here are the ones the downstream curation and
featurization stages consume; everything else in a line is ignored.

Satellite line layout (v2.2-style per-line documents)::

    {
      "test_domain": "example.com",
      "probe_start": "2021-07-01T00:00:00Z",
      "probe_end":   "2021-07-01T00:00:02Z",
      "resolver_ip": "172.16.0.1",
      "resolver_country": "CN",
      "control_queries": [{"rcode": 0, "answers": ["10.0.0.1"]}, ...],
      "test_queries": [
        {"success": true, "rcode": 0,
         "answers": [{"ip": "10.0.0.1", "ip_match": true, "http_match": true,
                      "cert_match": null, "asnum_match": true,
                      "asname_match": true}]},
        ...                                  # up to 4 attempts
      ],
      "anomaly": false, "excluded": false, "excluded_below_threshold": false,
      "untagged_controls": false, "untagged_response": false,
      "passed_liveness": true, "connect_error": false, "in_control_group": true
    }

A control query that failed at the transport level (no DNS response at all)
carries ``rcode: -2`` and an empty answer list.

OONI line layout (web-connectivity measurements)::

    {
      "measurement_start_time": "2021-07-01 00:00:01",
      "test_start_time": "2021-07-01 00:00:00",
      "test_runtime": 1.5,
      "probe_asn": "AS4134", "probe_cc": "CN", "probe_network_name": "...",
      "resolver_asn": "AS4134", "resolver_network_name": "...",
      "input": "https://example.com/",
      "test_keys": {
        "dns_experiment_failure": null, "http_experiment_failure": null,
        "dns_consistency": "consistent",
        "body_length_match": true, "body_proportion": 0.98,
        "status_code_match": true, "headers_match": true, "title_match": true,
        "control_failure": null, "blocking": false,
        "queries": [{"answers": [{"answer_type": "A", "ipv4": "10.0.0.1"}]}],
        "asn": 65001, "as_org_name": "ExampleNet"
      }
    }
"""

from __future__ import annotations

import gzip
import hashlib
import ipaddress
import json
import re
from dataclasses import dataclass, field
from datetime import datetime, timezone
from pathlib import Path
from typing import Iterable, Iterator

from .errors import (
    IngestIoError,
    InvalidIp,
    MalformedDocument,
    SchemaViolation,
)

PLATFORM_SATELLITE = "satellite"
PLATFORM_OONI = "ooni"

# Sentinels used for unattempted / failed query slots, matching the raw
# datasets' own conventions: -1 unfilled, -2 unsuccessful, -3 unnecessary.
RCODE_UNFILLED = -1
RCODE_UNSUCCESSFUL = -2
RCODE_UNNECESSARY = -3

MAX_TEST_ATTEMPTS = 4

VERDICT_ACCESSIBLE = "accessible"
VERDICT_DNS = "dns"
VERDICT_OTHER = "other"


# ---------------------------------------------------------------------------
# Raw record types


@dataclass
class ControlQuery:
    rcode: int
    answers: list[str]

    def to_doc(self) -> dict:
        return {"rcode": self.rcode, "answers": list(self.answers)}


@dataclass
class TestAnswer:
    ip: str
    # tri-state match flags: True / False / None (untagged or unavailable)
    ip_match: bool | None = None
    http_match: bool | None = None
    cert_match: bool | None = None
    asnum_match: bool | None = None
    asname_match: bool | None = None

    def flags(self) -> tuple[bool | None, ...]:
        return (self.ip_match, self.http_match, self.cert_match,
                self.asnum_match, self.asname_match)

    def to_doc(self) -> dict:
        return {
            "ip": self.ip,
            "ip_match": self.ip_match,
            "http_match": self.http_match,
            "cert_match": self.cert_match,
            "asnum_match": self.asnum_match,
            "asname_match": self.asname_match,
        }


@dataclass
class TestQuery:
    success: bool
    rcode: int
    answers: list[TestAnswer]

    def to_doc(self) -> dict:
        return {
            "success": self.success,
            "rcode": self.rcode,
            "answers": [a.to_doc() for a in self.answers],
        }


@dataclass
class RawSatelliteProbe:
    test_domain: str
    probe_start: datetime
    probe_end: datetime
    resolver_ip: str
    resolver_country: str
    control_queries: list[ControlQuery]
    test_queries: list[TestQuery]
    anomaly_flag: bool
    excluded_flag: bool
    excluded_below_threshold: bool
    untagged_controls: bool
    untagged_response: bool
    passed_liveness: bool
    connect_error: bool
    in_control_group: bool

    def successful_query(self) -> TestQuery | None:
        for q in self.test_queries:
            if q.success:
                return q
        return None

    def response_ips(self) -> list[str]:
        """Unique answer IPs of the successful test query, in answer order."""
        q = self.successful_query()
        if q is None:
            return []
        seen: list[str] = []
        for a in q.answers:
            if a.ip not in seen:
                seen.append(a.ip)
        return seen

    def to_doc(self) -> dict:
        return {
            "test_domain": self.test_domain,
            "probe_start": _fmt_ts(self.probe_start),
            "probe_end": _fmt_ts(self.probe_end),
            "resolver_ip": self.resolver_ip,
            "resolver_country": self.resolver_country,
            "control_queries": [q.to_doc() for q in self.control_queries],
            "test_queries": [q.to_doc() for q in self.test_queries],
            "anomaly": self.anomaly_flag,
            "excluded": self.excluded_flag,
            "excluded_below_threshold": self.excluded_below_threshold,
            "untagged_controls": self.untagged_controls,
            "untagged_response": self.untagged_response,
            "passed_liveness": self.passed_liveness,
            "connect_error": self.connect_error,
            "in_control_group": self.in_control_group,
        }


@dataclass
class RawOoniMeasurement:
    measurement_start_time: datetime
    test_start_time: datetime
    test_runtime: float
    probe_asn: int
    probe_cc: str
    probe_network_name: str
    resolver_asn: int
    resolver_network_name: str
    test_domain: str
    dns_experiment_failure: str | None
    http_experiment_failure: str | None
    dns_consistency: str  # "consistent" | "inconsistent"
    body_length_match: bool | None
    body_proportion: float | None  # None when invalid
    status_code_match: bool | None
    headers_match: bool | None
    title_match: bool | None
    control_failed: bool
    blocking_verdict: str  # accessible | dns | other
    answer_ips: list[str]
    test_keys_asn: int
    test_keys_as_org_name: str

    def to_doc(self) -> dict:
        return {
            "measurement_start_time": _fmt_ooni_ts(self.measurement_start_time),
            "test_start_time": _fmt_ooni_ts(self.test_start_time),
            "test_runtime": self.test_runtime,
            "probe_asn": f"AS{self.probe_asn}",
            "probe_cc": self.probe_cc,
            "probe_network_name": self.probe_network_name,
            "resolver_asn": f"AS{self.resolver_asn}",
            "resolver_network_name": self.resolver_network_name,
            "input": f"https://{self.test_domain}/",
            "test_keys": {
                "dns_experiment_failure": self.dns_experiment_failure,
                "http_experiment_failure": self.http_experiment_failure,
                "dns_consistency": self.dns_consistency,
                "body_length_match": self.body_length_match,
                "body_proportion": self.body_proportion,
                "status_code_match": self.status_code_match,
                "headers_match": self.headers_match,
                "title_match": self.title_match,
                "control_failure": "unreachable" if self.control_failed else None,
                "blocking": _verdict_to_blocking(self.blocking_verdict),
                "queries": [
                    {
                        "answers": [
                            {"answer_type": "A", "ipv4": ip}
                            for ip in self.answer_ips
                        ]
                    }
                ],
                "asn": self.test_keys_asn,
                "as_org_name": self.test_keys_as_org_name,
            },
        }


@dataclass
class NormalizedRecord:
    """Platform-neutral probe record the rest of the pipeline operates on."""

    record_id: str
    platform: str  # satellite | ooni
    country: str
    probe_time: datetime
    test_domain: str
    probe_asn: int
    resolver_asn: int
    response_ips: list[str]
    platform_anomaly: bool
    raw: RawSatelliteProbe | RawOoniMeasurement


@dataclass
class GeoMeta:
    asn: int
    as_name: str
    country: str
    tagged: bool


@dataclass
class IngestStats:
    parsed: int = 0
    malformed: int = 0
    schema_violations: int = 0

    def as_dict(self) -> dict:
        return {
            "parsed": self.parsed,
            "malformed": self.malformed,
            "schema_violations": self.schema_violations,
        }


# ---------------------------------------------------------------------------
# Field helpers


def _fmt_ts(ts: datetime) -> str:
    return ts.astimezone(timezone.utc).strftime("%Y-%m-%dT%H:%M:%SZ")


def _fmt_ooni_ts(ts: datetime) -> str:
    return ts.astimezone(timezone.utc).strftime("%Y-%m-%d %H:%M:%S")


def _parse_ts(value, offset: int, formats: tuple[str, ...]) -> datetime:
    if not isinstance(value, str):
        raise SchemaViolation(f"timestamp must be a string, got {value!r}", offset)
    for fmt in formats:
        try:
            return datetime.strptime(value, fmt).replace(tzinfo=timezone.utc)
        except ValueError:
            continue
    raise SchemaViolation(f"unparseable timestamp {value!r}", offset)


def _require(doc: dict, key: str, offset: int):
    if key not in doc:
        raise SchemaViolation(f"missing required field {key!r}", offset)
    return doc[key]


def _as_bool(value, key: str, offset: int) -> bool:
    if not isinstance(value, bool):
        raise SchemaViolation(f"field {key!r} must be a boolean, got {value!r}", offset)
    return value


def _as_tri(value, key: str, offset: int) -> bool | None:
    if value is None or isinstance(value, bool):
        return value
    raise SchemaViolation(f"field {key!r} must be true/false/null, got {value!r}", offset)


def _check_ip(ip, offset: int) -> str:
    if not isinstance(ip, str):
        raise SchemaViolation(f"IP must be a string, got {ip!r}", offset)
    try:
        ipaddress.ip_address(ip)
    except ValueError:
        raise SchemaViolation(f"invalid IP address {ip!r}", offset) from None
    return ip


_ASN_RE = re.compile(r"^AS(\d+)$")


def parse_asn(value, offset: int = 0) -> int:
    """Accept 4134, "4134" or "AS4134"; AS0 stays 0 (invalid-AS sentinel)."""
    if isinstance(value, bool):
        raise SchemaViolation(f"ASN must be an integer or ASnnnn string, got {value!r}", offset)
    if isinstance(value, int):
        if value < 0:
            raise SchemaViolation(f"ASN must be non-negative, got {value}", offset)
        return value
    if isinstance(value, str):
        m = _ASN_RE.match(value)
        if m:
            return int(m.group(1))
        if value.isdigit():
            return int(value)
    raise SchemaViolation(f"ASN must be an integer or ASnnnn string, got {value!r}", offset)


def _load_json_line(text: str, offset: int) -> dict:
    stripped = text.strip()
    if not stripped:
        raise MalformedDocument("empty line", offset)
    try:
        doc = json.loads(stripped)
    except json.JSONDecodeError as exc:
        raise MalformedDocument(f"invalid JSON: {exc}", offset) from None
    if not isinstance(doc, dict):
        raise MalformedDocument("document is not a JSON object", offset)
    return doc


# ---------------------------------------------------------------------------
# Satellite parsing


def parse_satellite_line(text: str, offset: int = 0) -> RawSatelliteProbe:
    """Parse one Satellite document line into a raw probe.

    Raises MalformedDocument when the line is not a JSON object and
    SchemaViolation when a required field is missing or mistyped; both
    carry the line offset.
    """
    doc = _load_json_line(text, offset)

    domain = _require(doc, "test_domain", offset)
    if not isinstance(domain, str) or not domain:
        raise SchemaViolation("test_domain must be a non-empty string", offset)

    probe_start = _parse_ts(_require(doc, "probe_start", offset), offset,
                            ("%Y-%m-%dT%H:%M:%SZ", "%Y-%m-%dT%H:%M:%S.%fZ"))
    probe_end = _parse_ts(_require(doc, "probe_end", offset), offset,
                          ("%Y-%m-%dT%H:%M:%SZ", "%Y-%m-%dT%H:%M:%S.%fZ"))
    if probe_end < probe_start:
        raise SchemaViolation("probe_end precedes probe_start", offset)

    resolver_ip = _check_ip(_require(doc, "resolver_ip", offset), offset)
    country = _require(doc, "resolver_country", offset)
    if not isinstance(country, str) or len(country) != 2:
        raise SchemaViolation(f"resolver_country must be an ISO alpha-2 code, got {country!r}", offset)

    raw_controls = _require(doc, "control_queries", offset)
    if not isinstance(raw_controls, list):
        raise SchemaViolation("control_queries must be a list", offset)
    controls = []
    for cq in raw_controls:
        if not isinstance(cq, dict) or not isinstance(cq.get("rcode"), int):
            raise SchemaViolation("control query needs an integer rcode", offset)
        answers = cq.get("answers", [])
        if not isinstance(answers, list):
            raise SchemaViolation("control query answers must be a list", offset)
        controls.append(ControlQuery(rcode=cq["rcode"],
                                     answers=[_check_ip(a, offset) for a in answers]))

    raw_tests = _require(doc, "test_queries", offset)
    if not isinstance(raw_tests, list):
        raise SchemaViolation("test_queries must be a list", offset)
    if len(raw_tests) > MAX_TEST_ATTEMPTS:
        raise SchemaViolation(f"at most {MAX_TEST_ATTEMPTS} test attempts allowed", offset)
    tests = []
    for tq in raw_tests:
        if not isinstance(tq, dict):
            raise SchemaViolation("test query must be an object", offset)
        success = _as_bool(_require(tq, "success", offset), "success", offset)
        rcode = _require(tq, "rcode", offset)
        if not isinstance(rcode, int):
            raise SchemaViolation("test query rcode must be an integer", offset)
        answers = []
        for ans in tq.get("answers", []):
            if not isinstance(ans, dict):
                raise SchemaViolation("test answer must be an object", offset)
            answers.append(TestAnswer(
                ip=_check_ip(_require(ans, "ip", offset), offset),
                ip_match=_as_tri(ans.get("ip_match"), "ip_match", offset),
                http_match=_as_tri(ans.get("http_match"), "http_match", offset),
                cert_match=_as_tri(ans.get("cert_match"), "cert_match", offset),
                asnum_match=_as_tri(ans.get("asnum_match"), "asnum_match", offset),
                asname_match=_as_tri(ans.get("asname_match"), "asname_match", offset),
            ))
        tests.append(TestQuery(success=success, rcode=rcode, answers=answers))

    return RawSatelliteProbe(
        test_domain=domain,
        probe_start=probe_start,
        probe_end=probe_end,
        resolver_ip=resolver_ip,
        resolver_country=country.upper(),
        control_queries=controls,
        test_queries=tests,
        anomaly_flag=_as_bool(_require(doc, "anomaly", offset), "anomaly", offset),
        excluded_flag=_as_bool(doc.get("excluded", False), "excluded", offset),
        excluded_below_threshold=_as_bool(doc.get("excluded_below_threshold", False),
                                          "excluded_below_threshold", offset),
        untagged_controls=_as_bool(doc.get("untagged_controls", False), "untagged_controls", offset),
        untagged_response=_as_bool(doc.get("untagged_response", False), "untagged_response", offset),
        passed_liveness=_as_bool(doc.get("passed_liveness", True), "passed_liveness", offset),
        connect_error=_as_bool(doc.get("connect_error", False), "connect_error", offset),
        in_control_group=_as_bool(doc.get("in_control_group", True), "in_control_group", offset),
    )


# ---------------------------------------------------------------------------
# OONI parsing


def _verdict_from_blocking(blocking) -> str:
    if blocking is False:
        return VERDICT_ACCESSIBLE
    if blocking == "dns":
        return VERDICT_DNS
    return VERDICT_OTHER


def _verdict_to_blocking(verdict: str):
    if verdict == VERDICT_ACCESSIBLE:
        return False
    if verdict == VERDICT_DNS:
        return "dns"
    return "other"


def _domain_from_input(value: str, offset: int) -> str:
    # inputs look like https://example.com/path; bare domains also accepted
    if "://" in value:
        rest = value.split("://", 1)[1]
        host = rest.split("/", 1)[0]
    else:
        host = value.split("/", 1)[0]
    host = host.split(":", 1)[0].strip().lower()
    if not host:
        raise SchemaViolation(f"cannot extract domain from input {value!r}", offset)
    return host


def parse_ooni_measurement(text: str, offset: int = 0) -> RawOoniMeasurement:
    """Parse one OONI web-connectivity document line."""
    doc = _load_json_line(text, offset)

    mst = _parse_ts(_require(doc, "measurement_start_time", offset), offset,
                    ("%Y-%m-%d %H:%M:%S",))
    tst = _parse_ts(_require(doc, "test_start_time", offset), offset,
                    ("%Y-%m-%d %H:%M:%S",))
    runtime = _require(doc, "test_runtime", offset)
    if not isinstance(runtime, (int, float)) or isinstance(runtime, bool) or runtime < 0:
        raise SchemaViolation(f"test_runtime must be a non-negative number, got {runtime!r}", offset)

    probe_cc = _require(doc, "probe_cc", offset)
    if not isinstance(probe_cc, str) or len(probe_cc) != 2:
        raise SchemaViolation(f"probe_cc must be an ISO alpha-2 code, got {probe_cc!r}", offset)

    tk = _require(doc, "test_keys", offset)
    if not isinstance(tk, dict):
        raise SchemaViolation("test_keys must be an object", offset)

    consistency = tk.get("dns_consistency", "inconsistent")
    if consistency not in ("consistent", "inconsistent"):
        raise SchemaViolation(f"dns_consistency must be consistent/inconsistent, got {consistency!r}", offset)

    proportion = tk.get("body_proportion")
    if proportion is not None:
        if isinstance(proportion, bool) or not isinstance(proportion, (int, float)):
            raise SchemaViolation(f"body_proportion must be a number or null, got {proportion!r}", offset)
        proportion = float(proportion)
        if not 0.0 <= proportion <= 1.0:
            proportion = None  # out-of-range values are recorded as invalid

    answer_ips: list[str] = []
    for query in tk.get("queries") or []:
        if not isinstance(query, dict):
            continue
        for ans in query.get("answers") or []:
            if not isinstance(ans, dict):
                continue
            ip = ans.get("ipv4") or ans.get("ipv6")
            if ip is not None:
                answer_ips.append(_check_ip(ip, offset))

    failure = tk.get("dns_experiment_failure")
    http_failure = tk.get("http_experiment_failure")
    if failure is not None and not isinstance(failure, str):
        raise SchemaViolation("dns_experiment_failure must be a string or null", offset)
    if http_failure is not None and not isinstance(http_failure, str):
        raise SchemaViolation("http_experiment_failure must be a string or null", offset)

    return RawOoniMeasurement(
        measurement_start_time=mst,
        test_start_time=tst,
        test_runtime=float(runtime),
        probe_asn=parse_asn(_require(doc, "probe_asn", offset), offset),
        probe_cc=probe_cc.upper(),
        probe_network_name=str(doc.get("probe_network_name", "")),
        resolver_asn=parse_asn(doc.get("resolver_asn", 0), offset),
        resolver_network_name=str(doc.get("resolver_network_name", "")),
        test_domain=_domain_from_input(_require(doc, "input", offset), offset),
        dns_experiment_failure=failure,
        http_experiment_failure=http_failure,
        dns_consistency=consistency,
        body_length_match=_as_tri(tk.get("body_length_match"), "body_length_match", offset),
        body_proportion=proportion,
        status_code_match=_as_tri(tk.get("status_code_match"), "status_code_match", offset),
        headers_match=_as_tri(tk.get("headers_match"), "headers_match", offset),
        title_match=_as_tri(tk.get("title_match"), "title_match", offset),
        control_failed=tk.get("control_failure") is not None,
        blocking_verdict=_verdict_from_blocking(tk.get("blocking")),
        answer_ips=answer_ips,
        test_keys_asn=parse_asn(tk.get("asn", 0), offset),
        test_keys_as_org_name=str(tk.get("as_org_name", "")),
    )


# ---------------------------------------------------------------------------
# Offline GeoIP / AS prefix table


class GeoDb:
    """Offline longest-prefix-match table: prefix -> (asn, as_name, country).

    Loaded from CSV with columns ``prefix,asn,as_name,country``. Immutable
    after load; lookups are pure functions of (ip, table).
    """

    def __init__(self, rows: Iterable[tuple[str, int, str, str]]):
        # networks bucketed by (ip version, prefix length) for LPM
        self._buckets: dict[tuple[int, int], dict[int, GeoMeta]] = {}
        for prefix, asn, as_name, country in rows:
            net = ipaddress.ip_network(prefix, strict=False)
            key = (net.version, net.prefixlen)
            meta = GeoMeta(asn=int(asn), as_name=as_name, country=country, tagged=True)
            self._buckets.setdefault(key, {})[int(net.network_address)] = meta
        self._lengths = {
            version: sorted((plen for (v, plen) in self._buckets if v == version), reverse=True)
            for version in (4, 6)
        }

    @classmethod
    def from_csv(cls, path: str | Path) -> "GeoDb":
        import csv

        rows = []
        with open(path, newline="") as fh:
            for row in csv.reader(fh):
                if not row or row[0].startswith("#") or row[0] == "prefix":
                    continue
                prefix, asn, as_name, country = row[0], int(row[1]), row[2], row[3]
                rows.append((prefix, asn, as_name, country))
        return cls(rows)

    def lookup(self, ip: str) -> GeoMeta:
        try:
            addr = ipaddress.ip_address(ip)
        except ValueError:
            raise InvalidIp(f"invalid IP address {ip!r}") from None
        bits = addr.max_prefixlen
        value = int(addr)
        for plen in self._lengths.get(addr.version, ()):
            mask = ((1 << plen) - 1) << (bits - plen) if plen else 0
            meta = self._buckets[(addr.version, plen)].get(value & mask)
            if meta is not None:
                return meta
        return GeoMeta(asn=0, as_name="", country="", tagged=False)


def lookup_geo(ip: str, geodb: GeoDb) -> GeoMeta:
    """Longest-prefix lookup; tagged=False when no prefix covers the IP."""
    return geodb.lookup(ip)


# ---------------------------------------------------------------------------
# Streaming ingest


def record_id_for(platform: str, source_name: str, offset: int, line: str) -> str:
    """128-bit content hash identifying one (platform, file, offset) line."""
    h = hashlib.blake2b(digest_size=16)
    h.update(platform.encode())
    h.update(b"\x00")
    h.update(source_name.encode())
    h.update(b"\x00")
    h.update(str(offset).encode())
    h.update(b"\x00")
    h.update(line.encode())
    return h.hexdigest()


def normalize_satellite(raw: RawSatelliteProbe, record_id: str, geodb: GeoDb) -> NormalizedRecord:
    geo = geodb.lookup(raw.resolver_ip)
    # Satellite's vantage point is the open resolver itself, so the probe AS
    # and the resolver AS coincide.
    return NormalizedRecord(
        record_id=record_id,
        platform=PLATFORM_SATELLITE,
        country=raw.resolver_country,
        probe_time=raw.probe_start,
        test_domain=raw.test_domain,
        probe_asn=geo.asn,
        resolver_asn=geo.asn,
        response_ips=raw.response_ips(),
        platform_anomaly=raw.anomaly_flag,
        raw=raw,
    )


def normalize_ooni(raw: RawOoniMeasurement, record_id: str) -> NormalizedRecord:
    return NormalizedRecord(
        record_id=record_id,
        platform=PLATFORM_OONI,
        country=raw.probe_cc,
        probe_time=raw.measurement_start_time,
        test_domain=raw.test_domain,
        probe_asn=raw.probe_asn,
        resolver_asn=raw.resolver_asn,
        response_ips=list(raw.answer_ips),
        platform_anomaly=raw.blocking_verdict == VERDICT_DNS,
        raw=raw,
    )


def _open_text(path: Path):
    if path.suffix == ".gz":
        return gzip.open(path, "rt", encoding="utf-8")
    return open(path, "r", encoding="utf-8")


def stream_ingest(
    paths: list[str | Path],
    platform: str,
    geodb: GeoDb,
    stats: IngestStats | None = None,
) -> tuple[Iterator[NormalizedRecord], IngestStats]:
    """Stream NormalizedRecords from newline-delimited measurement files.

    Records are emitted in file order, then line order. Malformed lines and
    schema violations are counted in the returned stats and skipped, never
    fatal. Unreadable paths raise IngestIoError up front.

    Returns (record iterator, stats); the stats object is updated as the
    iterator is consumed.
    """
    if platform not in (PLATFORM_SATELLITE, PLATFORM_OONI):
        raise ValueError(f"unknown platform {platform!r}")
    resolved = []
    for p in paths:
        path = Path(p)
        if not path.is_file():
            raise IngestIoError(f"not a readable file: {path}")
        resolved.append(path)
    if stats is None:
        stats = IngestStats()

    def generate() -> Iterator[NormalizedRecord]:
        for path in resolved:
            try:
                fh = _open_text(path)
            except OSError as exc:
                raise IngestIoError(f"cannot open {path}: {exc}") from exc
            with fh:
                for offset, line in enumerate(fh):
                    if not line.strip():
                        continue
                    rid = record_id_for(platform, path.name, offset, line.strip())
                    try:
                        if platform == PLATFORM_SATELLITE:
                            raw = parse_satellite_line(line, offset)
                            rec = normalize_satellite(raw, rid, geodb)
                        else:
                            raw = parse_ooni_measurement(line, offset)
                            rec = normalize_ooni(raw, rid)
                    except MalformedDocument:
                        stats.malformed += 1
                        continue
                    except SchemaViolation:
                        stats.schema_violations += 1
                        continue
                    stats.parsed += 1
                    yield rec

    return generate(), stats
