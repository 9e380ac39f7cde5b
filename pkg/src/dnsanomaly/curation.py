"""Validity filtering, clean/anomalous classification and label assignment.

A record first passes platform-specific validity rules (misconfigured or
failed probes are excluded outright). Valid records are then classified as
``clean`` or ``anomalous``: clean records must pass every platform condition
(S1-S4 for Satellite, O1-O2 for OONI) and must not be marked censored by the
GFWatch domain list when the record comes from CN. Clean records are the
training substrate for the unsupervised models; the clean/anomalous split
also feeds the supervised mixed corpora.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass, field
from datetime import date, datetime
from pathlib import Path

import numpy as np

from .dataset import LabelRow
from .errors import InvalidDomain, WrongPlatform
from .ingest import (
    PLATFORM_OONI,
    PLATFORM_SATELLITE,
    RCODE_UNSUCCESSFUL,
    GeoDb,
    NormalizedRecord,
    VERDICT_ACCESSIBLE,
    VERDICT_DNS,
)

LabelSet = LabelRow

REASON_OK = "ok"
REASON_CONTROL_FAILED = "control_failed"
REASON_NO_VALID_CONTROL = "no_valid_control_resolver"
REASON_DOMAIN_INACTIVE = "domain_inactive"
REASON_INVALID_ASN = "invalid_asn"
REASON_INVALID_BODY_PROPORTION = "invalid_body_proportion"
REASON_NON_DNS_VERDICT = "non_dns_verdict"

# A domain must be answered more than this many times globally within one
# probing period to count as active.
MIN_DOMAIN_RESPONSES = 2


@dataclass
class ValidityVerdict:
    valid: bool
    reason: str

    def __post_init__(self):
        assert self.valid == (self.reason == REASON_OK)


@dataclass
class CleanVerdict:
    clean: bool
    failed_conditions: frozenset[str] = frozenset()

    def __post_init__(self):
        assert self.clean == (not self.failed_conditions)


# ---------------------------------------------------------------------------
# GFWatch censored-domain database


def _merge_intervals(intervals: list[tuple[date, date | None]]) -> list[tuple[date, date | None]]:
    merged: list[tuple[date, date | None]] = []
    for start, end in sorted(intervals, key=lambda iv: (iv[0], iv[1] or date.max)):
        if merged:
            pstart, pend = merged[-1]
            if pend is None or start <= pend:
                merged[-1] = (pstart, None if (pend is None or end is None) else max(pend, end))
                continue
        merged.append((start, end))
    return merged


class GfwatchDb:
    """Censored-domain intervals, matched at registered-domain granularity.

    Entries are keyed by domain; a lookup walks the query's label suffixes
    from most specific to least, and the first entry found decides (an exact
    FQDN entry therefore overrides its registered domain). Subdomains of a
    censored base domain match, mirroring base-domain overblocking.
    """

    def __init__(self, entries: dict[str, list[tuple[date, date | None]]]):
        self._entries = {
            domain.lower().rstrip("."): _merge_intervals(ivs)
            for domain, ivs in entries.items()
        }

    @classmethod
    def from_csv(cls, path: str | Path) -> "GfwatchDb":
        """CSV columns: domain, start_date, end_date ("open" = still censored)."""
        entries: dict[str, list[tuple[date, date | None]]] = {}
        with open(path, newline="") as fh:
            for row in csv.reader(fh):
                if not row or row[0].startswith("#") or row[0] == "domain":
                    continue
                domain, start_s, end_s = row[0], row[1], row[2]
                start = date.fromisoformat(start_s)
                end = None if end_s.strip().lower() == "open" else date.fromisoformat(end_s)
                if end is not None and end < start:
                    raise ValueError(f"gfwatch interval ends before it starts: {row}")
                entries.setdefault(domain, []).append((start, end))
        return cls(entries)

    def intervals_for(self, domain: str) -> list[tuple[date, date | None]] | None:
        domain = domain.lower().rstrip(".")
        if not domain:
            raise InvalidDomain("empty domain")
        labels = domain.split(".")
        for k in range(len(labels) - 1):
            suffix = ".".join(labels[k:])
            if suffix in self._entries:
                return self._entries[suffix]
        if domain in self._entries:  # single-label domains
            return self._entries[domain]
        return None

    def is_censored(self, domain: str, when: date) -> bool:
        intervals = self.intervals_for(domain)
        if intervals is None:
            return False
        for start, end in intervals:
            if start <= when and (end is None or when <= end):
                return True
        return False


def gfwatch_label(domain: str, probe_time: datetime, db: GfwatchDb) -> str:
    """"censored" when the domain (or a parent entry) covers the probe date."""
    return "censored" if db.is_censored(domain, probe_time.date()) else "uncensored"


# ---------------------------------------------------------------------------
# Validity rules


def satellite_domain_response_counts(records: list[NormalizedRecord]) -> dict[tuple[str, date], int]:
    """Pre-pass for the domain-activity rule.

    Counts, per (test domain, probing period), how many probes anywhere
    received a DNS response for the domain. One Satellite scan maps to one
    calendar date here, so the period key is the probe-start UTC date.
    """
    counts: dict[tuple[str, date], int] = {}
    for rec in records:
        if rec.platform != PLATFORM_SATELLITE:
            continue
        if rec.raw.successful_query() is not None:
            key = (rec.test_domain, rec.probe_time.date())
            counts[key] = counts.get(key, 0) + 1
    return counts


def validate_satellite(rec: NormalizedRecord,
                       response_counts: dict[tuple[str, date], int]) -> ValidityVerdict:
    """Exclusion rules, applied in order: failed initial control query, no
    control resolver with a valid response, then inactive test domain."""
    if rec.platform != PLATFORM_SATELLITE:
        raise WrongPlatform(f"expected satellite record, got {rec.platform}")
    raw = rec.raw
    if not raw.control_queries or raw.control_queries[0].rcode != 0:
        return ValidityVerdict(False, REASON_CONTROL_FAILED)
    if not raw.in_control_group:
        return ValidityVerdict(False, REASON_NO_VALID_CONTROL)
    count = response_counts.get((rec.test_domain, rec.probe_time.date()), 0)
    if count <= MIN_DOMAIN_RESPONSES:
        return ValidityVerdict(False, REASON_DOMAIN_INACTIVE)
    return ValidityVerdict(True, REASON_OK)


def validate_ooni(rec: NormalizedRecord) -> ValidityVerdict:
    """Exclusion rules: failed control test, missing/AS0 client or resolver
    ASN, invalid body proportion; non-DNS verdicts are dropped as well since
    only accessible/DNS-tampered records are retained."""
    if rec.platform != PLATFORM_OONI:
        raise WrongPlatform(f"expected ooni record, got {rec.platform}")
    raw = rec.raw
    if raw.control_failed:
        return ValidityVerdict(False, REASON_CONTROL_FAILED)
    if raw.probe_asn == 0 or raw.resolver_asn == 0:
        return ValidityVerdict(False, REASON_INVALID_ASN)
    if raw.body_proportion is None:
        return ValidityVerdict(False, REASON_INVALID_BODY_PROPORTION)
    if raw.blocking_verdict not in (VERDICT_ACCESSIBLE, VERDICT_DNS):
        return ValidityVerdict(False, REASON_NON_DNS_VERDICT)
    return ValidityVerdict(True, REASON_OK)


# ---------------------------------------------------------------------------
# Clean / anomalous classification


def classify_clean_satellite(rec: NormalizedRecord, gfwatch_censored: bool,
                             geodb: GeoDb,
                             truth_asns: dict[str, set[int]]) -> CleanVerdict:
    """Clean iff all four hold:

    S1  not flagged anomalous by the platform and not GFWatch-censored;
    S2  the terminal control query resolved successfully;
    S3  no control query hit a connection error;
    S4  the domain's ground-truth ASN appears among the AS tags of the
        response IPs. A domain missing from the truth table cannot satisfy
        S4 and the record is classified anomalous with S4 flagged.
    """
    if rec.platform != PLATFORM_SATELLITE:
        raise WrongPlatform(f"expected satellite record, got {rec.platform}")
    raw = rec.raw
    failed: set[str] = set()

    if raw.anomaly_flag or gfwatch_censored:
        failed.add("S1")
    if not raw.control_queries or raw.control_queries[-1].rcode != 0:
        failed.add("S2")
    if any(cq.rcode == RCODE_UNSUCCESSFUL for cq in raw.control_queries):
        failed.add("S3")

    expected = truth_asns.get(rec.test_domain)
    if not expected:
        failed.add("S4")
    else:
        tagged = {geodb.lookup(ip).asn for ip in rec.response_ips if geodb.lookup(ip).tagged}
        if not (expected & tagged):
            failed.add("S4")

    return CleanVerdict(clean=not failed, failed_conditions=frozenset(failed))


def classify_clean_ooni(rec: NormalizedRecord, gfwatch_censored: bool) -> CleanVerdict:
    """Clean iff O1: not DNS-tampered and not GFWatch-censored, and
    O2: the DNS response is consistent with the control server's."""
    if rec.platform != PLATFORM_OONI:
        raise WrongPlatform(f"expected ooni record, got {rec.platform}")
    raw = rec.raw
    failed: set[str] = set()
    if raw.blocking_verdict == VERDICT_DNS or gfwatch_censored:
        failed.add("O1")
    if raw.dns_consistency != "consistent":
        failed.add("O2")
    return CleanVerdict(clean=not failed, failed_conditions=frozenset(failed))


def build_label_set(rec: NormalizedRecord, verdict: CleanVerdict,
                    gfwatch: str | None) -> LabelSet:
    return LabelSet(
        record_id=rec.record_id,
        platform_label="anomaly" if rec.platform_anomaly else "clean",
        gfwatch_label=gfwatch,
        curated_class="clean" if verdict.clean else "anomalous",
    )


# ---------------------------------------------------------------------------
# Sampling


def load_population_table(path: str | Path) -> dict[int, float]:
    """CSV columns: asn, population-coverage ratio in [0, 1]."""
    table: dict[int, float] = {}
    with open(path, newline="") as fh:
        for row in csv.reader(fh):
            if not row or row[0].startswith("#") or row[0] == "asn":
                continue
            ratio = float(row[1])
            if not 0.0 <= ratio <= 1.0:
                raise ValueError(f"population ratio out of range: {row}")
            table[int(row[0])] = ratio
    return table


def load_ip_list(path: str | Path) -> set[str]:
    ips = set()
    with open(path) as fh:
        for line in fh:
            line = line.strip()
            if line and not line.startswith("#"):
                ips.add(line)
    return ips


def load_truth_asns(path: str | Path) -> dict[str, set[int]]:
    """CSV columns: domain, asn (repeat rows for multi-homed domains)."""
    table: dict[str, set[int]] = {}
    with open(path, newline="") as fh:
        for row in csv.reader(fh):
            if not row or row[0].startswith("#") or row[0] == "domain":
                continue
            table.setdefault(row[0].lower(), set()).add(int(row[1]))
    return table


def sample_asn_population(records: list[NormalizedRecord],
                          table: dict[int, float],
                          min_ratio: float) -> list[NormalizedRecord]:
    """Keep records whose probe AS has population coverage >= min_ratio.

    ASes absent from the table count as ratio 0. Order is preserved.
    """
    if not table:
        raise ValueError("population table is empty")
    return [rec for rec in records if table.get(rec.probe_asn, 0.0) >= min_ratio]


def downsample_uniform(records: list[NormalizedRecord], target_count: int,
                       seed: int) -> list[NormalizedRecord]:
    """Uniform subset without replacement, input order preserved."""
    if target_count < 0:
        raise ValueError("target_count must be >= 0")
    if target_count >= len(records):
        return list(records)
    rng = np.random.default_rng(seed)
    keep = np.sort(rng.choice(len(records), size=target_count, replace=False))
    return [records[i] for i in keep]


# ---------------------------------------------------------------------------
# End-to-end curation


@dataclass
class CurationStats:
    input: int = 0
    invalid: dict[str, int] = field(default_factory=dict)
    excluded_filter_ips: int = 0
    sampled_out: int = 0
    downsampled_out: int = 0
    clean: int = 0
    anomalous: int = 0

    def as_dict(self) -> dict:
        return {
            "input": self.input,
            "invalid": dict(sorted(self.invalid.items())),
            "excluded_filter_ips": self.excluded_filter_ips,
            "sampled_out": self.sampled_out,
            "downsampled_out": self.downsampled_out,
            "clean": self.clean,
            "anomalous": self.anomalous,
        }


@dataclass
class CurationResult:
    records: list[NormalizedRecord]
    labels: list[LabelSet]
    stats: CurationStats


def curate(records: list[NormalizedRecord], *,
           geodb: GeoDb,
           gfwatch_db: GfwatchDb | None = None,
           truth_asns: dict[str, set[int]] | None = None,
           population: dict[int, float] | None = None,
           min_population_ratio: float = 0.0,
           exclusion_ips: set[str] | None = None,
           downsample_target: int | None = None,
           downsample_seed: int = 0) -> CurationResult:
    """Run the full curation chain over one platform's records.

    Order: validity rules, localized-filter IP removal, AS-population
    sampling, optional uniform downsampling, then labeling and clean
    classification. Every rule is a pure per-record predicate except the
    domain-activity pre-pass, which is computed over the input corpus.
    """
    stats = CurationStats(input=len(records))
    truth_asns = truth_asns or {}

    platforms = {rec.platform for rec in records}
    if len(platforms) > 1:
        raise WrongPlatform(f"mixed-platform corpus: {sorted(platforms)}")

    response_counts = satellite_domain_response_counts(records)

    valid: list[NormalizedRecord] = []
    for rec in records:
        if rec.platform == PLATFORM_SATELLITE:
            verdict = validate_satellite(rec, response_counts)
        else:
            verdict = validate_ooni(rec)
        if verdict.valid:
            valid.append(rec)
        else:
            stats.invalid[verdict.reason] = stats.invalid.get(verdict.reason, 0) + 1

    if exclusion_ips:
        kept = [r for r in valid if not (set(r.response_ips) & exclusion_ips)]
        stats.excluded_filter_ips = len(valid) - len(kept)
        valid = kept

    if population is not None and min_population_ratio > 0.0:
        kept = sample_asn_population(valid, population, min_population_ratio)
        stats.sampled_out = len(valid) - len(kept)
        valid = kept

    if downsample_target is not None and downsample_target > 0:
        kept = downsample_uniform(valid, downsample_target, downsample_seed)
        stats.downsampled_out = len(valid) - len(kept)
        valid = kept

    labels: list[LabelSet] = []
    for rec in valid:
        gfw: str | None = None
        censored = False
        if rec.country == "CN" and gfwatch_db is not None:
            gfw = gfwatch_label(rec.test_domain, rec.probe_time, gfwatch_db)
            censored = gfw == "censored"
        if rec.platform == PLATFORM_SATELLITE:
            verdict = classify_clean_satellite(rec, censored, geodb, truth_asns)
        else:
            verdict = classify_clean_ooni(rec, censored)
        labels.append(build_label_set(rec, verdict, gfw))
        if verdict.clean:
            stats.clean += 1
        else:
            stats.anomalous += 1

    return CurationResult(records=valid, labels=labels, stats=stats)
