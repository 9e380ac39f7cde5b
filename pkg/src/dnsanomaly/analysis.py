"""Post-hoc interpretation and discovery.

Feature attribution uses exact Shapley values: the closed form for the
linear one-class SVM, and the polynomial-time path-dependent algorithm for
tree ensembles (conditional expectations follow per-node training covers).
Both satisfy local accuracy: base value plus the contribution sum equals
the model margin.

Signature discovery counts response IPs across records the model marked
censored, drops IPs that resolve to the test domain's ground-truth AS
(legitimate answers), and flags candidates against the known fake-IP lists.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Iterable, Mapping

import numpy as np

from .dataset import LabelRow
from .errors import DimensionMismatch
from .ingest import PLATFORM_SATELLITE, GeoDb, GeoMeta, NormalizedRecord
from .models.gbdt import GbdtModel, TreeNodes
from .models.iforest import IsolationForestModel
from .models.ocsvm import LinearOcsvmModel, decision_ocsvm


@dataclass
class Attribution:
    contributions: np.ndarray  # one value per feature dimension
    base: float
    margin: float

    def local_accuracy_gap(self) -> float:
        return abs(self.base + float(self.contributions.sum()) - self.margin)


# ---------------------------------------------------------------------------
# Linear attribution (exact Shapley values of an additive model)


def attribute_linear(model: LinearOcsvmModel, x: np.ndarray,
                     background_mean: np.ndarray) -> Attribution:
    x = np.asarray(x, dtype=np.float64).ravel()
    mu = np.asarray(background_mean, dtype=np.float64).ravel()
    w = model.weights
    if x.shape != w.shape or mu.shape != w.shape:
        raise DimensionMismatch(
            f"x {x.shape} / mu {mu.shape} do not match weights {w.shape}")
    contributions = w * (x - mu)
    base = float(w @ mu - model.rho)
    return Attribution(contributions=contributions, base=base,
                       margin=decision_ocsvm(model, x))


# ---------------------------------------------------------------------------
# Tree attribution (exact path-dependent Shapley values)
#
# The path bookkeeping tracks, for every feature on the current root-leaf
# path, the fraction of coalitions that flow down when the feature is
# excluded (zero fraction, from covers) or included (one fraction), and the
# permutation weights of each path-subset size. Extending and unwinding the
# path keep those weights exact, which makes the per-leaf contribution sums
# identical to brute-force enumeration over feature coalitions.


def _path_extend(path: list[list[float]], pz: float, po: float,
                 pi: int) -> list[list[float]]:
    length = len(path)
    out = [row[:] for row in path]
    out.append([float(pi), pz, po, 1.0 if length == 0 else 0.0])
    for j in range(length - 1, -1, -1):
        out[j + 1][3] += po * out[j][3] * (j + 1) / (length + 1)
        out[j][3] = pz * out[j][3] * (length - j) / (length + 1)
    return out


def _path_unwind(path: list[list[float]], i: int) -> list[list[float]]:
    length = len(path)
    one = path[i][2]
    zero = path[i][1]
    n = path[length - 1][3]
    out = [row[:] for row in path]
    for j in range(length - 2, -1, -1):
        if one != 0.0:
            t = out[j][3]
            out[j][3] = n * length / ((j + 1) * one)
            n = t - out[j][3] * zero * (length - 1 - j) / length
        else:
            out[j][3] = out[j][3] * length / (zero * (length - 1 - j))
    for j in range(i, length - 1):
        out[j][0] = out[j + 1][0]
        out[j][1] = out[j + 1][1]
        out[j][2] = out[j + 1][2]
    return out[:-1]


def _tree_shap(tree: TreeNodes, x: np.ndarray, phi: np.ndarray, scale: float) -> None:
    feature = tree.feature
    threshold = tree.threshold
    left = tree.left
    right = tree.right
    value = tree.value
    cover = tree.cover

    def recurse(node: int, path: list[list[float]], pz: float, po: float,
                pi: int) -> None:
        path = _path_extend(path, pz, po, pi)
        if feature[node] < 0:
            leaf = value[node] * scale
            for i in range(1, len(path)):
                w = sum(row[3] for row in _path_unwind(path, i))
                phi[int(path[i][0])] += w * (path[i][2] - path[i][1]) * leaf
            return
        f = int(feature[node])
        if x[f] < threshold[node]:
            hot, cold = int(left[node]), int(right[node])
        else:
            hot, cold = int(right[node]), int(left[node])
        iz = io = 1.0
        k = next((i for i in range(1, len(path)) if int(path[i][0]) == f), None)
        if k is not None:
            iz, io = path[k][1], path[k][2]
            path = _path_unwind(path, k)
        recurse(hot, path, iz * cover[hot] / cover[node], io, f)
        recurse(cold, path, iz * cover[cold] / cover[node], 0.0, f)

    recurse(0, [], 1.0, 1.0, -1)


def tree_expected_value(tree: TreeNodes) -> float:
    """Cover-weighted mean leaf value (the empty-coalition expectation)."""
    leaves = tree.feature < 0
    return float((tree.value[leaves] * tree.cover[leaves]).sum() / tree.cover[0])


def attribute_tree(model: GbdtModel, x: np.ndarray) -> Attribution:
    x = np.asarray(x, dtype=np.float64).ravel()
    if x.shape[0] != model.n_features:
        raise DimensionMismatch(
            f"expected {model.n_features} features, got {x.shape[0]}")
    phi = np.zeros(model.n_features, dtype=np.float64)
    base = model.base_score
    lr = model.learning_rate
    for tree in model.trees:
        _tree_shap(tree, x, phi, lr)
        base += lr * tree_expected_value(tree)
    margin = float(model.margin(x[None, :])[0])
    return Attribution(contributions=phi, base=float(base), margin=margin)


# ---------------------------------------------------------------------------
# Isolation-forest feature importance


def iforest_importance(model: IsolationForestModel) -> list[tuple[int, float]]:
    """Fraction of splits using each feature, sorted descending (stable by
    feature index on ties). Frequencies over all trees sum to 1."""
    counts: dict[int, int] = {}
    total = 0
    for tree in model.trees:
        for f in tree.feature:
            if f >= 0:
                counts[int(f)] = counts.get(int(f), 0) + 1
                total += 1
    if total == 0:
        return []
    ranked = sorted(counts.items(), key=lambda kv: (-kv[1], kv[0]))
    return [(f, c / total) for f, c in ranked]


# ---------------------------------------------------------------------------
# Blocking-signature discovery


@dataclass
class SignatureCandidate:
    ip: str
    count: int  # predicted-censored records containing the IP
    distinct_domains: int
    known_to_ooni: bool
    known_to_gfwatch: bool
    record_ids: list[str] = field(default_factory=list)


def discover_signatures(records: Iterable[NormalizedRecord],
                        predicted_censored: Mapping[str, bool],
                        known_ooni: set[str],
                        known_gfwatch: set[str],
                        min_count: int,
                        geodb: GeoDb,
                        truth_asns: Mapping[str, set[int]]) -> list[SignatureCandidate]:
    """Frequency analysis of response IPs over predicted-censored records.

    An IP occurrence is skipped when it resolves (offline table) to one of
    the test domain's ground-truth ASes, since that is a legitimate answer.
    Output is sorted by count descending then IP, and is invariant to the
    input record order.
    """
    counts: dict[str, int] = {}
    domains: dict[str, set[str]] = {}
    rids: dict[str, list[str]] = {}
    for rec in records:
        if not predicted_censored.get(rec.record_id, False):
            continue
        expected = truth_asns.get(rec.test_domain, set())
        for ip in dict.fromkeys(rec.response_ips):
            geo = geodb.lookup(ip)
            if geo.tagged and geo.asn in expected:
                continue
            counts[ip] = counts.get(ip, 0) + 1
            domains.setdefault(ip, set()).add(rec.test_domain)
            rids.setdefault(ip, []).append(rec.record_id)

    candidates = [
        SignatureCandidate(
            ip=ip,
            count=count,
            distinct_domains=len(domains[ip]),
            known_to_ooni=ip in known_ooni,
            known_to_gfwatch=ip in known_gfwatch,
            record_ids=sorted(rids[ip]),
        )
        for ip, count in counts.items()
        if count >= min_count
    ]
    candidates.sort(key=lambda c: (-c.count, c.ip))
    return candidates


# ---------------------------------------------------------------------------
# Model / label disagreement triage


TRIAGE_GFW_FAILURE = "gfw_injection_failure"
TRIAGE_LOCALIZED = "localized_filtering"
TRIAGE_INACTIVE = "inactive_domain"
TRIAGE_UNEXPLAINED = "unexplained"


@dataclass
class DisagreementCase:
    record_id: str
    domain: str
    model_verdict: bool  # True = anomalous
    platform_label: str
    gfwatch_label: str | None
    response_geo: list[tuple[str, GeoMeta]]
    triage: str


def _looks_inactive(rec: NormalizedRecord) -> bool:
    if not rec.response_ips:
        return True
    if rec.platform == PLATFORM_SATELLITE:
        return rec.raw.successful_query() is None
    return rec.raw.body_proportion is None or rec.raw.http_experiment_failure is not None


def disagreement_report(records: Iterable[NormalizedRecord],
                        model_verdicts: Mapping[str, bool],
                        labels: Mapping[str, LabelRow],
                        geodb: GeoDb,
                        truth_asns: Mapping[str, set[int]],
                        filter_ips: set[str] | None = None) -> list[DisagreementCase]:
    """One case per record where the model disagrees with a label source.

    Triage hints, first rule that fires: a response IP tagging to the
    domain's expected AS means the censor failed to inject; a response IP on
    the localized-filter list points at corporate/parental filtering; no
    usable response suggests an inactive domain; otherwise unexplained.
    """
    filter_ips = filter_ips or set()
    cases = []
    for rec in records:
        if rec.record_id not in model_verdicts or rec.record_id not in labels:
            continue
        verdict = bool(model_verdicts[rec.record_id])
        label = labels[rec.record_id]
        platform_anomalous = label.platform_label == "anomaly"
        gfw_censored = label.gfwatch_label == "censored" if label.gfwatch_label else None
        disagrees = verdict != platform_anomalous or (
            gfw_censored is not None and verdict != gfw_censored)
        if not disagrees:
            continue

        response_geo = [(ip, geodb.lookup(ip)) for ip in rec.response_ips]
        expected = truth_asns.get(rec.test_domain, set())
        if any(geo.tagged and geo.asn in expected for _, geo in response_geo):
            triage = TRIAGE_GFW_FAILURE
        elif any(ip in filter_ips for ip, _ in response_geo):
            triage = TRIAGE_LOCALIZED
        elif _looks_inactive(rec):
            triage = TRIAGE_INACTIVE
        else:
            triage = TRIAGE_UNEXPLAINED
        cases.append(DisagreementCase(
            record_id=rec.record_id,
            domain=rec.test_domain,
            model_verdict=verdict,
            platform_label=label.platform_label,
            gfwatch_label=label.gfwatch_label,
            response_geo=response_geo,
            triage=triage,
        ))
    return cases


# ---------------------------------------------------------------------------
# Per-AS label inconsistency


@dataclass
class AsInconsistencyRow:
    asn: int
    domains_tested: int
    blockings: int
    inconsistent: int
    inconsistency_rate_pct: float
    contribution_pct: float


def per_as_inconsistency(records: Iterable[NormalizedRecord],
                         labels: Mapping[str, LabelRow]) -> list[AsInconsistencyRow]:
    """Per probe-AS comparison of platform blockings against the independent
    censored-domain labels. Only records carrying both label sources count.
    Contributions are percentages of the total inconsistent blockings."""
    per_as: dict[int, dict] = {}
    total_inconsistent = 0
    for rec in records:
        label = labels.get(rec.record_id)
        if label is None or label.gfwatch_label is None:
            continue
        slot = per_as.setdefault(rec.probe_asn,
                                 {"domains": set(), "blockings": 0, "inconsistent": 0})
        slot["domains"].add(rec.test_domain)
        if label.platform_label == "anomaly":
            slot["blockings"] += 1
            if label.gfwatch_label == "uncensored":
                slot["inconsistent"] += 1
                total_inconsistent += 1

    rows = []
    for asn in sorted(per_as, key=lambda a: (per_as[a]["blockings"], a)):
        slot = per_as[asn]
        blockings = slot["blockings"]
        inconsistent = slot["inconsistent"]
        rate = 100.0 * inconsistent / blockings if blockings else 0.0
        contribution = (100.0 * inconsistent / total_inconsistent
                        if total_inconsistent else 0.0)
        rows.append(AsInconsistencyRow(
            asn=asn,
            domains_tested=len(slot["domains"]),
            blockings=blockings,
            inconsistent=inconsistent,
            inconsistency_rate_pct=rate,
            contribution_pct=contribution,
        ))
    return rows
