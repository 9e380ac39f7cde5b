"""Dataset splitting, confusion metrics, temporal decay and cross-platform
agreement.

"Positive" means anomalous throughout. Rates are derived from the integer
confusion counts through exact rational arithmetic before float conversion,
so tpr + fnr == 1 and tnr + fpr == 1 hold exactly whenever the denominators
are nonzero; a rate whose denominator is zero is reported as None.
"""

from __future__ import annotations

import csv
import json
from dataclasses import dataclass
from datetime import date, timedelta
from fractions import Fraction
from pathlib import Path

import numpy as np

from .errors import (
    EmptyCorpus,
    InsufficientMonths,
    LengthMismatch,
    NoOverlap,
    SingleClass,
)

MODE_SUPERVISED = "supervised_mixed"
MODE_UNSUPERVISED = "unsupervised_clean_train"


@dataclass
class SplitSpec:
    mode: str = MODE_SUPERVISED
    ratios: tuple[float, float, float] = (0.7, 0.15, 0.15)
    seed: int = 0

    def __post_init__(self):
        if self.mode not in (MODE_SUPERVISED, MODE_UNSUPERVISED):
            raise ValueError(f"unknown split mode {self.mode!r}")
        if len(self.ratios) != 3 or any(r <= 0 for r in self.ratios):
            raise ValueError("ratios must be three positive numbers")
        if abs(sum(self.ratios) - 1.0) > 1e-9:
            raise ValueError(f"ratios must sum to 1, got {self.ratios}")


def split_dataset(n: int, spec: SplitSpec,
                  clean_mask: np.ndarray | None = None
                  ) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Seeded shuffle, then partition into train/val/test index arrays.

    In unsupervised mode the train partition is drawn from clean rows only
    (clean_mask required); everything left over, including every anomalous
    row, is redistributed to val/test in proportion to their ratios.
    """
    if n == 0:
        raise EmptyCorpus("cannot split an empty dataset")
    rng = np.random.default_rng(spec.seed)
    perm = rng.permutation(n)
    r_train, r_val, r_test = spec.ratios

    if spec.mode == MODE_SUPERVISED:
        n_train = int(n * r_train)
        n_val = int(n * (r_train + r_val)) - n_train
        train = perm[:n_train]
        val = perm[n_train:n_train + n_val]
        test = perm[n_train + n_val:]
        return train, val, test

    if clean_mask is None:
        raise ValueError("unsupervised split needs a clean mask")
    clean_mask = np.asarray(clean_mask, dtype=bool)
    if clean_mask.shape[0] != n:
        raise LengthMismatch("clean mask length does not match dataset size")
    quota = int(n * r_train)
    clean_order = perm[clean_mask[perm]]
    train = clean_order[:quota]
    in_train = np.zeros(n, dtype=bool)
    in_train[train] = True
    rest = perm[~in_train[perm]]
    n_val = int(round(len(rest) * r_val / (r_val + r_test)))
    return train, rest[:n_val], rest[n_val:]


# ---------------------------------------------------------------------------
# Confusion metrics


def _ratio(num: int, den: int) -> Fraction | None:
    return None if den == 0 else Fraction(num, den)


def _as_float(f: Fraction | None) -> float | None:
    return None if f is None else float(f)


@dataclass
class Metrics:
    tp: int
    fp: int
    tn: int
    fn: int
    auc: float | None = None

    @property
    def total(self) -> int:
        return self.tp + self.fp + self.tn + self.fn

    # exact rational forms
    def tpr_fraction(self) -> Fraction | None:
        return _ratio(self.tp, self.tp + self.fn)

    def fnr_fraction(self) -> Fraction | None:
        return _ratio(self.fn, self.tp + self.fn)

    def tnr_fraction(self) -> Fraction | None:
        return _ratio(self.tn, self.tn + self.fp)

    def fpr_fraction(self) -> Fraction | None:
        return _ratio(self.fp, self.tn + self.fp)

    def accuracy_fraction(self) -> Fraction:
        return Fraction(self.tp + self.tn, self.total)

    def precision_fraction(self) -> Fraction | None:
        return _ratio(self.tp, self.tp + self.fp)

    # float views
    @property
    def tpr(self) -> float | None:
        return _as_float(self.tpr_fraction())

    @property
    def fnr(self) -> float | None:
        return _as_float(self.fnr_fraction())

    @property
    def tnr(self) -> float | None:
        return _as_float(self.tnr_fraction())

    @property
    def fpr(self) -> float | None:
        return _as_float(self.fpr_fraction())

    @property
    def accuracy(self) -> float:
        return float(self.accuracy_fraction())

    @property
    def precision(self) -> float | None:
        return _as_float(self.precision_fraction())

    @property
    def recall(self) -> float | None:
        return self.tpr

    def as_dict(self) -> dict:
        return {
            "tp": self.tp, "fp": self.fp, "tn": self.tn, "fn": self.fn,
            "tpr": self.tpr, "fpr": self.fpr, "tnr": self.tnr, "fnr": self.fnr,
            "accuracy": self.accuracy, "precision": self.precision,
            "recall": self.recall, "auc": self.auc,
        }


def compute_metrics(y_true, y_pred) -> Metrics:
    yt = np.asarray(y_true, dtype=bool).ravel()
    yp = np.asarray(y_pred, dtype=bool).ravel()
    if yt.shape != yp.shape:
        raise LengthMismatch(f"y_true {yt.shape} vs y_pred {yp.shape}")
    if yt.size == 0:
        raise LengthMismatch("empty inputs")
    tp = int(np.count_nonzero(yt & yp))
    fp = int(np.count_nonzero(~yt & yp))
    tn = int(np.count_nonzero(~yt & ~yp))
    fn = int(np.count_nonzero(yt & ~yp))
    return Metrics(tp=tp, fp=fp, tn=tn, fn=fn)


def compute_auc(y_true, scores) -> float:
    """Rank-based (Mann-Whitney) AUC with average-rank tie correction."""
    yt = np.asarray(y_true, dtype=bool).ravel()
    s = np.asarray(scores, dtype=np.float64).ravel()
    if yt.shape != s.shape:
        raise LengthMismatch(f"y_true {yt.shape} vs scores {s.shape}")
    n_pos = int(yt.sum())
    n_neg = yt.size - n_pos
    if n_pos == 0 or n_neg == 0:
        raise SingleClass("AUC needs both classes present")
    order = np.argsort(s, kind="mergesort")
    ranks = np.empty(yt.size, dtype=np.float64)
    i = 0
    sorted_scores = s[order]
    while i < yt.size:
        j = i
        while j < yt.size and sorted_scores[j] == sorted_scores[i]:
            j += 1
        ranks[order[i:j]] = (i + j + 1) / 2.0  # average 1-based rank
        i = j
    rank_sum = ranks[yt].sum()
    return float((rank_sum - n_pos * (n_pos + 1) / 2.0) / (n_pos * n_neg))


# ---------------------------------------------------------------------------
# Temporal decay


@dataclass
class TemporalCell:
    train_month: str
    test_month: str
    age: int  # calendar months between train and test
    metrics: Metrics


@dataclass
class TemporalReport:
    cells: list[TemporalCell]
    age_mean_accuracy: dict[int, float]
    baseline_accuracy: float  # mean accuracy at age 1
    relative: dict[int, float]  # age mean minus baseline


def _month_index(month: str) -> int:
    y, m = month.split("-")
    return int(y) * 12 + int(m) - 1


def temporal_eval(monthly: dict[str, tuple[np.ndarray, np.ndarray]],
                  fit, predict) -> TemporalReport:
    """Train one model per month, test on every later month.

    monthly maps "YYYY-MM" to (X, y); fit(X, y) returns a model and
    predict(model, X) returns boolean labels. Per-age means average the
    accuracy of all models of that age.
    """
    months = sorted(monthly)
    if len(months) < 2:
        raise InsufficientMonths(f"need at least 2 months, got {len(months)}")
    cells: list[TemporalCell] = []
    for i, train_month in enumerate(months):
        Xtr, ytr = monthly[train_month]
        model = fit(Xtr, ytr)
        for test_month in months[i + 1:]:
            Xte, yte = monthly[test_month]
            m = compute_metrics(yte, predict(model, Xte))
            age = _month_index(test_month) - _month_index(train_month)
            cells.append(TemporalCell(train_month, test_month, age, m))

    by_age: dict[int, list[float]] = {}
    for cell in cells:
        by_age.setdefault(cell.age, []).append(cell.metrics.accuracy)
    age_means = {age: sum(vals) / len(vals) for age, vals in sorted(by_age.items())}
    baseline = age_means[min(age_means)]
    relative = {age: mean - baseline for age, mean in age_means.items()}
    return TemporalReport(cells=cells, age_mean_accuracy=age_means,
                          baseline_accuracy=baseline, relative=relative)


# ---------------------------------------------------------------------------
# Biweekly cross-platform agreement


@dataclass
class AgreementRow:
    interval_index: int
    interval_start: date
    both_anomalous: int
    both_clean: int
    only_a: int
    only_b: int

    @property
    def common_tested(self) -> int:
        return self.both_anomalous + self.both_clean + self.only_a + self.only_b


@dataclass
class AgreementReport:
    anchor: date
    rows: list[AgreementRow]


def _majority(votes: list[bool]) -> bool:
    # ties resolve to anomalous: recall is preferred at triage stage
    return 2 * sum(votes) >= len(votes)


def biweekly_agreement(obs_a, obs_b) -> AgreementReport:
    """Per-domain majority-vote agreement over 14-day intervals.

    obs_a / obs_b are iterables of (domain, date, anomalous) observations.
    Only domains tested by both sides within an interval are compared.
    """
    obs_a = list(obs_a)
    obs_b = list(obs_b)
    if not obs_a or not obs_b:
        raise NoOverlap("one of the observation sets is empty")
    anchor = min(d for _, d, _ in obs_a + obs_b)

    def collect(obs) -> dict[int, dict[str, list[bool]]]:
        grouped: dict[int, dict[str, list[bool]]] = {}
        for domain, when, anomalous in obs:
            idx = (when - anchor).days // 14
            grouped.setdefault(idx, {}).setdefault(domain, []).append(bool(anomalous))
        return grouped

    a = collect(obs_a)
    b = collect(obs_b)
    rows = []
    for idx in sorted(set(a) & set(b)):
        common = sorted(set(a[idx]) & set(b[idx]))
        if not common:
            continue
        row = AgreementRow(interval_index=idx,
                           interval_start=anchor + timedelta(days=idx * 14),
                           both_anomalous=0, both_clean=0, only_a=0, only_b=0)
        for domain in common:
            va = _majority(a[idx][domain])
            vb = _majority(b[idx][domain])
            if va and vb:
                row.both_anomalous += 1
            elif not va and not vb:
                row.both_clean += 1
            elif va:
                row.only_a += 1
            else:
                row.only_b += 1
        rows.append(row)
    if not rows:
        raise NoOverlap("no (domain, interval) pair is tested by both sides")
    return AgreementReport(anchor=anchor, rows=rows)


def observations_from(records, verdicts) -> list[tuple[str, date, bool]]:
    """Build (domain, date, anomalous) triples from records and a record_id
    -> anomalous mapping; records without a verdict are skipped."""
    out = []
    for rec in records:
        v = verdicts.get(rec.record_id)
        if v is not None:
            out.append((rec.test_domain, rec.probe_time.date(), bool(v)))
    return out


# ---------------------------------------------------------------------------
# Report emission


def _fmt(value: float | None, digits: int = 6) -> str:
    return "" if value is None else f"{value:.{digits}g}"


def write_metrics_csv(path: str | Path, rows: list[tuple[str, Metrics]],
                      config_hash: str = "") -> None:
    with open(path, "w", newline="") as fh:
        fh.write(f"# config_hash={config_hash}\n")
        writer = csv.writer(fh)
        writer.writerow(["label", "tp", "fp", "tn", "fn",
                         "tpr", "fpr", "tnr", "fnr", "accuracy", "precision", "auc"])
        for label, m in rows:
            writer.writerow([label, m.tp, m.fp, m.tn, m.fn,
                             _fmt(m.tpr), _fmt(m.fpr), _fmt(m.tnr), _fmt(m.fnr),
                             _fmt(m.accuracy), _fmt(m.precision), _fmt(m.auc)])


def write_temporal_csv(path: str | Path, report: TemporalReport,
                       config_hash: str = "") -> None:
    with open(path, "w", newline="") as fh:
        fh.write(f"# config_hash={config_hash}\n")
        writer = csv.writer(fh)
        writer.writerow(["train_month", "test_month", "age", "accuracy",
                         "tpr", "fpr", "tnr", "fnr", "delta_vs_baseline"])
        for cell in report.cells:
            m = cell.metrics
            writer.writerow([cell.train_month, cell.test_month, cell.age,
                             _fmt(m.accuracy), _fmt(m.tpr), _fmt(m.fpr),
                             _fmt(m.tnr), _fmt(m.fnr),
                             _fmt(report.age_mean_accuracy[cell.age]
                                  - report.baseline_accuracy)])


def write_agreement_csv(path: str | Path, report: AgreementReport,
                        config_hash: str = "") -> None:
    with open(path, "w", newline="") as fh:
        fh.write(f"# config_hash={config_hash}\n")
        writer = csv.writer(fh)
        writer.writerow(["interval_index", "interval_start", "both_anomalous",
                         "both_clean", "only_a", "only_b", "common_tested"])
        for row in report.rows:
            writer.writerow([row.interval_index, row.interval_start.isoformat(),
                             row.both_anomalous, row.both_clean,
                             row.only_a, row.only_b, row.common_tested])


def write_summary_json(path: str | Path, payload: dict, config_hash: str = "") -> None:
    doc = {"config_hash": config_hash, **payload}
    Path(path).write_text(json.dumps(doc, sort_keys=True, indent=1, default=str))
