"""Forecast verification: contingency tables and categorical skill scores.

Truth and prediction frames are binarized at the six standard VIP
intensity thresholds (pixel >= threshold maps to 1), classified per pixel
into hits / misses / false alarms / correct rejections, and pooled over
the whole test set per (threshold, lead time) before scoring. Scores
follow the standard definitions: POD = H/(H+M), SUCR = H/(H+FA),
CSI = H/(H+M+FA), BIAS = (H+FA)/(H+M); a zero denominator yields an
explicit Undefined (None) rather than a silent NaN, serialized as an
empty CSV cell.
"""

import csv
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .errors import ContractViolation

VIP_THRESHOLDS = (16, 74, 133, 160, 181, 219)


def binarize(image, threshold) -> np.ndarray:
    """1 where pixel >= threshold (boundary inclusive), else 0."""
    return (np.asarray(image) >= threshold).astype(np.uint8)


@dataclass
class ContingencyTable:
    """Hit / miss / false-alarm / correct-rejection counts. A mergeable
    monoid: parallel shards can accumulate independently and be added."""

    hits: int = 0
    misses: int = 0
    false_alarms: int = 0
    correct_rejections: int = 0

    @property
    def total(self) -> int:
        return self.hits + self.misses + self.false_alarms + self.correct_rejections

    def __add__(self, other: "ContingencyTable") -> "ContingencyTable":
        return ContingencyTable(
            self.hits + other.hits,
            self.misses + other.misses,
            self.false_alarms + other.false_alarms,
            self.correct_rejections + other.correct_rejections,
        )


def accumulate(pred_bin, truth_bin, table: ContingencyTable) -> ContingencyTable:
    """Add the per-pixel classification of one binary pair into a table."""
    p = np.asarray(pred_bin).astype(bool)
    t = np.asarray(truth_bin).astype(bool)
    if p.shape != t.shape:
        raise ContractViolation(f"shape mismatch: pred {p.shape} vs truth {t.shape}")
    return table + ContingencyTable(
        hits=int(np.count_nonzero(p & t)),
        misses=int(np.count_nonzero(~p & t)),
        false_alarms=int(np.count_nonzero(p & ~t)),
        correct_rejections=int(np.count_nonzero(~p & ~t)),
    )


@dataclass(frozen=True)
class Scores:
    """Categorical scores; None marks an undefined (0/0) value."""

    pod: float | None
    sucr: float | None
    csi: float | None
    bias: float | None


def scores(table: ContingencyTable) -> Scores:
    h, m, fa = table.hits, table.misses, table.false_alarms
    return Scores(
        pod=h / (h + m) if h + m else None,
        sucr=h / (h + fa) if h + fa else None,
        csi=h / (h + m + fa) if h + m + fa else None,
        bias=(h + fa) / (h + m) if h + m else None,
    )


def mse(pred, truth) -> float:
    """Mean squared pixel error in binary64."""
    p = np.asarray(pred, dtype=np.float64)
    t = np.asarray(truth, dtype=np.float64)
    if p.shape != t.shape:
        raise ContractViolation(f"shape mismatch: pred {p.shape} vs truth {t.shape}")
    d = p - t
    return float((d * d).mean())


def persistence(input_frames) -> np.ndarray:
    """Zero-skill baseline: repeat the last observed frame for all 12 leads."""
    frames = np.asarray(input_frames)
    last = frames[-1]
    return np.repeat(last[None], 12, axis=0)


@dataclass
class MetricReport:
    """Pooled verification results over a forecast set.

    tables maps (threshold, lead) to its pooled ContingencyTable, with
    lead 0 meaning "all leads pooled". lead_mse[k] is the MSE at lead k+1.
    """

    thresholds: tuple
    n_leads: int
    tables: dict
    lead_mse: list
    overall_mse: float

    def score_at(self, threshold, lead) -> Scores:
        return scores(self.tables[(threshold, lead)])


def evaluate_forecast_set(preds, truths, thresholds=VIP_THRESHOLDS) -> MetricReport:
    """Score stacked forecasts (S, L, H, W) against truths of equal shape.

    Contingency counts are pooled across all samples per (threshold, lead);
    per-image score averaging is intentionally not implemented.
    """
    p = np.asarray(preds)
    t = np.asarray(truths)
    if p.shape != t.shape:
        raise ContractViolation(f"shape mismatch: preds {p.shape} vs truths {t.shape}")
    if p.ndim == 3:
        p = p[None]
        t = t[None]
    if p.ndim != 4:
        raise ContractViolation(f"expected (S, L, H, W) forecasts, got rank {p.ndim}")
    thresholds = tuple(thresholds)
    if list(thresholds) != sorted(set(thresholds)):
        raise ContractViolation("thresholds must be strictly increasing")
    n_leads = p.shape[1]

    tables = {}
    for thr in thresholds:
        pb = binarize(p, thr)
        tb = binarize(t, thr)
        pooled = ContingencyTable()
        for lead in range(1, n_leads + 1):
            tab = accumulate(pb[:, lead - 1], tb[:, lead - 1], ContingencyTable())
            tables[(thr, lead)] = tab
            pooled = pooled + tab
        tables[(thr, 0)] = pooled

    lead_mse = [mse(p[:, k], t[:, k]) for k in range(n_leads)]
    return MetricReport(
        thresholds=thresholds,
        n_leads=n_leads,
        tables=tables,
        lead_mse=lead_mse,
        overall_mse=mse(p, t),
    )


CSV_COLUMNS = ["threshold", "lead_time", "H", "M", "FA", "CR", "POD", "SUCR", "CSI", "BIAS", "MSE"]


def _fmt_score(value) -> str:
    return "" if value is None else f"{value:.6f}"


def write_metric_csv(report: MetricReport, path) -> None:
    """Per-(threshold, lead) rows plus an 'all' row pooling leads."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(CSV_COLUMNS)
        for thr in report.thresholds:
            for lead in range(1, report.n_leads + 1):
                tab = report.tables[(thr, lead)]
                sc = scores(tab)
                writer.writerow(
                    [thr, lead, tab.hits, tab.misses, tab.false_alarms,
                     tab.correct_rejections, _fmt_score(sc.pod), _fmt_score(sc.sucr),
                     _fmt_score(sc.csi), _fmt_score(sc.bias),
                     f"{report.lead_mse[lead - 1]:.6f}"]
                )
            tab = report.tables[(thr, 0)]
            sc = scores(tab)
            writer.writerow(
                [thr, "all", tab.hits, tab.misses, tab.false_alarms,
                 tab.correct_rejections, _fmt_score(sc.pod), _fmt_score(sc.sucr),
                 _fmt_score(sc.csi), _fmt_score(sc.bias), f"{report.overall_mse:.6f}"]
            )
