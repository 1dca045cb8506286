"""Classification metrics, time-to-detection, latency and report files."""

from __future__ import annotations

import csv
import logging
import time
from dataclasses import dataclass, field
from pathlib import Path
from typing import Callable, Iterable, Mapping, Sequence

import numpy as np

logger = logging.getLogger(__name__)


@dataclass
class MetricsReport:
    tp: int
    fp: int
    tn: int
    fn: int
    accuracy: float
    precision: float
    recall: float
    f1: float
    degenerate: frozenset[str] = frozenset()
    ttd_minutes: float | None = None
    ttd_minutes_detected: float | None = None
    ttd_per_fire: dict[str, "FireTTD"] = field(default_factory=dict)
    params_millions: float | None = None
    latency_ms_per_image: float | None = None

    @property
    def total(self) -> int:
        return self.tp + self.fp + self.tn + self.fn


def confusion(predictions, labels) -> tuple[int, int, int, int]:
    p = np.asarray(predictions).astype(bool).ravel()
    y = np.asarray(labels).astype(bool).ravel()
    if p.shape != y.shape:
        raise ValueError(f"length mismatch: {p.size} predictions, {y.size} labels")
    tp = int(np.count_nonzero(p & y))
    fp = int(np.count_nonzero(p & ~y))
    tn = int(np.count_nonzero(~p & ~y))
    fn = int(np.count_nonzero(~p & y))
    return tp, fp, tn, fn


def report_from_counts(tp: int, fp: int, tn: int, fn: int) -> MetricsReport:
    total = tp + fp + tn + fn
    if total == 0:
        raise ValueError("no examples")
    degenerate = set()
    if tp + fp == 0:
        degenerate.add("precision")
    if tp + fn == 0:
        degenerate.add("recall")
    precision = tp / (tp + fp) if tp + fp else 0.0
    recall = tp / (tp + fn) if tp + fn else 0.0
    f1 = f1_score(precision, recall)
    return MetricsReport(
        tp=tp, fp=fp, tn=tn, fn=fn,
        accuracy=(tp + tn) / total,
        precision=precision,
        recall=recall,
        f1=f1,
        degenerate=frozenset(degenerate),
    )


def f1_score(precision: float, recall: float) -> float:
    return 2 * precision * recall / (precision + recall) if precision + recall else 0.0


def classification_metrics(predictions, labels) -> MetricsReport:
    return report_from_counts(*confusion(predictions, labels))


def validation_error_rate(predictions, labels) -> float:
    """Fraction of misclassified images."""
    p = np.asarray(predictions).astype(bool).ravel()
    y = np.asarray(labels).astype(bool).ravel()
    if p.size == 0:
        raise ValueError("validation error rate of an empty set is undefined")
    if p.shape != y.shape:
        raise ValueError("length mismatch")
    return int(np.count_nonzero(p != y)) / p.size


# -- time to detection -------------------------------------------------------


@dataclass(frozen=True)
class FireTTD:
    minutes: float
    flagged: bool  # never detected; minutes is the penalty value


@dataclass
class TTDResult:
    per_fire: dict[str, FireTTD]
    mean_all: float | None
    mean_detected: float | None
    excluded: tuple[str, ...] = ()


def fire_ttd(offsets: Sequence[int], labels: Sequence[int], predictions: Sequence[int]) -> FireTTD | None:
    """Minutes from ignition to the first correctly predicted positive frame.

    Undetected fires get the last positive offset plus one minute, flagged.
    Returns None for a fire with no positive frames.
    """
    positives = [(o, p) for o, y, p in zip(offsets, labels, predictions) if y]
    if not positives:
        return None
    positives.sort()
    for offset, pred in positives:
        if pred:
            return FireTTD(offset / 60.0, False)
    return FireTTD(positives[-1][0] / 60.0 + 1.0, True)


def time_to_detection(fires: Mapping[str, tuple[Sequence[int], Sequence[int], Sequence[int]]]) -> TTDResult:
    """``fires`` maps fire id -> (offsets in seconds, labels, predictions)."""
    per_fire = {}
    excluded = []
    for fire_id, (offsets, labels, preds) in fires.items():
        result = fire_ttd(offsets, labels, preds)
        if result is None:
            logger.warning("fire %s has no positive frames; excluded from TTD", fire_id)
            excluded.append(fire_id)
            continue
        per_fire[fire_id] = result
    all_minutes = [r.minutes for r in per_fire.values()]
    detected = [r.minutes for r in per_fire.values() if not r.flagged]
    return TTDResult(
        per_fire=per_fire,
        mean_all=float(np.mean(all_minutes)) if all_minutes else None,
        mean_detected=float(np.mean(detected)) if detected else None,
        excluded=tuple(excluded),
    )


# -- latency ----------------------------------------------------------------


def measure_latency(model: Callable, sample_inputs, warmup: int = 3, trials: int = 10) -> float:
    """Mean wall-clock milliseconds per image over ``trials`` batch-1 calls.

    ``sample_inputs`` is one batch-1 input, or a list cycled through.
    """
    if trials < 1:
        raise ValueError("trials must be >= 1")
    inputs = sample_inputs if isinstance(sample_inputs, list) else [sample_inputs]
    try:
        import torch

        ctx = torch.inference_mode()
    except ImportError:  # pragma: no cover
        from contextlib import nullcontext

        ctx = nullcontext()
    with ctx:
        for i in range(warmup):
            model(inputs[i % len(inputs)])
        times = []
        for i in range(trials):
            start = time.perf_counter()
            model(inputs[i % len(inputs)])
            times.append(time.perf_counter() - start)
    return 1000.0 * float(np.mean(times))


# -- report files -----------------------------------------------------------

TABLE_COLUMNS = ("Model", "Params(M)", "Time(ms/it)", "A", "F1", "P", "R", "TTD(mins)")


def _fmt(value, digits: int) -> str:
    return "" if value is None else f"{value:.{digits}f}"


def table_row(name: str, report: MetricsReport | None) -> list[str]:
    """Formatted cells; a missing report (failed run) leaves them empty."""
    if report is None:
        return [name] + [""] * (len(TABLE_COLUMNS) - 1)
    return [
        name,
        _fmt(report.params_millions, 1),
        _fmt(report.latency_ms_per_image, 1),
        _fmt(100 * report.accuracy, 2),
        _fmt(100 * report.f1, 2),
        _fmt(100 * report.precision, 2),
        _fmt(100 * report.recall, 2),
        _fmt(report.ttd_minutes, 2),
    ]


def write_metrics_table(path: str | Path, rows: Iterable[tuple[str, MetricsReport | None]]) -> None:
    """Tab-separated comparison table, one row per variant."""
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh, delimiter="\t", lineterminator="\n")
        writer.writerow(TABLE_COLUMNS)
        for name, report in rows:
            writer.writerow(table_row(name, report))


def read_metrics_table(path: str | Path) -> list[dict[str, str]]:
    with open(path, newline="") as fh:
        return list(csv.DictReader(fh, delimiter="\t"))


def write_ttd_detail(path: str | Path, result: TTDResult) -> None:
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh, delimiter="\t", lineterminator="\n")
        writer.writerow(("fire_id", "ttd_minutes", "flagged"))
        for fire_id, r in sorted(result.per_fire.items()):
            writer.writerow((fire_id, f"{r.minutes:.2f}", int(r.flagged)))
