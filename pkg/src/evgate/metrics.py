"""Evaluation metrics and report assembly.

MIoU follows the standard per-class TP / (TP + FP + FN) with the mean taken
over classes that appear in either the ground truth or the prediction;
classes absent from both are excluded. Throughput is the mean of per-frame
reciprocal segmentation times (frames per second). Flop totals sum the
per-layer accumulate/multiply-accumulate counts over every processed
region; reused regions contribute nothing.
"""

from __future__ import annotations

import csv
import io
from dataclasses import dataclass, field

import numpy as np

from .errors import (
    LabelOutOfRangeError,
    NoValidClassesError,
    ShapeMismatchError,
    ZeroTimeError,
)
from .snn.flops import trace_flops


@dataclass
class ConfusionMatrix:
    counts: np.ndarray  # (C, C), counts[gt][pred]

    @staticmethod
    def zeros(num_classes: int) -> "ConfusionMatrix":
        return ConfusionMatrix(np.zeros((num_classes, num_classes), dtype=np.int64))

    @property
    def num_classes(self) -> int:
        return self.counts.shape[0]

    def merge(self, other: "ConfusionMatrix") -> "ConfusionMatrix":
        if self.counts.shape != other.counts.shape:
            raise ShapeMismatchError("merging confusion matrices of different sizes")
        return ConfusionMatrix(self.counts + other.counts)


def accumulate_confusion(gt, pred, cm: ConfusionMatrix) -> ConfusionMatrix:
    """Add one gt/prediction pair into ``cm`` (in place) and return it."""
    gt_labels = np.asarray(gt.labels if hasattr(gt, "labels") else gt)
    pred_labels = np.asarray(pred.labels if hasattr(pred, "labels") else pred)
    if gt_labels.shape != pred_labels.shape:
        raise ShapeMismatchError(f"gt {gt_labels.shape} vs pred {pred_labels.shape}")
    c = cm.num_classes
    if gt_labels.size:
        lo = min(int(gt_labels.min()), int(pred_labels.min()))
        hi = max(int(gt_labels.max()), int(pred_labels.max()))
        if lo < 0 or hi >= c:
            raise LabelOutOfRangeError(f"labels outside [0, {c})")
    flat = gt_labels.astype(np.int64).ravel() * c + pred_labels.astype(np.int64).ravel()
    cm.counts += np.bincount(flat, minlength=c * c).reshape(c, c)
    return cm


def per_class_iou(cm: ConfusionMatrix) -> np.ndarray:
    """IoU per class; NaN marks classes with zero union (absent everywhere)."""
    counts = cm.counts.astype(float)
    tp = np.diag(counts)
    union = counts.sum(axis=1) + counts.sum(axis=0) - tp
    with np.errstate(invalid="ignore", divide="ignore"):
        iou = np.where(union > 0, tp / np.maximum(union, 1e-300), np.nan)
    return iou


def miou(cm: ConfusionMatrix) -> float:
    iou = per_class_iou(cm)
    valid = ~np.isnan(iou)
    if not valid.any():
        raise NoValidClassesError("every class has zero union")
    return float(iou[valid].mean())


@dataclass
class ThroughputStats:
    times: list[float] = field(default_factory=list)

    def add(self, seconds: float) -> None:
        self.times.append(seconds)


def throughput(stats) -> float:
    """Mean of per-frame reciprocal segmentation times, in frames/second."""
    times = np.asarray(stats.times if hasattr(stats, "times") else stats, dtype=float)
    if times.size == 0:
        raise ZeroTimeError("no frame timings recorded")
    if (times <= 0).any():
        raise ZeroTimeError("non-positive frame time")
    return float((1.0 / times).mean())


def aggregate_flops(traces) -> tuple[int, int]:
    """Sum (acc, mac) over the traces of every processed region."""
    acc = mac = 0
    for trace in traces:
        a, m = trace_flops(trace)
        acc += a
        mac += m
    return acc, mac


# --- sweep reports ------------------------------------------------------------

REPORT_BASE_COLUMNS = ["theta", "miou", "fps_wall", "fps_multiplier", "acc_flops", "mac_flops"]
TIMING_COLUMNS = ("fps_wall", "fps_multiplier")


@dataclass
class ReportRow:
    theta: str                    # "baseline", "0_split", or a numeric string
    miou: float | None
    fps_wall: float
    acc_flops: int
    mac_flops: int
    processed: list[int]
    reused: list[int]
    extra: dict = field(default_factory=dict)


@dataclass
class Report:
    rows: list[ReportRow]
    num_regions: int
    extra_columns: list[str] = field(default_factory=list)

    def columns(self) -> list[str]:
        cols = list(REPORT_BASE_COLUMNS)
        cols += [f"processed_r{i}" for i in range(self.num_regions)]
        cols += [f"reused_r{i}" for i in range(self.num_regions)]
        cols += self.extra_columns
        return cols


def build_report(rows: list[ReportRow], extra_columns: list[str] | None = None) -> Report:
    """Assemble sweep rows into a report; the first row is the FPS baseline."""
    if not rows:
        raise NoValidClassesError("report needs at least one row")
    num_regions = max(len(r.processed) for r in rows)
    for r in rows:
        r.processed = r.processed + [0] * (num_regions - len(r.processed))
        r.reused = r.reused + [0] * (num_regions - len(r.reused))
    return Report(rows, num_regions, extra_columns or [])


def report_to_csv(report: Report, dest=None) -> str:
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(report.columns())
    base_fps = report.rows[0].fps_wall
    for row in report.rows:
        record = [
            row.theta,
            "" if row.miou is None else f"{row.miou:.6f}",
            f"{row.fps_wall:.3f}",
            f"{row.fps_wall / base_fps:.3f}",
            str(row.acc_flops),
            str(row.mac_flops),
        ]
        record += [str(v) for v in row.processed]
        record += [str(v) for v in row.reused]
        record += [str(row.extra.get(col, "")) for col in report.extra_columns]
        writer.writerow(record)
    text = buf.getvalue()
    if dest is not None:
        with open(dest, "w", encoding="utf-8") as fh:
            fh.write(text)
    return text


def read_report_csv(source) -> list[dict]:
    """Parse a report CSV back into dict rows (round-trip of report_to_csv)."""
    if hasattr(source, "read"):
        text = source.read()
    elif isinstance(source, str) and "\n" in source:
        text = source
    else:
        with open(source, "r", encoding="utf-8") as fh:
            text = fh.read()
    return list(csv.DictReader(io.StringIO(text)))


def render_table(report: Report) -> str:
    """Fixed-width human-readable rendering of a report."""
    headers = report.columns()
    rows = [headers]
    for line in read_report_csv(report_to_csv(report)):
        rows.append([line[h] for h in headers])
    widths = [max(len(r[i]) for r in rows) for i in range(len(headers))]
    out = []
    for i, row in enumerate(rows):
        out.append("  ".join(cell.rjust(w) for cell, w in zip(row, widths)))
        if i == 0:
            out.append("  ".join("-" * w for w in widths))
    return "\n".join(out)


def reports_equal_ignoring_timing(csv_a: str, csv_b: str) -> bool:
    """Byte-stability comparison that masks the wall-clock columns."""
    rows_a, rows_b = read_report_csv(csv_a), read_report_csv(csv_b)
    if len(rows_a) != len(rows_b):
        return False
    for ra, rb in zip(rows_a, rows_b):
        ka = {k: v for k, v in ra.items() if k not in TIMING_COLUMNS}
        kb = {k: v for k, v in rb.items() if k not in TIMING_COLUMNS}
        if ka != kb:
            return False
    return True
