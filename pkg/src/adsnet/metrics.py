"""Segmentation metrics: Dice, IoU, MAE and weighted F-beta.

Dice and IoU binarize the prediction at ``threshold`` (``pred >= threshold``);
MAE and weighted F-beta use the soft map.  Two empty masks score Dice = IoU
= 1.  Weighted F-beta is undefined without ground-truth foreground and raises
``UndefinedMetric``; dataset reports mark those rows as skipped.
"""

from __future__ import annotations

import csv
import io
import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

import numpy as np
from scipy import ndimage

from .kernels import nearest_foreground

_EPS = np.finfo(np.float64).eps


class UndefinedMetric(ValueError):
    pass


def _pair(pred, gt):
    pred = np.asarray(getattr(pred, "data", pred), dtype=np.float64)
    gt = np.asarray(getattr(gt, "data", gt))
    if pred.shape != gt.shape:
        raise ValueError(f"shape mismatch: pred {pred.shape} vs gt {gt.shape}")
    return pred, gt > 0.5


def dice(pred, gt, threshold: float = 0.5, smooth: float = 1e-8) -> float:
    pred, g = _pair(pred, gt)
    p = pred >= threshold
    total = p.sum() + g.sum()
    if total == 0:
        return 1.0
    return float(2.0 * np.logical_and(p, g).sum() / (total + smooth))


def iou(pred, gt, threshold: float = 0.5, smooth: float = 1e-8) -> float:
    pred, g = _pair(pred, gt)
    p = pred >= threshold
    union = np.logical_or(p, g).sum()
    if union == 0:
        return 1.0
    return float(np.logical_and(p, g).sum() / (union + smooth))


def mae(pred, gt) -> float:
    pred, g = _pair(pred, gt)
    return float(np.abs(pred - g).mean())


def gaussian_kernel(size: int = 7, sigma: float = 5.0) -> np.ndarray:
    half = (size - 1) / 2.0
    y, x = np.ogrid[-half : half + 1, -half : half + 1]
    k = np.exp(-(x * x + y * y) / (2.0 * sigma * sigma))
    k[k < _EPS * k.max()] = 0
    return k / k.sum()


def weighted_fbeta(pred, gt, beta_sq: float = 1.0, sigma: float = 5.0, kernel_size: int = 7, decay: float = 5.0) -> float:
    """Weighted F-beta of a soft foreground map.

    Errors on background pixels take the error of their nearest foreground
    pixel (ties: smallest column, then smallest row), are smoothed with a
    Gaussian, capped at the raw error inside the foreground, and background
    errors are amplified by ``2 - 0.5 ** (distance / decay)``.
    """
    pred, g = _pair(pred, gt)
    if not g.any():
        raise UndefinedMetric("weighted F-beta needs ground-truth foreground")
    err = np.abs(pred - g)
    dist2, rows, cols = nearest_foreground(g)
    bg = ~g
    err_t = err.copy()
    err_t[bg] = err[rows[bg], cols[bg]]
    smoothed = ndimage.convolve(err_t, gaussian_kernel(kernel_size, sigma), mode="constant", cval=0.0)
    min_err = np.where(g & (smoothed < err), smoothed, err)
    importance = np.where(g, 1.0, 2.0 - np.exp(np.log(0.5) / decay * np.sqrt(dist2)))
    err_w = min_err * importance
    tp_w = g.sum() - err_w[g].sum()
    fp_w = err_w[bg].sum()
    recall = 1.0 - err_w[g].mean()
    precision = tp_w / (tp_w + fp_w + _EPS)
    return float((1.0 + beta_sq) * recall * precision / (recall + beta_sq * precision + _EPS))


@dataclass
class ImageMetrics:
    image_id: str
    dice: float
    iou: float
    wfb: float | None
    mae: float

    @property
    def wfb_skipped(self) -> bool:
        return self.wfb is None


def image_metrics(image_id: str, prob, gt, threshold: float = 0.5, beta_sq: float = 1.0, sigma: float = 5.0) -> ImageMetrics:
    try:
        wfb = weighted_fbeta(prob, gt, beta_sq, sigma)
    except UndefinedMetric:
        wfb = None
    return ImageMetrics(image_id, dice(prob, gt, threshold), iou(prob, gt, threshold), wfb, mae(prob, gt))


CSV_COLUMNS = ("image_id", "dice", "iou", "wfb", "mae")
TABLE_COLUMNS = (("Dice", "dice"), ("IoU", "iou"), ("F^w_beta", "wfb"), ("MAE", "mae"))


@dataclass
class MetricReport:
    dataset_name: str
    threshold_used: float
    per_image: list[ImageMetrics]
    failures: list[tuple[str, str]] = field(default_factory=list)
    seed: int | None = None

    @property
    def aggregate(self) -> dict[str, float]:
        agg = {}
        for name in ("dice", "iou", "wfb", "mae"):
            vals = [getattr(m, name) for m in self.per_image if getattr(m, name) is not None]
            agg[name] = float(np.mean(vals)) if vals else math.nan
        return agg

    def to_csv(self) -> str:
        buf = io.StringIO()
        writer = csv.writer(buf, lineterminator="\n")
        writer.writerow(CSV_COLUMNS)
        fmt = lambda v: "" if v is None or (isinstance(v, float) and math.isnan(v)) else f"{v:.6f}"  # noqa: E731
        for m in self.per_image:
            writer.writerow([m.image_id, fmt(m.dice), fmt(m.iou), fmt(m.wfb), fmt(m.mae)])
        agg = self.aggregate
        writer.writerow(["__mean__"] + [fmt(agg[c]) for c in CSV_COLUMNS[1:]])
        return buf.getvalue()

    def format_table(self) -> str:
        agg = self.aggregate
        head = f"{'Dataset':<16}" + "".join(f"{title:>10}" for title, _ in TABLE_COLUMNS)
        row = f"{self.dataset_name:<16}" + "".join(f"{agg[key]:>10.3f}" for _, key in TABLE_COLUMNS)
        lines = [head, "-" * len(head), row]
        skipped = sum(m.wfb_skipped for m in self.per_image)
        if skipped:
            lines.append(f"({skipped} image(s) without foreground skipped for F^w_beta)")
        return "\n".join(lines)


def evaluate_dataset(predictor, dataset, dataset_name: str = "dataset", threshold: float = 0.5, workers: int = 1, seed=None) -> MetricReport:
    """Score ``predictor(record) -> probability map at the record's mask size``.

    Records that fail to load or predict are listed in ``failures``; the call
    only fails when every record does.
    """
    if len(dataset) == 0:
        raise ValueError("cannot evaluate an empty dataset")
    jobs, failures = [], []
    for idx in range(len(dataset)):
        try:
            rec = dataset[idx]
            prob = np.asarray(predictor(rec), dtype=np.float64)
            jobs.append((rec.image_id, prob, rec.mask.data))
        except Exception as exc:  # noqa: BLE001 - reported per record
            ids = getattr(dataset, "image_ids", None)
            failures.append((ids[idx] if ids else str(idx), repr(exc)))
    if not jobs:
        raise RuntimeError(f"all {len(dataset)} records failed: {failures[:3]}")

    def score(job):
        return image_metrics(job[0], job[1], job[2], threshold)

    if workers > 1:
        with ThreadPoolExecutor(workers) as pool:
            rows = list(pool.map(score, jobs))
    else:
        rows = [score(j) for j in jobs]
    rows.sort(key=lambda m: m.image_id)
    return MetricReport(dataset_name, threshold, rows, failures, seed)
