"""
Expected Calibration Error over equal-width, right-closed confidence bins.

A confidence lying exactly on an edge goes to the lower bin; confidence 0 is folded into the first bin.
"""
import logging
from dataclasses import dataclass

import numpy as np
import pandas as pd
from tabulate import tabulate

from errors import ValidationError

logger = logging.getLogger(__name__)

DEFAULT_BINS = 15
ROW_SUM_TOL = 1e-6


@dataclass(frozen=True)
class CalibrationReport:
    n_bins: int
    bin_lo: np.ndarray
    bin_hi: np.ndarray
    counts: np.ndarray
    conf: np.ndarray
    acc: np.ndarray
    ece: float
    accuracy: float
    mean_confidence: float

    @property
    def n(self) -> int:
        return int(self.counts.sum())

    def to_frame(self) -> pd.DataFrame:
        return pd.DataFrame({"bin_lo": self.bin_lo, "bin_hi": self.bin_hi, "count": self.counts,
                             "conf": self.conf, "acc": self.acc})

    def summary(self) -> dict:
        return {"ece": self.ece, "accuracy": self.accuracy, "mean_confidence": self.mean_confidence,
                "n": self.n, "bins": self.n_bins}


def invalid_rows(probs) -> np.ndarray:
    """0-based indices of rows that are negative somewhere or do not sum to 1 within ROW_SUM_TOL."""
    probs = np.asarray(probs, dtype=np.float64)
    return np.flatnonzero((np.abs(probs.sum(axis=1) - 1.0) > ROW_SUM_TOL) | np.any(probs < 0, axis=1))


def _check(probs, labels):
    probs = np.asarray(probs, dtype=np.float64)
    labels = np.asarray(labels, dtype=np.int64).ravel()
    if probs.ndim != 2 or probs.shape[0] == 0:
        raise ValidationError("need a nonempty n x C probability matrix")
    if labels.shape != (probs.shape[0],):
        raise ValidationError(f"{labels.size} labels for {probs.shape[0]} prediction rows")
    if np.any(labels < 0) or np.any(labels >= probs.shape[1]):
        raise ValidationError(f"labels must lie in [0, {probs.shape[1]})")
    bad = invalid_rows(probs)
    if bad.size:
        raise ValidationError(f"row index {int(bad[0])} is not a probability distribution")
    return probs, labels


def accuracy(probs, labels) -> float:
    """Fraction of argmax predictions equal to the label; ties go to the lowest class index."""
    probs, labels = _check(probs, labels)
    return float(np.mean(np.argmax(probs, axis=1) == labels))


def ece(probs, labels, n_bins: int = DEFAULT_BINS) -> CalibrationReport:
    if n_bins < 1:
        raise ValidationError(f"bin count must be >= 1, got {n_bins}")
    probs, labels = _check(probs, labels)
    n = probs.shape[0]
    confidence = probs.max(axis=1)
    correct = (np.argmax(probs, axis=1) == labels).astype(np.float64)
    # fixed summation order makes the report bit-identical under row permutation
    order = np.lexsort((correct, confidence))
    confidence, correct = confidence[order], correct[order]

    edges = np.linspace(0.0, 1.0, n_bins + 1)
    idx = np.clip(np.searchsorted(edges, confidence, side="left") - 1, 0, n_bins - 1)
    counts = np.bincount(idx, minlength=n_bins)
    conf_sum = np.bincount(idx, weights=confidence, minlength=n_bins)
    acc_sum = np.bincount(idx, weights=correct, minlength=n_bins)
    filled = counts > 0
    conf = np.where(filled, conf_sum / np.maximum(counts, 1), 0.0)
    acc = np.where(filled, acc_sum / np.maximum(counts, 1), 0.0)
    value = float(np.sum(counts / n * np.abs(acc - conf)))
    return CalibrationReport(n_bins, edges[:-1], edges[1:], counts, conf, acc, value,
                             float(correct.mean()), float(confidence.mean()))


def reliability_table(report: CalibrationReport) -> str:
    """Console view of the non-empty bins."""
    frame = report.to_frame()
    frame = frame[frame["count"] > 0]
    return tabulate(frame.values.tolist(), headers=list(frame.columns), floatfmt=".4f", tablefmt="grid")
