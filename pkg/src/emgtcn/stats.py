"""Evaluation statistics: per-subject accuracy, cross-subject
aggregation, paired Wilcoxon signed-rank comparisons, and the CSV
reports that carry them.

Conventions that the rest of the pipeline relies on: accuracies are
fractions in [0, 1]; the spread statistic uses the n-1 denominator;
quartiles are linearly interpolated. The Wilcoxon test drops zero
differences, average-ranks ties, and is two-sided, with the exact
null distribution used up to 20 effective pairs and a tie- and
continuity-corrected normal approximation beyond.
"""

from __future__ import annotations

import math
import os
from dataclasses import dataclass

import numpy as np

from .errors import ConfigError, DataError, DimensionError, RangeError, UsageError

__all__ = [
    "EvalReport",
    "WilcoxonResult",
    "accuracy",
    "aggregate",
    "wilcoxon_signed_rank",
    "significance_band",
    "emit_report",
    "read_per_subject",
]

EXACT_ENUMERATION_LIMIT = 20


def accuracy(predictions, labels) -> float:
    """Fraction of correct predictions.

    ``predictions`` is either a vector of class ids or a B x K logit
    matrix; in the latter case argmax decides, with ties broken toward
    the lowest class index.
    """
    preds = np.asarray(predictions)
    labels = np.asarray(labels)
    if preds.size == 0 or labels.size == 0:
        raise UsageError("accuracy of an empty prediction set is undefined")
    if preds.ndim == 2:
        preds = np.argmax(preds, axis=1)
    if preds.shape != labels.shape:
        raise DimensionError(
            f"{preds.shape[0]} predictions vs {labels.shape[0]} labels"
        )
    return float((preds == labels).mean())


@dataclass
class EvalReport:
    """Per-subject accuracies with their cross-subject summary."""

    per_subject_accuracy: dict
    mean: float
    std: float
    median: float
    q1: float
    q3: float
    model_id: str = ""


def aggregate(per_subject: dict, model_id: str = "") -> EvalReport:
    """Summarize a subject -> accuracy map.

    STD uses the n-1 denominator (0 when there is a single subject);
    the median and quartiles interpolate linearly.
    """
    if not per_subject:
        raise UsageError("need at least one subject to aggregate")
    values = np.asarray(
        [per_subject[s] for s in sorted(per_subject)], dtype=np.float64
    )
    if np.any((values < 0) | (values > 1)):
        raise RangeError("accuracies must lie in [0, 1]")
    q1, median, q3 = np.percentile(values, [25, 50, 75])
    return EvalReport(
        per_subject_accuracy=dict(per_subject),
        mean=float(values.mean()),
        std=float(values.std(ddof=1)) if values.size > 1 else 0.0,
        median=float(median),
        q1=float(q1),
        q3=float(q3),
        model_id=model_id,
    )


@dataclass
class WilcoxonResult:
    statistic: float
    p_value: float
    n_effective: int
    method: str


def wilcoxon_signed_rank(a, b, method: str = "auto") -> WilcoxonResult:
    """Two-sided paired signed-rank test on per-subject accuracies.

    Zero differences are dropped; tied absolute differences receive
    average ranks; W = min(W+, W-). ``method`` is "auto" (exact up to
    20 effective pairs, then normal approximation), "exact", or
    "normal". All differences zero yields the degenerate result
    (p = 1.0, n_effective = 0).
    """
    if method not in ("auto", "exact", "normal"):
        raise ConfigError(f"unknown method {method!r}")
    a = np.asarray(a, dtype=np.float64)
    b = np.asarray(b, dtype=np.float64)
    if a.shape != b.shape or a.ndim != 1:
        raise DimensionError(
            f"paired samples must be equal-length vectors, got {a.shape} and {b.shape}"
        )
    if a.size < 1:
        raise UsageError("need at least one pair")
    if not (np.isfinite(a).all() and np.isfinite(b).all()):
        raise DataError("samples must be finite")

    d = a - b
    d = d[d != 0.0]
    n = d.size
    if n == 0:
        return WilcoxonResult(statistic=0.0, p_value=1.0, n_effective=0,
                              method="degenerate")

    ranks = _average_ranks(np.abs(d))
    w_pos = float(ranks[d > 0].sum())
    w_neg = float(ranks[d < 0].sum())
    w = min(w_pos, w_neg)

    if method == "exact" or (method == "auto" and n <= EXACT_ENUMERATION_LIMIT):
        p = _exact_p(ranks, w)
        used = "exact"
    else:
        p = _normal_p(ranks, w, np.abs(d))
        used = "normal-approximation"
    return WilcoxonResult(statistic=w, p_value=p, n_effective=n, method=used)


def _average_ranks(values: np.ndarray) -> np.ndarray:
    """Ranks 1..n with tied values sharing their average rank."""
    order = np.argsort(values, kind="stable")
    ranks = np.empty(values.size, dtype=np.float64)
    i = 0
    while i < values.size:
        j = i
        while j + 1 < values.size and values[order[j + 1]] == values[order[i]]:
            j += 1
        ranks[order[i : j + 1]] = (i + j) / 2.0 + 1.0
        i = j + 1
    return ranks


def _exact_p(ranks: np.ndarray, w: float) -> float:
    """Two-sided p from the full null distribution of W+.

    Every one of the 2^n sign assignments is counted, via a subset-sum
    tally over the doubled ranks (average ranks are half-integers, so
    doubling makes them exact integers).
    """
    scaled = np.rint(2.0 * ranks).astype(np.int64)
    total = int(scaled.sum())
    counts = np.zeros(total + 1, dtype=np.float64)
    counts[0] = 1.0
    top = 0
    for r in scaled:
        counts[r : top + r + 1] += counts[: top + 1]
        top += r
    threshold = int(math.floor(2.0 * w + 1e-9))
    below = counts[: threshold + 1].sum()
    return min(1.0, float(2.0 * below / counts.sum()))


def _normal_p(ranks: np.ndarray, w: float, abs_d: np.ndarray) -> float:
    """Gaussian tail with tie and continuity corrections."""
    n = ranks.size
    mean = n * (n + 1) / 4.0
    var = n * (n + 1) * (2 * n + 1) / 24.0
    _, tie_counts = np.unique(abs_d, return_counts=True)
    var -= float(((tie_counts**3 - tie_counts) / 48.0).sum())
    if var <= 0.0:
        return 1.0
    z = (w - mean + 0.5) / math.sqrt(var)
    return min(1.0, math.erfc(-z / math.sqrt(2.0)))


def significance_band(p: float) -> str:
    """Map a p-value to its star band; boundaries go to the stronger band."""
    if not (0.0 <= p <= 1.0):
        raise RangeError(f"p-value must lie in [0, 1], got {p!r}")
    if p <= 0.0001:
        return "****"
    if p <= 0.001:
        return "***"
    if p <= 0.01:
        return "**"
    if p <= 0.05:
        return "*"
    return "ns"


def emit_report(report: EvalReport, comparisons, out_dir) -> dict:
    """Write per-subject, summary, and (if any) comparison CSVs.

    ``comparisons`` is a list of (model_a, model_b, WilcoxonResult).
    Floats are written with repr so parsing them back is lossless.
    Returns the paths written, keyed by file role.
    """
    os.makedirs(out_dir, exist_ok=True)
    stem = report.model_id or "model"
    paths = {}

    per_subject = os.path.join(out_dir, f"{stem}_per_subject.csv")
    with open(per_subject, "w", encoding="utf-8", newline="") as fh:
        fh.write("subject,accuracy\n")
        for subject in sorted(report.per_subject_accuracy):
            fh.write(f"{subject},{report.per_subject_accuracy[subject]!r}\n")
    paths["per_subject"] = per_subject

    summary = os.path.join(out_dir, f"{stem}_summary.csv")
    with open(summary, "w", encoding="utf-8", newline="") as fh:
        fh.write("model_id,mean,std,median,q1,q3\n")
        fh.write(
            f"{stem},{report.mean!r},{report.std!r},"
            f"{report.median!r},{report.q1!r},{report.q3!r}\n"
        )
    paths["summary"] = summary

    if comparisons:
        comp = os.path.join(out_dir, f"{stem}_comparisons.csv")
        with open(comp, "w", encoding="utf-8", newline="") as fh:
            fh.write("model_a,model_b,W,p,band\n")
            for model_a, model_b, result in comparisons:
                fh.write(
                    f"{model_a},{model_b},{result.statistic!r},"
                    f"{result.p_value!r},{significance_band(result.p_value)}\n"
                )
        paths["comparisons"] = comp
    return paths


def read_per_subject(path) -> dict:
    """Parse a per-subject CSV back into a subject -> accuracy map."""
    out = {}
    with open(path, encoding="utf-8") as fh:
        header = fh.readline().strip()
        if header != "subject,accuracy":
            raise DataError(
                f"{path}: expected header 'subject,accuracy', got {header!r}"
            )
        for line_no, line in enumerate(fh, start=2):
            line = line.strip()
            if not line:
                continue
            try:
                subject, value = line.split(",")
                out[int(subject)] = float(value)
            except ValueError:
                raise DataError(f"{path}:{line_no}: malformed row {line!r}") from None
    if not out:
        raise DataError(f"{path}: no subject rows")
    return out
