"""Video-level accident anticipation metrics: precision/recall, AP, TTA,
mTTA and TTA at 80% recall.

A video is predicted positive at threshold ``a`` iff some frame reaches
``p_t >= a``; its time-to-accident is (toa - t_o) / fps floored at zero,
where t_o is the first crossing (1-based). Thresholds sweep the distinct
per-video maximum probabilities.
"""
import csv
import math
from dataclasses import dataclass, field

import numpy as np

from . import kernels


class MetricError(ValueError):
    pass


class UndefinedAPError(MetricError):
    pass


@dataclass
class VideoScore:
    id: str
    label: int
    p: np.ndarray
    toa: int = 0
    fps: float = 10.0

    def __post_init__(self):
        self.p = np.asarray(self.p, dtype=np.float64)
        if (self.toa == 0) != (self.label == 0):
            raise MetricError(f"video {self.id!r}: toa must be 0 exactly when label is 0")
        if self.p.ndim != 1 or self.p.size == 0:
            raise MetricError(f"video {self.id!r}: needs a non-empty probability sequence")


def scores_from_traces(samples, traces):
    return [VideoScore(s.id, s.label, tr.p, s.toa, s.fps) for s, tr in zip(samples, traces)]


def _check(scores):
    if not scores:
        raise MetricError("no videos to evaluate")


def _padded(scores):
    T = max(s.p.size for s in scores)
    P = np.full((len(scores), T), -np.inf)
    for i, s in enumerate(scores):
        P[i, : s.p.size] = s.p
    return P


def threshold_grid(scores):
    """Distinct per-video maximum probabilities, descending."""
    return np.unique([float(s.p.max()) for s in scores])[::-1].copy()


@dataclass
class ThresholdResult:
    threshold: float
    tp: int
    fp: int
    fn: int
    tn: int
    t_o: list  # 1-based first crossing per video, None if never crossed

    @property
    def precision(self):
        return self.tp / (self.tp + self.fp) if self.tp + self.fp else 0.0

    @property
    def recall(self):
        pos = self.tp + self.fn
        return self.tp / pos if pos else 0.0


def _results(scores, thresholds):
    thresholds = np.asarray(thresholds, dtype=np.float64)
    idx = kernels.first_crossings(_padded(scores), thresholds)
    labels = np.array([s.label for s in scores])
    out = []
    for k, a in enumerate(thresholds):
        crossed = idx[k] >= 0
        tp = int(np.sum(crossed & (labels == 1)))
        fp = int(np.sum(crossed & (labels == 0)))
        fn = int(np.sum(~crossed & (labels == 1)))
        tn = int(np.sum(~crossed & (labels == 0)))
        t_o = [int(i) + 1 if i >= 0 else None for i in idx[k]]
        out.append(ThresholdResult(float(a), tp, fp, fn, tn, t_o))
    return out


def classify_at_threshold(scores, a):
    _check(scores)
    return _results(scores, [a])[0]


def _tta(scores, res):
    vals = [
        max(0, s.toa - t) / s.fps
        for s, t in zip(scores, res.t_o)
        if s.label == 1 and t is not None
    ]
    return float(np.mean(vals)) if vals else None


def tta_at_threshold(scores, a):
    """Mean TTA in seconds over true positives at ``a``; None if there are none."""
    _check(scores)
    return _tta(scores, classify_at_threshold(scores, a))


def _ap_from_points(recalls, precisions, interpolate=False):
    if interpolate:
        precisions = np.maximum.accumulate(np.asarray(precisions)[::-1])[::-1]
    terms = []
    prev = 0.0
    for r, p in zip(recalls, precisions):
        terms.append((r - prev) * p)
        prev = r
    return math.fsum(terms)


def average_precision(scores, interpolate=False):
    """Rectangular area under the video-level PR curve."""
    _check(scores)
    npos = sum(1 for s in scores if s.label == 1)
    if npos == 0:
        raise UndefinedAPError("average precision is undefined without positive videos")
    maxes = np.array([s.p.max() for s in scores])
    labels = np.array([s.label for s in scores])
    order = np.argsort(-maxes, kind="stable")
    m_sorted = maxes[order]
    tp_cum = np.cumsum(labels[order] == 1)
    fp_cum = np.cumsum(labels[order] == 0)
    # last position of every run of equal scores = one threshold
    ends = np.flatnonzero(np.append(m_sorted[1:] != m_sorted[:-1], True))
    recalls = [int(tp_cum[e]) / npos for e in ends]
    precisions = [int(tp_cum[e]) / (int(tp_cum[e]) + int(fp_cum[e])) for e in ends]
    return _ap_from_points(recalls, precisions, interpolate)


def mtta(scores, skip_empty=True):
    """Mean TTA over the distinct-score threshold grid.

    Thresholds without true positives are skipped, or counted as 0 s when
    ``skip_empty`` is False.
    """
    _check(scores)
    if not any(s.label == 1 for s in scores):
        raise MetricError("mTTA is undefined without positive videos")
    vals = []
    for res in _results(scores, threshold_grid(scores)):
        v = _tta(scores, res)
        if v is None:
            if skip_empty:
                continue
            v = 0.0
        vals.append(v)
    return float(np.mean(vals)) if vals else 0.0


def tta_at_recall80(scores, thresholds=None):
    """TTA at the largest threshold whose recall is at least 0.8.

    Returns (tta_seconds, threshold); (None, None) when 0.8 recall is
    unreachable on the grid.
    """
    _check(scores)
    npos = sum(1 for s in scores if s.label == 1)
    if npos == 0:
        raise MetricError("TTA@R80 is undefined without positive videos")
    grid = threshold_grid(scores) if thresholds is None else np.sort(np.asarray(thresholds, float))[::-1]
    for res in _results(scores, grid):
        if 5 * res.tp >= 4 * npos:
            return _tta(scores, res), res.threshold
    return None, None


@dataclass
class EvalReport:
    thresholds: np.ndarray
    precision: np.ndarray
    recall: np.ndarray
    tta: np.ndarray  # NaN where a threshold has no true positives
    counts: list  # (tp, fp, fn, tn) per threshold
    ap: float
    mtta: float
    tta_r80: float | None
    r80_threshold: float | None
    mtta_mode: str = "skip-empty"
    extra: dict = field(default_factory=dict)

    def summary(self):
        r80 = "unreachable" if self.tta_r80 is None else f"{self.tta_r80:.4f}"
        return f"AP={self.ap:.4f} mTTA={self.mtta:.4f} TTA@R80={r80} (mTTA mode: {self.mtta_mode})"

    def write_csv(self, path):
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(["threshold", "precision", "recall", "tta", "tp", "fp", "fn", "tn"])
            for a, p, r, t, c in zip(self.thresholds, self.precision, self.recall, self.tta, self.counts):
                w.writerow([repr(float(a)), repr(float(p)), repr(float(r)), "" if np.isnan(t) else repr(float(t)), *c])


def evaluate(scores, skip_empty=True, interpolate=False):
    _check(scores)
    ap = average_precision(scores, interpolate=interpolate)
    grid = threshold_grid(scores)
    results = _results(scores, grid)
    ttas = [_tta(scores, r) for r in results]
    tta_r80, thr80 = tta_at_recall80(scores)
    return EvalReport(
        thresholds=grid,
        precision=np.array([r.precision for r in results]),
        recall=np.array([r.recall for r in results]),
        tta=np.array([np.nan if t is None else t for t in ttas]),
        counts=[(r.tp, r.fp, r.fn, r.tn) for r in results],
        ap=ap,
        mtta=mtta(scores, skip_empty=skip_empty),
        tta_r80=tta_r80,
        r80_threshold=thr80,
        mtta_mode="skip-empty" if skip_empty else "empty-as-zero",
    )
