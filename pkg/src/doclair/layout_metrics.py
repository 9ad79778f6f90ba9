"""Layout detection metrics.

Two evaluation routes live here:

* cross-class matching: boxes are matched over all classes at once by
  maximum total IoU, then a confusion matrix with an extra background
  row/column is filled in and precision/recall are read off it. This works
  for detectors that emit no box scores.
* a per-class COCO-style average precision for scored detectors.
"""

from __future__ import annotations

import io
import math
import warnings
from dataclasses import dataclass, field
from typing import Dict, List, Optional, Sequence, Tuple

import numpy as np

from .assignment import max_weight_assignment
from .format import CLASS_INDEX, CLASSES, NUM_CLASSES, BBox, SemanticClass

DEFAULT_THRESHOLDS = tuple(round(0.5 + 0.05 * k, 2) for k in range(10))
BACKGROUND = NUM_CLASSES


class MissingScore(ValueError):
    pass


class BinMismatch(ValueError):
    pass


class DegenerateScoresWarning(UserWarning):
    """All predictions of a class share one score, so the PR curve collapses to a point."""


@dataclass(frozen=True)
class LabeledBox:
    bbox: BBox
    cls: SemanticClass
    score: Optional[float] = None

    def __post_init__(self):
        if self.score is not None and not 0.0 <= self.score <= 1.0:
            raise ValueError(f"score must lie in [0, 1], got {self.score}")


def iou(a: BBox, b: BBox) -> float:
    ix = min(a.x2, b.x2) - max(a.x1, b.x1)
    iy = min(a.y2, b.y2) - max(a.y1, b.y1)
    if ix <= 0 or iy <= 0:
        return 0.0
    inter = ix * iy
    union = a.area + b.area - inter
    if union <= 0:
        return 0.0
    value = inter / union
    return value if math.isfinite(value) and value > 0 else 0.0


def iou_matrix(targets: Sequence[BBox], preds: Sequence[BBox]) -> np.ndarray:
    """Pairwise IoU; rows are targets, columns predictions."""
    if not targets or not preds:
        return np.zeros((len(targets), len(preds)))
    t = np.array([b.as_list() for b in targets], dtype=float)
    p = np.array([b.as_list() for b in preds], dtype=float)
    area_t = np.clip(t[:, 2] - t[:, 0], 0, None) * np.clip(t[:, 3] - t[:, 1], 0, None)
    area_p = np.clip(p[:, 2] - p[:, 0], 0, None) * np.clip(p[:, 3] - p[:, 1], 0, None)
    ix = np.minimum(t[:, None, 2], p[None, :, 2]) - np.maximum(t[:, None, 0], p[None, :, 0])
    iy = np.minimum(t[:, None, 3], p[None, :, 3]) - np.maximum(t[:, None, 1], p[None, :, 1])
    inter = np.clip(ix, 0, None) * np.clip(iy, 0, None)
    union = area_t[:, None] + area_p[None, :] - inter
    with np.errstate(divide="ignore", invalid="ignore"):
        out = inter / union
    out[~(out > 0)] = 0.0
    return out


def assign(targets: Sequence[BBox], preds: Sequence[BBox]) -> List[Tuple[int, int]]:
    """Maximum-total-IoU one-to-one matching, classes ignored.

    Returns ``min(len(targets), len(preds))`` (target, pred) pairs sorted by
    target index; ties resolve to the lexicographically smallest pair set.
    """
    return max_weight_assignment(iou_matrix(targets, preds))


class ConfusionMatrix:
    """Count matrix of shape (C+1, C+1); rows are targets, columns predictions,
    and the last row/column is the unmatched (background) class."""

    def __init__(self, counts=None, num_classes: int = NUM_CLASSES):
        if counts is None:
            counts = np.zeros((num_classes + 1, num_classes + 1), dtype=np.int64)
        self.counts = np.asarray(counts, dtype=np.int64)
        if self.counts.shape != (num_classes + 1, num_classes + 1):
            raise ValueError(f"expected a {num_classes + 1}x{num_classes + 1} matrix")
        if (self.counts < 0).any():
            raise ValueError("counts must be nonnegative")

    @property
    def num_classes(self) -> int:
        return self.counts.shape[0] - 1

    def copy(self) -> "ConfusionMatrix":
        return ConfusionMatrix(self.counts.copy(), self.num_classes)

    def __add__(self, other: "ConfusionMatrix") -> "ConfusionMatrix":
        return ConfusionMatrix(self.counts + other.counts, self.num_classes)

    def __iadd__(self, other: "ConfusionMatrix") -> "ConfusionMatrix":
        self.counts += other.counts
        return self

    def __eq__(self, other) -> bool:
        return isinstance(other, ConfusionMatrix) and np.array_equal(self.counts, other.counts)

    def __repr__(self) -> str:
        return f"ConfusionMatrix(total={int(self.counts.sum())})"

    def to_csv(self) -> str:
        names = [c.value for c in CLASSES[: self.num_classes]] + ["background"]
        buf = io.StringIO()
        buf.write("target\\pred," + ",".join(names) + "\n")
        for name, row in zip(names, self.counts.tolist()):
            buf.write(name + "," + ",".join(str(v) for v in row) + "\n")
        return buf.getvalue()

    def to_list(self) -> List[List[int]]:
        return self.counts.tolist()


def _confusion_from_assignment(
    target_classes: Sequence[int],
    pred_classes: Sequence[int],
    pairs: Sequence[Tuple[int, int]],
    ious: np.ndarray,
    iou_threshold: float,
    cm: ConfusionMatrix,
) -> ConfusionMatrix:
    bg = cm.num_classes
    matched_t = {i for i, _ in pairs}
    matched_p = {j for _, j in pairs}
    for i, c in enumerate(target_classes):
        if i not in matched_t:
            cm.counts[c, bg] += 1
    for j, c in enumerate(pred_classes):
        if j not in matched_p:
            cm.counts[bg, c] += 1
    for i, j in pairs:
        if ious[i, j] > iou_threshold:
            cm.counts[target_classes[i], pred_classes[j]] += 1
        else:
            cm.counts[target_classes[i], bg] += 1
            cm.counts[bg, pred_classes[j]] += 1
    return cm


def _prepare(targets: Sequence[LabeledBox], preds: Sequence[LabeledBox]):
    ious = iou_matrix([t.bbox for t in targets], [p.bbox for p in preds])
    pairs = max_weight_assignment(ious) if targets and preds else []
    return (
        [CLASS_INDEX[t.cls] for t in targets],
        [CLASS_INDEX[p.cls] for p in preds],
        pairs,
        ious,
    )


def confusion_at(
    targets: Sequence[LabeledBox],
    preds: Sequence[LabeledBox],
    iou_threshold: float = 0.5,
    accumulator: Optional[ConfusionMatrix] = None,
) -> ConfusionMatrix:
    """Accumulate one page into a confusion matrix at a single IoU threshold.

    A matched pair counts on the diagonal (or off it, for a class mix-up) only
    when its IoU is strictly above the threshold; otherwise the target goes
    to the background column and the prediction to the background row.
    """
    if not 0 < iou_threshold < 1:
        raise ValueError("iou_threshold must lie in (0, 1)")
    cm = accumulator if accumulator is not None else ConfusionMatrix()
    return _confusion_from_assignment(*_prepare(targets, preds), iou_threshold, cm)


def confusion_averaged(
    targets: Sequence[LabeledBox],
    preds: Sequence[LabeledBox],
    thresholds: Sequence[float] = DEFAULT_THRESHOLDS,
) -> Tuple[List[ConfusionMatrix], ConfusionMatrix]:
    """Per-threshold matrices plus their elementwise sum.

    The matching is computed once; only the IoU cut-off varies.
    """
    if not thresholds:
        raise ValueError("at least one threshold is required")
    for thr in thresholds:
        if not 0 < thr < 1:
            raise ValueError("thresholds must lie in (0, 1)")
    prepared = _prepare(targets, preds)
    per = [_confusion_from_assignment(*prepared, thr, ConfusionMatrix()) for thr in thresholds]
    pooled = ConfusionMatrix()
    for cm in per:
        pooled += cm
    return per, pooled


def _safe_div(num: np.ndarray, den: np.ndarray) -> np.ndarray:
    num = np.asarray(num, dtype=float)
    den = np.asarray(den, dtype=float)
    out = np.zeros(np.broadcast(num, den).shape)
    np.divide(num, den, out=out, where=den != 0)
    return out


@dataclass
class DerivedMetrics:
    tp: np.ndarray
    fp: np.ndarray
    fn: np.ndarray
    tn: np.ndarray
    precision: np.ndarray
    recall: np.ndarray
    f1: np.ndarray
    accuracy: np.ndarray
    macro_precision: float
    balanced_accuracy: float
    macro_f1: float
    overall_accuracy: float

    def per_class(self) -> Dict[str, Dict[str, float]]:
        out = {}
        for k, c in enumerate(CLASSES[: len(self.tp)]):
            out[c.value] = {
                "tp": int(self.tp[k]),
                "fp": int(self.fp[k]),
                "fn": int(self.fn[k]),
                "tn": int(self.tn[k]),
                "precision": float(self.precision[k]),
                "recall": float(self.recall[k]),
                "f1": float(self.f1[k]),
                "accuracy": float(self.accuracy[k]),
            }
        return out

    def summary(self) -> Dict[str, float]:
        return {
            "macro_precision": self.macro_precision,
            "balanced_accuracy": self.balanced_accuracy,
            "macro_f1": self.macro_f1,
            "overall_accuracy": self.overall_accuracy,
        }


def harmonic(p, r):
    p = np.asarray(p, dtype=float)
    r = np.asarray(r, dtype=float)
    return _safe_div(2 * p * r, p + r)


def derive(cm: ConfusionMatrix) -> DerivedMetrics:
    counts = cm.counts
    c = cm.num_classes
    samples = int(counts.sum())
    col = counts.sum(axis=0)[:c]
    row = counts.sum(axis=1)[:c]
    tp = np.diag(counts)[:c].copy()
    fp = col - tp
    fn = row - tp
    tn = samples - col - row + tp
    precision = tp / np.maximum(tp + fp, 1)
    recall = tp / np.maximum(tp + fn, 1)
    # classes absent from both targets and predictions would only add 0/0 terms
    active = (row + col) > 0
    macro_p = float(precision[active].mean()) if active.any() else 0.0
    macro_r = float(recall[active].mean()) if active.any() else 0.0
    return DerivedMetrics(
        tp=tp,
        fp=fp,
        fn=fn,
        tn=tn,
        precision=precision,
        recall=recall,
        f1=harmonic(precision, recall),
        accuracy=_safe_div(tp + tn, tp + tn + fp + fn),
        macro_precision=macro_p,
        balanced_accuracy=macro_r,
        macro_f1=float(harmonic(macro_p, macro_r)),
        overall_accuracy=float(tp.sum() / samples) if samples else 0.0,
    )


@dataclass
class ThresholdMeans:
    mean_precision: float
    mean_recall: float
    class_precision: np.ndarray
    class_recall: np.ndarray

    @property
    def mean_f1(self) -> float:
        return float(harmonic(self.mean_precision, self.mean_recall))


def mean_metrics_over_thresholds(per_threshold: Sequence[ConfusionMatrix]) -> ThresholdMeans:
    if not per_threshold:
        raise ValueError("need at least one confusion matrix")
    derived = [derive(cm) for cm in per_threshold]
    return ThresholdMeans(
        mean_precision=float(np.mean([d.macro_precision for d in derived])),
        mean_recall=float(np.mean([d.balanced_accuracy for d in derived])),
        class_precision=np.mean([d.precision for d in derived], axis=0),
        class_recall=np.mean([d.recall for d in derived], axis=0),
    )


@dataclass
class PRCurve:
    recall_bins: np.ndarray
    precision_at: np.ndarray

    def __post_init__(self):
        self.recall_bins = np.asarray(self.recall_bins, dtype=float)
        self.precision_at = np.asarray(self.precision_at, dtype=float)
        if self.recall_bins.shape != self.precision_at.shape:
            raise ValueError("recall bins and precision values differ in length")

    @property
    def ap(self) -> float:
        return float(self.precision_at.mean()) if self.precision_at.size else 0.0


def recall_bins(count: int) -> np.ndarray:
    # COCO derives its bins with linspace; the rounding keeps the bin values exact decimals
    return np.round(np.linspace(0.0, 1.0, count), 6)


def interpolated_curve(recall: Sequence[float], precision: Sequence[float], bins: np.ndarray) -> PRCurve:
    """Max-interpolate raw PR points and sample them on ``bins``.

    A bin beyond the highest achieved recall gets precision 0.
    """
    rec = np.asarray(recall, dtype=float)
    prec = np.asarray(precision, dtype=float).copy()
    for k in range(len(prec) - 2, -1, -1):
        if prec[k + 1] > prec[k]:
            prec[k] = prec[k + 1]
    out = np.zeros(len(bins))
    idx = np.searchsorted(rec, bins, side="left")
    hit = idx < len(rec)
    out[hit] = prec[idx[hit]]
    return PRCurve(bins.copy(), out)


def point_curve(precision: float, recall: float, bins: np.ndarray) -> PRCurve:
    """Curve of a score-less detector: one operating point, zero beyond it."""
    return interpolated_curve([recall], [precision], bins)


def averaged_pr_curve(per_class_curves: Sequence[PRCurve]) -> PRCurve:
    if not per_class_curves:
        raise ValueError("need at least one curve")
    bins = per_class_curves[0].recall_bins
    for curve in per_class_curves[1:]:
        if curve.recall_bins.shape != bins.shape or not np.array_equal(curve.recall_bins, bins):
            raise BinMismatch("curves use different recall bins")
    stacked = np.nan_to_num(np.stack([c.precision_at for c in per_class_curves]), nan=0.0)
    return PRCurve(bins.copy(), stacked.mean(axis=0))


@dataclass
class APResult:
    iou_threshold: float
    per_class: Dict[SemanticClass, Optional[float]]
    curves: Dict[SemanticClass, PRCurve] = field(default_factory=dict)

    @property
    def mean_ap(self) -> float:
        values = [v for v in self.per_class.values() if v is not None]
        return float(np.mean(values)) if values else 0.0


def _box_key(box: LabeledBox, index: int):
    # score first, then geometry; the input index only separates identical boxes
    return (-box.score, box.bbox.x1, box.bbox.y1, box.bbox.x2, box.bbox.y2, index)


def coco_ap(
    pages: Sequence[Tuple[Sequence[LabeledBox], Sequence[LabeledBox]]],
    iou_threshold: float = 0.5,
    recall_bins_count: int = 101,
    max_dets: int = 100,
) -> APResult:
    """Per-class average precision over a set of pages.

    Predictions are ranked by score; equal scores are ordered by box
    geometry, never by input position, and a PR point is only emitted once a
    whole group of equally scored predictions has been consumed. This keeps
    the result independent of input order when scores collide.
    """
    if recall_bins_count < 2:
        raise ValueError("need at least two recall bins")
    for _, preds in pages:
        for p in preds:
            if p.score is None:
                raise MissingScore("average precision needs scored predictions")
    bins = recall_bins(recall_bins_count)
    per_class: Dict[SemanticClass, Optional[float]] = {}
    curves: Dict[SemanticClass, PRCurve] = {}
    for cls in CLASSES:
        n_targets = 0
        ranked: List[Tuple[float, bool]] = []
        for targets, preds in pages:
            t_boxes = [t.bbox for t in targets if t.cls is cls]
            n_targets += len(t_boxes)
            kept = sorted(
                ((p, k) for k, p in enumerate(preds)), key=lambda pk: _box_key(*pk)
            )[:max_dets]
            c_preds = [p for p, _ in kept if p.cls is cls]
            if not c_preds:
                continue
            ious = iou_matrix(t_boxes, [p.bbox for p in c_preds])
            taken = np.zeros(len(t_boxes), dtype=bool)
            for j, p in enumerate(c_preds):
                best, best_iou = -1, iou_threshold
                for i in range(len(t_boxes)):
                    if not taken[i] and ious[i, j] > best_iou:
                        best, best_iou = i, ious[i, j]
                if best >= 0:
                    taken[best] = True
                ranked.append((p.score, best >= 0))
        if n_targets == 0:
            per_class[cls] = None
            continue
        if len(ranked) > 1 and len({s for s, _ in ranked}) == 1:
            warnings.warn(
                f"all {len(ranked)} {cls.value} predictions share score {ranked[0][0]}",
                DegenerateScoresWarning,
                stacklevel=2,
            )
        ranked.sort(key=lambda st: -st[0])
        rec, prec = [], []
        tp = fp = 0
        for k, (score, hit) in enumerate(ranked):
            tp += hit
            fp += not hit
            if k + 1 < len(ranked) and ranked[k + 1][0] == score:
                continue
            rec.append(tp / n_targets)
            prec.append(tp / (tp + fp))
        curve = interpolated_curve(rec, prec, bins)
        curves[cls] = curve
        per_class[cls] = curve.ap
    return APResult(iou_threshold, per_class, curves)
