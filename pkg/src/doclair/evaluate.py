"""Corpus-level evaluation runs behind ``doclair eval-text`` / ``eval-layout``.

Pages are scored independently (optionally on a thread pool) and reduced in
(doc_id, page_index) order, so the output does not depend on the worker
count or on record order in the input files.
"""

from __future__ import annotations

import math
import os
from collections import Counter
from concurrent.futures import ThreadPoolExecutor
from typing import Callable, Dict, Iterable, List, Optional, Sequence, Tuple, TypeVar

import numpy as np

from . import __version__
from .corpus_io import EvalReport, PageRecord
from .format import CLASSES
from .layout_metrics import (
    DEFAULT_THRESHOLDS,
    ConfusionMatrix,
    LabeledBox,
    MissingScore,
    averaged_pr_curve,
    coco_ap,
    confusion_averaged,
    derive,
    harmonic,
    mean_metrics_over_thresholds,
    point_curve,
    recall_bins,
)
from .sanitize import block_rejection
from .text_metrics import METRIC_NAMES, mean_scores, normalize, score_normalized

T = TypeVar("T")
R = TypeVar("R")


class NoOverlap(ValueError):
    pass


def default_threads() -> int:
    env = os.environ.get("DOCLAIR_THREADS")
    if env:
        value = int(env)
        if value < 1:
            raise ValueError("DOCLAIR_THREADS must be positive")
        return value
    return os.cpu_count() or 1


def ordered_map(fn: Callable[[T], R], items: Sequence[T], threads: int) -> List[R]:
    if threads <= 1 or len(items) < 2:
        return [fn(x) for x in items]
    with ThreadPoolExecutor(max_workers=threads) as pool:
        return list(pool.map(fn, items))


def index_records(records: Iterable[PageRecord]) -> Dict[tuple, PageRecord]:
    return {r.key: r for r in records}


def _join_keys(pred: Dict[tuple, PageRecord], gt: Dict[tuple, PageRecord]):
    keys = sorted(set(pred) | set(gt))
    overlap = [k for k in keys if k in pred and k in gt]
    return keys, overlap


def _status(key, pred, gt) -> str:
    if key in pred and key in gt:
        return "ok"
    return "missing_pred" if key in gt else "missing_gt"


def evaluate_text(
    pred_records: Iterable[PageRecord],
    gt_records: Iterable[PageRecord],
    micro: bool = False,
    keep_case: bool = False,
    threads: int = 1,
) -> EvalReport:
    pred = index_records(pred_records)
    gt = index_records(gt_records)
    keys, overlap = _join_keys(pred, gt)
    if not overlap:
        raise NoOverlap("prediction and ground-truth files share no (doc_id, page_index)")

    def texts(key):
        ref = gt[key].text() if key in gt else ""
        hyp = pred[key].text() if key in pred else ""
        return normalize(ref, keep_case), normalize(hyp, keep_case)

    normalized = ordered_map(texts, keys, threads)
    scores = ordered_map(lambda pair: score_normalized(*pair), normalized, threads)
    rows = []
    for key, s in zip(keys, scores):
        row = {"doc_id": key[0], "page_index": key[1], "status": _status(key, pred, gt)}
        row.update(s.to_dict())
        rows.append(row)

    if micro:
        ref_all = normalize(" ".join(r.raw_normalized for r, _ in normalized), keep_case)
        hyp_all = normalize(" ".join(h.raw_normalized for _, h in normalized), keep_case)
        corpus = score_normalized(ref_all, hyp_all)
    else:
        corpus = mean_scores(scores)
    flagged = [f"{r['doc_id']}#{r['page_index']}:{r['status']}" for r in rows if r["status"] != "ok"]
    text = {
        "pages": len(keys),
        "joined_pages": len(overlap),
        "flagged_pages": flagged,
        "aggregation": "micro" if micro else "macro",
        "corpus": corpus.to_dict(),
        "metrics": list(METRIC_NAMES),
        "per_page": rows,
    }
    return EvalReport(
        command="eval-text",
        config={"micro": micro, "keep_case": keep_case},
        version=__version__,
        text=text,
        per_doc_scores=rows,
    )


def labeled_boxes(record: Optional[PageRecord]) -> Tuple[List[LabeledBox], Counter]:
    """Scorable boxes of a record plus a count of rejected blocks per reason.

    Blocks fail for the same reasons the sanitizer would reject them; a
    block without a box (a plain-text page) counts as SyntaxNonCompliant.
    """
    rejected: Counter = Counter()
    if record is None:
        return [], rejected
    boxes = []
    for block in record.resolved_blocks():
        reason = block_rejection(block, record.dims)
        if reason is not None:
            rejected[reason.value] += 1
            continue
        boxes.append(LabeledBox(block.bbox, block.semantic_class, block.score))
    return boxes, rejected


def _round(value: float) -> float:
    # 12 significant digits keep the JSON readable and stable
    return float(f"{value:.12g}") if math.isfinite(value) else value


def _metrics_block(cm: ConfusionMatrix) -> dict:
    d = derive(cm)
    per_class = {
        c.value: {
            "precision": _round(float(d.precision[k])),
            "recall": _round(float(d.recall[k])),
            "f1": _round(float(d.f1[k])),
            "tp": int(d.tp[k]),
            "fp": int(d.fp[k]),
            "fn": int(d.fn[k]),
        }
        for k, c in enumerate(CLASSES)
    }
    return {
        "macro_precision": _round(d.macro_precision),
        "macro_recall": _round(d.balanced_accuracy),
        "macro_f1": _round(d.macro_f1),
        "overall_accuracy": _round(d.overall_accuracy),
        "per_class": per_class,
    }


def evaluate_layout(
    pred_records: Iterable[PageRecord],
    gt_records: Iterable[PageRecord],
    thresholds: Sequence[float] = DEFAULT_THRESHOLDS,
    ap: bool = False,
    recall_bins_count: int = 101,
    max_dets: int = 100,
    threads: int = 1,
) -> EvalReport:
    pred = index_records(pred_records)
    gt = index_records(gt_records)
    keys, overlap = _join_keys(pred, gt)
    thresholds = [float(t) for t in thresholds]

    pages = []
    audit: Counter = Counter()
    for key in keys:
        t, rt = labeled_boxes(gt.get(key))
        p, rp = labeled_boxes(pred.get(key))
        audit += rt + rp
        pages.append((t, p))
    if ap and any(box.score is None for _, preds in pages for box in preds):
        raise MissingScore("--ap needs a score on every predicted box")

    partials = ordered_map(lambda tp: confusion_averaged(tp[0], tp[1], thresholds), pages, threads)
    per_threshold = [ConfusionMatrix() for _ in thresholds]
    pooled = ConfusionMatrix()
    for per, pool in partials:
        for acc, cm in zip(per_threshold, per):
            acc += cm
        pooled += pool

    means = mean_metrics_over_thresholds(per_threshold)
    layout = {
        "pages": len(keys),
        "joined_pages": len(overlap),
        "skipped_blocks": sum(audit.values()),
        "threshold_count": len(thresholds),
        "per_threshold": [
            dict(threshold=thr, confusion_matrix=cm.to_list(), **_metrics_block(cm))
            for thr, cm in zip(thresholds, per_threshold)
        ],
        "averaged": {
            "mean_precision": _round(means.mean_precision),
            "mean_recall": _round(means.mean_recall),
            "mean_f1": _round(means.mean_f1),
            "per_class": {
                c.value: {
                    "mean_precision": _round(float(means.class_precision[k])),
                    "mean_recall": _round(float(means.class_recall[k])),
                    "mean_f1": _round(float(harmonic(means.class_precision[k], means.class_recall[k]))),
                }
                for k, c in enumerate(CLASSES)
            },
        },
        "pooled_confusion_matrix": pooled.to_list(),
    }

    bins = recall_bins(recall_bins_count)
    present = [c for c in CLASSES if any(t.cls is c for targets, _ in pages for t in targets)]
    curves = {}
    if ap:
        results = ordered_map(
            lambda thr: coco_ap(pages, thr, recall_bins_count, max_dets), thresholds, threads
        )
        layout["ap"] = {
            "recall_bins": recall_bins_count,
            "max_dets": max_dets,
            "per_threshold": [
                {
                    "threshold": res.iou_threshold,
                    "map": _round(res.mean_ap),
                    "per_class": {c.value: None if v is None else _round(v) for c, v in res.per_class.items()},
                }
                for res in results
            ],
            "map": _round(float(np.mean([r.mean_ap for r in results]))),
        }
        first = results[0]
        curves = {c.value: first.curves[c] for c in present if c in first.curves}
    else:
        d = derive(per_threshold[0])
        for c in present:
            k = CLASSES.index(c)
            curves[c.value] = point_curve(float(d.precision[k]), float(d.recall[k]), bins)
    if curves:
        curves["averaged"] = averaged_pr_curve(list(curves.values()))
    layout["pr_curve_threshold"] = thresholds[0]

    return EvalReport(
        command="eval-layout",
        config={
            "thresholds": thresholds,
            "ap": ap,
            "recall_bins": recall_bins_count,
            "max_dets": max_dets,
        },
        version=__version__,
        layout=layout,
        audit=dict(audit),
        threshold_matrices=list(zip(thresholds, per_threshold)),
        pooled_matrix=pooled,
        pr_curves=curves,
    )

