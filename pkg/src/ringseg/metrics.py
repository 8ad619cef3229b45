"""Point-wise precision/recall/IoU and stage-1 proposal recall."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .cloud import CLASS_NAMES, FOREGROUND_CLASSES
from .errors import AlignmentError


@dataclass(frozen=True)
class MetricsReport:
    """Per-class set metrics over point labels.

    Empty-set convention (the ratios are otherwise undefined): a class
    absent from both prediction and ground truth scores 1.0; absent from
    exactly one side scores 0.0 for the affected ratio.
    """

    precision: dict[int, float]
    recall: dict[int, float]
    iou: dict[int, float]
    pred_count: dict[int, int]
    gt_count: dict[int, int]
    overlap_count: dict[int, int]
    avg_iou: float

    def to_record(self) -> dict[str, float | int]:
        rec: dict[str, float | int] = {}
        for cid in sorted(CLASS_NAMES):
            name = CLASS_NAMES[cid]
            rec[f"pr_{name}"] = self.precision[cid]
            rec[f"re_{name}"] = self.recall[cid]
            rec[f"iou_{name}"] = self.iou[cid]
            rec[f"p_{name}"] = self.pred_count[cid]
            rec[f"g_{name}"] = self.gt_count[cid]
            rec[f"pg_{name}"] = self.overlap_count[cid]
        rec["avg_iou"] = self.avg_iou
        return rec


def _ratio(num: int, den: int, other_empty: bool) -> float:
    if den == 0:
        return 1.0 if other_empty else 0.0
    return num / den


def pointwise_metrics(pred: np.ndarray, gt: np.ndarray) -> MetricsReport:
    """Exact set-cardinality precision, recall and IoU per class.

    avg_iou averages the foreground classes (car, pedestrian, cyclist).
    """
    pred = np.asarray(pred)
    gt = np.asarray(gt)
    if pred.shape != gt.shape:
        raise AlignmentError(f"pred length {pred.shape} != gt length {gt.shape}")
    precision, recall, iou = {}, {}, {}
    p_cnt, g_cnt, pg_cnt = {}, {}, {}
    for cid in sorted(CLASS_NAMES):
        p = pred == cid
        g = gt == cid
        np_, ng = int(p.sum()), int(g.sum())
        npg = int((p & g).sum())
        nun = np_ + ng - npg
        precision[cid] = _ratio(npg, np_, ng == 0)
        recall[cid] = _ratio(npg, ng, np_ == 0)
        iou[cid] = _ratio(npg, nun, True)
        p_cnt[cid], g_cnt[cid], pg_cnt[cid] = np_, ng, npg
    avg = float(np.mean([iou[int(c)] for c in FOREGROUND_CLASSES]))
    return MetricsReport(precision, recall, iou, p_cnt, g_cnt, pg_cnt, avg)


@dataclass(frozen=True)
class RecallReport:
    """Coverage of ground-truth foreground points by the proposal set."""

    recall: float
    n_proposals: int
    fg_points: int
    fg_covered: int
    points_passed: int

    def to_record(self) -> dict[str, float | int]:
        return {
            "recall": self.recall,
            "proposals": self.n_proposals,
            "fg_points": self.fg_points,
            "fg_covered": self.fg_covered,
            "points_passed": self.points_passed,
        }


def proposal_recall(proposals, gt_labels: np.ndarray) -> RecallReport:
    """Fraction of foreground points covered by any proposal.

    Also reports the proposal count and the total number of points the
    proposals would hand to a downstream consumer. Accepts Proposal
    objects or bare member-index arrays.
    """
    gt_labels = np.asarray(gt_labels)
    covered = np.zeros(gt_labels.shape[0], dtype=bool)
    n_props = 0
    for prop in proposals:
        covered[getattr(prop, "member_indices", prop)] = True
        n_props += 1
    fg = (gt_labels > 0)
    fg_total = int(fg.sum())
    fg_cov = int((fg & covered).sum())
    return RecallReport(
        recall=fg_cov / fg_total if fg_total else 1.0,
        n_proposals=n_props,
        fg_points=fg_total,
        fg_covered=fg_cov,
        points_passed=int(covered.sum()),
    )
