"""Linear assignment, rotated-box NMS and the GT/prediction matcher."""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import List, Sequence, Tuple

import numpy as np

from .geom import iou3d
from .scene import Box3D, ObjectAnnotation, Prediction


@dataclass
class Assignment:
    """Result of matching rows (ground truth) to columns (predictions)."""

    pairs: List[Tuple[int, int]] = field(default_factory=list)
    unmatched_gt: List[int] = field(default_factory=list)
    unmatched_pred: List[int] = field(default_factory=list)
    total_cost: float = 0.0


def _solve_rows_le_cols(cost: np.ndarray) -> np.ndarray:
    """Shortest augmenting path with potentials, n <= m. Returns col per row."""
    n, m = cost.shape
    u = np.zeros(n + 1)
    v = np.zeros(m + 1)
    owner = np.zeros(m + 1, dtype=int)  # owner[j] = 1-based row holding column j
    way = np.zeros(m + 1, dtype=int)
    for i in range(1, n + 1):
        owner[0] = i
        j0 = 0
        minv = np.full(m + 1, np.inf)
        used = np.zeros(m + 1, dtype=bool)
        while True:
            used[j0] = True
            i0 = owner[j0]
            free = ~used[1:]
            cur = cost[i0 - 1] - u[i0] - v[1:]
            better = free & (cur < minv[1:])
            minv[1:][better] = cur[better]
            way[1:][better] = j0
            cand = np.where(free, minv[1:], np.inf)
            j1 = int(np.argmin(cand)) + 1
            delta = cand[j1 - 1]
            u[owner[used]] += delta
            v[used] -= delta
            minv[~used] -= delta
            j0 = j1
            if owner[j0] == 0:
                break
        while j0:
            j1 = way[j0]
            owner[j0] = owner[j1]
            j0 = j1
    col_of_row = np.full(n, -1, dtype=int)
    for j in range(1, m + 1):
        if owner[j]:
            col_of_row[owner[j] - 1] = j - 1
    return col_of_row


def hungarian(cost) -> Assignment:
    """Minimum-cost one-to-one assignment of size min(n, m).

    Rectangular inputs are solved directly (transposing so rows <= columns);
    the leftover side is reported as unmatched.
    """
    c = np.asarray(cost, dtype=float)
    if c.ndim != 2:
        if c.size == 0:
            c = c.reshape(0, 0)
        else:
            raise ValueError(f"cost must be a 2-D matrix, got shape {c.shape}")
    if not np.all(np.isfinite(c)):
        raise ValueError("cost matrix contains non-finite entries")
    n, m = c.shape
    if n == 0 or m == 0:
        return Assignment([], list(range(n)), list(range(m)), 0.0)
    if n <= m:
        cols = _solve_rows_le_cols(c)
        pairs = [(i, int(cols[i])) for i in range(n)]
    else:
        rows = _solve_rows_le_cols(c.T)
        pairs = sorted((int(rows[j]), j) for j in range(m))
    matched_g = {g for g, _ in pairs}
    matched_p = {p for _, p in pairs}
    total = 0.0
    for g, p in pairs:
        total += float(c[g, p])
    return Assignment(
        pairs,
        [i for i in range(n) if i not in matched_g],
        [j for j in range(m) if j not in matched_p],
        total,
    )


def match_cost(gt: Box3D, pred: Box3D, lam: float = 1.0) -> float:
    """Center distance plus ``lam`` times the IoU shortfall."""
    return math.dist(gt.center, pred.center) + lam * (1.0 - iou3d(gt, pred))


def iou_matrix(gt_boxes: Sequence[Box3D], pred_boxes: Sequence[Box3D]) -> np.ndarray:
    out = np.zeros((len(gt_boxes), len(pred_boxes)))
    for i, g in enumerate(gt_boxes):
        for j, p in enumerate(pred_boxes):
            out[i, j] = iou3d(g, p)
    return out


def nms(predictions: Sequence[Prediction], iou_threshold: float) -> List[Prediction]:
    """Greedy suppression in descending score; equal scores keep input order."""
    return [predictions[i] for i in nms_indices(predictions, iou_threshold)]


def nms_indices(predictions: Sequence[Prediction], iou_threshold: float) -> List[int]:
    """Like :func:`nms` but returns the surviving input indices."""
    if not 0.0 <= iou_threshold <= 1.0:
        raise ValueError(f"iou_threshold must lie in [0, 1], got {iou_threshold}")
    order = sorted(range(len(predictions)), key=lambda i: -predictions[i].score)
    kept: List[int] = []
    for i in order:
        if all(iou3d(predictions[i].box, predictions[k].box) <= iou_threshold for k in kept):
            kept.append(i)
    return kept


def _assignment_from_pairs(pairs, n, m, ious) -> Assignment:
    pairs = sorted(pairs)
    mg = {g for g, _ in pairs}
    mp = {p for _, p in pairs}
    total = 0.0
    for g, p in pairs:
        total += -float(ious[g, p])
    return Assignment(pairs, [i for i in range(n) if i not in mg],
                      [j for j in range(m) if j not in mp], total)


def match_ious(ious: np.ndarray, k: float, mode: str = "hungarian") -> Assignment:
    """Match on a precomputed GT x prediction IoU matrix.

    ``hungarian`` maximizes total IoU one-to-one; ``greedy`` lets every GT take
    its highest-IoU prediction, so a prediction may serve several GT (the
    usual indoor dense-captioning practice). Pairs below ``k`` are demoted.
    """
    n, m = ious.shape
    if mode == "hungarian":
        base = hungarian(-ious) if n and m else Assignment()
        pairs = base.pairs
    elif mode == "greedy":
        pairs = [(i, int(np.argmax(ious[i]))) for i in range(n)] if m else []
    else:
        raise ValueError(f"unknown matching mode {mode!r}")
    kept = [(g, p) for g, p in pairs if ious[g, p] >= k]
    if mode == "greedy":
        mg = {g for g, _ in kept}
        used = {p for _, p in kept}
        total = -sum(float(ious[g, p]) for g, p in kept)
        return Assignment(kept, [i for i in range(n) if i not in mg],
                          [j for j in range(m) if j not in used], total)
    return _assignment_from_pairs(kept, n, m, ious)


def match_for_eval(gt: Sequence[ObjectAnnotation], pred: Sequence[Prediction], k: float,
                   mode: str = "hungarian") -> Assignment:
    """One-to-one max-IoU matching; pairs with IoU below ``k`` become unmatched."""
    ious = iou_matrix([g.box for g in gt], [p.box for p in pred])
    return match_ious(ious, k, mode)
