"""m@kIoU evaluation of box-caption predictions against annotated scenes."""

from __future__ import annotations

import math
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from typing import Any, Callable, Dict, List, Optional, Sequence, Tuple

from . import capmetrics
from .assign import iou_matrix, match_cost, match_ious, nms_indices
from .capmetrics import METRIC_LABELS, Corpus
from .scene import CAPTION_PARTS, Frame, ObjectAnnotation, Prediction, PredictionSet, Scene
from .text import TOKENIZER_VERSION, tokenize

ALL_METRICS = ("cider", "bleu4", "meteor", "rouge")


def sentence_score(metric: str, candidate, references, corpus: Optional[Corpus]) -> float:
    if metric == "cider":
        return capmetrics.cider_d(candidate, references, corpus)
    if metric == "bleu4":
        return capmetrics.bleu4(candidate, references)
    if metric == "meteor":
        return capmetrics.meteor(candidate, references)
    if metric == "rouge":
        return capmetrics.rouge_l(candidate, references)
    raise ValueError(f"unknown metric {metric!r}")


def threshold_key(k: float) -> str:
    return f"{k:g}"


@dataclass(frozen=True)
class EvalConfig:
    iou_thresholds: Tuple[float, ...] = (0.25, 0.5)
    metrics: Tuple[str, ...] = ALL_METRICS
    match_mode: str = "hungarian"
    match_lambda: float = 1.0
    # None disables suppression
    nms_threshold: Optional[float] = 0.5
    parts: bool = True
    workers: int = 1

    def __post_init__(self):
        for k in self.iou_thresholds:
            if not 0.0 < k <= 1.0:
                raise ValueError(f"IoU thresholds must lie in (0, 1], got {k}")
        for m in self.metrics:
            if m not in ALL_METRICS:
                raise ValueError(f"unknown metric {m!r}; choose from {ALL_METRICS}")
        if self.match_mode not in ("hungarian", "greedy"):
            raise ValueError(f"unknown matching mode {self.match_mode!r}")
        if self.nms_threshold is not None and not 0.0 <= self.nms_threshold <= 1.0:
            raise ValueError(f"NMS threshold must lie in [0, 1], got {self.nms_threshold}")
        if self.workers < 1:
            raise ValueError("workers must be >= 1")


@dataclass
class ObjectRow:
    frame_id: str
    object_id: str
    pred_index: Optional[int]
    iou: float
    match_cost: Optional[float]
    scores: Dict[str, Optional[float]]
    part_scores: Dict[str, Dict[str, Optional[float]]] = field(default_factory=dict)

    def to_dict(self) -> Dict[str, Any]:
        d = {
            "frame_id": self.frame_id,
            "object_id": self.object_id,
            "pred_index": self.pred_index,
            "iou": self.iou,
            "match_cost": self.match_cost,
            "scores": dict(self.scores),
        }
        if self.part_scores:
            d["part_scores"] = {p: dict(s) for p, s in self.part_scores.items()}
        return d


@dataclass
class MetricReport:
    """m@kIoU grid plus per-object diagnostics.

    ``values[metric][k]`` is the mean over all GT objects of the sentence
    score of the matched prediction, counted only when its IoU reaches k.
    """

    values: Dict[str, Dict[float, float]]
    n_gt: int
    n_matched: Dict[float, int]
    rows: List[ObjectRow]
    config: Dict[str, Any]
    part_values: Dict[str, Dict[str, Dict[float, float]]] = field(default_factory=dict)

    def value(self, metric: str, k: float) -> float:
        return self.values[metric][k]

    def table(self) -> Dict[str, float]:
        """Flat ``C@0.25``-style columns, thresholds outermost."""
        out = {}
        ks = self.config["iou_thresholds"]
        for k in ks:
            for m in self.config["metrics"]:
                out[f"{METRIC_LABELS[m]}@{threshold_key(k)}"] = self.values[m][k]
        return out

    def to_dict(self) -> Dict[str, Any]:
        def grid(vals):
            return {m: {threshold_key(k): v for k, v in per_k.items()} for m, per_k in vals.items()}

        return {
            "config": self.config,
            "n_gt": self.n_gt,
            "n_matched": {threshold_key(k): v for k, v in self.n_matched.items()},
            "metrics": grid(self.values),
            "table": self.table(),
            "parts": {p: grid(v) for p, v in self.part_values.items()},
            "objects": [r.to_dict() for r in self.rows],
        }


def _canonical_pred_order(preds: Sequence[Prediction]) -> List[int]:
    def key(i):
        p = preds[i]
        return (-p.score, p.box.center, p.box.size, p.box.yaw,
                tuple(p.caption.to_dict().values()))
    return sorted(range(len(preds)), key=key)


def _score_pair(pred: Prediction, gt: ObjectAnnotation, text_field: str, metrics, corpus):
    ref = tokenize(gt.caption.part(text_field))
    if not ref:
        return {m: 0.0 for m in metrics}
    cand = tokenize(pred.caption.part(text_field))
    return {m: sentence_score(m, cand, [ref], corpus) for m in metrics}


def score_frame(frame_id: str, gt: Sequence[ObjectAnnotation], preds: Sequence[Prediction],
                config: EvalConfig, corpora: Dict[str, Corpus]) -> List[ObjectRow]:
    """Match one frame and score every matched GT; rows sorted by object_id."""
    order = _canonical_pred_order(preds)
    if config.nms_threshold is not None:
        survivors = nms_indices([preds[i] for i in order], config.nms_threshold)
        order = [order[i] for i in sorted(survivors)]
    cand = [preds[i] for i in order]
    gt_sorted = sorted(gt, key=lambda o: o.object_id)
    ious = iou_matrix([g.box for g in gt_sorted], [p.box for p in cand])
    # indicator thresholds are applied later, so keep every positive-IoU pair
    assignment = match_ious(ious, math.ulp(0.0), config.match_mode)
    partner = dict(assignment.pairs)

    rows = []
    for gi, obj in enumerate(gt_sorted):
        pi = partner.get(gi)
        if pi is None:
            rows.append(ObjectRow(frame_id, obj.object_id, None, 0.0, None,
                                  {m: None for m in config.metrics}))
            continue
        pred = cand[pi]
        row = ObjectRow(
            frame_id, obj.object_id, order[pi], float(ious[gi, pi]),
            match_cost(obj.box, pred.box, config.match_lambda),
            _score_pair(pred, obj, "full", config.metrics, corpora.get("full")),
        )
        if config.parts:
            row.part_scores = {
                part: _score_pair(pred, obj, part, config.metrics, corpora.get(part))
                for part in CAPTION_PARTS}
        rows.append(row)
    return rows


def _aggregate(rows: Sequence[ObjectRow], metric: str, k: float, n_gt: int,
               getter: Callable[[ObjectRow], Optional[float]]) -> float:
    terms = []
    for r in rows:
        s = getter(r)
        if s is not None and r.iou >= k:
            terms.append(s)
    return math.fsum(terms) / n_gt


def m_at_k(gt: Sequence[ObjectAnnotation], preds: Sequence[Prediction], metric: str, k: float,
           corpus: Optional[Corpus] = None, match_mode: str = "hungarian") -> float:
    """m@kIoU for a single frame; ``corpus`` is required for CIDEr-D."""
    if not gt:
        raise ValueError("m@kIoU is undefined without ground-truth objects")
    if metric == "cider" and corpus is None:
        raise ValueError("CIDEr-D needs a document-frequency corpus")
    config = EvalConfig(iou_thresholds=(k,), metrics=(metric,), match_mode=match_mode,
                        nms_threshold=None, parts=False)
    rows = score_frame("", gt, preds, config, {"full": corpus})
    return _aggregate(rows, metric, k, len(gt), lambda r: r.scores[metric])


def _frame_job(args):
    return score_frame(*args)


def build_corpora(frames: Sequence[Frame], parts: bool) -> Dict[str, Corpus]:
    fields = ("full",) + (CAPTION_PARTS if parts else ())
    corpora = {}
    for name in fields:
        docs = [tokenize(o.caption.part(name)) for f in frames for o in f.objects]
        corpora[name] = Corpus(d for d in docs if d)
    return corpora


def evaluate(scenes: Sequence[Scene], prediction_sets: Sequence[PredictionSet],
             config: EvalConfig = EvalConfig()) -> MetricReport:
    frames: Dict[str, Frame] = {}
    for scene in scenes:
        for frame in scene.frames:
            if frame.frame_id in frames:
                raise ValueError(f"frame_id {frame.frame_id!r} appears in more than one scene")
            frames[frame.frame_id] = frame
    preds: Dict[str, List[Prediction]] = {}
    for ps in prediction_sets:
        if ps.frame_id not in frames:
            raise ValueError(f"prediction references unknown frame_id {ps.frame_id!r}")
        preds.setdefault(ps.frame_id, []).extend(ps.predictions)
    n_gt = sum(len(f.objects) for f in frames.values())
    if n_gt == 0:
        raise ValueError("ground truth contains no objects")

    ordered = [frames[fid] for fid in sorted(frames)]
    corpora = build_corpora(ordered, config.parts)
    if "cider" in config.metrics and len(corpora["full"]) == 0:
        raise ValueError("CIDEr-D needs at least one non-empty ground-truth caption")
    jobs = [(f.frame_id, f.objects, preds.get(f.frame_id, []), config, corpora)
            for f in ordered if f.objects]
    if config.workers > 1 and len(jobs) > 1:
        with ProcessPoolExecutor(max_workers=config.workers) as pool:
            chunks = list(pool.map(_frame_job, jobs, chunksize=max(1, len(jobs) // (4 * config.workers))))
    else:
        chunks = [_frame_job(j) for j in jobs]
    rows = [r for chunk in chunks for r in chunk]

    values = {m: {k: _aggregate(rows, m, k, n_gt, lambda r, m=m: r.scores[m])
                  for k in config.iou_thresholds} for m in config.metrics}
    n_matched = {k: sum(1 for r in rows if r.pred_index is not None and r.iou >= k)
                 for k in config.iou_thresholds}
    part_values = {}
    if config.parts:
        for part in CAPTION_PARTS:
            part_values[part] = {
                m: {k: _aggregate(rows, m, k, n_gt,
                                  lambda r, m=m, part=part: r.part_scores.get(part, {}).get(m))
                    for k in config.iou_thresholds}
                for m in config.metrics}
    return MetricReport(values, n_gt, n_matched, rows, config_echo(config, corpora), part_values)


def config_echo(config: EvalConfig, corpora: Dict[str, Corpus]) -> Dict[str, Any]:
    full = corpora.get("full")
    return {
        "iou_thresholds": list(config.iou_thresholds),
        "metrics": list(config.metrics),
        "match_mode": config.match_mode,
        "match_lambda": config.match_lambda,
        "nms_threshold": config.nms_threshold,
        "tokenizer": TOKENIZER_VERSION,
        "caption_field": "full",
        "bleu": {"order": 4, "smoothing_eps": capmetrics.BLEU_EPS, "level": "sentence"},
        "rouge": {"variant": "ROUGE-L", "beta": capmetrics.ROUGE_BETA},
        "meteor": {"matchers": ["exact", "porter_stem"], "synonyms": False,
                   "alpha": capmetrics.METEOR_ALPHA, "beta": capmetrics.METEOR_BETA,
                   "gamma": capmetrics.METEOR_GAMMA},
        "cider": {"variant": "CIDEr-D", "n": capmetrics.CIDER_N, "sigma": capmetrics.CIDER_SIGMA,
                  "scale": 10.0, "df_corpus_size": len(full) if full else 0,
                  "df_corpus_sha256": full.digest() if full else None},
    }
