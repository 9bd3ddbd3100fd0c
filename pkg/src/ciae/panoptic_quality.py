"""Panoptic Quality (PQ = SQ x RQ) and semantic mIoU."""

import json
from dataclasses import dataclass, field

import numpy as np

from .errors import ShapeMismatch

MATCH_IOU = 0.5


@dataclass
class CategoryMatches:
    tp: list = field(default_factory=list)  # (pred_id, gt_id, iou)
    fp: list = field(default_factory=list)  # pred ids
    fn: list = field(default_factory=list)  # gt ids


@dataclass
class Matches:
    per_category: dict
    num_stuff: int


def _segment_table(segment_map, segments, void_id):
    ids, counts = np.unique(segment_map, return_counts=True)
    areas = dict(zip(ids.tolist(), counts.tolist()))
    areas.pop(void_id, None)
    cats = {s.segment_id: int(s.category) for s in segments}
    return areas, cats


def match_segments(pred, gt):
    """Pair predicted and ground-truth segments of the same category with IoU > 0.5.

    Predicted segments lying mostly (> 50%) on ground-truth void are neither
    matched nor counted as false positives. Void pixels are also removed from
    the union when computing IoU.
    """
    if pred.segment_map.shape != gt.segment_map.shape:
        raise ShapeMismatch(f"prediction {pred.segment_map.shape} vs ground truth {gt.segment_map.shape}")
    p_map = pred.segment_map.astype(np.int64).reshape(-1)
    g_map = gt.segment_map.astype(np.int64).reshape(-1)
    p_area, p_cat = _segment_table(p_map, pred.segments, pred.void_id)
    g_area, g_cat = _segment_table(g_map, gt.segments, gt.void_id)

    offset = int(max(p_map.max(initial=0), g_map.max(initial=0), pred.void_id, gt.void_id)) + 1
    pair_ids, pair_counts = np.unique(g_map * offset + p_map, return_counts=True)
    inter = {}
    void_overlap = {}
    for key, count in zip(pair_ids.tolist(), pair_counts.tolist()):
        g, p = divmod(key, offset)
        if p == pred.void_id:
            continue
        if g == gt.void_id:
            void_overlap[p] = count
        else:
            inter[(g, p)] = count

    per_cat = {}

    def bucket(cat):
        return per_cat.setdefault(cat, CategoryMatches())

    matched_g, matched_p = set(), set()
    for (g, p), count in sorted(inter.items()):
        if g_cat[g] != p_cat[p]:
            continue
        union = p_area[p] + g_area[g] - count - void_overlap.get(p, 0)
        iou = count / union
        if iou > MATCH_IOU:
            matched_g.add(g)
            matched_p.add(p)
            bucket(g_cat[g]).tp.append((p, g, iou))
    for g in sorted(g_area):
        if g not in matched_g:
            bucket(g_cat[g]).fn.append(g)
    for p in sorted(p_area):
        if p in matched_p:
            continue
        if void_overlap.get(p, 0) / p_area[p] > 0.5:
            continue
        bucket(p_cat[p]).fp.append(p)
    return Matches(dict(sorted(per_cat.items())), gt.label_space.num_stuff)


@dataclass
class CategoryPQ:
    is_thing: bool
    iou_sum: float
    tp: int
    fp: int
    fn: int
    pq: float
    sq: float
    rq: float


@dataclass
class PQReport:
    per_category: dict
    pq: float
    sq: float
    rq: float
    pq_things: float
    sq_things: float
    rq_things: float
    pq_stuff: float
    sq_stuff: float
    rq_stuff: float
    miou: float = None

    def to_json(self):
        r = lambda v: None if v is None else round(float(v), 6)  # noqa: E731
        out = {k: r(getattr(self, k)) for k in (
            "pq", "sq", "rq", "pq_things", "pq_stuff", "sq_things", "sq_stuff",
            "rq_things", "rq_stuff", "miou")}
        out["per_category"] = {
            str(cat): {"is_thing": c.is_thing, "iou_sum": r(c.iou_sum), "tp": c.tp, "fp": c.fp,
                       "fn": c.fn, "pq": r(c.pq), "sq": r(c.sq), "rq": r(c.rq)}
            for cat, c in self.per_category.items()
        }
        return out

    def dumps(self):
        return json.dumps(self.to_json(), indent=2, sort_keys=True) + "\n"


def _mean(values):
    return float(np.mean(values)) if values else 0.0


def compute_pq(matches):
    per = {}
    for cat, m in matches.per_category.items():
        tp, fp, fn = len(m.tp), len(m.fp), len(m.fn)
        if tp + fp + fn == 0:
            continue
        iou_sum = float(sum(iou for _, _, iou in m.tp))
        denom = tp + 0.5 * fp + 0.5 * fn
        sq = iou_sum / tp if tp else 0.0
        per[cat] = CategoryPQ(cat >= matches.num_stuff, iou_sum, tp, fp, fn,
                              iou_sum / denom, sq, tp / denom)

    def agg(pick):
        cs = [c for c in per.values() if pick(c)]
        return _mean([c.pq for c in cs]), _mean([c.sq for c in cs]), _mean([c.rq for c in cs])

    pq, sq, rq = agg(lambda c: True)
    pqt, sqt, rqt = agg(lambda c: c.is_thing)
    pqs, sqs, rqs = agg(lambda c: not c.is_thing)
    return PQReport(per, pq, sq, rq, pqt, sqt, rqt, pqs, sqs, rqs)


def compute_miou(pred, gt):
    """Mean over ground-truth categories of the semantic-mask IoU (GT void ignored)."""
    p_sem = np.asarray(pred.semantic_map)
    g_sem = np.asarray(gt.semantic_map)
    if p_sem.shape != g_sem.shape:
        raise ShapeMismatch(f"prediction {p_sem.shape} vs ground truth {g_sem.shape}")
    care = g_sem != gt.void_id
    ious = []
    for cat in np.unique(g_sem[care]).tolist():
        g = (g_sem == cat) & care
        p = (p_sem == cat) & care
        ious.append((g & p).sum() / (g | p).sum())
    return _mean(ious)


def evaluate(pred, gt):
    report = compute_pq(match_segments(pred, gt))
    report.miou = compute_miou(pred, gt)
    return report
