"""Inference: simulated detections, query assembly and similarity assignment."""

import json
import os
from dataclasses import asdict, dataclass, field

import numpy as np

from .embedding import mean_segment_embeddings, normalize_map
from .errors import FormatError, MergedBank, MissingScene, ShapeMismatch
from .loss import box_mask
from .scene import (
    VOID_ID,
    SegmentRecord,
    bbox_of,
    check_segments,
    read_pgm16,
    records_from_json,
    write_pgm16,
)

PRED_FORMAT = "ciae-pred/1"


@dataclass(frozen=True)
class InstanceProposal:
    bbox: tuple  # (x_min, y_min, x_max, y_max), half-open
    category: int
    score: float
    seed: tuple  # (x, y)
    gt_segment: int = None  # ground-truth segment the proposal was simulated from

    def to_json(self):
        return {"bbox": list(self.bbox), "category": self.category, "score": self.score,
                "seed": list(self.seed)}


@dataclass
class ProposalSimConfig:
    center_jitter: float = 0.0
    size_jitter: float = 0.0
    drop_prob: float = 0.0
    duplicate_prob: float = 0.0
    flip_prob: float = 0.0
    seed: int = 0
    oracle_queries: bool = False

    def validate(self):
        for name in ("drop_prob", "duplicate_prob", "flip_prob"):
            if not 0.0 <= getattr(self, name) <= 1.0:
                raise ValueError(f"{name} must be within [0, 1]")
        if self.center_jitter < 0 or self.size_jitter < 0:
            raise ValueError("jitter must be >= 0")
        return self


def _nearest_pixel(mask, cx, cy):
    ys, xs = np.nonzero(mask)
    if ys.size == 0:
        return None
    dist = (xs + 0.5 - cx) ** 2 + (ys + 0.5 - cy) ** 2
    i = int(np.argmin(dist))  # row-major order breaks ties
    return int(xs[i]), int(ys[i])


def _jitter_box(rng, bbox, cfg, width, height):
    x0, y0, x1, y1 = bbox
    w, h = x1 - x0, y1 - y0
    cx = (x0 + x1) / 2.0 + rng.normal(0.0, cfg.center_jitter * w) if cfg.center_jitter else (x0 + x1) / 2.0
    cy = (y0 + y1) / 2.0 + rng.normal(0.0, cfg.center_jitter * h) if cfg.center_jitter else (y0 + y1) / 2.0
    if cfg.size_jitter:
        w *= max(1.0 + rng.normal(0.0, cfg.size_jitter), 0.1)
        h *= max(1.0 + rng.normal(0.0, cfg.size_jitter), 0.1)
    nx0 = int(np.clip(np.floor(cx - w / 2.0 + 0.5), 0, width - 1))
    ny0 = int(np.clip(np.floor(cy - h / 2.0 + 0.5), 0, height - 1))
    nx1 = int(np.clip(np.floor(cx + w / 2.0 + 0.5), nx0 + 1, width))
    ny1 = int(np.clip(np.floor(cy + h / 2.0 + 0.5), ny0 + 1, height))
    return (nx0, ny0, nx1, ny1)


def simulate_proposals(scene, cfg):
    """Stand-in for a detector: perturbed ground-truth boxes with in-mask seeds.

    The seed is the instance pixel nearest the perturbed box center among those
    inside the box; when the box misses the mask entirely it is grown to
    contain the mask pixel nearest its center.
    """
    cfg.validate()
    rng = np.random.default_rng(cfg.seed)
    space = scene.label_space
    out = []
    for seg in sorted(scene.things, key=lambda s: s.segment_id):
        # one draw per decision keeps the stream aligned across settings
        drop, dup, flip = rng.random(3)
        box = _jitter_box(rng, seg.bbox, cfg, scene.width, scene.height)
        if drop < cfg.drop_prob:
            continue
        category = seg.category
        if flip < cfg.flip_prob and space.num_thing > 1:
            others = [c for c in range(space.num_stuff, space.num_categories) if c != category]
            category = others[int(rng.integers(len(others)))]
        mask = scene.segment_map == seg.segment_id
        cx, cy = (box[0] + box[2]) / 2.0, (box[1] + box[3]) / 2.0
        seed = _nearest_pixel(mask & box_mask(box, scene.height, scene.width), cx, cy)
        if seed is None:
            seed = _nearest_pixel(mask, cx, cy)
            box = (min(box[0], seed[0]), min(box[1], seed[1]), max(box[2], seed[0] + 1), max(box[3], seed[1] + 1))
        x0, y0, x1, y1 = seg.bbox
        offset = np.hypot((x0 + x1) / 2.0 - cx, (y0 + y1) / 2.0 - cy) / max(x1 - x0, y1 - y0)
        score = float(np.round(np.exp(-offset), 6))
        prop = InstanceProposal(box, category, score, seed, seg.segment_id)
        out.append(prop)
        if dup < cfg.duplicate_prob:
            out.append(prop)
    return out


def gt_proposals(scene):
    """Ground-truth boxes and categories, seeds at the mask pixel nearest the box center."""
    out = []
    for seg in sorted(scene.things, key=lambda s: s.segment_id):
        x0, y0, x1, y1 = seg.bbox
        seed = _nearest_pixel(scene.segment_map == seg.segment_id, (x0 + x1) / 2.0, (y0 + y1) / 2.0)
        out.append(InstanceProposal(seg.bbox, seg.category, 1.0, seed, seg.segment_id))
    return out


@dataclass
class QuerySet:
    """Unit query rows: ``num_stuff`` stuff memories in category order, then one row per proposal."""

    vectors: np.ndarray
    kinds: list
    categories: list
    boxes: list
    scores: list
    num_stuff: int

    @property
    def num_queries(self):
        return self.vectors.shape[0]

    def instance_rows(self):
        return range(self.num_stuff, self.num_queries)


def build_queries(view, emb, proposals, bank, num_stuff, scene=None, oracle=False):
    """Stack stuff memory vectors and per-proposal embeddings.

    A proposal's embedding is the normalized pixel at its seed, or with
    ``oracle`` the normalized mean of the pre-norm embeddings over its
    ground-truth mask.
    """
    if oracle and scene is None:
        raise MissingScene("oracle queries need the ground-truth scene")
    if bank.num_categories < num_stuff:
        raise ShapeMismatch("memory bank does not cover every stuff category")
    rows = [bank.vectors[c] for c in range(num_stuff)]
    kinds = ["stuff"] * num_stuff
    cats = list(range(num_stuff))
    boxes = [None] * num_stuff
    scores = [1.0] * num_stuff
    means = None
    if oracle:
        means = mean_segment_embeddings(emb, scene.segment_map, scene.void_id)
    for prop in proposals:
        if oracle:
            if prop.gt_segment is None:
                raise MissingScene("oracle queries need proposals linked to ground truth")
            rows.append(means[prop.gt_segment])
        else:
            x, y = prop.seed
            rows.append(view[y, x])
        kinds.append("instance")
        cats.append(int(prop.category))
        boxes.append(tuple(int(v) for v in prop.bbox))
        scores.append(float(prop.score))
    vectors = np.array(rows, dtype=np.float64).reshape(len(rows), view.shape[-1])
    return QuerySet(vectors, kinds, cats, boxes, scores, num_stuff)


def default_min_stuff_area(height, width):
    return int(round(0.0064 * height * width))


@dataclass(eq=False)
class PanopticPrediction:
    """Per-pixel query index (-1 for void) plus the metadata of every query.

    Segment ids equal query indices, so stuff segment ids equal their category.
    """

    assignment: np.ndarray
    kinds: list
    categories: list
    boxes: list
    scores: list
    num_stuff: int
    void_id: int = VOID_ID

    @property
    def height(self):
        return self.assignment.shape[0]

    @property
    def width(self):
        return self.assignment.shape[1]

    @property
    def segment_map(self):
        return np.where(self.assignment >= 0, self.assignment, self.void_id)

    @property
    def semantic_map(self):
        lut = np.append(np.asarray(self.categories, dtype=np.int64), self.void_id)
        return lut[self.assignment]

    @property
    def segments(self):
        out = []
        ids, counts = np.unique(self.assignment, return_counts=True)
        for q, area in zip(ids.tolist(), counts.tolist()):
            if q < 0:
                continue
            out.append(SegmentRecord(q, int(self.categories[q]), self.kinds[q] == "instance",
                                     bbox_of(self.assignment == q), int(area)))
        return out

    def __eq__(self, other):
        if not isinstance(other, PanopticPrediction):
            return NotImplemented
        return (
            np.array_equal(self.assignment, other.assignment)
            and self.kinds == other.kinds
            and list(self.categories) == list(other.categories)
            and self.boxes == other.boxes
            and self.scores == other.scores
            and self.num_stuff == other.num_stuff
            and self.void_id == other.void_id
        )


def similarity_matrix(view, queries, oob_score="zero"):
    """``S = P V^T`` over flattened pixels with out-of-box instance scores replaced."""
    h, w, d = view.shape
    if queries.vectors.shape[1] != d:
        raise ShapeMismatch(f"query dim {queries.vectors.shape[1]} != map dim {d}")
    sims = view.reshape(-1, d) @ queries.vectors.T
    fill = {"zero": 0.0, "neg_inf": -np.inf}[oob_score]
    for q in queries.instance_rows():
        inside = box_mask(queries.boxes[q], h, w).reshape(-1)
        sims[~inside, q] = fill
    return sims


def assign(view, queries, min_stuff_area=None, oob_score="zero"):
    """Give each pixel its most similar query; drop small stuff regions to void."""
    h, w, _ = view.shape
    if queries.num_queries < 1:
        raise ShapeMismatch("need at least one query")
    if min_stuff_area is None:
        min_stuff_area = default_min_stuff_area(h, w)
    sims = similarity_matrix(view, queries, oob_score)
    best = np.argmax(sims, axis=1)  # first maximum wins, so stuff beats instances on ties
    assignment = best.reshape(h, w).astype(np.int64)
    for q in range(queries.num_stuff):
        mask = assignment == q
        if 0 < mask.sum() < min_stuff_area:
            assignment[mask] = -1
    return PanopticPrediction(assignment, list(queries.kinds), list(queries.categories),
                              list(queries.boxes), list(queries.scores), queries.num_stuff)


def classify_instances_from_embedding(queries, bank, label_space):
    """Thing category of the most similar per-category thing memory, per instance row."""
    first = label_space.num_stuff
    last = label_space.num_stuff + label_space.num_thing
    if label_space.num_thing > 1 and bank.num_categories < last:
        raise MergedBank("bank has no per-category thing vectors")
    thing_vectors = bank.vectors[first:last]
    inst = queries.vectors[queries.num_stuff:]
    if inst.shape[0] == 0:
        return np.zeros(0, dtype=np.int64)
    return first + np.argmax(inst @ thing_vectors.T, axis=1)


def relabel_instances(queries, categories):
    """Copy of ``queries`` with the instance categories replaced."""
    cats = list(queries.categories[: queries.num_stuff]) + [int(c) for c in categories]
    return QuerySet(queries.vectors, queries.kinds, cats, queries.boxes, queries.scores, queries.num_stuff)


# ---------------------------------------------------------------- files


def prediction_to_files(pred, path):
    os.makedirs(path, exist_ok=True)
    meta = {
        "format": PRED_FORMAT,
        "height": pred.height,
        "width": pred.width,
        "num_stuff": pred.num_stuff,
        "void_id": pred.void_id,
        "queries": [
            {"kind": k, "category": int(c), "bbox": None if b is None else list(b), "score": s}
            for k, c, b, s in zip(pred.kinds, pred.categories, pred.boxes, pred.scores)
        ],
        "segments": [dict(asdict(s), bbox=list(s.bbox)) for s in pred.segments],
    }
    with open(os.path.join(path, "pred_meta.json"), "w") as fh:
        json.dump(meta, fh, indent=2, sort_keys=True)
        fh.write("\n")
    write_pgm16(os.path.join(path, "pred_segment.pgm"), pred.segment_map)


def prediction_from_files(path):
    meta_path = os.path.join(path, "pred_meta.json")
    with open(meta_path) as fh:
        try:
            meta = json.load(fh)
        except json.JSONDecodeError as exc:
            raise FormatError(f"{meta_path}: {exc}") from exc
    if not isinstance(meta, dict) or meta.get("format") != PRED_FORMAT:
        raise FormatError(f"{meta_path}: expected format {PRED_FORMAT!r}")
    try:
        h, w = int(meta["height"]), int(meta["width"])
        void_id = int(meta["void_id"])
        num_stuff = int(meta["num_stuff"])
        queries = meta["queries"]
        kinds = [str(q["kind"]) for q in queries]
        cats = [int(q["category"]) for q in queries]
        boxes = [None if q["bbox"] is None else tuple(int(v) for v in q["bbox"]) for q in queries]
        scores = [float(q["score"]) for q in queries]
    except (KeyError, TypeError, ValueError) as exc:
        raise FormatError(f"{meta_path}: {exc}") from exc
    seg_map = read_pgm16(os.path.join(path, "pred_segment.pgm"))
    if seg_map.shape != (h, w):
        raise FormatError("prediction raster disagrees with pred_meta.json")
    assignment = np.where(seg_map == void_id, -1, seg_map)
    if assignment.max(initial=-1) >= len(kinds):
        raise FormatError("prediction raster references an unknown query")
    pred = PanopticPrediction(assignment, kinds, cats, boxes, scores, num_stuff, void_id)
    check_segments(seg_map, records_from_json(meta.get("segments", [])), void_id)
    return pred


def save_proposals(path, proposals):
    with open(path, "w") as fh:
        json.dump([p.to_json() for p in proposals], fh, indent=1)
        fh.write("\n")


def load_proposals(path):
    with open(path) as fh:
        items = json.load(fh)
    try:
        return [InstanceProposal(tuple(int(v) for v in p["bbox"]), int(p["category"]),
                                 float(p["score"]), tuple(int(v) for v in p["seed"]))
                for p in items]
    except (KeyError, TypeError, ValueError) as exc:
        raise FormatError(f"{path}: {exc}") from exc
