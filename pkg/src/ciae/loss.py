"""Category- and instance-aware triplet objective with analytic gradients.

All gradients are taken with respect to the pre-normalization embedding map.
Query embeddings (memory vectors and instance means) are treated as
constants.
"""

from dataclasses import dataclass, field

import numpy as np

from .embedding import EmbeddingMap, mean_segment_embeddings, normalize_map
from .errors import NoValidPixels, ShapeMismatch


@dataclass
class LossConfig:
    margin: float = 0.15
    top_k: int = 5
    alpha: float = 2.0
    thing_pixel_weight: float = 5.0
    box_expand: float = 1.5
    filtering: bool = True
    clamp_eps: float = 1e-7
    topk_scope: str = "per_pixel"  # or "global"

    def validate(self):
        if not 0 <= self.margin < 2:
            raise ValueError(f"margin {self.margin} outside [0, 2)")
        if self.top_k < 1:
            raise ValueError("top_k must be >= 1")
        if self.alpha < 0:
            raise ValueError("alpha must be >= 0")
        if self.thing_pixel_weight < 1:
            raise ValueError("thing_pixel_weight must be >= 1")
        if self.box_expand < 1:
            raise ValueError("box_expand must be >= 1")
        if not 0 < self.clamp_eps < 1:
            raise ValueError("clamp_eps must be in (0, 1)")
        if self.topk_scope not in ("per_pixel", "global"):
            raise ValueError(f"unknown topk_scope {self.topk_scope!r}")
        return self


@dataclass
class EmbeddingProblem:
    """Targets for one triplet objective over an H x W map.

    ``pixel_to_query`` holds -1 at void pixels. ``valid[y, x, k]`` false means
    the similarity between that pixel and query ``k`` is forced to 0.
    """

    pixel_to_query: np.ndarray
    queries: np.ndarray
    valid: np.ndarray = None
    pixel_weights: np.ndarray = None


@dataclass
class TripletBreakdown:
    """Per-term intermediates over the non-void pixels (rows) and queries (columns).

    The column of each pixel's own query is excluded via ``negative``.
    """

    pixels: np.ndarray  # flat indices of non-void pixels
    d_pos: np.ndarray
    d_neg: np.ndarray
    l_prime: np.ndarray
    l: np.ndarray
    negative: np.ndarray
    selected: np.ndarray


@dataclass
class LossValueAndGrad:
    value: float
    grad: np.ndarray
    parts: dict = field(default_factory=dict)


def triplet_term(d_pos, d_neg, cfg):
    """Hinge ``l'`` and its log-rescaled form ``l``; works elementwise on arrays."""
    l_prime = np.maximum(np.asarray(d_pos) - np.asarray(d_neg) + cfg.margin, 0.0)
    arg = np.maximum(1.0 - l_prime / (2.0 + cfg.margin), cfg.clamp_eps)
    l = -np.log(arg)
    if np.ndim(l_prime) == 0:
        return float(l_prime), float(l)
    return l_prime, l


def _select(l, negative, cfg):
    scores = np.where(negative, l, 0.0)
    if cfg.topk_scope == "per_pixel":
        order = np.argsort(-scores, axis=1, kind="stable")
        rank = np.empty_like(order)
        np.put_along_axis(rank, order, np.arange(scores.shape[1])[None, :], axis=1)
        return (rank < cfg.top_k) & (scores > 0)
    # global: the top_k * N largest terms of the whole image
    flat = scores.reshape(-1)
    order = np.argsort(-flat, kind="stable")
    chosen = np.zeros(flat.shape, dtype=bool)
    chosen[order[: cfg.top_k * scores.shape[0]]] = True
    return (chosen & (flat > 0)).reshape(scores.shape)


def _flat_problem(shape, problem):
    h, w = shape
    p2q = np.asarray(problem.pixel_to_query).reshape(-1)
    if p2q.size != h * w:
        raise ShapeMismatch("pixel_to_query does not match the map")
    queries = np.asarray(problem.queries, dtype=np.float64)
    pixels = np.flatnonzero(p2q >= 0)
    if pixels.size == 0:
        raise NoValidPixels("every pixel is void")
    q = queries.shape[0]
    if p2q[pixels].max() >= q:
        raise ShapeMismatch("pixel_to_query references a missing query")
    if problem.valid is None:
        valid = np.ones((pixels.size, q), dtype=bool)
    else:
        valid = np.asarray(problem.valid, dtype=bool).reshape(h * w, q)[pixels]
    if problem.pixel_weights is None:
        weights = np.ones(pixels.size)
    else:
        weights = np.asarray(problem.pixel_weights, dtype=np.float64).reshape(-1)[pixels]
    return pixels, p2q[pixels], queries, valid, weights


def triplet_breakdown(view, problem, cfg):
    """Distances, hinge and log terms, and the top-K selection for ``problem``.

    ``view`` is the normalized (H, W, D) map.
    """
    h, w, d = view.shape
    pixels, pos, queries, valid, _ = _flat_problem((h, w), problem)
    if queries.shape[1] != d:
        raise ShapeMismatch(f"queries have dim {queries.shape[1]}, map has {d}")
    p = view.reshape(-1, d)[pixels]
    sims = p @ queries.T
    rows = np.arange(pixels.size)
    d_pos = 1.0 - sims[rows, pos]
    d_neg = 1.0 - np.where(valid, sims, 0.0)
    negative = np.ones_like(valid)
    negative[rows, pos] = False
    l_prime, l = triplet_term(d_pos[:, None], d_neg, cfg)
    l_prime = np.where(negative, l_prime, 0.0)
    l = np.where(negative, l, 0.0)
    selected = _select(l, negative, cfg)
    return TripletBreakdown(pixels, d_pos, d_neg, l_prime, l, negative, selected)


def problem_loss(emb, problem, cfg):
    """Value and gradient of the triplet objective described by ``problem``."""
    x = emb.prenorm if isinstance(emb, EmbeddingMap) else np.asarray(emb, dtype=np.float64)
    h, w, d = x.shape
    view = normalize_map(x)
    br = triplet_breakdown(view, problem, cfg)
    pixels, pos, queries, valid, weights = _flat_problem((h, w), problem)
    n = pixels.size
    coef = weights / n
    value = float(np.sum(coef * np.sum(np.where(br.selected, br.l, 0.0), axis=1)))

    arg = 1.0 - br.l_prime / (2.0 + cfg.margin)
    live = br.selected & (arg > cfg.clamp_eps)
    g = np.zeros_like(br.l)
    g[live] = 1.0 / ((2.0 + cfg.margin) * arg[live])
    # d l'/d p = -v_pos + [valid] v_neg
    grad_p = (g * valid) @ queries - g.sum(axis=1)[:, None] * queries[pos]
    grad_p *= coef[:, None]

    flat_x = x.reshape(-1, d)[pixels]
    norms = np.linalg.norm(flat_x, axis=1)
    p = flat_x / norms[:, None]
    grad_x = (grad_p - p * np.sum(p * grad_p, axis=1)[:, None]) / norms[:, None]
    grad = np.zeros((h * w, d))
    grad[pixels] = grad_x
    return LossValueAndGrad(value, grad.reshape(h, w, d))


def embedding_loss(emb, pixel_to_query, queries, valid, pixel_weights, cfg):
    return problem_loss(emb, EmbeddingProblem(pixel_to_query, queries, valid, pixel_weights), cfg)


# ---------------------------------------------------------------- scene objectives


def _check_bank(scene, bank):
    slots = scene.label_space.num_memory_slots
    if bank.num_categories != slots:
        raise ShapeMismatch(f"memory bank has {bank.num_categories} slots, label space needs {slots}")


def category_id_map(scene):
    """Semantic map in memory-slot ids (things merged when requested), -1 at void."""
    space = scene.label_space
    sem = scene.semantic_map
    out = sem.copy()
    if space.merge_things:
        out[sem >= space.num_stuff] = space.num_stuff
    out[sem == scene.void_id] = -1
    return out


def cae_problem(scene, bank):
    _check_bank(scene, bank)
    return EmbeddingProblem(category_id_map(scene), bank.vectors.copy())


def expand_box(bbox, factor, height, width):
    """Scale a half-open box about its center and clip it to the image."""
    x0, y0, x1, y1 = bbox
    cx, cy = (x0 + x1) / 2.0, (y0 + y1) / 2.0
    hw, hh = (x1 - x0) * factor / 2.0, (y1 - y0) * factor / 2.0
    return (max(cx - hw, 0.0), max(cy - hh, 0.0), min(cx + hw, float(width)), min(cy + hh, float(height)))


def box_mask(box, height, width):
    """Pixels whose centers fall inside ``box`` (half-open on the far side)."""
    x0, y0, x1, y1 = box
    ys = np.arange(height) + 0.5
    xs = np.arange(width) + 0.5
    in_y = (ys >= y0) & (ys < y1)
    in_x = (xs >= x0) & (xs < x1)
    return in_y[:, None] & in_x[None, :]


def iae_problem(emb, scene, bank, cfg):
    _check_bank(scene, bank)
    space = scene.label_space
    h, w = scene.height, scene.width
    things = sorted(scene.things, key=lambda s: s.segment_id)
    for j, seg in enumerate(things):
        if seg.segment_id != space.num_stuff + j:
            raise ShapeMismatch("thing segment ids are not contiguous from num_stuff")
    means = mean_segment_embeddings(emb, scene.segment_map, scene.void_id)
    queries = np.vstack([bank.vectors[: space.num_stuff]] + [means[s.segment_id][None] for s in things])
    valid = np.ones((h, w, queries.shape[0]), dtype=bool)
    if cfg.filtering:
        for j, seg in enumerate(things):
            box = expand_box(seg.bbox, cfg.box_expand, h, w)
            valid[:, :, space.num_stuff + j] = box_mask(box, h, w)
    p2q = scene.segment_map.copy()
    p2q[p2q == scene.void_id] = -1
    weights = np.where(scene.segment_map >= space.num_stuff, cfg.thing_pixel_weight, 1.0)
    weights[scene.segment_map == scene.void_id] = 0.0
    return EmbeddingProblem(p2q, queries, valid, weights)


def cae_loss(emb, scene, bank, cfg):
    return problem_loss(emb, cae_problem(scene, bank), cfg)


def iae_loss(emb, scene, bank, cfg):
    return problem_loss(emb, iae_problem(emb, scene, bank, cfg), cfg)


def ciae_loss(emb, scene, bank, cfg):
    """``cae + alpha * iae``; the two parts are kept in ``parts``."""
    cae = cae_loss(emb, scene, bank, cfg)
    iae = iae_loss(emb, scene, bank, cfg)
    value = cae.value + cfg.alpha * iae.value
    grad = cae.grad + cfg.alpha * iae.grad
    return LossValueAndGrad(value, grad, {"cae": cae, "iae": iae})
