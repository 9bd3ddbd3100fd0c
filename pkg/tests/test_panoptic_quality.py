import itertools

import numpy as np
import pytest

from ciae.panoptic_quality import CategoryMatches, Matches, compute_miou, compute_pq, evaluate, match_segments
from ciae.scene import VOID_ID, LabelSpace, SceneGenConfig, generate_scene, scene_from_segment_map

SPACE = LabelSpace(1, 2)


def row_scene(ids, cats):
    return scene_from_segment_map(np.array([ids]), cats, SPACE)


def test_identity_is_perfect():
    scene = generate_scene(SceneGenConfig(num_things=5, seed=2))
    m = match_segments(scene, scene)
    for cm in m.per_category.values():
        assert not cm.fp and not cm.fn
        assert all(iou == 1.0 for _, _, iou in cm.tp)
    r = compute_pq(m)
    assert r.pq == r.sq == r.rq == 1.0


def test_iou_06_match():
    # thing mask of 8 pixels vs 8 pixels shifted by two: overlap 6, union 10
    gt = row_scene([1] * 8 + [0] * 2, {0: 0, 1: 1})
    pred = row_scene([0] * 2 + [1] * 8, {0: 0, 1: 1})
    m = match_segments(pred, gt)
    assert m.per_category[1].tp == [(1, 1, pytest.approx(0.6))]
    assert m.per_category[0].fp == [0] and m.per_category[0].fn == [0]
    r = compute_pq(m)
    assert r.per_category[1].pq == pytest.approx(0.6, abs=1e-12)
    assert r.pq == pytest.approx(0.3, abs=1e-12)


def test_category_mismatch():
    gt = row_scene([1] * 6, {1: 1})
    pred = row_scene([1] * 6, {1: 2})
    m = match_segments(pred, gt)
    assert m.per_category[1].fn == [1] and m.per_category[2].fp == [1]
    assert not m.per_category[1].tp and not m.per_category[2].tp


def test_prediction_on_void_is_not_false_positive():
    gt = scene_from_segment_map(np.array([[0, 0, 0, 0, VOID_ID, VOID_ID, VOID_ID]]), {0: 0}, SPACE)
    pred = row_scene([0, 0, 0, 0, 1, 1, 1], {0: 0, 1: 1})
    m = match_segments(pred, gt)
    assert 1 not in m.per_category
    assert compute_pq(m).pq == 1.0
    # void pixels are removed from the union
    pred2 = row_scene([0, 0, 0, 0, 0, 0, 0], {0: 0})
    assert match_segments(pred2, gt).per_category[0].tp[0][2] == 1.0


def matches(tp_ious, fp=0, fn=0, cat=1):
    cm = CategoryMatches([(i, i, v) for i, v in enumerate(tp_ious)], list(range(fp)), list(range(fn)))
    return Matches({cat: cm}, 1)


def test_pq_arithmetic():
    r = compute_pq(matches([0.6]))
    assert (r.sq, r.rq, r.pq) == (pytest.approx(0.6, abs=1e-12), 1.0, pytest.approx(0.6, abs=1e-12))
    r = compute_pq(matches([0.8], fp=1))
    assert r.rq == pytest.approx(1 / 1.5, abs=1e-12)
    assert r.pq == pytest.approx(0.8 / 1.5, abs=1e-12)
    assert r.pq == pytest.approx(0.5333, abs=1e-4)
    r = compute_pq(matches([], fp=1, fn=2))
    assert r.pq == r.sq == r.rq == 0.0
    assert r.pq_things == 0.0 and r.pq_stuff == 0.0


def test_aggregates_split_things_and_stuff():
    m = Matches({0: CategoryMatches([(0, 0, 0.9)]), 2: CategoryMatches([(5, 5, 0.7)], [6])}, 1)
    r = compute_pq(m)
    assert r.pq_stuff == pytest.approx(0.9)
    assert r.pq_things == pytest.approx(0.7 / 1.5)
    assert r.pq == pytest.approx((0.9 + 0.7 / 1.5) / 2)


def corrupted(scene, rng, n_rect=3, flip=True):
    seg = scene.segment_map.copy()
    ids = [s.segment_id for s in scene.segments]
    for _ in range(n_rect):
        y0, x0 = rng.integers(0, scene.height - 4), rng.integers(0, scene.width - 4)
        h, w = rng.integers(2, 10, size=2)
        seg[y0:y0 + h, x0:x0 + w] = ids[int(rng.integers(len(ids)))]
    cats = {s.segment_id: s.category for s in scene.segments}
    if flip and scene.things and rng.random() < 0.5:
        t = scene.things[int(rng.integers(len(scene.things)))]
        others = [c for c in range(scene.label_space.num_stuff, scene.label_space.num_categories) if c != t.category]
        cats[t.segment_id] = others[0]
    return scene_from_segment_map(seg, cats, scene.label_space)


def brute_force_tp(pred, gt):
    """Largest set of IoU > 0.5 pairs over every category-consistent one-to-one pairing."""
    def iou(p, g):
        inter = union = 0
        for a, b in zip(pred.segment_map.reshape(-1), gt.segment_map.reshape(-1)):
            inter += (a == p) and (b == g)
            union += (a == p) or (b == g)
        return inter / union

    ps, gs = pred.segments, gt.segments
    candidates = {(p.segment_id, g.segment_id): iou(p.segment_id, g.segment_id)
                  for p in ps for g in gs if p.category == g.category}
    best = []
    for r in range(min(len(ps), len(gs)) + 1):
        for pairing in itertools.combinations(candidates, r):
            if len({p for p, _ in pairing}) < r or len({g for _, g in pairing}) < r:
                continue
            tp = sorted(pair for pair in pairing if candidates[pair] > 0.5)
            if len(tp) > len(best[0]) if best else True:
                best = [tp]
            elif len(tp) == len(best[0]) and tp not in best:
                best.append(tp)
    return best


@pytest.mark.parametrize("seed", range(12))
def test_matching_against_exhaustive_pairings(seed):
    rng = np.random.default_rng(seed)
    gt = generate_scene(SceneGenConfig(height=12, width=12, num_stuff_regions=2, num_things=3,
                                       num_stuff_classes=2, num_thing_classes=2, seed=seed))
    pred = corrupted(gt, rng)
    assert len(gt.segments) <= 6 and len(pred.segments) <= 6
    options = brute_force_tp(pred, gt)
    assert len(options) == 1
    got = sorted((p, g) for cm in match_segments(pred, gt).per_category.values() for p, g, _ in cm.tp)
    assert got == options[0]


@pytest.mark.parametrize("seed", range(20))
def test_self_evaluation_and_decomposition(seed):
    scene = generate_scene(SceneGenConfig(num_things=6, force_overlap=True, seed=seed))
    assert evaluate(scene, scene).pq == 1.0
    pred = corrupted(scene, np.random.default_rng(seed), n_rect=6)
    r = evaluate(pred, scene)
    for c in r.per_category.values():
        if c.tp:
            assert c.pq == pytest.approx(c.sq * c.rq, abs=1e-12)
        assert 0 <= c.pq <= 1 and 0 <= c.sq <= 1 and 0 <= c.rq <= 1


@pytest.mark.parametrize("seed", range(5))
def test_permuting_prediction_ids(seed):
    scene = generate_scene(SceneGenConfig(num_things=5, seed=seed))
    pred = corrupted(scene, np.random.default_rng(seed))
    ids = [s.segment_id for s in pred.segments if s.is_thing]
    perm = dict(zip(ids, np.random.default_rng(seed).permutation(ids).tolist()))
    seg = pred.segment_map.copy()
    for a, b in perm.items():
        seg[pred.segment_map == a] = b + 100
    cats = {s.segment_id: s.category for s in pred.segments}
    new_cats = {(perm[k] + 100 if k in perm else k): v for k, v in cats.items()}
    permuted = scene_from_segment_map(seg, new_cats, pred.label_space)
    assert evaluate(permuted, scene).pq - evaluate(pred, scene).pq == 0.0


def test_miou():
    scene = generate_scene(SceneGenConfig(seed=3))
    assert compute_miou(scene, scene) == 1.0
    gt = row_scene([0, 0, 0, 0], {0: 0})
    half = scene_from_segment_map(np.array([[0, 0, VOID_ID, VOID_ID]]), {0: 0}, SPACE)
    assert compute_miou(half, gt) == 0.5
    assert compute_miou(row_scene([1, 1, 1, 1], {1: 1}), gt) == 0.0


def test_metrics_json_format():
    scene = generate_scene(SceneGenConfig(seed=3))
    out = evaluate(corrupted(scene, np.random.default_rng(0)), scene).to_json()
    for key in ("pq", "sq", "rq", "pq_things", "pq_stuff", "sq_things", "sq_stuff", "rq_things",
                "rq_stuff", "miou", "per_category"):
        assert key in out
    assert out["pq"] == round(out["pq"], 6)
