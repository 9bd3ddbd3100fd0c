"""Glue that runs generate -> train -> infer -> evaluate for one configuration."""

from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass

from .config import set_dotted
from .embedding import normalize_map
from .fusion import (
    assign,
    build_queries,
    classify_instances_from_embedding,
    gt_proposals,
    relabel_instances,
    simulate_proposals,
)
from .panoptic_quality import evaluate
from .scene import generate_scene
from .trainer import train


def infer(emb, bank, scene, proposal_cfg, fusion_cfg, proposals=None):
    """Panoptic prediction for ``scene`` from a trained map and bank.

    In oracle mode the proposals are the ground-truth boxes and each instance
    query is the mean embedding over its ground-truth mask.
    """
    view = normalize_map(emb)
    if proposals is None:
        if proposal_cfg.oracle_queries:
            proposals = gt_proposals(scene)
        else:
            proposals = simulate_proposals(scene, proposal_cfg)
    queries = build_queries(view, emb, proposals, bank, scene.label_space.num_stuff, scene,
                            oracle=proposal_cfg.oracle_queries)
    if fusion_cfg.instance_categories == "embedding":
        cats = classify_instances_from_embedding(queries, bank, scene.label_space)
        queries = relabel_instances(queries, cats)
    pred = assign(view, queries, fusion_cfg.min_stuff_area, fusion_cfg.oob_score)
    return pred, proposals


@dataclass
class RunResult:
    scene: object
    embedding: object
    bank: object
    log: object
    prediction: object
    report: object


def run_experiment(cfg):
    scene = generate_scene(cfg.scene)
    emb, bank, log = train(scene, cfg.train, cfg.loss)
    pred, _ = infer(emb, bank, scene, cfg.proposals, cfg.fusion)
    return RunResult(scene, emb, bank, log, pred, evaluate(pred, scene))


def sweep_cells(sweep):
    cells = []
    for value in sweep.values:
        cfg = set_dotted(sweep.base, sweep.parameter, value)
        for s in range(sweep.seeds):
            seed = sweep.seed_offset + s
            cells.append((value, seed, cfg.with_seed(seed)))
    return cells


def run_sweep(sweep, workers=1):
    """Rows of ``(value, seed, PQReport)`` in sweep order, whatever ``workers`` is."""
    cells = sweep_cells(sweep)

    def one(cell):
        value, seed, cfg = cell
        return value, seed, run_experiment(cfg).report

    if workers <= 1:
        return [one(c) for c in cells]
    with ThreadPoolExecutor(max_workers=workers) as pool:
        return list(pool.map(one, cells))
