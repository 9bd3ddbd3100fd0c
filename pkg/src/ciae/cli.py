"""Command-line entry point: ``ciae {generate,train,infer,eval,viz,ablate}``."""

import argparse
import csv
import io
import json
import logging
import os
import sys

from .config import ConfigError, load_run_config, load_sweep_config
from .embedding import load_checkpoint, save_checkpoint
from .errors import CIAEError, FormatError
from .fusion import load_proposals, prediction_from_files, prediction_to_files, save_proposals
from .panoptic_quality import evaluate
from .pipeline import infer, run_sweep
from .scene import generate_scene, scene_from_files, scene_to_files
from .trainer import train
from .viz import embedding_image, segmentation_image, write_ppm

log = logging.getLogger("ciae")

EXIT_OK, EXIT_USAGE, EXIT_RUNTIME = 0, 2, 3
CSV_HEADER = ["setting", "seed", "pq", "pq_things", "pq_stuff"]


class UsageError(Exception):
    pass


def _config(args):
    cfg = load_run_config(args.config)
    if getattr(args, "seed", None) is not None:
        cfg = cfg.with_seed(args.seed)
    return cfg


def _echo(out_dir, payload):
    os.makedirs(out_dir, exist_ok=True)
    with open(os.path.join(out_dir, "config.echo.json"), "w") as fh:
        json.dump(payload, fh, indent=2, sort_keys=True)
        fh.write("\n")


def _require(path, what):
    if not os.path.exists(path):
        raise UsageError(f"{what} not found: {path}")


def cmd_generate(args):
    cfg = _config(args)
    scene = generate_scene(cfg.scene)
    scene_to_files(scene, args.out)
    _echo(args.out, cfg.to_json())
    print(f"wrote scene with {len(scene.segments)} segments to {args.out}")


def cmd_train(args):
    cfg = _config(args)
    _require(os.path.join(args.scene, "meta.json"), "scene")
    scene = scene_from_files(args.scene)
    emb, bank, trace = train(scene, cfg.train, cfg.loss)
    os.makedirs(args.out, exist_ok=True)
    save_checkpoint(os.path.join(args.out, "checkpoint.bin"), emb, bank)
    trace.save(os.path.join(args.out, "train_log.json"))
    _echo(args.out, cfg.to_json())
    print(f"loss {trace.l_ciae[0]:.6f} -> {trace.l_ciae[-1]:.6f} after {emb.generation} steps")


def cmd_infer(args):
    cfg = _config(args)
    if args.oracle:
        cfg.proposals.oracle_queries = True
    _require(args.checkpoint, "checkpoint")
    _require(os.path.join(args.scene, "meta.json"), "scene")
    emb, bank = load_checkpoint(args.checkpoint)
    if bank is None:
        raise FormatError(f"{args.checkpoint}: checkpoint has no memory section")
    scene = scene_from_files(args.scene)
    proposals = None
    if args.proposals:
        _require(args.proposals, "proposal list")
        if cfg.proposals.oracle_queries:
            raise UsageError("--proposals cannot be combined with oracle queries")
        proposals = load_proposals(args.proposals)
    pred, proposals = infer(emb, bank, scene, cfg.proposals, cfg.fusion, proposals)
    prediction_to_files(pred, args.out)
    save_proposals(os.path.join(args.out, "proposals.json"), proposals)
    _echo(args.out, cfg.to_json())
    print(f"wrote prediction with {len(pred.segments)} segments to {args.out}")


def cmd_eval(args):
    _require(os.path.join(args.scene, "meta.json"), "scene")
    gt = scene_from_files(args.scene)
    if os.path.exists(os.path.join(args.pred, "pred_meta.json")):
        _require(os.path.join(args.pred, "pred_segment.pgm"), "prediction raster")
        pred = prediction_from_files(args.pred)
    elif os.path.exists(os.path.join(args.pred, "meta.json")):
        # a ground-truth scene directory is accepted as a prediction
        pred = scene_from_files(args.pred)
    else:
        raise UsageError(f"prediction not found: {os.path.join(args.pred, 'pred_meta.json')}")
    text = evaluate(pred, gt).dumps()
    out = args.out or args.pred
    os.makedirs(out, exist_ok=True)
    with open(os.path.join(out, "metrics.json"), "w") as fh:
        fh.write(text)
    _echo(out, {"pred": args.pred, "scene": args.scene})
    sys.stdout.write(text)


def cmd_viz(args):
    if bool(args.checkpoint) == bool(args.pred):
        raise UsageError("give exactly one of --checkpoint or --pred")
    if args.checkpoint:
        _require(args.checkpoint, "checkpoint")
        emb, _ = load_checkpoint(args.checkpoint)
        image = embedding_image(emb, args.iters)
    else:
        _require(os.path.join(args.pred, "pred_meta.json"), "prediction")
        pred = prediction_from_files(args.pred)
        image = segmentation_image(pred.segment_map, pred.void_id)
    out_dir = os.path.dirname(os.path.abspath(args.out))
    os.makedirs(out_dir, exist_ok=True)
    write_ppm(args.out, image)
    _echo(out_dir, {"checkpoint": args.checkpoint, "pred": args.pred, "iters": args.iters})
    print(f"wrote {image.shape[1]}x{image.shape[0]} image to {args.out}")


def _worker_count():
    raw = os.environ.get("CIAE_THREADS", "1")
    try:
        return max(1, int(raw))
    except ValueError as exc:
        raise UsageError(f"CIAE_THREADS must be an integer, got {raw!r}") from exc


def ablation_csv(rows):
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(CSV_HEADER)
    for value, seed, report in rows:
        writer.writerow([json.dumps(value), seed, f"{report.pq:.6f}", f"{report.pq_things:.6f}",
                         f"{report.pq_stuff:.6f}"])
    return buf.getvalue()


def cmd_ablate(args):
    sweep = load_sweep_config(args.config)
    rows = run_sweep(sweep, _worker_count())
    text = ablation_csv(rows)
    os.makedirs(args.out, exist_ok=True)
    with open(os.path.join(args.out, "ablation.csv"), "w") as fh:
        fh.write(text)
    _echo(args.out, sweep.to_json())
    sys.stdout.write(text)


def build_parser():
    parser = argparse.ArgumentParser(prog="ciae", description=__doc__)
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)

    def add(name, func, help_text):
        p = sub.add_parser(name, help=help_text)
        p.set_defaults(func=func)
        return p

    p = add("generate", cmd_generate, "generate a synthetic scene")
    p.add_argument("--config")
    p.add_argument("--out", required=True)
    p.add_argument("--seed", type=int)

    p = add("train", cmd_train, "fit an embedding map to a scene")
    p.add_argument("--config")
    p.add_argument("--scene", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--seed", type=int)

    p = add("infer", cmd_infer, "panoptic prediction from a checkpoint")
    p.add_argument("--config")
    p.add_argument("--checkpoint", required=True)
    p.add_argument("--scene", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--seed", type=int)
    p.add_argument("--oracle", action="store_true", help="ground-truth boxes and mask-mean queries")
    p.add_argument("--proposals", help="proposal list JSON to use instead of simulated detections")

    p = add("eval", cmd_eval, "panoptic quality of a prediction")
    p.add_argument("--pred", required=True)
    p.add_argument("--scene", required=True)
    p.add_argument("--out")

    p = add("viz", cmd_viz, "render a checkpoint or prediction as PPM")
    p.add_argument("--checkpoint")
    p.add_argument("--pred")
    p.add_argument("--out", required=True)
    p.add_argument("--iters", type=int, default=100)

    p = add("ablate", cmd_ablate, "sweep one parameter over several seeds")
    p.add_argument("--config", required=True)
    p.add_argument("--out", required=True)
    return parser


def main(argv=None):
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return EXIT_USAGE if exc.code else EXIT_OK
    logging.basicConfig(level=logging.DEBUG if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        args.func(args)
    except (ConfigError, UsageError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except (CIAEError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_RUNTIME
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
