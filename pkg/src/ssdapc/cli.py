"""Command-line front end.

Every command prints exactly one JSON report on stdout (or a table with
``--pretty``) and logs to stderr. Exit codes: 0 success, 1 invalid input,
2 unexpected runtime failure.
"""

from __future__ import annotations

import argparse
import csv
import json
import logging
import os
import sys
from concurrent.futures import ProcessPoolExecutor
from pathlib import Path

import numpy as np

from . import anchors as anchors_mod
from . import io
from .clustering import ApcParams, run as run_apc, validate_similarity
from .evaluation import (EvalConfig, ScoredBox, compare, evaluate, format_table,
                         report_from_dict)
from .geometry import Box
from .losses import softmax, total_loss
from .matching import GroundTruthObject, match
from .suppression import apc_suppress, nms_all

log = logging.getLogger("ssdapc")


class UsageError(Exception):
    """Input problem that should exit with status 1."""


def _emit(report: dict, pretty_text: str = None, pretty: bool = False) -> None:
    if pretty and pretty_text is not None:
        print(pretty_text)
    else:
        print(json.dumps(report, indent=2, allow_nan=False))


def _config(path) -> io.Config:
    if path is None:
        return io.Config()
    if not Path(path).is_file():
        raise UsageError(f"config file not found: {path}")
    return io.load_config(path)


def _require(path, what: str):
    if path is None or not Path(path).exists():
        raise UsageError(f"{what} not found: {path}")
    return path


def _write_report(path, report: dict) -> None:
    if path:
        Path(path).parent.mkdir(parents=True, exist_ok=True)
        Path(path).write_text(json.dumps(report, indent=2, allow_nan=False) + "\n", encoding="utf-8")


def _ground_truth(annotations, classes):
    """Annotations grouped as ``{image_id: [GroundTruthObject]}``."""
    out = {}
    for a in annotations:
        out.setdefault(a.image_id, []).append(GroundTruthObject(classes.index(a.label) + 1, Box(*a.box)))
    return out


# ----------------------------------------------------------------------- commands

def cmd_gen_anchors(args) -> dict:
    cfg = _config(_require(args.config, "config file"))
    boxes = anchors_mod.generate(cfg.anchors)
    if args.out:
        with open(args.out, "w", encoding="utf-8", newline="\n") as fh:
            for k, b in enumerate(boxes.boxes):
                fh.write(json.dumps({"index": k, "box": [float(v) for v in b]}) + "\n")
    return {"command": "gen-anchors", "count": len(boxes),
            "scales": anchors_mod.scales(cfg.anchors),
            "per_map_ranges": [list(r) for r in boxes.per_map_ranges]}


def cmd_match(args) -> dict:
    cfg = _config(args.config)
    classes, annotations = io.load_annotations(_require(args.annotations, "annotations"))
    defaults = anchors_mod.generate(cfg.anchors)
    gts = _ground_truth(annotations, classes)
    image_ids = sorted(gts) if args.image_id is None else [args.image_id]
    images = {}
    out_lines = []
    for image_id in image_ids:
        m = match(defaults, gts.get(image_id, []), len(classes), args.threshold)
        images[image_id] = {"pos": m.num_positive, "neg": len(m.neg)}
        for i in m.pos:
            out_lines.append({"image_id": image_id, "index": int(i),
                              "label": classes[int(np.argmax(m.Z[i]))],
                              "target": [float(v) for v in m.B[i]]})
    if args.out:
        with open(args.out, "w", encoding="utf-8", newline="\n") as fh:
            for rec in out_lines:
                fh.write(json.dumps(rec) + "\n")
    return {"command": "match", "num_defaults": len(defaults), "threshold": args.threshold,
            "images": images, "pos_total": sum(v["pos"] for v in images.values())}


def load_predictions(path, num_defaults: int):
    """Per-image ``(scores, offsets)`` from a predictions JSON-lines file."""
    lines = io._read_lines(path)
    classes = io._header(lines, path, "predictions")
    rows = {}
    for number, text in lines[1:]:
        rec = io._parse(text, path, number)
        io._check_keys(rec, ("image_id", "scores", "offsets"), path, number)
        image_id = io._string(rec["image_id"], "image_id", path, number)
        scores = io._reals(rec["scores"], len(classes), "scores", path, number)
        offsets = io._reals(rec["offsets"], 4, "offsets", path, number)
        rows.setdefault(image_id, ([], []))
        rows[image_id][0].append(scores)
        rows[image_id][1].append(offsets)
    out = {}
    for image_id, (s, o) in rows.items():
        if len(s) != num_defaults:
            raise io.FormatError(f"image {image_id!r} has {len(s)} rows, expected {num_defaults}", path)
        out[image_id] = (np.array(s), np.array(o))
    return classes, out


def cmd_loss(args) -> dict:
    cfg = _config(args.config)
    classes, annotations = io.load_annotations(_require(args.annotations, "annotations"))
    defaults = anchors_mod.generate(cfg.anchors)
    pred_classes, preds = load_predictions(_require(args.predictions, "predictions"), len(defaults))
    if pred_classes != classes:
        raise UsageError("class vocabularies of predictions and annotations differ")
    gts = _ground_truth(annotations, classes)
    images = {}
    for image_id in sorted(preds):
        scores, offsets = preds[image_id]
        if args.logits:
            scores = softmax(scores)
        m = match(defaults, gts.get(image_id, []), len(classes), args.threshold)
        lb = total_loss(scores, offsets, m, alpha=args.alpha)
        images[image_id] = {"classification": lb.classification, "localization": lb.localization,
                            "total": lb.total, "num_positive": lb.num_positive, "empty": lb.empty}
    totals = [v["total"] for v in images.values() if not v["empty"]]
    return {"command": "loss", "alpha": args.alpha, "images": images,
            "mean_total": float(np.mean(totals)) if totals else 0.0}


def read_similarity_csv(path) -> np.ndarray:
    try:
        with open(path, newline="", encoding="utf-8") as fh:
            rows = [[float(x) for x in row] for row in csv.reader(fh) if row]
    except ValueError as exc:
        raise io.FormatError(f"non-numeric similarity entry: {exc}", path) from exc
    try:
        return validate_similarity(np.array(rows, dtype=float))
    except ValueError as exc:
        raise io.FormatError(str(exc), path) from exc


def cmd_cluster(args) -> dict:
    cfg = _config(args.config)
    S = read_similarity_csv(_require(args.similarity, "similarity matrix"))
    params = cfg.apc
    overrides = {k: v for k, v in (("damping", args.damping), ("max_iter", args.max_iter),
                                   ("convergence_window", args.window)) if v is not None}
    if overrides:
        params = ApcParams(**{**params.__dict__, **overrides})
    result = run_apc(S, params)
    return {"command": "cluster", "q": len(S), "exemplars": result.exemplars.tolist(),
            "assignments": result.assignments.tolist(), "iterations": result.iterations,
            "converged": result.converged, "net_similarity": result.net_similarity(S)}


def cmd_synth(args) -> dict:
    from .synth import CLASSES, pair_fixture, synth_corpus

    out = Path(args.out_dir)
    (out / "images").mkdir(parents=True, exist_ok=True)
    scenes = [pair_fixture(args.seed)] if args.fixture == "pair" else synth_corpus(args.scenes, args.seed)
    for sc in scenes:
        io.save_ppm(out / "images" / f"{sc.image_id}.ppm", sc.pixels)
    io.save_annotations(out / "annotations.jsonl", CLASSES, [a for sc in scenes for a in sc.annotations])
    io.save_dump(out / "detections.jsonl", CLASSES, [sc.detections for sc in scenes])
    return {"command": "synth", "seed": args.seed, "scenes": len(scenes),
            "objects": sum(len(sc.annotations) for sc in scenes),
            "rows": sum(len(sc.detections) for sc in scenes)}


def _suppress_one(task):
    method, dets, image_path, supp, hog_cfg, nms_threshold = task
    if method == "nms":
        return dets.image_id, nms_all(dets, nms_threshold, supp.confidence_floor)
    image = io.load_image(image_path) if image_path is not None else None
    return dets.image_id, apc_suppress(dets, image, supp, hog_cfg)


def cmd_suppress(args) -> dict:
    cfg = _config(args.config)
    classes, sets = io.load_dump(_require(args.dump, "detection dump"))
    supp = cfg.apc_suppression()
    needs_pixels = args.method == "apc" and supp.appearance_weight > 0
    paths = {}
    if needs_pixels:
        if args.images_dir is None:
            raise UsageError("--images-dir is required for apc with a non-zero appearance weight")
        for ds in sorted(sets, key=lambda d: d.image_id):
            paths[ds.image_id] = io.find_image(args.images_dir, ds.image_id)
            if paths[ds.image_id] is None:
                raise UsageError(f"missing image for image id {ds.image_id!r}")
    tasks = [(args.method, ds, paths.get(ds.image_id), supp, cfg.hog, cfg.suppression.nms_iou_threshold)
             for ds in sets]
    jobs = args.jobs or os.cpu_count() or 1
    if jobs > 1 and len(tasks) > 1:
        with ProcessPoolExecutor(max_workers=jobs) as pool:
            results = dict(pool.map(_suppress_one, tasks))
    else:
        results = dict(map(_suppress_one, tasks))
    if args.out:
        io.save_detections(args.out, classes, results)
    per_image = {k: len(results[k]) for k in sorted(results)}
    return {"command": "suppress", "method": args.method, "images": len(results),
            "detections": sum(per_image.values()), "per_image": per_image}


def _eval_inputs(classes, by_image, annotations):
    names = classes[1:]
    detections = {c: [] for c in names}
    for image_id, dets in by_image.items():
        for d in dets:
            detections[classes[d.class_id - 1]].append(ScoredBox(image_id, d.confidence, d.box, d.row))
    gt = {c: {} for c in names}
    for a in annotations:
        gt[a.label].setdefault(a.image_id, []).append(a.box)
    gt = {c: {k: np.array(v) for k, v in d.items()} for c, d in gt.items()}
    return detections, gt


def cmd_evaluate(args) -> dict:
    cfg = _config(args.config)
    det_classes, by_image = io.load_detections(_require(args.detections, "detections"))
    ann_classes, annotations = io.load_annotations(_require(args.annotations, "annotations"))
    if det_classes != ann_classes:
        raise UsageError(f"class vocabularies differ: {det_classes} vs {ann_classes}")
    eval_cfg = cfg.eval
    if args.ap_mode:
        eval_cfg = EvalConfig(eval_cfg.iou_threshold, args.ap_mode)
    detections, gt = _eval_inputs(det_classes, by_image, annotations)
    label = args.label or Path(args.detections).stem
    report = evaluate(detections, gt, det_classes[1:], eval_cfg, label)
    if report.undefined:
        log.warning("classes without ground truth (excluded from mAP): %s", report.undefined)
    data = report.to_dict()
    _write_report(args.out, data)
    if args.figures_dir:
        from . import plotting

        plotting.ensure_dir(args.figures_dir)
        plotting.write_pr_csv(report, Path(args.figures_dir) / f"{label}_pr.csv")
        plotting.plot_pr_curves(report, Path(args.figures_dir) / f"{label}_pr.png")
    args._pretty_text = format_table([report])
    return data


def _load_report(path) -> dict:
    try:
        return json.loads(Path(_require(path, "report")).read_text(encoding="utf-8"))
    except ValueError as exc:
        raise io.FormatError(f"invalid report JSON: {exc}", path) from exc


def cmd_compare(args) -> dict:
    try:
        a = report_from_dict(_load_report(args.a))
        b = report_from_dict(_load_report(args.b))
    except (KeyError, TypeError) as exc:
        raise UsageError(f"malformed report: {exc}") from exc
    try:
        comparison = compare(a, b)
    except ValueError as exc:
        raise UsageError(str(exc)) from exc
    data = comparison.to_dict()
    _write_report(args.out, data)
    if args.figures_dir:
        from . import plotting

        plotting.ensure_dir(args.figures_dir)
        plotting.write_comparison_csv(comparison, Path(args.figures_dir) / "comparison.csv")
        plotting.plot_comparison(comparison, Path(args.figures_dir) / "comparison.png")
    args._pretty_text = format_table([a, b], comparison)
    return data


# ------------------------------------------------------------------------ parser

def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="ssdapc", description=__doc__.splitlines()[0])
    parser.add_argument("--pretty", action="store_true", help="print a human-readable table")
    parser.add_argument("-v", "--verbose", action="store_true")
    # the same flags are accepted after the subcommand; SUPPRESS keeps the
    # subparser from resetting a value given before it
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--pretty", action="store_true", default=argparse.SUPPRESS)
    common.add_argument("-v", "--verbose", action="store_true", default=argparse.SUPPRESS)
    sub = parser.add_subparsers(dest="command", required=True)
    _add = sub.add_parser
    sub.add_parser = lambda *a, **kw: _add(*a, parents=[common], **kw)

    p = sub.add_parser("gen-anchors", help="generate the default box set")
    p.add_argument("--config", required=True)
    p.add_argument("--out")
    p.set_defaults(func=cmd_gen_anchors)

    p = sub.add_parser("match", help="match default boxes to annotations")
    p.add_argument("--config")
    p.add_argument("--annotations", required=True)
    p.add_argument("--image-id")
    p.add_argument("--threshold", type=float, default=0.5)
    p.add_argument("--out")
    p.set_defaults(func=cmd_match)

    p = sub.add_parser("loss", help="evaluate the training objective on dumped predictions")
    p.add_argument("--config")
    p.add_argument("--annotations", required=True)
    p.add_argument("--predictions", required=True)
    p.add_argument("--alpha", type=float, default=1.0)
    p.add_argument("--threshold", type=float, default=0.5)
    p.add_argument("--logits", action="store_true", help="scores are logits; apply softmax")
    p.set_defaults(func=cmd_loss)

    p = sub.add_parser("cluster", help="affinity propagation on a CSV similarity matrix")
    p.add_argument("--similarity", required=True)
    p.add_argument("--config")
    p.add_argument("--damping", type=float)
    p.add_argument("--max-iter", type=int)
    p.add_argument("--window", type=int)
    p.set_defaults(func=cmd_cluster)

    p = sub.add_parser("synth", help="write a seeded synthetic corpus")
    p.add_argument("--out-dir", required=True)
    p.add_argument("--scenes", type=int, default=50)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--fixture", choices=["corpus", "pair"], default="corpus")
    p.set_defaults(func=cmd_synth)

    p = sub.add_parser("suppress", help="select final detections with NMS or APC")
    p.add_argument("--method", choices=["nms", "apc"], required=True)
    p.add_argument("--dump", required=True)
    p.add_argument("--images-dir")
    p.add_argument("--config")
    p.add_argument("--out")
    p.add_argument("--jobs", type=int, default=0, help="worker processes (0: all cores)")
    p.set_defaults(func=cmd_suppress)

    p = sub.add_parser("evaluate", help="VOC average precision of final detections")
    p.add_argument("--detections", required=True)
    p.add_argument("--annotations", required=True)
    p.add_argument("--config")
    p.add_argument("--ap-mode", choices=["all_points", "eleven_point"])
    p.add_argument("--label")
    p.add_argument("--out")
    p.add_argument("--figures-dir", help="write PR curve CSV and PNG here")
    p.set_defaults(func=cmd_evaluate)

    p = sub.add_parser("compare", help="per-class deltas between two evaluation reports")
    p.add_argument("--a", required=True)
    p.add_argument("--b", required=True)
    p.add_argument("--out")
    p.add_argument("--figures-dir", help="write comparison CSV and bar chart here")
    p.set_defaults(func=cmd_compare)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return 1 if exc.code else 0
    logging.basicConfig(level=logging.DEBUG if args.verbose else logging.INFO,
                        format="%(levelname)s %(name)s: %(message)s", stream=sys.stderr)
    args._pretty_text = None
    try:
        report = args.func(args)
    except (UsageError, io.FormatError) as exc:
        log.error("%s", exc)
        return 1
    except ValueError as exc:
        log.error("invalid input: %s", exc)
        return 1
    except Exception as exc:  # noqa: BLE001
        log.exception("runtime failure: %s", exc)
        return 2
    _emit(report, args._pretty_text, args.pretty)
    return 0


if __name__ == "__main__":
    sys.exit(main())
