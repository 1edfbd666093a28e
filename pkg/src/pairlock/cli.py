"""``pairlock`` command line: synth, train, infer, eval, baseline, gradcheck.

Exit status is 0 on success, 1 for invalid input or configuration (and a
failed gradient check), 2 for numeric failures at run time. Data goes to
stdout, diagnostics to stderr.
"""

from __future__ import annotations

import argparse
import json
import logging
import sys
from pathlib import Path
from typing import Sequence

from . import datasets
from .config import RunConfig
from .evaluation import (
    EvaluationError,
    carried_accuracy,
    evaluate_hold,
    render_accuracy_table,
    render_ap_table,
)
from .imaging import read_image
from .model import NumericError, gradcheck_model, init_model, load_model, save_model, train
from .nn import CheckpointError, layer_gradchecks
from .runs import baseline_decisions, build_training_set, infer_scenes, model_decisions
from .util import ConfigError

log = logging.getLogger("pairlock")

GRADCHECK_TOLERANCE = 1e-4
EXIT_OK, EXIT_INVALID, EXIT_NUMERIC = 0, 1, 2


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    # argparse exits with 2 on bad usage; 2 is reserved for numeric failures here
    def error(self, message: str) -> None:  # type: ignore[override]
        self.print_usage(sys.stderr)
        print(f"{self.prog}: error: {message}", file=sys.stderr)
        raise SystemExit(EXIT_INVALID)


def _emit(text: str) -> None:
    sys.stdout.write(text if text.endswith("\n") else text + "\n")


def _dump(path: str | Path, obj) -> None:
    Path(path).write_text(json.dumps(obj, indent=2, sort_keys=True) + "\n")


def _config(args) -> RunConfig:
    return RunConfig.load(args.config, args.seed)


def _model_overrides(cfg: RunConfig, args) -> RunConfig:
    return cfg.override(
        "model",
        **{
            "attention_mode": args.attention,
            "lambda": args.lam,
            "color_space": args.color,
            "resize_target": args.resize_target,
        },
    )


def _image_loader(records: Sequence[datasets.SceneRecord], base: Path):
    cache = {}

    def load(record: datasets.SceneRecord):
        if record.scene_id not in cache:
            cache[record.scene_id] = read_image(record.image_path(base))
        return cache[record.scene_id]

    return load


# commands --------------------------------------------------------------------


def cmd_synth(args) -> int:
    cfg = _config(args).override(
        "synth",
        num_scenes=args.scenes,
        num_test_scenes=args.test_scenes,
        image_size=args.image_size,
    )
    splits = datasets.generate_synthetic(cfg.synth, args.out)
    summary = {}
    for name, records in splits.items():
        summary[name] = {
            "scenes": len(records),
            "pairs": sum(len(r.humans) * len(r.firearms) for r in records),
            "carry_pairs": sum(len(r.carry_pairs) for r in records),
        }
    _dump(Path(args.out) / "config.json", cfg.to_dict())
    _emit(json.dumps(summary, sort_keys=True))
    return EXIT_OK


def cmd_train(args) -> int:
    cfg = _model_overrides(_config(args), args).override(
        "train", epochs=args.epochs, learning_rate=args.lr
    )
    records = datasets.load_annotations(args.annotations)
    base = Path(args.images) if args.images else Path(args.annotations).parent
    detections = datasets.load_detections(args.detections) if args.detections else None
    samples = build_training_set(
        records, _image_loader(records, base), cfg.model, detections, cfg.eval.detection_threshold
    )
    if not samples:
        raise ValueError("no training pairs: every scene lacks a human or a firearm above threshold")
    log.info("training on %d pairs from %d scenes", len(samples), len(records))
    net = init_model(cfg.model, cfg.seed)
    log_path = Path(args.log) if args.log else Path(str(args.out) + ".log.jsonl")
    with log_path.open("w") as fh:
        history = train(net, samples, cfg.train, on_epoch=lambda r: fh.write(json.dumps(r.to_dict(), sort_keys=True) + "\n"))
    save_model(net, args.out)
    _emit(json.dumps({"pairs": len(samples), "epochs": len(history), "final": history[-1].to_dict()}, sort_keys=True))
    return EXIT_OK


def cmd_infer(args) -> int:
    cfg = _config(args)
    net = load_model(args.checkpoint)
    if args.annotations:
        records = datasets.load_annotations(args.annotations)
        base = Path(args.images) if args.images else Path(args.annotations).parent
        paths = {r.scene_id: r.image_path(base) for r in records}
    else:
        paths = None
    if args.detections:
        detections = datasets.load_detections(args.detections)
    elif args.annotations:
        detections = {r.scene_id: r.gt_detections() for r in records}
    else:
        raise UsageError("infer needs --detections, --annotations or both")
    if paths is None:
        if not args.images:
            raise UsageError("infer needs --images when no --annotations file locates the images")
        paths = {sid: Path(args.images) / f"{sid}.ppm" for sid in detections}
    missing = [sid for sid in detections if sid not in paths]
    if missing:
        raise ValueError(f"no image for scene {missing[0]!r}")
    use_maxout = cfg.eval.maxout and not args.no_maxout
    preds = infer_scenes(
        net,
        list(detections),
        lambda sid: read_image(paths[sid]),
        detections,
        use_maxout,
        cfg.eval.include_human_score,
        cfg.eval.maxout_key,
    )
    datasets.write_predictions(args.out, preds, use_maxout)
    n_int = sum(sp.interacting for pairs in preds.values() for sp in pairs)
    _emit(json.dumps({"scenes": len(preds), "pairs": sum(map(len, preds.values())), "interacting": n_int}, sort_keys=True))
    return EXIT_OK


def cmd_eval(args) -> int:
    cfg = _config(args).override("eval", ap_method=args.ap_method, iou_thr=args.iou_thr)
    records = datasets.load_annotations(args.annotations)
    preds = datasets.load_predictions(args.predictions)
    gt = [r.ground_truth() for r in records]
    report = evaluate_hold(preds, gt, cfg.eval.iou_thr, cfg.eval.ap_method)
    acc = carried_accuracy(model_decisions(records, preds), gt, carrier_aware=True, iou_thr=cfg.eval.iou_thr)
    report.accuracy_gun, report.accuracy_rifle, report.accuracy_overall = (
        acc.accuracy_gun, acc.accuracy_rifle, acc.accuracy_overall,
    )
    if args.out:
        Path(args.out).write_text(report.to_json())
    if args.json:
        _emit(report.to_json())
    else:
        maxout = json.loads(Path(args.predictions).read_text()).get("maxout")
        label = {True: "with maxout", False: "without maxout"}.get(maxout, "predictions")
        _emit(render_ap_table({label: report}))
    return EXIT_OK


def cmd_baseline(args) -> int:
    if args.method in ("hifd", "hcfd") and not args.keypoints:
        raise UsageError(f"--keypoints is required for {args.method}")
    cfg = _config(args)
    records = datasets.load_annotations(args.annotations)
    detections = datasets.load_detections(args.detections) if args.detections else None
    keypoints = datasets.load_keypoints(args.keypoints) if args.keypoints else None
    decisions = baseline_decisions(
        args.method,
        records,
        detections,
        keypoints,
        alpha=cfg.eval.hifd_alpha,
        beta=cfg.eval.ohfd_beta,
        min_confidence=cfg.eval.hcfd_min_confidence,
    )
    gt = [r.ground_truth() for r in records]
    report = carried_accuracy(decisions, gt, carrier_aware=args.method == "ohfd", iou_thr=cfg.eval.iou_thr)
    if args.out:
        per_scene = {
            sid: [
                {"carried": bool(d and d.carried), "carrier": d.carrier.to_list() if d and d.carrier else None}
                for d in decs
            ]
            for sid, decs in decisions.items()
        }
        _dump(args.out, {"v": 1, "method": args.method, "decisions": per_scene, "report": report.to_dict()})
    _emit(render_accuracy_table({args.method.upper(): report}))
    return EXIT_OK


def cmd_gradcheck(args) -> int:
    cfg = _config(args)
    layers = layer_gradchecks(cfg.seed)
    model = gradcheck_model(seed=cfg.seed, fault=args.inject_fault)
    failed = False
    for group, report in (("layer", layers), ("model", model)):
        for name, err in report.items():
            ok = err <= GRADCHECK_TOLERANCE
            failed |= not ok
            _emit(f"{group:5s} {name:28s} {err:.3e} {'ok' if ok else 'FAIL'}")
    worst = max([*layers.values(), *model.values()])
    _emit(f"max relative error {worst:.3e} (tolerance {GRADCHECK_TOLERANCE:.0e})")
    return EXIT_INVALID if failed else EXIT_OK


# wiring ----------------------------------------------------------------------


def _common(p: argparse.ArgumentParser) -> None:
    p.add_argument("--config", help="run config JSON")
    p.add_argument("--seed", type=int, help="overrides the config seed")


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="pairlock", description="Human-firearm carrier association on paired boxes.")
    parser.add_argument("-v", "--verbose", action="store_true", help="log progress to stderr")
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)

    p = sub.add_parser("synth", help="generate a synthetic dataset")
    _common(p)
    p.add_argument("--out", required=True, help="output directory")
    p.add_argument("--scenes", type=int, help="training scenes")
    p.add_argument("--test-scenes", type=int, help="held-out scenes")
    p.add_argument("--image-size", type=int)
    p.set_defaults(func=cmd_synth)

    p = sub.add_parser("train", help="train a CarrierNet")
    _common(p)
    p.add_argument("--annotations", required=True)
    p.add_argument("--images", help="image base directory (default: annotations directory)")
    p.add_argument("--detections", help="train on detections instead of GT boxes")
    p.add_argument("--out", required=True, help="checkpoint path")
    p.add_argument("--log", help="JSON-lines epoch log (default: <out>.log.jsonl)")
    p.add_argument("--epochs", type=int)
    p.add_argument("--lr", type=float)
    p.add_argument("--attention", choices=["none", "merged", "split"])
    p.add_argument("--lambda", dest="lam", type=float)
    p.add_argument("--color", choices=["gray", "rgb", "ycbcr"])
    p.add_argument("--resize-target", type=int)
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("infer", help="score human-firearm pairs")
    _common(p)
    p.add_argument("--checkpoint", required=True)
    p.add_argument("--detections")
    p.add_argument("--annotations", help="locates images; supplies GT boxes when --detections is absent")
    p.add_argument("--images", help="image directory (<scene id>.ppm) or annotation image base")
    p.add_argument("--no-maxout", action="store_true")
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_infer)

    p = sub.add_parser("eval", help="AP_hold and carrier accuracy of predictions")
    _common(p)
    p.add_argument("--predictions", required=True)
    p.add_argument("--annotations", required=True)
    p.add_argument("--out", help="write the report JSON here")
    p.add_argument("--json", action="store_true", help="print the report JSON instead of the table")
    p.add_argument("--ap-method", choices=["all_point", "envelope", "11point"])
    p.add_argument("--iou-thr", type=float)
    p.set_defaults(func=cmd_eval)

    p = sub.add_parser("baseline", help="rule-based carried/not-carried classification")
    _common(p)
    p.add_argument("--method", required=True, choices=["hifd", "hcfd", "ohfd"])
    p.add_argument("--annotations", required=True)
    p.add_argument("--detections", help="default: GT boxes")
    p.add_argument("--keypoints", help="required for hifd and hcfd")
    p.add_argument("--out", help="per-firearm decisions and report JSON")
    p.set_defaults(func=cmd_baseline)

    p = sub.add_parser("gradcheck", help="finite-difference check of every layer and the full net")
    _common(p)
    p.add_argument("--inject-fault", type=float, help=argparse.SUPPRESS)
    p.set_defaults(func=cmd_gradcheck)
    return parser


def main(argv: Sequence[str] | None = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(
        level=logging.INFO if args.verbose else logging.WARNING,
        format="%(levelname)s %(name)s: %(message)s",
        stream=sys.stderr,
    )
    try:
        return args.func(args)
    except UsageError as exc:
        parser.print_usage(sys.stderr)
        print(f"pairlock {args.command}: error: {exc}", file=sys.stderr)
        return EXIT_INVALID
    except (NumericError, FloatingPointError) as exc:
        print(f"pairlock {args.command}: numeric failure: {exc}", file=sys.stderr)
        return EXIT_NUMERIC
    except (ConfigError, datasets.DatasetError, EvaluationError, CheckpointError) as exc:
        print(f"pairlock {args.command}: {exc}", file=sys.stderr)
        return EXIT_INVALID
    except (ValueError, OSError, KeyError) as exc:
        print(f"pairlock {args.command}: {exc}", file=sys.stderr)
        return EXIT_INVALID


if __name__ == "__main__":
    sys.exit(main())
