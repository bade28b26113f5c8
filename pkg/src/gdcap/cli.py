"""Command-line entry point for batch pipeline runs.

Subcommands front the library modules: ingest, decompose, order, validate,
score, refine, splits, serve, report.  Flags default to the pipeline
constants (0.7 confidence, 40 detections, 0.9 F1 / 10 attempts, 0.90
coverage, 0.30 overflow, K 1..6 with 10 restarts); a JSON config file can
supply any flag value, with explicit flags winning.  The captioner endpoint
and token may also come from CAPTIONER_ENDPOINT / CAPTIONER_TOKEN.
"""

from __future__ import annotations

import argparse
import json
import os
import sys
from concurrent.futures import ThreadPoolExecutor
from pathlib import Path
from typing import List, Optional

from . import markup
from .decomposition import DecompositionParams, decompose_stuff
from .errors import GdcapError, RefinementError
from .metrics.report import METRIC_COLUMNS, format_table, score_corpus
from .model import DetectionKind, Frame
from .ordering import OrderingParams, build_scene
from .refinement import HttpCaptioner, generate_and_refine
from .store import CaptionRecord, FrameStore, assign_splits, ingest_segmentation, utc_now


def _decomposition_params(args) -> DecompositionParams:
    return DecompositionParams(
        k_min=args.k_min,
        k_max=args.k_max,
        restarts_per_k=args.restarts,
        min_coverage=args.min_coverage,
        max_overflow=args.max_overflow,
        base_seed=args.seed,
    )


def _ordering_params(args) -> OrderingParams:
    return OrderingParams(min_score=args.min_score, max_detections=args.max_detections)


def _add_decomposition_flags(p: argparse.ArgumentParser) -> None:
    p.add_argument("--k-min", type=int, default=1)
    p.add_argument("--k-max", type=int, default=6)
    p.add_argument("--restarts", type=int, default=10, help="seeded attempts per cluster count")
    p.add_argument("--min-coverage", type=float, default=0.90)
    p.add_argument("--max-overflow", type=float, default=0.30)


def _add_ordering_flags(p: argparse.ArgumentParser) -> None:
    p.add_argument("--min-score", type=float, default=0.7)
    p.add_argument("--max-detections", type=int, default=40)


def cmd_ingest(args) -> int:
    store = FrameStore(args.store)
    detections = ingest_segmentation(
        args.labelmap, args.legend, _decomposition_params(args), decompose=not args.skip_decompose
    )
    frame_dir = store.frame_dir(args.frame_id)
    frame_dir.mkdir(parents=True, exist_ok=True)
    labelmap = Path(args.labelmap)
    (frame_dir / f"labelmap{labelmap.suffix}").write_bytes(labelmap.read_bytes())
    (frame_dir / "legend.json").write_bytes(Path(args.legend).read_bytes())
    store.save_detections(args.frame_id, detections)
    print(f"ingested {args.frame_id}: {len(detections)} detections")
    return 0


def _decompose_frame(store: FrameStore, frame_id: str, params: DecompositionParams) -> str:
    detections = store.load_detections(frame_id)
    updated = []
    for det in detections:
        if det.kind is DetectionKind.STUFF:
            result = decompose_stuff(det.mask, params)
            det = type(det)(
                class_name=det.class_name, kind=det.kind, score=det.score,
                mask=det.mask, boxes=result.boxes,
            )
        updated.append(det)
    store.save_detections(frame_id, updated)
    return f"{frame_id}: {sum(len(d.boxes) for d in updated)} boxes"


def cmd_decompose(args) -> int:
    store = FrameStore(args.store)
    params = _decomposition_params(args)
    frame_ids = args.frame_id or store.list_frame_dirs()
    return _run_batch(
        frame_ids, lambda fid: _decompose_frame(store, fid, params), jobs=args.jobs
    )


def cmd_order(args) -> int:
    store = FrameStore(args.store)
    params = _ordering_params(args)
    splits = {}
    try:
        splits = store.load_splits()
    except GdcapError:
        pass

    def order_one(frame_id: str) -> str:
        detections = store.load_detections(frame_id)
        width = detections[0].mask.width if detections else 1
        height = detections[0].mask.height if detections else 1
        objects = build_scene(detections, width, height, params)
        frame = Frame(
            frame_id=frame_id,
            width=width,
            height=height,
            image_ref=args.image_ref or "image.png",
            objects=tuple(objects),
            split=splits.get(frame_id, "train"),
        )
        store.save_frame(frame)
        return f"{frame_id}: {len(objects)} objects"

    frame_ids = args.frame_id or store.list_frame_dirs()
    return _run_batch(frame_ids, order_one, jobs=args.jobs)


def cmd_validate(args) -> int:
    store = FrameStore(args.store)
    frame = store.load_frame(args.frame_id)
    text = Path(args.caption_file).read_text("utf-8") if args.caption_file else args.caption
    diag = markup.validate_text(text, frame)
    if diag.ok:
        print("caption valid")
        return 0
    for position, message in diag.syntax_errors:
        print(f"syntax error at {position}: {message}", file=sys.stderr)
    for unknown in sorted(diag.unknown_ids):
        print(f"unknown object id: {unknown}", file=sys.stderr)
    for _, reason in diag.kind_mismatches:
        print(f"class mismatch: {reason}", file=sys.stderr)
    return 1


def cmd_score(args) -> int:
    store = FrameStore(args.store)
    by_frame = {}
    for caption_id in store.list_captions():
        record = store.load_caption(caption_id)
        by_frame.setdefault(record.frame_id, {})[record.source] = record
    items = []
    for frame_id in store.list_frames():
        frame = store.load_frame(frame_id)
        if args.split and frame.split != args.split:
            continue
        records = by_frame.get(frame_id, {})
        if args.candidate not in records or args.reference not in records:
            continue
        items.append((frame_id, records[args.candidate].text, frame, records[args.reference].text))
    corpus = score_corpus(items)

    headers = ["item"] + list(METRIC_COLUMNS)
    rows = []
    for item_id, report in corpus.per_item:
        rows.append(
            [item_id]
            + [
                f"{value:.4f}"
                for value in (
                    report.grounding.precision, report.grounding.recall, report.grounding.f1,
                    report.language.bleu4, report.language.meteor, report.language.rouge_l,
                    report.gmeteor,
                )
            ]
        )
    rows.append(["MEAN"] + [f"{corpus.means[c]:.4f}" for c in METRIC_COLUMNS])
    print(format_table(headers, rows))
    print(f"corpus-level gMETEOR (from mean METEOR/F1): {corpus.gmeteor_corpus:.4f}")
    if args.out:
        payload = {
            "n_captions": len(corpus.per_item),
            "means": corpus.means,
            "gmeteor_corpus": corpus.gmeteor_corpus,
            "per_item": {
                item_id: {
                    "precision": r.grounding.precision, "recall": r.grounding.recall,
                    "f1": r.grounding.f1, "bleu4": r.language.bleu4, "meteor": r.language.meteor,
                    "rouge_l": r.language.rouge_l, "gmeteor": r.gmeteor,
                }
                for item_id, r in corpus.per_item
            },
        }
        Path(args.out).write_text(json.dumps(payload, indent=2, sort_keys=True), "utf-8")
    return 0


def cmd_refine(args) -> int:
    store = FrameStore(args.store)
    endpoint = args.endpoint or os.environ.get("CAPTIONER_ENDPOINT")
    token = args.token or os.environ.get("CAPTIONER_TOKEN")
    if not endpoint:
        print("no captioner endpoint (flag --endpoint or CAPTIONER_ENDPOINT)", file=sys.stderr)
        return 2
    captioner = HttpCaptioner(endpoint, timeout=args.timeout, token=token)

    def refine_one(frame_id: str) -> str:
        frame = store.load_frame(frame_id)
        result = generate_and_refine(
            frame, captioner, threshold=args.threshold, max_attempts=args.max_attempts
        )
        if result.best_caption is None:
            raise RefinementError("no parseable caption produced", attempts=result.attempts)
        caption_id = f"auto-{frame_id}"
        expected = store.caption_latest_revision(caption_id)
        store.save_caption(
            CaptionRecord(
                caption_id=caption_id,
                frame_id=frame_id,
                source="auto",
                text=result.best_text,
                revision=expected + 1,
                created_at=utc_now(),
            ),
            expected_revision=expected,
        )
        state = "converged" if result.converged else "best-effort"
        return f"{frame_id}: f1={result.best_f1:.3f} {state} after {len(result.attempts)} attempts"

    frame_ids = args.frame_id or store.list_frames()
    return _run_batch(frame_ids, refine_one, jobs=args.jobs)


def cmd_splits(args) -> int:
    store = FrameStore(args.store)
    frame_ids = store.list_frames()
    table = assign_splits(frame_ids, args.eval_fraction, args.seed)
    store.save_splits(table)
    for frame_id in frame_ids:
        frame = store.load_frame(frame_id)
        if frame.split != table[frame_id]:
            store.save_frame(
                Frame(
                    frame_id=frame.frame_id, width=frame.width, height=frame.height,
                    image_ref=frame.image_ref, objects=frame.objects, split=table[frame_id],
                )
            )
    n_eval = sum(1 for s in table.values() if s == "eval")
    print(f"splits: {len(table) - n_eval} train / {n_eval} eval")
    return 0


def cmd_serve(args) -> int:
    import uvicorn

    from .service import ServiceConfig, create_app

    tokens = json.loads(Path(args.raters).read_text("utf-8"))["tokens"]
    app = create_app(ServiceConfig(store_root=Path(args.store), tokens=tokens, study_seed=args.seed))
    uvicorn.run(app, host=args.host, port=args.port)
    return 0


def cmd_report(args) -> int:
    from .service import AnnotationService, ServiceConfig

    service = AnnotationService(
        ServiceConfig(store_root=Path(args.store), tokens={}, study_seed=args.seed)
    )
    if args.kind == "agreement":
        report = service.agreement_report(args.source)
        headers = ["source"] + list(report["criteria"])
        rows = []
        for src, criteria in sorted(report["sources"].items()):
            cells = [src]
            for criterion in report["criteria"]:
                alpha = criteria[criterion]["alpha"]
                cells.append("n/a" if alpha is None else f"{alpha:.3f}")
            rows.append(cells)
        print(format_table(headers, rows))
        payload = report
    else:
        payload = service.metrics_report(args.candidate, args.reference, args.split)
        headers = list(METRIC_COLUMNS)
        rows = [[f"{payload['means'][c]:.4f}" for c in METRIC_COLUMNS]]
        print(format_table(headers, rows))
    if args.out:
        Path(args.out).write_text(json.dumps(payload, indent=2, sort_keys=True), "utf-8")
    return 0


def _run_batch(item_ids: List[str], worker, jobs: int) -> int:
    """Run per-frame work in a pool; report per-item status ordered by id."""
    results = {}
    failures = {}

    def run(item_id: str):
        try:
            results[item_id] = worker(item_id)
        except Exception as err:  # summarize, do not abort the batch
            failures[item_id] = str(err)

    item_ids = sorted(item_ids)
    if jobs > 1:
        with ThreadPoolExecutor(max_workers=jobs) as pool:
            list(pool.map(run, item_ids))
    else:
        for item_id in item_ids:
            run(item_id)
    for item_id in item_ids:
        if item_id in results:
            print(f"ok   {results[item_id]}")
        else:
            print(f"FAIL {item_id}: {failures[item_id]}", file=sys.stderr)
    if failures:
        print(f"{len(failures)}/{len(item_ids)} items failed", file=sys.stderr)
        return 1
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="gdcap", description=__doc__)
    parser.add_argument("--config", type=Path, default=None, help="JSON file of flag defaults")
    parser.add_argument("--store", type=Path, default=Path("store"), help="record store root")
    parser.add_argument("--seed", type=int, default=0, help="base seed for stochastic steps")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("ingest", help="label map + legend -> stored detections")
    p.add_argument("--frame-id", required=True)
    p.add_argument("--labelmap", required=True, type=Path)
    p.add_argument("--legend", required=True, type=Path)
    p.add_argument("--skip-decompose", action="store_true", help="leave stuff boxes for later")
    _add_decomposition_flags(p)
    p.set_defaults(func=cmd_ingest)

    p = sub.add_parser("decompose", help="(re)compute stuff boxes for stored frames")
    p.add_argument("--frame-id", action="append", default=None)
    p.add_argument("--jobs", type=int, default=1)
    _add_decomposition_flags(p)
    p.set_defaults(func=cmd_decompose)

    p = sub.add_parser("order", help="build ordered, id-assigned frame records")
    p.add_argument("--frame-id", action="append", default=None)
    p.add_argument("--image-ref", default=None)
    p.add_argument("--jobs", type=int, default=1)
    _add_ordering_flags(p)
    p.set_defaults(func=cmd_order)

    p = sub.add_parser("validate", help="validate a caption against a stored frame")
    p.add_argument("--frame-id", required=True)
    group = p.add_mutually_exclusive_group(required=True)
    group.add_argument("--caption")
    group.add_argument("--caption-file", type=Path)
    p.set_defaults(func=cmd_validate)

    p = sub.add_parser("score", help="metric table for a caption source vs a reference source")
    p.add_argument("--split", default=None, choices=(None, "train", "eval"))
    p.add_argument("--candidate", default="model")
    p.add_argument("--reference", default="auto")
    p.add_argument("--out", type=Path, default=None, help="also write a JSON report")
    p.set_defaults(func=cmd_score)

    p = sub.add_parser("refine", help="drive caption generation + refinement via the captioner")
    p.add_argument("--frame-id", action="append", default=None)
    p.add_argument("--endpoint", default=None)
    p.add_argument("--token", default=None)
    p.add_argument("--timeout", type=float, default=60.0)
    p.add_argument("--threshold", type=float, default=0.9)
    p.add_argument("--max-attempts", type=int, default=10)
    p.add_argument("--jobs", type=int, default=1)
    p.set_defaults(func=cmd_refine)

    p = sub.add_parser("splits", help="assign a seeded train/eval split")
    p.add_argument("--eval-fraction", type=float, required=True)
    p.set_defaults(func=cmd_splits)

    p = sub.add_parser("serve", help="run the annotation service")
    p.add_argument("--raters", required=True, type=Path, help='JSON {"tokens": {token: rater}}')
    p.add_argument("--host", default="127.0.0.1")
    p.add_argument("--port", type=int, default=8080)
    p.set_defaults(func=cmd_serve)

    p = sub.add_parser("report", help="agreement or corpus-metric report")
    p.add_argument("--kind", choices=("agreement", "metrics"), default="agreement")
    p.add_argument("--source", default=None)
    p.add_argument("--candidate", default="model")
    p.add_argument("--reference", default="auto")
    p.add_argument("--split", default=None)
    p.add_argument("--out", type=Path, default=None)
    p.set_defaults(func=cmd_report)

    return parser


def main(argv: Optional[List[str]] = None) -> int:
    parser = build_parser()
    # two-phase parse so --config supplies defaults and explicit flags win
    probe, _ = parser.parse_known_args(argv)
    if probe.config:
        try:
            defaults = json.loads(Path(probe.config).read_text("utf-8"))
        except (OSError, json.JSONDecodeError) as err:
            print(f"bad config file: {err}", file=sys.stderr)
            return 2
        known = {action.dest for action in parser._actions}
        for sub_action in parser._subparsers._group_actions:
            for sub_parser in sub_action.choices.values():
                known.update(a.dest for a in sub_parser._actions)
        unknown = set(defaults) - known
        if unknown:
            print(f"unknown config keys: {sorted(unknown)}", file=sys.stderr)
            return 2
        parser.set_defaults(**defaults)
        for sub_action in parser._subparsers._group_actions:
            for sub_parser in sub_action.choices.values():
                sub_parser.set_defaults(**{k: v for k, v in defaults.items()
                                           if k in {a.dest for a in sub_parser._actions}})
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except GdcapError as err:
        print(f"error: {err}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
