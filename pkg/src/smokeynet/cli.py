"""Command line: prepare, synth, train, eval, suite, report."""

from __future__ import annotations

import argparse
import csv
import json
import logging
import sys
from dataclasses import replace
from pathlib import Path

from smokeynet.configfile import RunConfig, format_config, load_config
from smokeynet.data import DEFAULT_OFFSET_PATTERN, ArchiveError, index_archive, load_split_manifest
from smokeynet.dataset import prepare_splits
from smokeynet.metrics import classification_metrics, time_to_detection, write_metrics_table, write_ttd_detail
from smokeynet.models import PRESETS, Backbone, ConfigError, Temporal, load_checkpoint, preset
from smokeynet.preprocess import GEOMETRIES
from smokeynet.report import render_fire_grid
from smokeynet.suite import run_suite
from smokeynet.training import DESK_TRAIN, Predictions, evaluate, make_datasets, select_device, train

logger = logging.getLogger("smokeynet")


def _run_config(args) -> RunConfig:
    cfg = load_config(args.config) if getattr(args, "config", None) else None
    if cfg is None:
        cfg = RunConfig()
        if getattr(args, "geometry", None) == "desk":
            cfg.train = DESK_TRAIN
    if getattr(args, "root", None):
        cfg.data = replace(cfg.data, root=args.root)
    if getattr(args, "geometry", None):
        cfg.data = replace(cfg.data, geometry=args.geometry)
    if getattr(args, "variant", None):
        cfg.variant_name = args.variant
        cfg.model = preset(args.variant)
    changes = {}
    if getattr(args, "backbone", None):
        changes["backbone"] = Backbone(args.backbone)
    if getattr(args, "frames", None):
        changes["num_frames"] = args.frames
        if args.frames == 1:
            changes["temporal"] = Temporal.NONE
        elif cfg.model.temporal is Temporal.NONE:
            changes["temporal"] = Temporal.LSTM
    geometry = GEOMETRIES[cfg.data.geometry]
    if cfg.model.tile_size != geometry.tile_size:
        changes["tile_size"] = geometry.tile_size
    if changes:
        cfg.model = cfg.model.with_(**changes).validate()
    train_changes = {}
    if getattr(args, "seed", None) is not None:
        train_changes["seed"] = args.seed
    if getattr(args, "epochs", None):
        train_changes["epochs"] = args.epochs
    if train_changes:
        cfg.train = cfg.train.with_(**train_changes)
    return cfg


def _data(cfg: RunConfig):
    if not cfg.data.root:
        raise ConfigError("no archive root: pass --root or set data.root")
    return prepare_splits(cfg.data.root, cfg.data.manifest, GEOMETRIES[cfg.data.geometry],
                          cfg.data.pattern or DEFAULT_OFFSET_PATTERN)


def cmd_prepare(args) -> int:
    if args.mirror_url:
        from smokeynet.download import mirror

        result = mirror(args.mirror_url, args.root)
        print(f"mirrored: {result.fetched} fetched, {result.skipped} present, {result.failed} failed")
    index = index_archive(args.root, args.pattern or DEFAULT_OFFSET_PATTERN)
    print(f"{len(index)} fires, {sum(len(f) for f in index)} frames")
    manifest_path = args.manifest or Path(args.root) / "splits.txt"
    if Path(manifest_path).exists():
        manifest = load_split_manifest(manifest_path, index)
        for name, (fires, images) in manifest.counts.items():
            print(f"{name}\t{fires} fires\t{images} images")
    else:
        print(f"no split manifest at {manifest_path}")
    return 0


def cmd_synth(args) -> int:
    from smokeynet.synthetic import SyntheticSpec, generate_synthetic_corpus

    spec = SyntheticSpec(num_fires=args.fires, frames_per_fire=args.frames_per_fire,
                         geometry=GEOMETRIES[args.geometry], seed=args.seed or 0,
                         plume=not args.no_plume, missing_frames=args.missing_frames)
    corpus = generate_synthetic_corpus(spec, args.out)
    print(f"wrote {len(corpus.frames)} frames for {spec.num_fires} fires to {args.out}")
    return 0


def cmd_train(args) -> int:
    cfg = _run_config(args)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    (out / "config.txt").write_text(format_config(cfg))
    record = train(cfg.model, cfg.train, _data(cfg), out, latency_trials=cfg.eval.latency_trials,
                   subtractor=cfg.data.subtractor)
    print(f"selected epoch {record.selected_epoch} (val error {record.val_errors[record.selected_epoch - 1]:.4f})")
    if record.final is not None:
        write_metrics_table(out / "metrics.tsv", [(cfg.variant_name, record.final)])
        print((out / "metrics.tsv").read_text(), end="")
    return 0


def write_predictions(path: Path, preds: Predictions) -> None:
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh, delimiter="\t", lineterminator="\n")
        writer.writerow(("fire_id", "offset_seconds", "label", "probability", "prediction"))
        for row in zip(preds.fire_ids, preds.offsets, preds.labels, preds.probabilities, preds.predictions):
            writer.writerow((row[0], row[1], int(row[2]), f"{float(row[3]):.6f}", int(row[4])))


def read_predictions(path: Path) -> dict[str, tuple[list[int], list[int], list[int]]]:
    fires: dict[str, tuple[list[int], list[int], list[int]]] = {}
    with open(path, newline="") as fh:
        for row in csv.DictReader(fh, delimiter="\t"):
            o, y, p = fires.setdefault(row["fire_id"], ([], [], []))
            o.append(int(row["offset_seconds"]))
            y.append(int(row["label"]))
            p.append(int(row["prediction"]))
    return fires


def cmd_eval(args) -> int:
    cfg = _run_config(args)
    checkpoint = args.checkpoint or cfg.eval.checkpoint
    if not checkpoint:
        raise ConfigError("no checkpoint: pass --checkpoint or set eval.checkpoint")
    model, meta = load_checkpoint(checkpoint)
    model.to(select_device())
    data = _data(cfg)
    split = args.split or cfg.eval.split
    datasets = make_datasets(data, model.config, cfg.train, cfg.data.subtractor)
    report, preds = evaluate(model, datasets[split], cfg.eval.batch, cfg.eval.latency_trials)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    write_predictions(out / "predictions.tsv", preds)
    write_metrics_table(out / "metrics.tsv", [(args.name or Path(checkpoint).stem, report)])
    write_ttd_detail(out / "ttd.tsv", time_to_detection(preds.by_fire()))
    print((out / "metrics.tsv").read_text(), end="")
    return 0


def cmd_suite(args) -> int:
    cfg = _run_config(args)
    names = [n.strip() for n in args.variants.split(",") if n.strip()] if args.variants else []
    geometry = GEOMETRIES[cfg.data.geometry]
    variants = [(n, preset(n, tile_size=geometry.tile_size)) for n in names]
    rows = run_suite(variants, cfg.train, _data(cfg), args.out, cfg.eval.latency_trials,
                     reuse=args.reuse, subtractor=cfg.data.subtractor)
    print((Path(args.out) / "suite.tsv").read_text(), end="")
    return 0 if all(r.ok for r in rows) else 1


def cmd_report(args) -> int:
    fires = read_predictions(Path(args.predictions))
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    preds = [p for f in fires.values() for p in f[2]]
    labels = [y for f in fires.values() for y in f[1]]
    report = classification_metrics(preds, labels)
    ttd = time_to_detection(fires)
    report.ttd_minutes = ttd.mean_all
    report.ttd_minutes_detected = ttd.mean_detected
    write_metrics_table(out / "metrics.tsv", [(args.name, report)])
    write_ttd_detail(out / "ttd.tsv", ttd)
    render_fire_grid(fires, out / "fire_grid.png", out / "fire_grid.tsv")
    summary = {"accuracy": report.accuracy, "f1": report.f1, "precision": report.precision,
               "recall": report.recall, "ttd_minutes": ttd.mean_all, "ttd_minutes_detected": ttd.mean_detected,
               "undetected_fires": sorted(f for f, r in ttd.per_fire.items() if r.flagged)}
    (out / "summary.json").write_text(json.dumps(summary, indent=2))
    print((out / "metrics.tsv").read_text(), end="")
    return 0


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="smokeynet", description="Tiled wildfire smoke detection experiments.")
    p.add_argument("-v", "--verbose", action="store_true")
    sub = p.add_subparsers(dest="command", required=True)

    def common(sp, out_required=True):
        sp.add_argument("--config", help="flat section.key = value file")
        sp.add_argument("--root", help="archive root (overrides data.root)")
        sp.add_argument("--geometry", choices=sorted(GEOMETRIES))
        sp.add_argument("--variant", choices=sorted(PRESETS))
        sp.add_argument("--frames", type=int, choices=(1, 2, 3))
        sp.add_argument("--backbone", choices=[b.value for b in Backbone])
        sp.add_argument("--seed", type=int)
        sp.add_argument("--epochs", type=int)
        sp.add_argument("--out", required=out_required)

    sp = sub.add_parser("prepare", help="mirror and/or index an archive, validate its split manifest")
    sp.add_argument("--root", required=True)
    sp.add_argument("--manifest")
    sp.add_argument("--pattern", help="regex with an 'offset' group for frame names")
    sp.add_argument("--mirror-url", help="HTTP listing to mirror into --root first")
    sp.set_defaults(func=cmd_prepare)

    sp = sub.add_parser("synth", help="generate a synthetic corpus")
    sp.add_argument("--out", required=True)
    sp.add_argument("--fires", type=int, default=8)
    sp.add_argument("--frames-per-fire", type=int, default=81)
    sp.add_argument("--geometry", choices=sorted(GEOMETRIES), default="desk")
    sp.add_argument("--seed", type=int, default=0)
    sp.add_argument("--missing-frames", type=int, default=0)
    sp.add_argument("--no-plume", action="store_true")
    sp.set_defaults(func=cmd_synth)

    sp = sub.add_parser("train", help="train one variant")
    common(sp)
    sp.set_defaults(func=cmd_train)

    sp = sub.add_parser("eval", help="evaluate a checkpoint on a split")
    common(sp)
    sp.add_argument("--checkpoint")
    sp.add_argument("--split", choices=("train", "val", "test"))
    sp.add_argument("--name", help="row label in metrics.tsv")
    sp.set_defaults(func=cmd_eval)

    sp = sub.add_parser("suite", help="train a list of variants and tabulate them")
    common(sp)
    sp.add_argument("--variants", default="", help="comma-separated preset names")
    sp.add_argument("--reuse", action="store_true", help="evaluate finished runs instead of retraining")
    sp.set_defaults(func=cmd_suite)

    sp = sub.add_parser("report", help="metrics table and fire grid from predictions.tsv")
    sp.add_argument("--predictions", required=True)
    sp.add_argument("--name", default="model")
    sp.add_argument("--out", required=True)
    sp.set_defaults(func=cmd_report)
    return p


def main(argv: list[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.DEBUG if args.verbose else logging.INFO, format="%(levelname)s %(message)s")
    try:
        return args.func(args)
    except (ArchiveError, ConfigError, OSError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
