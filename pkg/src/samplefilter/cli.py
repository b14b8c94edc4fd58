"""Command-line entry point: parse, eval, bench, verify, synth, dump-config."""

from __future__ import annotations

import argparse
import json
import logging
import sys
from pathlib import Path

from . import bench as bench_mod
from . import config as cfg_mod
from . import pipeline
from .dataset import DatasetError, load_dataset, load_labelmap, load_palette, read_manifest
from .synth import SynthSpec, make_synthetic

EXIT_OK, EXIT_FAILED, EXIT_CONFIG = 0, 1, 2

log = logging.getLogger("samplefilter")

# flag -> config key
_FLAG_KEYS = {
    "cap": "sampler.cap",
    "seed": "sampler.seed",
    "sigma_d_sample": "sampler.sigma_d_sample",
    "cell": "dataset.cell",
    "num_classes": "dataset.num_classes",
}


def _add_config_args(p: argparse.ArgumentParser) -> None:
    p.add_argument("--config", help="key=value configuration file")
    p.add_argument("--set", action="append", default=[], metavar="KEY=VALUE",
                   help="override one configuration key (repeatable)")
    p.add_argument("--cap", type=int, help="samples per class")
    p.add_argument("--seed", type=int, help="sampling seed")
    p.add_argument("--sigma-d-sample", type=float, help="bandwidth of the sampling score")
    p.add_argument("--cell", type=int, help="grid superpixel size in pixels")
    p.add_argument("--num-classes", type=int, help="number of classes (default: palette size)")
    p.add_argument("--no-crf", action="store_true", help="skip the pixel CRF")
    p.add_argument("--ideal-ranking", action="store_true", help="rank by ground-truth class histograms")


def build_config(args) -> cfg_mod.RunConfig:
    conf = cfg_mod.load(args.config) if getattr(args, "config", None) else cfg_mod.RunConfig()
    overrides = {}
    for item in getattr(args, "set", []):
        key, sep, value = item.partition("=")
        if not sep:
            raise cfg_mod.ConfigError(f"--set expects KEY=VALUE, got {item!r}")
        overrides[key.strip()] = value.strip()
    for attr, key in _FLAG_KEYS.items():
        value = getattr(args, attr, None)
        if value is not None:
            overrides[key] = str(value)
    if getattr(args, "no_crf", False):
        overrides["pipeline.no_crf"] = "true"
    if getattr(args, "ideal_ranking", False):
        overrides["pipeline.ideal_ranking"] = "true"
    return cfg_mod.apply(conf, overrides)


def _palette_for(args, train_manifest: Path):
    path = Path(args.palette) if args.palette else train_manifest.parent / "palette.csv"
    if path.is_file():
        return load_palette(path)
    if args.palette:
        raise cfg_mod.ConfigError(f"{path}: palette not found")
    return None


def _load_sets(args, conf: cfg_mod.RunConfig):
    train_manifest = Path(args.train)
    for path in (train_manifest, Path(args.query)):
        if not path.is_file():
            raise cfg_mod.ConfigError(f"{path}: file not found")
    palette = _palette_for(args, train_manifest)
    n = conf.dataset.num_classes or None
    if n is None and palette is None:
        raise cfg_mod.ConfigError("no palette found; pass --palette or --num-classes")
    train = load_dataset(train_manifest, conf.dataset.cell, n, palette)
    queries = load_dataset(args.query, conf.dataset.cell, train.num_classes, train.palette, require_labels=False)
    return train, queries


def cmd_parse(args) -> int:
    conf = build_config(args)
    train, queries = _load_sets(args, conf)
    report, failed = pipeline.run(train, queries, conf, args.out)
    if report is not None:
        print(f"per-pixel {report.per_pixel:.4f}  per-class {report.per_class:.4f}  "
              f"queries {len(queries) - len(failed)}/{len(queries)}")
    if failed:
        print(f"{len(failed)} queries failed: {', '.join(failed)}", file=sys.stderr)
        return EXIT_FAILED
    return EXIT_OK


def cmd_eval(args) -> int:
    palette = load_palette(args.palette) if args.palette else None
    num_classes = args.num_classes or (len(palette) if palette else None)
    if num_classes is None:
        raise cfg_mod.ConfigError("eval needs --palette or --num-classes")
    total, failed = None, 0
    for lineno, img_path, lab_path in read_manifest(args.query):
        pred_path = Path(args.pred) / f"{img_path.stem}.pgm"
        try:
            if lab_path is None:
                raise DatasetError("no ground truth in manifest")
            rep = pipeline.evaluate(load_labelmap(pred_path, num_classes), load_labelmap(lab_path, num_classes), num_classes)
        except (DatasetError, ValueError) as exc:
            log.error("%s:%d: %s", args.query, lineno, exc)
            failed += 1
            continue
        total = rep if total is None else total + rep
    if total is None:
        print("no query could be evaluated", file=sys.stderr)
        return EXIT_FAILED
    doc = total.to_dict()
    print(json.dumps(doc, indent=2, sort_keys=True))
    return EXIT_FAILED if failed else EXIT_OK


def cmd_bench(args) -> int:
    rep = bench_mod.bench(tuple(args.ns), tuple(args.nq), args.dim, args.channels, args.seed, args.repeats)
    text = rep.to_csv()
    if args.out:
        Path(args.out).write_text(text)
    sys.stdout.write(text)
    print(f"# splat+blur vs N_s linear R^2 = {rep.r2_splat_blur:.4f}")
    print(f"# per-query slice time max/min ratio = {rep.slice_ratio:.3f}")
    if args.transfer_scale:
        secs = bench_mod.time_transfer(args.transfer_scale, 200, 16, args.seed)
        print(f"# two-kernel transfer N_s={args.transfer_scale} N_q=200 L=16: {secs:.3f} s")
    return EXIT_OK


def cmd_verify(args) -> int:
    rep = bench_mod.verify(args.instances, args.ns, args.nq, args.dim, args.channels, args.seed)
    print(f"instances {args.instances}  N_s {args.ns}  N_q {args.nq}  D {args.dim}  V {args.channels}")
    print(f"relative L1: median {rep.median:.4f}  p95 {rep.p95:.4f}  max {rep.rel_l1.max():.4f}")
    print(f"argmax agreement {rep.argmax_agreement:.4f}  time {rep.seconds:.2f} s")
    return EXIT_OK


def cmd_synth(args) -> int:
    spec = SynthSpec(seed=args.seed, num_train=args.train_count, num_query=args.query_count, size=args.size,
                     num_classes=args.classes, block=args.block, num_distractors=args.distractors,
                     rare_class=args.rare_class)
    try:
        paths = make_synthetic(spec, args.out)
    except ValueError as exc:
        raise cfg_mod.ConfigError(str(exc)) from None
    for key, path in paths.items():
        print(f"{key}: {path}")
    return EXIT_OK


def cmd_dump_config(args) -> int:
    sys.stdout.write(cfg_mod.dump(build_config(args)))
    return EXIT_OK


def make_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="samplefilter", description=__doc__)
    ap.add_argument("-v", "--verbose", action="count", default=0)
    sub = ap.add_subparsers(dest="command", required=True)

    p = sub.add_parser("parse", help="label every query image")
    p.add_argument("--train", required=True, help="training manifest")
    p.add_argument("--query", required=True, help="query manifest")
    p.add_argument("--out", required=True, help="output directory")
    p.add_argument("--palette", help="palette CSV (default: palette.csv beside the training manifest)")
    _add_config_args(p)
    p.set_defaults(func=cmd_parse)

    p = sub.add_parser("eval", help="score saved predictions against ground truth")
    p.add_argument("--query", required=True, help="query manifest with label paths")
    p.add_argument("--pred", required=True, help="directory holding <name>.pgm predictions")
    p.add_argument("--palette")
    p.add_argument("--num-classes", type=int)
    p.set_defaults(func=cmd_eval)

    p = sub.add_parser("bench", help="time splat, blur and slice across sizes")
    p.add_argument("--ns", type=int, nargs="+", default=[10_000, 100_000, 1_000_000])
    p.add_argument("--nq", type=int, nargs="+", default=[1000])
    p.add_argument("--dim", type=int, default=5)
    p.add_argument("--channels", type=int, default=3)
    p.add_argument("--repeats", type=int, default=3)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--transfer-scale", type=int, default=0, metavar="N_S",
                   help="also time one two-kernel transfer with this many samples")
    p.add_argument("--out", help="write the CSV here as well")
    p.set_defaults(func=cmd_bench)

    p = sub.add_parser("verify", help="compare the lattice filter with brute force")
    p.add_argument("--instances", type=int, default=20)
    p.add_argument("--ns", type=int, default=1000)
    p.add_argument("--nq", type=int, default=1000)
    p.add_argument("--dim", type=int, default=5)
    p.add_argument("--channels", type=int, default=3)
    p.add_argument("--seed", type=int, default=0)
    p.set_defaults(func=cmd_verify)

    p = sub.add_parser("synth", help="write a seeded synthetic corpus")
    p.add_argument("--out", required=True)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--train-count", type=int, default=60)
    p.add_argument("--query-count", type=int, default=10)
    p.add_argument("--size", type=int, default=128)
    p.add_argument("--classes", type=int, default=4)
    p.add_argument("--block", type=int, default=16)
    p.add_argument("--distractors", type=int, default=0)
    p.add_argument("--rare-class", type=int, default=None)
    p.set_defaults(func=cmd_synth)

    p = sub.add_parser("dump-config", help="print every configuration key with its value")
    _add_config_args(p)
    p.set_defaults(func=cmd_dump_config)
    return ap


def main(argv=None) -> int:
    parser = make_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.WARNING - 10 * min(args.verbose, 2),
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        return args.func(args)
    except (cfg_mod.ConfigError, DatasetError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_CONFIG


if __name__ == "__main__":
    sys.exit(main())
