"""Command-line entry point: train, eval, rf, augment-preview and
schedule-trace subcommands.
"""

import argparse
import csv
import os
import sys

import numpy as np

from . import augment as A
from . import checkpoint as CK
from . import data as D
from . import graph as G
from . import rf as RF
from . import schedule as S
from . import train as T


def _add_train(sub):
    p = sub.add_parser("train", help="train a network from a config file")
    p.add_argument("--config", required=True)
    p.add_argument("--resume", help="checkpoint to resume from")
    p.add_argument("--set", action="append", default=[], metavar="KEY=VALUE",
                   help="override a config entry (repeatable)")


def _add_eval(sub):
    p = sub.add_parser("eval", help="evaluate a checkpoint on a dataset")
    p.add_argument("--checkpoint", required=True)
    p.add_argument("--dataset", required=True)
    p.add_argument("--network", default="net2", choices=["net1", "net2"])
    p.add_argument("--widths", help="per-block widths, e.g. 4,5,6;8,9,10")
    p.add_argument("--stem", type=int, default=32)
    p.add_argument("--width-divisor", type=int, default=1)
    p.add_argument("--class-names", help="class-name sidecar file")
    p.add_argument("--worst", type=int, default=6,
                   help="rows in the worst-classified table")


def _add_rf(sub):
    p = sub.add_parser("rf", help="print a receptive-field report")
    grp = p.add_mutually_exclusive_group(required=True)
    grp.add_argument("--network", choices=["net1", "net2"])
    grp.add_argument("--spec", help="graph text file")
    p.add_argument("--resolution", type=int, default=64)
    p.add_argument("--empirical", action="store_true",
                   help="also measure rf by input perturbation")
    p.add_argument("--csv", help="write the report as CSV to this path")


def _add_preview(sub):
    p = sub.add_parser("augment-preview",
                       help="write before/after augmentation images as PPM")
    p.add_argument("--dataset", required=True)
    p.add_argument("--mode", required=True, choices=["net1", "net2"])
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--count", type=int, default=8)
    p.add_argument("--out", required=True)


def _add_trace(sub):
    p = sub.add_parser("schedule-trace", help="dump a learning-rate schedule as CSV")
    p.add_argument("--mode", default="clr_replay", choices=["clr_replay"])
    p.add_argument("--step", type=float, default=0.25, help="epoch step between rows")
    p.add_argument("--out", required=True)


def cmd_train(args):
    cfg = T.load_config(args.config)
    for item in args.set:
        key, value = item.split("=", 1)
        T.apply_config_entry(cfg, key.strip(), value.strip())
    result = T.train(cfg, resume_from=args.resume)
    last = result.metrics[-1] if result.metrics else None
    if last:
        print(f"finished epoch {last['epoch']}: "
              f"train_acc {last['train_acc']:.4f}, val_acc {last['val_acc']:.4f}")
    print(f"best val accuracy {result.best_val_acc:.4f}")
    print(f"metrics: {result.metrics_path}")
    print(f"checkpoints: {result.best_path}, {result.last_path}")
    return 0


def cmd_eval(args):
    ds = D.load_dataset(args.dataset, args.class_names)
    cfg = T.TrainConfig(network=args.network, width_divisor=args.width_divisor)
    if args.widths:
        cfg.widths = T.parse_widths(args.widths, args.stem)
    g = T.build_graph_for(cfg, ds.num_classes)
    params = G.init_params(g)
    from .optim import AdamState
    adam = AdamState(params.param_list())
    ckpt = CK.load(args.checkpoint, expected_graph_hash=g.graph_hash())
    CK.into_training_state(ckpt, g, params, adam, S.PlateauState())
    result = T.evaluate(g, params, ds)
    print(f"top-1 accuracy: {result.top1:.4f}  (loss {result.loss:.4f})")
    names = ds.class_names or [str(c) for c in range(ds.num_classes)]
    print(f"\nworst {args.worst} classes:")
    for name, acc in T.worst_classes(result, names, args.worst):
        print(f"  {name:<24} {acc * 100:5.1f}%")
    print("\nmost frequent confusions (true -> predicted):")
    for t, p, c in result.confusion_pairs[:10]:
        tn = names[t] if t < len(names) else str(t)
        pn = names[p] if p < len(names) else str(p)
        print(f"  {tn} -> {pn}: {c}")
    return 0


def cmd_rf(args):
    if args.network:
        build = G.build_network1 if args.network == "net1" else G.build_network2
        g = build(num_classes=10)
    else:
        with open(args.spec) as f:
            g = G.parse_graph(f.read())
    report = RF.rf_report(g, image_size=args.resolution)
    print(RF.format_report(report))
    if args.empirical:
        exact = RF.rf_exact(g)
        shapes = G.propagate_shapes(g, args.resolution)
        measured = RF.rf_empirical(g, args.resolution)
        print("\nempirical check (measured vs exact, boundary-clipped):")
        for nid, m in sorted(measured.items()):
            out_size = shapes[nid][1]
            e = RF.rf_exact_clipped(exact[nid], out_size, args.resolution)
            flag = "" if m == e else "  MISMATCH"
            print(f"  node {nid}: measured {m}, exact {e}{flag}")
    if args.csv:
        with open(args.csv, "w") as f:
            f.write(RF.report_csv(report))
        print(f"\nwrote {args.csv}")
    return 0


def cmd_preview(args):
    ds = D.load_dataset(args.dataset)
    os.makedirs(args.out, exist_ok=True)
    count = min(args.count, len(ds))
    for i in range(count):
        img = D.to_float_images(ds.pixels[i:i + 1])[0]
        plan = A.plan_for_sample(args.mode, A.DEFAULT_RANGES, args.seed, 0, i)
        A.write_ppm(img, os.path.join(args.out, f"sample{i:03d}_before.ppm"))
        A.write_ppm(plan.apply(img), os.path.join(args.out, f"sample{i:03d}_after.ppm"))
    print(f"wrote {2 * count} images to {args.out}")
    return 0


def cmd_trace(args):
    rows = S.schedule_trace(step=args.step)
    with open(args.out, "w", newline="") as f:
        writer = csv.writer(f)
        writer.writerow(["epoch", "lr"])
        for t, lr in rows:
            writer.writerow([f"{t:.6g}", f"{lr:.12g}"])
    print(f"wrote {len(rows)} rows to {args.out}")
    return 0


def main(argv=None):
    parser = argparse.ArgumentParser(
        prog="densekit",
        description="miniature dense-concat CNN toolkit")
    sub = parser.add_subparsers(dest="command", required=True)
    _add_train(sub)
    _add_eval(sub)
    _add_rf(sub)
    _add_preview(sub)
    _add_trace(sub)
    args = parser.parse_args(argv)
    handlers = {"train": cmd_train, "eval": cmd_eval, "rf": cmd_rf,
                "augment-preview": cmd_preview, "schedule-trace": cmd_trace}
    try:
        return handlers[args.command](args)
    except (D.DatasetFormatError, CK.CheckpointError, T.TrainingError,
            FileNotFoundError, ValueError) as e:
        print(f"error: {e}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
