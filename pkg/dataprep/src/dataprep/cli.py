"""dataprep command line: convert image trees or generate synthetic
datasets in the TINB format."""

import argparse
import logging
import sys

from .convert import ConversionError, convert
from .synth import make_synthetic


def main(argv=None):
    parser = argparse.ArgumentParser(
        prog="dataprep", description="TINB dataset conversion and generation")
    sub = parser.add_subparsers(dest="command", required=True)

    c = sub.add_parser("convert", help="convert an image directory tree")
    c.add_argument("--src", required=True)
    c.add_argument("--layout", required=True,
                   choices=["tiny_imagenet", "class_folders"])
    c.add_argument("--split", default="train", choices=["train", "val"],
                   help="tiny_imagenet split to convert")
    c.add_argument("--res", type=int, required=True, choices=[16, 32, 64])
    c.add_argument("--out", required=True)

    s = sub.add_parser("synth", help="generate a synthetic dataset")
    s.add_argument("--classes", type=int, required=True)
    s.add_argument("--per-class", type=int, required=True)
    s.add_argument("--res", type=int, required=True)
    s.add_argument("--seed", type=int, default=0)
    s.add_argument("--out", required=True)

    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.WARNING, format="%(levelname)s: %(message)s")
    try:
        if args.command == "convert":
            report = convert(args.src, args.layout, args.res, args.out,
                             split=args.split)
            print(f"wrote {report.records} records, {report.num_classes} classes "
                  f"to {args.out} ({report.skipped} skipped)")
        else:
            labels, _ = make_synthetic(args.classes, args.per_class, args.res,
                                       args.seed, args.out)
            print(f"wrote {len(labels)} records, {args.classes} classes to {args.out}")
    except (ConversionError, ValueError, OSError) as e:
        print(f"error: {e}", file=sys.stderr)
        return 1
    return 0


if __name__ == "__main__":
    sys.exit(main())
