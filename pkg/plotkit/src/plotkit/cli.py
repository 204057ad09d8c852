"""plotkit <kind> --in CSV [CSV ...] --out IMAGE

Kinds: scan | prep-ics | dcs-contour | portrait-strip.
Exit codes: 0 success, 2 bad input (schema mismatch, unknown selection,
missing file).
"""

import argparse
import sys

from .figures import KINDS, FigureSpec, render
from .readers import SchemaError, SelectionError

EXIT_OK = 0
EXIT_INPUT = 2


def build_parser():
    ap = argparse.ArgumentParser(prog="plotkit", description=__doc__)
    ap.add_argument("kind", choices=KINDS)
    ap.add_argument("--in", dest="inputs", nargs="+", required=True,
                    metavar="CSV")
    ap.add_argument("--out", required=True, metavar="IMAGE")
    ap.add_argument("--transition", type=int, default=None,
                    help="final j for scan / prep-ics figures")
    ap.add_argument("--preparation", default="unpolarized",
                    help="preparation label for dcs-contour")
    ap.add_argument("--linear-x", action="store_true",
                    help="linear instead of log energy axis")
    ap.add_argument("--linear-y", action="store_true")
    ap.add_argument("--x-range", type=float, nargs=2, default=None,
                    metavar=("LO", "HI"))
    return ap


def main(argv=None):
    ns = build_parser().parse_args(argv)
    spec = FigureSpec(
        kind=ns.kind, inputs=tuple(ns.inputs), out=ns.out,
        transition=ns.transition, preparation=ns.preparation,
        logx=not ns.linear_x, logy=not ns.linear_y,
        x_range=tuple(ns.x_range) if ns.x_range else None)
    try:
        render(spec)
    except (SchemaError, SelectionError, FileNotFoundError) as exc:
        print(f"plotkit: {exc}", file=sys.stderr)
        return EXIT_INPUT
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
