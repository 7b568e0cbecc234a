"""Command line front end: mcte-plots <kind> --in ... --out ..."""

import argparse
import sys

from .figures import FIGURE_KINDS, FigureSpec, FigureStyle, render
from .schemas import SchemaError


def main(argv=None) -> int:
    ap = argparse.ArgumentParser(
        prog="mcte-plots",
        description="Render laboratory artifacts into publication figures.",
    )
    ap.add_argument("kind", choices=sorted(FIGURE_KINDS))
    ap.add_argument("--in", dest="inputs", nargs="+", required=True,
                    metavar="PATH", help="artifact files, order free")
    ap.add_argument("--out", required=True, help="output image path")
    ap.add_argument("--fmt", choices=("pdf", "png"),
                    help="image format; default taken from --out suffix, "
                         "falling back to pdf")
    args = ap.parse_args(argv)

    fmt = args.fmt
    if fmt is None:
        suffix = args.out.rsplit(".", 1)[-1].lower()
        fmt = suffix if suffix in ("pdf", "png") else "pdf"
    spec = FigureSpec(kind=args.kind, inputs=tuple(args.inputs),
                      output=args.out, style=FigureStyle(fmt=fmt))
    try:
        render(spec)
    except SchemaError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    except OSError as exc:
        print(f"error: cannot write {args.out}: {exc}", file=sys.stderr)
        return 1
    print(args.out)
    return 0


if __name__ == "__main__":
    sys.exit(main())
