"""idpg-plot: render experiment result files to figures."""

from __future__ import annotations

import argparse
import sys

from .render import KINDS, FigureJob, SchemaError, render


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="idpg-plot", description=__doc__)
    ap.add_argument("--kind", required=True, choices=KINDS)
    ap.add_argument("--in", dest="input_path", required=True,
                    help="experiment CSV/JSON result file")
    ap.add_argument("--out", dest="output_path", required=True,
                    help="output image path (png)")
    ap.add_argument("--linear-axes", action="store_true",
                    help="disable log axes where they are the default")
    ap.add_argument("--no-reference", action="store_true",
                    help="suppress theory/reference curves")
    ap.add_argument("--title")
    return ap


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    job = FigureJob(args.kind, args.input_path, args.output_path,
                    log_axes=not args.linear_axes,
                    reference_lines=not args.no_reference,
                    title=args.title)
    try:
        path = render(job)
    except SchemaError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    print(path)
    return 0


if __name__ == "__main__":
    sys.exit(main())
