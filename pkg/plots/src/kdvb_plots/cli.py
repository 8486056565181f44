"""Command line entry point: render one figure spec to a PNG."""

from __future__ import annotations

import argparse
import sys

from kdvb_plots.figures import PlotError, plot


def main(argv=None) -> int:
    parser = argparse.ArgumentParser(
        prog="kdvb-plot",
        description="Render a figure from CSV/JSON experiment artifacts.")
    parser.add_argument("spec", help="path to a figure-spec JSON file")
    args = parser.parse_args(argv)
    try:
        out = plot(args.spec)
    except (PlotError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    print(out)
    return 0


if __name__ == "__main__":
    sys.exit(main())
