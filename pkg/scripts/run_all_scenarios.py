#!/usr/bin/env python3
"""Run every example scenario config and collect the artifacts.

Reads the JSON files in configs/, redirects each scenario's output into
<out-root>/<config-stem>/, and executes them in sequence.  The result is
the full set of CSV/JSON artifacts the figure tooling consumes.
"""

import argparse
import pathlib
import sys

from mcte_lab.cli import run
from mcte_lab.config import load_config

CONFIG_DIR = pathlib.Path(__file__).resolve().parent.parent / "configs"


def main(argv=None):
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--out-root", default="out",
                    help="directory receiving one subdirectory per scenario")
    ap.add_argument("--configs", nargs="*",
                    help="subset of config stems to run (default: all)")
    args = ap.parse_args(argv)

    paths = sorted(CONFIG_DIR.glob("*.json"))
    if args.configs:
        keep = set(args.configs)
        paths = [p for p in paths if p.stem in keep]
        missing = keep - {p.stem for p in paths}
        if missing:
            ap.error(f"no such config(s): {sorted(missing)}")

    root = pathlib.Path(args.out_root)
    for path in paths:
        out_dir = root / path.stem
        cfg = load_config(path, out_cli=str(out_dir))
        summary = run(cfg)
        arts = ", ".join(summary["artifacts"] + ["summary.json"])
        print(f"{cfg.scenario:18s} -> {out_dir}  ({arts}, "
              f"{summary['wall_time_s']:.2f} s)")
    return 0


if __name__ == "__main__":
    sys.exit(main())
