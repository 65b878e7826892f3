"""Command-line interface: run sweeps, render reports, emit presets."""

from __future__ import annotations

import argparse
import json
import sys

from .harness import ExperimentSpec, load_result, report, run_sweep
from .presets import preset, preset_names


def parse_config_text(text: str) -> dict:
    """Parse a flat dotted-key config: a JSON object or ``key = value`` lines.

    Line values are parsed as JSON when possible, else taken as strings.
    """
    stripped = text.strip()
    if stripped.startswith("{"):
        return json.loads(stripped)
    cfg = {}
    for raw in stripped.splitlines():
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        key, _, value = line.partition("=")
        value = value.strip()
        try:
            cfg[key.strip()] = json.loads(value)
        except json.JSONDecodeError:
            cfg[key.strip()] = value
    return cfg


def _build_parser():
    parser = argparse.ArgumentParser(prog="difflab")
    sub = parser.add_subparsers(dest="command", required=True)

    run_p = sub.add_parser("run", help="execute a sweep from a config file")
    run_p.add_argument("config")
    run_p.add_argument("--out", default=None, help="CSV output path")
    run_p.add_argument("--seed", type=int, default=None, help="master seed override")
    run_p.add_argument("--workers", type=int, default=1)

    rep_p = sub.add_parser("report", help="summarize a result CSV")
    rep_p.add_argument("csv")
    rep_p.add_argument("--figures", default=None,
                       help="directory for rendered figures (default: next to the CSV)")
    rep_p.add_argument("--no-figures", action="store_true")

    pre_p = sub.add_parser("preset", help="emit a named experiment spec")
    pre_p.add_argument("name", choices=preset_names())
    pre_p.add_argument("--out", default=None, help="write spec JSON here")

    return parser


def main(argv=None) -> int:
    args = _build_parser().parse_args(argv)

    if args.command == "run":
        with open(args.config) as fh:
            cfg = parse_config_text(fh.read())
        if args.seed is not None:
            cfg["seed"] = args.seed
        out = args.out or cfg.get("out") or "result.csv"
        cfg.pop("out", None)
        spec = ExperimentSpec(cfg)
        run_sweep(spec, out_path=out, workers=args.workers)
        print(f"wrote {out}")
        return 0

    if args.command == "report":
        result = load_result(args.csv)
        sys.stdout.write(report(result))
        if not args.no_figures:
            from .plots import render_figures

            import os

            fig_dir = args.figures or os.path.dirname(os.path.abspath(args.csv))
            for path in render_figures(result, fig_dir):
                print(f"wrote {path}")
        return 0

    if args.command == "preset":
        spec = preset(args.name)
        text = json.dumps(spec.config, indent=2, sort_keys=True)
        if args.out:
            with open(args.out, "w") as fh:
                fh.write(text + "\n")
            print(f"wrote {args.out}")
        else:
            print(text)
        return 0

    return 1


if __name__ == "__main__":
    raise SystemExit(main())
