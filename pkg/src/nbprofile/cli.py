"""Command line: ``nbprofile {collect,analyze,plot,tune}``.

Exit codes: 0 success, 1 usage or configuration error, 2 data error,
3 internal error.
"""

from __future__ import annotations

import argparse
import logging
import sys
import traceback

from . import __version__, pipeline

EXIT_OK, EXIT_USAGE, EXIT_DATA, EXIT_INTERNAL = 0, 1, 2, 3


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        print(f"{self.prog}: error: {message}", file=sys.stderr)
        raise SystemExit(EXIT_USAGE)


def build_parser() -> argparse.ArgumentParser:
    p = _Parser(prog="nbprofile", description="Neighborhood behaviour profiling for local search.")
    p.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    p.add_argument("-v", "--verbose", action="store_true")
    sub = p.add_subparsers(dest="command", required=True, parser_class=_Parser)
    helps = {
        "collect": "run the instrumented search and write one merged log per instance",
        "analyze": "frames, features and clustering from the collected logs",
        "plot": "observable and activity figures (SVG + TSV)",
        "tune": "compare tuning in the basic and clustered configuration spaces",
    }
    for name, text in helps.items():
        s = sub.add_parser(name, help=text, description=text)
        s.add_argument("--config", help="INI configuration file (default: bundled demo)")
        s.add_argument("--seed", type=int)
        s.add_argument("--out", help="output directory")
        s.add_argument("--frames", type=int, dest="n_frames")
        s.add_argument("--intervals", type=int, dest="n_intervals")
        s.add_argument("--decay", type=float)
        s.add_argument("--jobs", type=int)
        if name == "analyze":
            g = s.add_mutually_exclusive_group()
            g.add_argument("--standardize", dest="standardize", action="store_true", default=None)
            g.add_argument("--no-standardize", dest="standardize", action="store_false")
    return p


def run(args: argparse.Namespace) -> list:
    cfg = pipeline.load_config(
        args.config, seed=args.seed, out=args.out, n_frames=args.n_frames,
        n_intervals=args.n_intervals, decay=args.decay, jobs=args.jobs,
        standardize=getattr(args, "standardize", None),
    )
    if args.command == "collect":
        return pipeline.collect(cfg)
    if args.command == "analyze":
        res = pipeline.analyze(cfg)
        print(f"K={res.model.K} bic={res.model.bic:.6g} rows={res.matrix.shape[0]} cols={res.matrix.shape[1]}")
        return []
    if args.command == "plot":
        return pipeline.plot(cfg)
    comp = pipeline.run_tune(cfg)
    for name, t in comp.tests.items():
        print(f"{name}: mean_diff={t.mean_difference:.6g} t={t.t_statistic:.6g} p={t.p_value:.6g}")
    return []


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code or 0)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(levelname)s %(message)s")
    try:
        for path in run(args) or []:
            print(path)
    except pipeline.ConfigError as exc:
        print(f"nbprofile: configuration error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except pipeline.PipelineError as exc:
        print(f"nbprofile: {exc}", file=sys.stderr)
        return EXIT_DATA
    except Exception as exc:  # noqa: BLE001
        if args.verbose:
            traceback.print_exc()
        print(f"nbprofile: internal error: {type(exc).__name__}: {exc}", file=sys.stderr)
        return EXIT_INTERNAL
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
