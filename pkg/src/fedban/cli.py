"""Command line entry point: ``fedban run | sweep | summarize | graph-info``."""
from __future__ import annotations

import argparse
import json
import logging
import sys

from . import harness
from .exceptions import (ConfigError, GraphValidationError, NumericalFault, SpectralGapError,
                         TraceIntegrityError)
from .graph import build_graph, mixing_matrix, read_edge_list

EXIT_OK = 0
EXIT_CONFIG = 2
EXIT_NUMERIC = 3
EXIT_SPECTRAL = 4


def _config(args) -> harness.ExperimentConfig:
    cfg = harness.load_config(args.config)
    changes = {}
    if args.seed is not None:
        changes["master_seed"] = args.seed
    if args.out is not None:
        changes["out"] = args.out
    if getattr(args, "noise", None) == "off":
        changes["epsilon"] = float("inf")
    if getattr(args, "full_trace", False):
        changes["full_trace"] = True
    if args.workers is not None:
        changes["workers"] = args.workers
    return cfg.replace(**changes) if changes else cfg


def _print_summary(summary: harness.Summary) -> None:
    print(json.dumps(summary.record(), sort_keys=True))


def cmd_run(args) -> int:
    cfg = _config(args).validate()
    traces = harness.run_experiment(cfg)
    _print_summary(harness.summarize(traces))
    print(f"wrote {len(traces)} trace(s) to {cfg.out}", file=sys.stderr)
    return EXIT_OK


def cmd_sweep(args) -> int:
    cfg = _config(args)
    values = [v.strip() for v in args.values.split(",") if v.strip()]
    result = harness.sweep(cfg, args.param, values)
    for summary in result.summaries:
        _print_summary(summary)
    print(f"wrote plot data to {cfg.out}/plot_data.csv", file=sys.stderr)
    return EXIT_OK


def cmd_summarize(args) -> int:
    traces = [harness.load_trace(p) for p in args.traces]
    _print_summary(harness.summarize(traces))
    return EXIT_OK


def cmd_graph_info(args) -> int:
    if args.edge_file:
        g = read_edge_list(args.edge_file)
    else:
        g = build_graph(args.topology, args.m)
    mm = mixing_matrix(g, args.kappa)
    info = mm.summary()
    if args.json:
        print(json.dumps(info, sort_keys=True))
        return EXIT_OK
    print(f"M = {info['M']}  kappa = {info['kappa']}")
    print("row sums:    " + " ".join(f"{v:.15f}" for v in info["row_sums"]))
    print("eigenvalues: " + " ".join(f"{v:.10f}" for v in info["eigenvalues"]))
    print(f"c0 = {info['c0']:.10g}")
    print("ci = " + " ".join(f"{v:.10g}" for v in info["ci"]))
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="fedban", description="Federated private bandit simulations")
    p.add_argument("-v", "--verbose", action="store_true")
    sub = p.add_subparsers(dest="command", required=True)

    def add_common(sp):
        sp.add_argument("--config", help="key = value config file")
        sp.add_argument("--seed", type=int, help="master seed (overrides FEDBAN_SEED)")
        sp.add_argument("--out", help="output directory")
        sp.add_argument("--workers", type=int, help="worker processes")

    run = sub.add_parser("run", help="run one configuration")
    add_common(run)
    run.add_argument("--noise", choices=["on", "off"], default="on")
    run.add_argument("--full-trace", action="store_true")
    run.set_defaults(func=cmd_run)

    sw = sub.add_parser("sweep", help="run one configuration per parameter value")
    add_common(sw)
    sw.add_argument("--param", required=True, choices=harness.SWEEP_PARAMS)
    sw.add_argument("--values", required=True, help="comma-separated values")
    sw.set_defaults(func=cmd_sweep)

    sm = sub.add_parser("summarize", help="summarize trace files")
    sm.add_argument("traces", nargs="+")
    sm.set_defaults(func=cmd_summarize)

    gi = sub.add_parser("graph-info", help="mixing matrix spectrum and topology constants")
    gi.add_argument("--topology", default="cycle", choices=[t for t in harness.TOPOLOGIES if t != "custom"])
    gi.add_argument("--m", type=int, default=20)
    gi.add_argument("--kappa", type=float, default=0.5)
    gi.add_argument("--edge-file")
    gi.add_argument("--json", action="store_true")
    gi.set_defaults(func=cmd_graph_info)
    return p


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        return args.func(args)
    except (ConfigError, GraphValidationError, TraceIntegrityError) as exc:
        errors = getattr(exc, "errors", [str(exc)])
        print("configuration invalid:", file=sys.stderr)
        for e in errors:
            print(f"  - {e}", file=sys.stderr)
        return EXIT_CONFIG
    except NumericalFault as exc:
        print(f"numerical fault: {exc}", file=sys.stderr)
        return EXIT_NUMERIC
    except SpectralGapError as exc:
        print(f"spectral gap error: {exc}", file=sys.stderr)
        return EXIT_SPECTRAL


if __name__ == "__main__":
    sys.exit(main())
