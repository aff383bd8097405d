"""Command-line entry point: ``flowlens <stage> ...`` or ``flowlens run --config``."""

from __future__ import annotations

import argparse
import json
import logging
import sys
from pathlib import Path

from . import __version__
from .errors import FlowlensError, MissingModelError
from .kstest import DEFAULT_ALPHA

log = logging.getLogger("flowlens")

EXIT_ERROR = 1
EXIT_MISSING_MODEL = 2


def _add_alpha(p):
    p.add_argument("--alpha", type=float, default=DEFAULT_ALPHA, help="KS significance level (default 0.05)")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="flowlens", description=__doc__)
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    parser.add_argument("--seed", type=int, default=None, help="seed for every randomized stage")
    parser.add_argument("--threads", type=int, default=1, help="worker threads for pairwise/per-entity work")
    parser.add_argument("-v", "--verbose", action="count", default=0)
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("generate", help="write synthetic traces with planted groups")
    p.add_argument("--config", required=True, help="planted corpus JSON")
    p.add_argument("--out", required=True, help="output directory")
    p.set_defaults(func=cmd_generate)

    p = sub.add_parser("ingest", help="join flows with leases, sessions and domains; bin per entity")
    p.add_argument("--flows", required=True)
    p.add_argument("--dhcp", required=True)
    p.add_argument("--wlan", required=True)
    p.add_argument("--domains", required=True)
    p.add_argument("--top-k", type=int, default=100)
    p.add_argument("--metric", choices=("flows", "bytes"), default="flows")
    p.add_argument("--bin-width", type=float, default=1.0)
    p.add_argument("--out", required=True, help="output directory")
    p.set_defaults(func=cmd_ingest)

    p = sub.add_parser("fit", help="best-fit distribution per entity")
    p.add_argument("--series", required=True, help="series JSONL file or ingest output directory")
    p.add_argument("--kind", choices=("domain", "building", "user"), default="domain")
    _add_alpha(p)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_fit)

    p = sub.add_parser("simgraph", help="pairwise-KS similarity graph with communities and layout")
    p.add_argument("--series", required=True, help="series JSONL file or ingest output directory")
    p.add_argument("--kind", choices=("domain", "building", "user"), default="domain")
    _add_alpha(p)
    p.add_argument("--layout-iters", type=int, default=200)
    p.add_argument("--format", choices=("graphml", "dot", "json"), default="graphml")
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_simgraph)

    p = sub.add_parser("cocluster", help="co-cluster users with domains or locations")
    p.add_argument("--flows", required=True, help="enriched.jsonl from ingest")
    p.add_argument("--mode", choices=("domain", "location"), default="domain")
    p.add_argument("--k", type=int, default=10)
    p.add_argument("--l", type=int, default=10)
    p.add_argument("--n-init", type=int, default=None)
    p.add_argument("--weight", choices=("flows", "bytes"), default="flows")
    p.add_argument("--bin-width", type=float, default=1.0)
    _add_alpha(p)
    p.add_argument("--out", required=True)
    p.add_argument("--cells", default=None, help="where to write cell series (default cells_<mode>.jsonl next to --out)")
    p.set_defaults(func=cmd_cocluster)

    p = sub.add_parser("evaluate", help="generic vs interest-based weighted KS report")
    p.add_argument("--series", required=True, help="directory holding series_<kind>.jsonl")
    p.add_argument("--models", required=True, nargs="+")
    p.add_argument("--cocluster", required=True, nargs="+")
    _add_alpha(p)
    p.add_argument("--global-generic", action="store_true", help="one pooled D for the generic row")
    p.add_argument("--out", required=True)
    p.add_argument("--text", default=None)
    p.set_defaults(func=cmd_evaluate)

    p = sub.add_parser("run", help="whole pipeline from a config file")
    p.add_argument("--config", required=True)
    p.add_argument("--force", action="store_true", help="overwrite a non-empty output directory")
    p.set_defaults(func=cmd_run)
    return parser


def _seed(args) -> int:
    return 0 if args.seed is None else args.seed


def cmd_generate(args) -> int:
    from .synth import PlantedConfig, generate

    cfg = PlantedConfig.load(args.config)
    traces = generate(cfg, args.out, seed=args.seed)
    log.info("wrote %d flows to %s", traces.n_flows, traces.flows)
    return 0


def cmd_ingest(args) -> int:
    from dataclasses import asdict

    from .ingest import ingest, write_enriched, write_series

    res = ingest(args.flows, args.dhcp, args.wlan, args.domains, args.top_k, args.metric, args.bin_width)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    write_enriched(out / "enriched.jsonl", res.flows)
    for kind, series in res.series.items():
        write_series(out / f"series_{kind}.jsonl", series)
    (out / "drop_stats.json").write_text(json.dumps(asdict(res.stats), indent=1) + "\n")
    return 0


def cmd_fit(args) -> int:
    from .pipeline import run_fit

    run_fit(args.series, args.out, args.kind, args.alpha, args.threads)
    return 0


def cmd_simgraph(args) -> int:
    from .pipeline import run_simgraph

    run_simgraph(args.series, args.out, args.kind, args.alpha, args.layout_iters, _seed(args),
                 (args.format,), args.threads)
    return 0


def cmd_cocluster(args) -> int:
    from .cocluster import DEFAULT_N_INIT
    from .pipeline import run_cocluster

    out = Path(args.out)
    cells = Path(args.cells) if args.cells else out.with_name(f"cells_{args.mode}.jsonl")
    run_cocluster(args.flows, out, args.mode, args.k, args.l, _seed(args), args.alpha, args.bin_width,
                  args.weight, args.n_init or DEFAULT_N_INIT, cells_out=cells)
    return 0


def cmd_evaluate(args) -> int:
    from .pipeline import run_evaluate

    report = run_evaluate(args.series, args.models, args.cocluster, args.out, args.text, args.alpha,
                          args.global_generic)
    sys.stderr.write(report.to_text())
    return 0


def cmd_run(args) -> int:
    from .pipeline import PipelineConfig, run_pipeline

    cfg = PipelineConfig.load(args.config)
    if args.seed is not None:
        cfg.seed = args.seed
    if args.threads > 1:
        cfg.threads = args.threads
    manifest = run_pipeline(cfg, force=args.force)
    log.info("manifest: %s", manifest)
    return 0


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    level = logging.WARNING if args.verbose < 0 else (logging.INFO if args.verbose == 0 else logging.DEBUG)
    logging.basicConfig(level=level, stream=sys.stderr, format="%(levelname)s %(name)s: %(message)s")
    try:
        return args.func(args)
    except MissingModelError as exc:
        log.error("%s", exc)
        return EXIT_MISSING_MODEL
    except FlowlensError as exc:
        log.error("%s", exc)
        return EXIT_ERROR
    except OSError as exc:
        log.error("IO_ERROR: %s", exc)
        return EXIT_ERROR


if __name__ == "__main__":
    sys.exit(main())
