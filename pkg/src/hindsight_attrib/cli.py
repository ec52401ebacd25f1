"""Command-line entry point.

Subcommands mirror the pipeline stages: ingest -> train -> backtest ->
explain, plus a simulate helper that writes a synthetic OHLCV CSV so the
whole pipeline can be exercised without licensed market data.
"""
from __future__ import annotations

import argparse
import logging
import sys

from . import pipeline
from .config import load_config
from .errors import DataError, HindsightAttribError, NumericError
from .market_data import save_panel
from .synthetic import ohlcv_panel

logger = logging.getLogger(__name__)

MODEL_CHOICES = ["lr", "dt", "rf", "svm"]


def exit_code_for(exc: HindsightAttribError) -> int:
    if isinstance(exc, DataError):
        return 3
    if isinstance(exc, NumericError):
        return 4
    return 2


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="hindsight-attrib",
        description="Train portfolio strategies and measure how well their "
        "feature weights predict a linear model fitted in hindsight.",
    )
    sub = parser.add_subparsers(dest="command", required=True)
    stage_help = {
        "ingest": "align an OHLCV CSV into a panel and dump indicator features",
        "train": "train the agent and fit the regression baselines",
        "backtest": "walk-forward evaluation of every strategy",
        "explain": "feature weights, reference correlations, z tests and figures",
    }
    for name, text in stage_help.items():
        p = sub.add_parser(name, help=text)
        p.add_argument("--config", required=True, help="path to the run config JSON")
        p.add_argument("--seed", type=int, default=None, help="override the config seed")
        p.add_argument("--out", default=None, help="override the output directory")
        if name != "ingest":
            p.add_argument(
                "--model",
                choices=MODEL_CHOICES,
                default=None,
                help="restrict the regression baselines to one model",
            )
    sim = sub.add_parser("simulate", help="write a synthetic OHLCV CSV for demo runs")
    sim.add_argument("--out", required=True, help="destination CSV path")
    sim.add_argument("--assets", type=int, default=8)
    sim.add_argument("--days", type=int, default=400)
    sim.add_argument("--seed", type=int, default=0)
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO, format="%(levelname)s %(name)s: %(message)s")
    try:
        if args.command == "simulate":
            panel = ohlcv_panel(args.assets, args.days + 1, args.seed)
            save_panel(panel, args.out)
            logger.info("wrote %s (%d assets, %d days)", args.out, args.assets, args.days + 1)
            return 0
        cfg = load_config(args.config, seed=args.seed, out_dir=args.out)
        stage = {
            "ingest": lambda: pipeline.run_ingest(cfg),
            "train": lambda: pipeline.run_train(cfg, args.model),
            "backtest": lambda: pipeline.run_backtest(cfg, args.model),
            "explain": lambda: pipeline.run_explain(cfg, args.model),
        }[args.command]
        outputs = stage()
        logger.info("%s finished, %d files written", args.command, len(outputs))
        return 0
    except HindsightAttribError as exc:
        logger.error("%s: %s", type(exc).__name__, exc)
        return exit_code_for(exc)


if __name__ == "__main__":
    sys.exit(main())
