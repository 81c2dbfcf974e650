#!/usr/bin/env python3
import argparse
import json
import logging
from typing import List, Optional

from grail import __version__
from grail.config import ExperimentConfig, list_presets, load_config
from grail.core import RngStream, read_trajectories
from grail.errors import ConfigError, GrailError
from grail.harness import export_visit_heatmap, generate_demo_files, run_experiment, train_bank_files
from grail.learners import load_bank
from grail.recognizer import Recognizer
from grail.report import report
from grail.scoring import KL_DIRECTIONS, SHORT_NAMES, ScoreMetric

log = logging.getLogger("grail")

_LOG_FORMAT = "%(asctime)s %(levelname)s %(name)s: %(message)s"


def _add_config_args(parser: argparse.ArgumentParser) -> None:
    parser.add_argument("--config", help="experiment INI file")
    parser.add_argument("--preset", choices=list_presets(), help="bundled preset to start from")
    parser.add_argument("--out", help="output directory (overrides output_dir)")


def _build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="grail", description="Goal recognition from demonstrations.")
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    noise = parser.add_mutually_exclusive_group()
    noise.add_argument("-v", "--verbose", action="store_true", help="log debug details")
    noise.add_argument("-q", "--quiet", action="store_true", help="only log warnings and errors")
    sub = parser.add_subparsers(dest="command", required=True)

    _add_config_args(sub.add_parser("gen-demos", help="write demonstration files"))
    _add_config_args(sub.add_parser("train", help="train and save one policy bank per learner"))
    evaluate = sub.add_parser("eval", help="run the full experiment grid")
    _add_config_args(evaluate)
    evaluate.add_argument("--demos", help="directory of gen-demos files to use instead of generating demos")

    infer = sub.add_parser("infer", help="recognise the goal of observed trajectories")
    infer.add_argument("--bank", required=True, help="policy bank directory")
    infer.add_argument("--traj", required=True, help="JSON Lines trajectory file")
    infer.add_argument("--fraction", type=float, default=1.0, help="observed share of each trajectory")
    infer.add_argument("--metric", default="mse", choices=sorted(SHORT_NAMES), help="scoring rule")
    infer.add_argument("--epsilon", type=float, default=0.01, help="KL pseudo-policy smoothing")
    infer.add_argument("--kl-direction", default="policy_first", choices=KL_DIRECTIONS,
                       help="policy_first: KL(pi_g || pi_O); pseudo_first: KL(pi_O || pi_g)")
    infer.add_argument("--samples", type=int, default=16, help="policy samples per step for w1")
    infer.add_argument("--seed", type=int, default=0, help="seed for sampling metrics")
    infer.add_argument("--posterior", type=float, metavar="TEMPERATURE",
                       help="also print softmax(scores / TEMPERATURE)")

    rep = sub.add_parser("report", help="render aggregated results as tables")
    rep.add_argument("--dir", required=True, help="results directory")
    rep.add_argument("--markdown", action="store_true", help="print Markdown instead of plain text")
    rep.add_argument("--score", default="f1", choices=["accuracy", "precision", "recall", "f1", "micro_f1"])

    heat = sub.add_parser("heatmap", help="export Q-learning visit counts")
    heat.add_argument("--bank", required=True, help="Q-learning bank directory")
    heat.add_argument("--out", required=True, help="CSV file to write")
    return parser


def _configure_logging(args: argparse.Namespace) -> None:
    level = logging.DEBUG if args.verbose else logging.WARNING if args.quiet else logging.INFO
    logging.basicConfig(level=level, format=_LOG_FORMAT)


def _load(args: argparse.Namespace) -> ExperimentConfig:
    if not args.config and not args.preset:
        raise ConfigError("give --config or --preset")
    config = load_config(path=args.config, preset=args.preset)
    if getattr(args, "demos", None):
        config = config.with_demos_dir(args.demos)
    return config.with_output_dir(args.out) if args.out else config


def _infer(args: argparse.Namespace) -> None:
    bank = load_bank(args.bank)
    metric = ScoreMetric.from_name(args.metric, epsilon=args.epsilon, samples=args.samples,
                                   kl_direction=args.kl_direction)
    recognizer = Recognizer(bank, metric, RngStream(args.seed, "infer"))
    for i, traj in enumerate(read_trajectories(args.traj, bank.goals)):
        result = recognizer.recognize(traj, args.fraction, key=str(i)).to_dict(args.posterior)
        if traj.goal is not None:
            result["true_goal"] = traj.goal.label
        print(json.dumps(result))


def main(argv: Optional[List[str]] = None) -> int:
    args = _build_parser().parse_args(argv)
    _configure_logging(args)
    try:
        if args.command == "gen-demos":
            generate_demo_files(_load(args))
        elif args.command == "train":
            train_bank_files(_load(args))
        elif args.command == "eval":
            print(run_experiment(_load(args), quiet=args.quiet))
        elif args.command == "infer":
            _infer(args)
        elif args.command == "report":
            rendered = report(args.dir, args.score)
            print(rendered.markdown if args.markdown else rendered.text)
        elif args.command == "heatmap":
            for path in export_visit_heatmap(load_bank(args.bank), args.out):
                print(path)
    except ConfigError as exc:
        log.error("Configuration error: %s", exc)
        return 1
    except GrailError as exc:
        log.error("%s", exc)
        return 2
    except OSError as exc:
        log.error("I/O error: %s", exc)
        return 2
    return 0


if __name__ == "__main__":
    raise SystemExit(main())
