"""
Command-line entry points: simulate paths, build flows, run experiments,
classify mechanisms, tabulate merger rates and serve the HTTP API.

Exit codes: 0 success, 2 configuration error, 3 failed statistical gate.
"""

import argparse
import csv
import json
import logging
import sys
from collections.abc import Callable, Sequence
from os import environ
from pathlib import Path
from typing import Any
from pydantic import ValidationError
import uvicorn
from src.errors import ConfigurationError
from src.experiments import run_experiment
from src.genealogy_flow import build_flow, rate_lambda, write_counting_csv, write_event_log
from src.levy_csbp import write_jumps_csv, write_trajectory_csv
from src.mechanism import classify
from src.models import (
    BuildFlowRequest,
    ClassifyRequest,
    ExperimentConfig,
    RatesRequest,
    SimulateRequest,
    resolve_mechanism,
)

logger = logging.getLogger(__name__)

EXIT_OK = 0
EXIT_CONFIG = 2
EXIT_GATE = 3


def _load(path: str | None) -> dict[str, Any]:
    if path is None:
        return {}
    return json.loads(Path(path).read_text())


def _settings(args: argparse.Namespace, **names: str) -> dict[str, Any]:
    """
    The config file, overridden by the command-line flags that were given.
    """

    given = {
        field: getattr(args, flag)
        for flag, field in names.items()
        if getattr(args, flag, None) is not None
    }
    return {**_load(args.config), **given}


def simulate_csbp(args: argparse.Namespace) -> int:
    request = SimulateRequest(**_settings(args, seed="seed", mechanism="mechanism"))
    p = request.simulate(request.seed)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    write_trajectory_csv(p, out / "trajectory.csv")
    write_jumps_csv(p, out / "jumps.csv")
    logger.info(
        "Simulated a path with %d jump(s), %s at t=%.6g.",
        len(p.jump_times),
        p.lifetime.kind,
        p.lifetime.time,
    )
    return EXIT_OK


def build_partition_flow(args: argparse.Namespace) -> int:
    request = BuildFlowRequest(**_settings(args, seed="seed", mechanism="mechanism", n="n"))
    p = request.simulate(request.seed)
    f = build_flow(p, request.n, request.seed)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    write_trajectory_csv(p, out / "trajectory.csv")
    write_event_log(f, out / "events.jsonl")
    write_counting_csv(f, out / "counting.csv")
    logger.info("Built a flow at n=%d with %d event(s).", f.n, f.event_count)
    return EXIT_OK


def run(args: argparse.Namespace) -> int:
    if args.config is None:
        raise ConfigurationError("run-experiment needs --config")
    cfg = ExperimentConfig(
        **_settings(
            args,
            seed="master_seed",
            replicates="replicates",
            threads="threads",
            mechanism="mechanism",
            n="n",
        )
    )
    report = run_experiment(cfg, args.out)
    for gate in report.gates:
        logger.info("%s: %s", gate.name, gate.verdict)
    if not report.passed:
        logger.error("The %s experiment failed a gate.", cfg.experiment)
        return EXIT_GATE
    logger.info("The %s experiment passed.", cfg.experiment)
    return EXIT_OK


def classify_mechanism(args: argparse.Namespace) -> int:
    request = ClassifyRequest(**_settings(args, mechanism="mechanism"))
    print(classify(resolve_mechanism(request.mechanism)).model_dump_json(indent=2))
    return EXIT_OK


def rates(args: argparse.Namespace) -> int:
    request = RatesRequest(**_settings(args, mechanism="mechanism", n="n", z="z"))
    m = resolve_mechanism(request.mechanism)
    writer = csv.writer(sys.stdout)
    writer.writerow(["n", "k", "z", "rate"])
    for z in request.z:
        for k in range(2, request.n + 1):
            writer.writerow([request.n, k, z, rate_lambda(request.n, k, z, m)])
    return EXIT_OK


def serve(args: argparse.Namespace) -> int:
    uvicorn.run("src.fast_api:app", host=args.host, port=args.port)
    return EXIT_OK


commands: dict[str, Callable[[argparse.Namespace], int]] = {
    "simulate-csbp": simulate_csbp,
    "build-flow": build_partition_flow,
    "run-experiment": run,
    "classify": classify_mechanism,
    "rates": rates,
    "serve": serve,
}


def parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", help="JSON config file")
    common.add_argument("--out", default=environ.get("CSBP_OUT", "out"))
    common.add_argument("--seed", type=int, help="seed, or master seed of an experiment")
    common.add_argument("--replicates", type=int)
    common.add_argument("--threads", type=int)
    common.add_argument("--mechanism", help="preset name")
    common.add_argument("--n", type=int, help="partition resolution")
    common.add_argument("--z", type=float, nargs="+", help="masses for the rate table")

    root = argparse.ArgumentParser(
        prog="csbp", description="Genealogies of continuous-state branching processes."
    )
    root.add_argument(
        "--log-level", default=environ.get("CSBP_LOG_LEVEL", "INFO").upper()
    )
    subparsers = root.add_subparsers(dest="command", required=True)
    for name in commands:
        sub = subparsers.add_parser(name, parents=[common])
        if name == "serve":
            sub.add_argument("--host", default="0.0.0.0")
            sub.add_argument("--port", type=int, default=8000)
    return root


def main(argv: Sequence[str] | None = None) -> int:
    args = parser().parse_args(argv)
    logging.basicConfig(
        level=args.log_level,
        format="%(asctime)s %(levelname)s %(name)s: %(message)s",
    )
    try:
        return commands[args.command](args)
    except (ValidationError, ConfigurationError, json.JSONDecodeError, OSError) as error:
        logger.error("Invalid configuration for %s: %s", args.command, error)
        return EXIT_CONFIG
    except Exception:
        logger.exception("The %s command failed.", args.command)
        raise


if __name__ == "__main__":
    sys.exit(main())
