"""
Command-line entry point.

    python -m app.main run --config configs/smoke.json [--output DIR] [--parallelism N]
                           [--strict-paper] [--validate-only]
    python -m app.main lemmas --trials 1000 [--dim D] [--seed S]
    python -m app.main inspect --spec path/to/spec.json

Every command prints one JSON envelope on stdout; logs go to stderr.
"""

import argparse
import asyncio
import sys
from pathlib import Path
from typing import Any, Dict, List, Optional

from pydantic import ValidationError

from app.config import settings
from app.errors import EXIT_INVARIANT, EXIT_OK, ConfigError, exit_code_for
from app.logging_config import configure_logging, get_logger
from app.models.response import ResponseMeta, error_response, success_response
from app.models.schemas import ExperimentConfig
from app.services.environments import build_environment
from app.services.experiment import execute_experiment, load_config, plan_runs
from app.services.lemmas import DEFAULT_DIMS, det_growth_sweep, logdet_bound_sweep
from app.services.mdp import optimal_values
from app.services.serialization import read_spec, spec_to_dict

logger = get_logger(__name__)


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="lowswitch", description="Low-switching LSVI-UCB experiment runner")
    sub = parser.add_subparsers(dest="command", required=True)

    run = sub.add_parser("run", help="run an experiment config")
    run.add_argument("--config", required=True, help="experiment config JSON")
    run.add_argument("--output", help="override output_dir")
    run.add_argument("--parallelism", type=int, help="override parallelism")
    run.add_argument("--strict-paper", action="store_true", help="disable the Q floor at 0")
    run.add_argument("--validate-only", action="store_true", help="parse and build environments, do not run")

    lemmas = sub.add_parser("lemmas", help="covariance property sweeps")
    lemmas.add_argument("--trials", type=int, default=1000)
    lemmas.add_argument("--dim", type=int, help="single dimension (default: sweep 1, 2, 4, 8, 16)")
    lemmas.add_argument("--seed", type=int, default=0)
    lemmas.add_argument("--updates", type=int, default=10_000, help="updates per log-det bound replicate")
    lemmas.add_argument("--replicates", type=int, default=20, help="log-det bound replicates per dimension")

    inspect = sub.add_parser("inspect", help="validate and print a spec file")
    inspect.add_argument("--spec", required=True)
    return parser


def apply_overrides(config: ExperimentConfig, args: argparse.Namespace) -> ExperimentConfig:
    data = config.model_dump(mode="json", by_alias=True)
    if args.output:
        data["output_dir"] = args.output
    if args.parallelism is not None:
        data["parallelism"] = args.parallelism
    if args.strict_paper:
        data["agent"]["strict_paper"] = True
    try:
        return ExperimentConfig.model_validate(data)
    except ValidationError as e:
        raise ConfigError(f"invalid override: {e.errors()[0]['msg']}") from e


def cmd_run(args: argparse.Namespace) -> Dict[str, Any]:
    config = apply_overrides(load_config(args.config), args)
    if args.validate_only:
        specs = {seed: build_environment(config.environment, seed) for seed in config.seeds}
        first = next(iter(specs.values()))
        return {
            "valid": True,
            "runs": len(plan_runs(config)),
            "d": first.d,
            "H": first.horizon,
            "n_states": first.n_states,
        }
    summary = asyncio.run(execute_experiment(config))
    return {
        "output_dir": config.output_dir,
        "runs": len(summary["runs"]),
        "per_K": summary["per_K"],
        "checks": summary["checks"],
    }


def cmd_lemmas(args: argparse.Namespace) -> Dict[str, Any]:
    dims = (args.dim,) if args.dim else DEFAULT_DIMS
    bound_dims = (args.dim,) if args.dim else (2, 4, 8)
    return {
        "det_growth": det_growth_sweep(args.trials, seed=args.seed, dims=dims),
        "logdet_bound": logdet_bound_sweep(bound_dims, updates=args.updates,
                                           replicates=args.replicates, seed=args.seed),
    }


def cmd_inspect(args: argparse.Namespace) -> Dict[str, Any]:
    spec = read_spec(Path(args.spec))
    doc = spec_to_dict(spec)
    doc["optimal_value"] = optimal_values(spec).value(spec.initial_state)
    return doc


COMMANDS = {"run": cmd_run, "lemmas": cmd_lemmas, "inspect": cmd_inspect}


def _emit(response) -> None:
    sys.stdout.write(response.model_dump_json(indent=2) + "\n")
    sys.stdout.flush()


def main(argv: Optional[List[str]] = None) -> int:
    args = build_parser().parse_args(argv)
    configure_logging(settings.log_level)
    meta = ResponseMeta(command=args.command)
    try:
        data = COMMANDS[args.command](args)
    except Exception as e:
        code = exit_code_for(e)
        logger.error(f"🔴 {args.command} failed ({type(e).__name__}): {e}")
        meta.exit_code = code
        _emit(error_response(str(e), message=f"{args.command} failed", meta=meta))
        return code

    code = EXIT_OK
    message = f"{args.command} completed"
    if args.command == "lemmas":
        failures = data["det_growth"]["failures"] + data["logdet_bound"]["failures"]
        if failures:
            code = EXIT_INVARIANT
            message = f"{failures} property failures"
    meta.exit_code = code
    if code == EXIT_OK:
        _emit(success_response(data, message=message, meta=meta))
    else:
        _emit(error_response(message, message=message, data=data, meta=meta))
    return code


if __name__ == "__main__":
    sys.exit(main())
