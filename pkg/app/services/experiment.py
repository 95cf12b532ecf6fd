"""
Experiment orchestration: parse a config, fan the (K, seed) runs out over a
process pool and collect traces, summaries and scaling fits on disk.
"""

import asyncio
import json
import logging
import time
from collections import OrderedDict
from concurrent.futures import ProcessPoolExecutor
from pathlib import Path
from typing import Any, Dict, List, Optional, Sequence, Union

from pydantic import ValidationError

from app.config import settings
from app.errors import (
    EXIT_OK,
    ConfigError,
    DegenerateFitError,
    InvalidParameterError,
    exit_code_for,
)
from app.logging_config import configure_logging
from app.models.schemas import ExperimentConfig, TabularRandomEnv
from app.services.metrics import (
    baseline_comparison,
    replicate_stats,
    scaling_checks,
    scaling_fit,
)
from app.services.serialization import write_json
from app.worker import RunJob, RunOutcome, execute_run

logger = logging.getLogger(__name__)

CURVE_KEYS = ("mean_cumulative_regret", "sem_cumulative_regret")


def _error_path(err: Dict[str, Any]) -> str:
    return ".".join(str(p) for p in err["loc"]) or "<root>"


def parse_config(text: str) -> ExperimentConfig:
    """
    Strict parse of an experiment config document.

    Raises:
        ConfigError: Malformed JSON or a schema violation; the message names
            the offending field path
    """
    try:
        data = json.loads(text)
    except json.JSONDecodeError as e:
        raise ConfigError(f"malformed JSON: {e}") from e
    try:
        return ExperimentConfig.model_validate(data)
    except ValidationError as e:
        details = "; ".join(f"{_error_path(err)}: {err['msg']}" for err in e.errors())
        raise ConfigError(f"invalid config: {details}") from e


def load_config(path: Union[str, Path]) -> ExperimentConfig:
    raw = Path(path).read_bytes()
    try:
        return parse_config(raw.decode("utf-8"))
    except UnicodeDecodeError as e:
        raise ConfigError(f"config is not UTF-8: {e}") from e


def plan_runs(config: ExperimentConfig, mode: Optional[str] = None) -> List[RunJob]:
    """One job per (K, seed), K-major in schedule order"""
    jobs = []
    for K in config.K_schedule:
        agent = config.agent_for(K)
        if mode is not None:
            agent = agent.model_copy(update={"mode": mode})
        suffix = "" if mode is None else f"-{mode}"
        for seed in config.seeds:
            jobs.append(RunJob(run_id=f"K{K}-seed{seed}{suffix}", environment=config.environment,
                               agent=agent, seed=seed))
    return jobs


async def run_jobs(jobs: Sequence[RunJob], parallelism: int) -> List[RunOutcome]:
    """Execute jobs, in worker processes when parallelism > 1; results keep job order"""
    if parallelism <= 1 or len(jobs) <= 1:
        return [execute_run(job) for job in jobs]
    loop = asyncio.get_running_loop()
    workers = min(parallelism, len(jobs))
    logger.info(f"Dispatching {len(jobs)} runs to {workers} worker processes")
    with ProcessPoolExecutor(max_workers=workers, initializer=configure_logging,
                             initargs=(settings.log_level,)) as pool:
        futures = [loop.run_in_executor(pool, execute_run, job) for job in jobs]
        return list(await asyncio.gather(*futures))


def trace_path(output_dir: Path, job: RunJob) -> Path:
    folder = output_dir / "traces"
    if job.agent.mode == "always_switch":
        folder = folder / "always_switch"
    return folder / f"trace_K{job.K}_seed{job.seed}.csv"


def _write_trace(output_dir: Path, outcome: RunOutcome) -> Path:
    path = trace_path(output_dir, outcome.job)
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w", encoding="utf-8", newline="") as f:
        f.write(outcome.csv_body)
    return path


def _write_curve(path: Path, stats: Dict[str, Any]) -> None:
    lines = ["episode,mean_cumulative_regret,sem_cumulative_regret"]
    for k, (mean, sem) in enumerate(zip(*(stats[key] for key in CURVE_KEYS)), start=1):
        lines.append(f"{k},{float(mean)!r},{float(sem)!r}")
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text("\n".join(lines) + "\n", encoding="utf-8")


def _group_by_k(outcomes: Sequence[RunOutcome]) -> "OrderedDict[int, List[RunOutcome]]":
    groups: "OrderedDict[int, List[RunOutcome]]" = OrderedDict()
    for outcome in outcomes:
        groups.setdefault(outcome.job.K, []).append(outcome)
    return groups


def _try_fit(points, kind: str):
    try:
        return scaling_fit(points, kind), None
    except (DegenerateFitError, InvalidParameterError) as e:
        return None, str(e)


def summarize(config: ExperimentConfig, outcomes: Sequence[RunOutcome], output_dir: Path) -> Dict[str, Any]:
    """Replicate statistics, scaling fits and checks; writes the mean regret curves"""
    first = outcomes[0]
    d, H = first.trace.d, first.trace.horizon
    per_k: Dict[int, Dict[str, Any]] = {}
    for K, group in _group_by_k(outcomes).items():
        stats = replicate_stats([o.trace for o in group], [o.report for o in group])
        _write_curve(output_dir / "curves" / f"regret_K{K}.csv", stats)
        per_k[K] = {key: value for key, value in stats.items() if key not in CURVE_KEYS}

    fits: Dict[str, Any] = {}
    regret_fit = None
    switch_points = [(o.job.K, o.report.global_switches) for o in outcomes]
    regret_points = [(K, s["final_regret_mean"]) for K, s in per_k.items()]
    for kind, points in (("switch", switch_points), ("regret", regret_points)):
        fit, reason = _try_fit(points, kind)
        fits[kind] = fit.to_dict() if fit else {"kind": kind, "skipped": reason}
        if kind == "regret":
            regret_fit = fit

    tabular = isinstance(config.environment, TabularRandomEnv)
    checks = scaling_checks(
        per_k, d, H,
        n_states=first.n_states if tabular else None,
        n_actions=first.n_actions if tabular else None,
        regret_fit=regret_fit,
    )
    summary: Dict[str, Any] = {
        "config": config.model_dump(mode="json", by_alias=True),
        "runs": [
            {
                "run_id": o.job.run_id,
                "K": o.job.K,
                "seed": o.job.seed,
                "trace_file": str(trace_path(Path("."), o.job)),
                "total_regret": o.trace.total_regret,
                "switches": o.report.to_dict(),
                "optimism_violations": o.trace.optimism_violations,
                "monitor": o.trace.monitor,
                "wall_time": o.trace.wall_time,
                **({"hard_instance": o.hard_instance} if o.hard_instance else {}),
            }
            for o in outcomes
        ],
        "per_K": {str(K): stats for K, stats in per_k.items()},
        "checks": checks,
    }
    return {"summary": summary, "fits": fits}


async def execute_experiment(config: ExperimentConfig) -> Dict[str, Any]:
    """Run every (K, seed) pair and write all artifacts; returns the summary"""
    started = time.perf_counter()
    output_dir = Path(config.output_dir)
    jobs = plan_runs(config)
    logger.info(f"🚀 Experiment: {len(jobs)} runs, K_schedule={config.K_schedule}, seeds={config.seeds}")

    outcomes = await run_jobs(jobs, config.parallelism)
    for outcome in outcomes:
        _write_trace(output_dir, outcome)

    result = summarize(config, outcomes, output_dir)
    summary = result["summary"]

    if config.baseline:
        baseline = await run_jobs(plan_runs(config, mode="always_switch"), config.parallelism)
        for outcome in baseline:
            _write_trace(output_dir, outcome)
        summary["baseline"] = [
            baseline_comparison(low.trace, always.trace) for low, always in zip(outcomes, baseline)
        ]

    summary["wall_time"] = time.perf_counter() - started
    write_json(summary, output_dir / "summary.json")
    write_json(result["fits"], output_dir / "scaling_fit.json")

    failed = [name for name, check in summary["checks"].items() if not check["passed"]]
    if failed:
        logger.warning(f"⚠️ Summary checks not met: {failed}")
    logger.info(f"✅ Experiment finished in {summary['wall_time']:.2f}s, artifacts in {output_dir}")
    return summary


def run_experiment(config: ExperimentConfig) -> int:
    """Blocking entry point; returns the process exit status"""
    try:
        asyncio.run(execute_experiment(config))
        return EXIT_OK
    except Exception as e:
        logger.error(f"🔴 Experiment failed: {e}")
        return exit_code_for(e)
