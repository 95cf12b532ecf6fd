"""
One experiment run: build the environment, run the agent, validate the
trace and package everything the collector needs. Runs execute inside
worker processes and share nothing.
"""

from dataclasses import dataclass, field, replace
from typing import Any, Dict, Optional

import numpy as np

from app.logging_config import clear_context, get_logger, set_context
from app.models.schemas import AgentConfig
from app.models.trace import RunTrace, SwitchReport
from app.services.agent import run_agent
from app.services.environments import build_environment
from app.services.hard_instance import count_distinct_prefixes, optimal_lock_value
from app.services.metrics import switch_report
from app.services.serialization import trace_to_csv

logger = get_logger(__name__)


@dataclass
class RunJob:
    run_id: str
    environment: Any
    agent: AgentConfig
    seed: int

    @property
    def K(self) -> int:
        return self.agent.K


@dataclass
class RunOutcome:
    job: RunJob
    trace: RunTrace
    report: SwitchReport
    csv_body: str
    n_states: int
    n_actions: int
    hard_instance: Optional[Dict[str, Any]] = field(default=None)


def _hard_instance_summary(spec, trace: RunTrace, report: SwitchReport, trajectories) -> Dict[str, Any]:
    wrong = count_distinct_prefixes(trajectories, spec)
    optimal = optimal_lock_value(spec)
    mean_return = float(np.mean([r.ret for r in trace.records]))
    return {
        "optimal_value": optimal,
        "mean_return": mean_return,
        "below_optimal": mean_return < optimal,
        "distinct_wrong_states": wrong,
        "global_switches": report.global_switches,
        "exploration_bound_holds": wrong <= report.global_switches + 1,
    }


def execute_run(job: RunJob) -> RunOutcome:
    """Run one (environment, K, seed) job end to end"""
    set_context(run_id=job.run_id, seed=job.seed, episodes=job.K, environment=job.environment.kind)
    try:
        spec = build_environment(job.environment, job.seed)
        trace = run_agent(spec, job.agent, job.seed)
        csv_body = trace_to_csv(trace)
        report = switch_report(trace, spec)

        hard = None
        if "hard_instance_meta" in spec.metadata:
            hard = _hard_instance_summary(spec, trace, report, trace.trajectories)
            if not hard["exploration_bound_holds"]:
                logger.warning(f"⚠️ {hard['distinct_wrong_states']} wrong lock states after "
                               f"{report.global_switches} switches")

        logger.info(f"✅ Run {job.run_id} done: regret={trace.total_regret:.4f}, "
                    f"switches={report.global_switches}")
        return RunOutcome(
            job=job,
            trace=replace(trace, trajectories=[]),
            report=report,
            csv_body=csv_body,
            n_states=spec.n_states,
            n_actions=spec.max_actions,
            hard_instance=hard,
        )
    except Exception as e:
        logger.error(f"🔴 Run {job.run_id} aborted: {e}")
        raise
    finally:
        clear_context()
