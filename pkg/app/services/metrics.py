"""
Regret and switching-cost accounting over finished runs.
All functions are pure over immutable traces.
"""

import logging
import math
from typing import Any, Dict, List, Optional, Sequence, Tuple

import numpy as np

from app.config import settings
from app.errors import (
    DegenerateFitError,
    InvalidParameterError,
    InvariantViolationError,
    TraceMismatchError,
)
from app.models.mdp import LinearMdpSpec
from app.models.trace import FitSummary, RunTrace, SwitchReport

logger = logging.getLogger(__name__)

FIT_KINDS = ("switch", "regret")


def global_switching_cost(snapshot_ids: Sequence[int]) -> int:
    """Adjacent episode pairs whose deployed snapshot ids differ"""
    return sum(1 for prev, cur in zip(snapshot_ids, snapshot_ids[1:]) if prev != cur)


def switch_indicators(snapshot_ids: Sequence[int]) -> List[bool]:
    return [False] + [prev != cur for prev, cur in zip(snapshot_ids, snapshot_ids[1:])]


def _table(policy: Any) -> np.ndarray:
    if hasattr(policy, "action_table"):
        return np.asarray(policy.action_table())
    return np.asarray(policy)


def behavioral_switching_cost(policies: Sequence[Any]) -> int:
    """Adjacent pairs whose (H, S) action tables differ somewhere"""
    tables = [_table(p) for p in policies]
    return sum(
        1 for prev, cur in zip(tables, tables[1:])
        if prev is not cur and not np.array_equal(prev, cur)
    )


def local_switching_cost(spec: LinearMdpSpec, policies: Sequence[Any], cap: Optional[int] = None) -> int:
    """
    Sum over adjacent episodes of the (h, x) pairs whose greedy action differs.

    Raises:
        InvalidParameterError: If H·|S| exceeds the materialization cap
    """
    cap = settings.local_switch_cap if cap is None else cap
    pairs = spec.horizon * spec.n_states
    if pairs > cap:
        raise InvalidParameterError(f"{pairs} (h, x) pairs exceed the local switching cap {cap}")
    tables = [_table(p) for p in policies]
    for table in tables:
        if table.shape != (spec.horizon, spec.n_states):
            raise TraceMismatchError(f"policy table shape {table.shape} does not match the spec")
    return int(sum(
        np.count_nonzero(prev != cur)
        for prev, cur in zip(tables, tables[1:])
        if prev is not cur
    ))


def bound_ratio(switches: int, d: int, H: int, K: int) -> Optional[float]:
    """switches / (d·H·log K); undefined for K < 2"""
    if K < 2:
        return None
    return switches / (d * H * math.log(K))


def switch_report(trace: RunTrace, spec: LinearMdpSpec, cap: Optional[int] = None) -> SwitchReport:
    """
    Global, behavioral and local switching costs of one run.

    Raises:
        InvariantViolationError: If the local cost leaves [N, |S|·H·N] for
            the behavioral switch count N
    """
    ids = trace.snapshot_ids
    tables = trace.policy_sequence()
    global_switches = global_switching_cost(ids)
    behavioral = behavioral_switching_cost(tables)
    try:
        local: Optional[int] = local_switching_cost(spec, tables, cap)
    except InvalidParameterError as e:
        logger.info(f"Local switching cost not reported: {e}")
        local = None

    if local is not None:
        upper = spec.n_states * spec.horizon * behavioral
        if not behavioral <= local <= upper:
            raise InvariantViolationError(
                f"local switching cost {local} outside [{behavioral}, {upper}]"
            )
    if behavioral > global_switches:
        raise InvariantViolationError(
            f"behavioral switches {behavioral} exceed snapshot switches {global_switches}"
        )
    return SwitchReport(
        global_switches=global_switches,
        behavioral_switches=behavioral,
        local_switches=local,
        indicators=switch_indicators(ids),
        bound_ratio=bound_ratio(global_switches, trace.d, trace.horizon, trace.episodes),
    )


def scaling_fit(points: Sequence[Tuple[float, float]], kind: str) -> FitSummary:
    """
    Ordinary least squares on the stated functional form.

    kind="switch": N = a + b·log K, reports (a, b).
    kind="regret": log R = log c + slope·log K, reports (log c, slope).
    The residual is the root-mean-square of the fitted-space residuals.

    Raises:
        InvalidParameterError: Fewer than 3 points, unknown kind, or a
            nonpositive regret value
        DegenerateFitError: All K equal
    """
    if kind not in FIT_KINDS:
        raise InvalidParameterError(f"unknown fit kind {kind!r}")
    if len(points) < 3:
        raise InvalidParameterError(f"scaling fit needs at least 3 points, got {len(points)}")
    ks = np.array([float(k) for k, _ in points])
    ys = np.array([float(y) for _, y in points])
    if np.any(ks <= 0):
        raise InvalidParameterError("episode counts must be positive")
    if np.unique(ks).size < 2:
        raise DegenerateFitError(f"all {len(points)} points share K={ks[0]:g}")
    if kind == "regret":
        if np.any(ys <= 0):
            raise InvalidParameterError("log-log regret fit needs positive regret values")
        ys = np.log(ys)

    design = np.column_stack([np.ones_like(ks), np.log(ks)])
    coef, *_ = np.linalg.lstsq(design, ys, rcond=None)
    residual = float(np.sqrt(np.mean((design @ coef - ys) ** 2)))
    return FitSummary(kind=kind, intercept=float(coef[0]), slope=float(coef[1]),
                      residual=residual, n_points=len(points))


def _sem(values: np.ndarray) -> np.ndarray:
    if values.shape[0] < 2:
        return np.zeros(values.shape[1:])
    return np.std(values, axis=0, ddof=1) / math.sqrt(values.shape[0])


def replicate_stats(traces: Sequence[RunTrace], reports: Optional[Sequence[SwitchReport]] = None) -> Dict[str, Any]:
    """
    Aggregate replicates that differ only in their seed.

    Raises:
        InvalidParameterError: No traces
        TraceMismatchError: Configs, horizons or episode counts differ
    """
    if not traces:
        raise InvalidParameterError("replicate_stats needs at least one trace")
    first = traces[0]
    for trace in traces[1:]:
        if trace.config != first.config:
            raise TraceMismatchError(f"trace for seed {trace.seed} has a different config")
        if (trace.episodes, trace.horizon, trace.d) != (first.episodes, first.horizon, first.d):
            raise TraceMismatchError(f"trace for seed {trace.seed} has a different shape")

    curves = np.array([trace.cumulative_regret for trace in traces])
    mean, sem = curves.mean(axis=0), _sem(curves)
    switches = np.array([global_switching_cost(trace.snapshot_ids) for trace in traces])
    ratios = [bound_ratio(int(n), first.d, first.horizon, first.episodes) for n in switches]

    stats: Dict[str, Any] = {
        "K": first.episodes,
        "replicates": len(traces),
        "seeds": [trace.seed for trace in traces],
        "mean_cumulative_regret": mean.tolist(),
        "sem_cumulative_regret": sem.tolist(),
        "final_regret_mean": float(mean[-1]) if mean.size else 0.0,
        "final_regret_sem": float(sem[-1]) if sem.size else 0.0,
        "global_switches": {
            "min": int(switches.min()),
            "median": float(np.median(switches)),
            "max": int(switches.max()),
        },
        "bound_ratio_mean": None if ratios[0] is None else float(np.mean(ratios)),
        "optimism_violations": [trace.optimism_violations for trace in traces],
    }
    if reports:
        behavioral = [r.behavioral_switches for r in reports]
        stats["behavioral_switches_max"] = max(behavioral)
        local = [r.local_switches for r in reports]
        stats["local_switches_max"] = None if any(v is None for v in local) else max(local)
    return stats


def baseline_comparison(low_switch: RunTrace, always_switch: RunTrace) -> Dict[str, Any]:
    """Matched (spec, seed) comparison of the two deployment modes; reported only"""
    if low_switch.seed != always_switch.seed or low_switch.episodes != always_switch.episodes:
        raise TraceMismatchError("baseline comparison needs matched seed and K")
    low_global = global_switching_cost(low_switch.snapshot_ids)
    always_behavioral = behavioral_switching_cost(always_switch.policy_sequence())
    regret_ratio = (
        low_switch.total_regret / always_switch.total_regret
        if always_switch.total_regret > 0 else None
    )
    return {
        "seed": low_switch.seed,
        "K": low_switch.episodes,
        "low_switch_global": low_global,
        "always_switch_behavioral": always_behavioral,
        "fewer_switches": low_global <= always_behavioral,
        "regret_ratio": regret_ratio,
    }


def _check(value: Optional[float], threshold: float, passed: bool) -> Dict[str, Any]:
    return {"value": value, "threshold": threshold, "passed": bool(passed)}


def scaling_checks(
    per_k: Dict[int, Dict[str, Any]],
    d: int,
    H: int,
    n_states: Optional[int] = None,
    n_actions: Optional[int] = None,
    regret_fit: Optional[FitSummary] = None,
) -> Dict[str, Dict[str, Any]]:
    """
    Acceptance-style checks over a K sweep. per_k maps K to its
    replicate_stats summary. Checks that need more K points than the sweep
    has are left out.
    """
    ks = sorted(per_k)
    checks: Dict[str, Dict[str, Any]] = {}

    worst = max(
        (per_k[k]["global_switches"]["max"] / (d * H * math.log(k)) for k in ks if k >= 2),
        default=None,
    )
    if worst is not None:
        checks["switch_bound"] = _check(worst, 10.0, worst <= 10.0)

    if n_states is not None and n_actions is not None and all("local_switches_max" in per_k[k] for k in ks):
        local = [
            per_k[k]["local_switches_max"] / (n_states * n_actions * H * math.log(k))
            for k in ks if k >= 2 and per_k[k]["local_switches_max"] is not None
        ]
        if local:
            checks["local_switch_bound"] = _check(max(local), 10.0, max(local) <= 10.0)

    medians = {k: per_k[k]["global_switches"]["median"] for k in ks}
    if len(ks) >= 4:
        late = medians[ks[-1]] - medians[ks[-2]]
        early = medians[ks[1]] - medians[ks[0]] + d * H
        checks["switch_rate_nonincreasing"] = _check(late, early, late <= early)

    if ks:
        fraction = per_k[ks[-1]]["global_switches"]["max"] / ks[-1]
        checks["switch_fraction"] = _check(fraction, 0.05, fraction <= 0.05)

    if regret_fit is not None:
        checks["regret_slope"] = _check(regret_fit.slope, 0.8, regret_fit.slope <= 0.8)

    if len(ks) >= 2:
        first = per_k[ks[0]]["final_regret_mean"] / ks[0]
        last = per_k[ks[-1]]["final_regret_mean"] / ks[-1]
        checks["regret_rate_decay"] = _check(last, 0.5 * first, last <= 0.5 * first)
    return checks
