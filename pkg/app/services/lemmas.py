"""
Standalone property sweeps for the covariance engine:
- det growth: every triggered switch raises log det by at least log 2
- log-det bound: after K unit-norm updates log det stays under d·log d + d·log(K + λ)
"""

import logging
from typing import Any, Dict, Optional, Sequence

import numpy as np

from app.services.covariance import (
    DET_GROWTH_TOLERANCE,
    LOG_TWO,
    logdet_bound,
    new_covariance,
    switch_required,
)
from app.services.invariants import InvariantMonitor

logger = logging.getLogger(__name__)

DEFAULT_DIMS = (1, 2, 4, 8, 16)
BOUND_TOLERANCE = 1e-6
MAX_STREAM = 10_000


def unit_vector(rng: np.random.Generator, d: int) -> np.ndarray:
    v = rng.normal(size=d)
    norm = np.linalg.norm(v)
    return v / norm if norm > 0 else np.eye(d)[0]


def _stream(rng: np.random.Generator, d: int):
    """Unit features; half the streams reuse a small pool of directions"""
    if rng.random() < 0.5:
        pool = [unit_vector(rng, d) for _ in range(int(rng.integers(1, d + 1)))]
        while True:
            yield pool[int(rng.integers(len(pool)))]
    while True:
        yield unit_vector(rng, d)


def det_growth_sweep(
    trials: int,
    seed: int = 0,
    dims: Sequence[int] = DEFAULT_DIMS,
    lam: float = 1.0,
    monitor: Optional[InvariantMonitor] = None,
) -> Dict[str, Any]:
    """
    Each trial warms a covariance up, freezes a reference, then feeds the
    stream until switch_required fires and checks the log-det gain.
    """
    rng = np.random.default_rng(seed)
    monitor = monitor or InvariantMonitor(soft={"det_growth"})
    triggered = 0
    for trial in range(trials):
        d = int(dims[trial % len(dims)])
        stream = _stream(rng, d)
        cur = new_covariance(d, lam)
        for _ in range(int(rng.integers(0, 4 * d + 1))):
            cur.update(next(stream))
        ref = cur.snapshot()
        for _ in range(MAX_STREAM):
            cur.update(next(stream))
            if switch_required(ref, cur):
                gain = cur.logdet - ref.logdet
                monitor.check("det_growth", gain >= LOG_TWO - DET_GROWTH_TOLERANCE, slack=gain - LOG_TWO,
                              detail=f"trial {trial} d={d}: gain {gain:.12f}")
                triggered += 1
                break
    state = monitor.get_state()
    failures = state["violations"].get("det_growth", 0)
    logger.info(f"Det-growth sweep: {triggered}/{trials} switches triggered, {failures} failures")
    return {
        "trials": trials,
        "triggered": triggered,
        "failures": failures,
        "min_margin": state["worst_slack"].get("det_growth"),
    }


def logdet_bound_sweep(
    dims: Sequence[int] = (2, 4, 8),
    updates: int = 10_000,
    replicates: int = 20,
    seed: int = 0,
    lam: float = 1.0,
    monitor: Optional[InvariantMonitor] = None,
) -> Dict[str, Any]:
    """Random unit updates; the final log det is compared with the bound"""
    monitor = monitor or InvariantMonitor(soft={"logdet_bound"})
    for d in dims:
        for r in range(replicates):
            rng = np.random.default_rng([seed, d, r])
            state = new_covariance(int(d), lam)
            for _ in range(updates):
                state.update(unit_vector(rng, int(d)))
            bound = logdet_bound(int(d), updates, lam)
            monitor.check("logdet_bound", state.logdet <= bound + BOUND_TOLERANCE, slack=bound - state.logdet,
                          detail=f"d={d} replicate {r}: logdet {state.logdet:.6f} > {bound:.6f}")
    result = monitor.get_state()
    failures = result["violations"].get("logdet_bound", 0)
    logger.info(f"Log-det bound sweep: {len(dims) * replicates} runs, {failures} failures")
    return {
        "dims": list(dims),
        "updates": updates,
        "replicates": replicates,
        "failures": failures,
        "min_margin": result["worst_slack"].get("logdet_bound"),
    }
