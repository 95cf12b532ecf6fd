"""
Combination-lock family used for the global switching-cost lower bound.

States: u (start), v (rewarding sink), w (trap sink) and lock states
s_{m,i} for lock level m ∈ [0, H0) and index i ∈ [0, d0). At even levels
2m the agent sits at u and picks one of d0 actions; action j leads to
s_{m,j}. At odd levels 2m+1 the lock state either returns to u (correct
index), opens into v (correct index at the last lock level) or falls
into w. Only v pays reward.
"""

import logging
from typing import Any, Dict, Iterable, Sequence

import numpy as np

from app.errors import ConstructionError, InvalidSpecError, TraceMismatchError
from app.models.mdp import EpisodeTrajectory, LinearMdpSpec
from app.models.schemas import HardInstanceParams

logger = logging.getLogger(__name__)

U, V, W = 0, 1, 2
LOCK_OFFSET = 3

RECONCILIATIONS = [
    "lock states share the feature of their index across lock levels; the level-indexed measures route them",
    "level offset: u moves to s_{m,j} at 0-based level 2m and the lock resolves at level 2m+1, "
    "one step earlier than the stated mu_{2h}/mu_{2h+1} indexing",
    "v feature placed at coordinate 3*d0 (0-based) because the stated e_{3d0} coincides with the feature of s_{h,d0}",
    "the v entry at the last lock level sits on the lock feature of i_{h*}; j_star is recorded but routes nothing",
    "the w measure keeps only the wrong-index lock features instead of the stated sum over blocks 0 and 1",
    "unreachable rows (u at odd levels, lock features at even levels or past h*) absorb into w",
]


def lock_state(d0: int, m: int, i: int) -> int:
    return LOCK_OFFSET + m * d0 + i


def build_hard_instance(params: HardInstanceParams) -> LinearMdpSpec:
    """Build the lock as a finite linear MDP with d = 4·d0 and H = 2·H0"""
    d0, H0 = params.d0, params.H0
    h_star, correct = params.resolve()
    d, H = 4 * d0, 2 * H0
    n_states = LOCK_OFFSET + H0 * d0

    u_feature = np.arange(d0)
    lock_feature = 2 * d0 + np.arange(d0)
    v_feature = 3 * d0
    w_feature = 4 * d0 - 1

    n_actions = np.ones(n_states, dtype=int)
    n_actions[U] = d0
    features = np.zeros((n_states, d0, d))
    features[U, np.arange(d0), u_feature] = 1.0
    features[V, 0, v_feature] = 1.0
    features[W, 0, w_feature] = 1.0
    for m in range(H0):
        for i in range(d0):
            features[lock_state(d0, m, i), 0, lock_feature[i]] = 1.0

    measures = np.zeros((H, n_states, d))
    measures[:, V, v_feature] = 1.0
    measures[:, W, w_feature] = 1.0
    for level in range(H):
        m, odd = divmod(level, 2)
        if not odd:
            for j in range(d0):
                measures[level, lock_state(d0, m, j), u_feature[j]] = 1.0
            measures[level, W, lock_feature] = 1.0
            continue
        measures[level, W, u_feature] = 1.0
        for i in range(d0):
            if m < h_star and i == correct[m]:
                target = V if m + 1 == h_star else U
            else:
                target = W
            measures[level, target, lock_feature[i]] = 1.0

    reward_vecs = np.zeros((H, d))
    reward_vecs[:, v_feature] = 1.0

    meta: Dict[str, Any] = {
        "d0": d0,
        "H0": H0,
        "h_star": h_star,
        "correct_actions": correct,
        "j_star": params.j_star,
        "seed": params.seed,
        "reconciliations": list(RECONCILIATIONS),
    }
    spec = LinearMdpSpec(
        d=d,
        horizon=H,
        n_states=n_states,
        n_actions=n_actions,
        features=features,
        measures=measures,
        reward_vecs=reward_vecs,
        initial_state=U,
        metadata={"source": "hard_instance", "hard_instance_meta": meta},
    )
    try:
        spec.validate()
    except InvalidSpecError as e:
        raise ConstructionError(f"hard instance reconciliation failed: {e}") from e
    logger.debug(f"Built hard instance d0={d0} H0={H0} h_star={h_star} correct={correct}")
    return spec


def hard_instance_meta(spec: LinearMdpSpec) -> Dict[str, Any]:
    meta = spec.metadata.get("hard_instance_meta")
    if meta is None:
        raise TraceMismatchError("spec is not a hard instance")
    return meta


def optimal_lock_value(spec: LinearMdpSpec) -> int:
    """V_1*(u) = H − 2·h_star"""
    return spec.horizon - 2 * hard_instance_meta(spec)["h_star"]


def wrong_lock_states(spec: LinearMdpSpec) -> set:
    meta = hard_instance_meta(spec)
    d0, H0, h_star, correct = meta["d0"], meta["H0"], meta["h_star"], meta["correct_actions"]
    return {
        lock_state(d0, m, i)
        for m in range(H0)
        for i in range(d0)
        if m >= h_star or i != correct[m]
    }


def lock_policy_table(spec: LinearMdpSpec, choices: Sequence[int]) -> np.ndarray:
    """(H, S) action table that plays choices[m] at u on lock level m (0 elsewhere)"""
    meta = hard_instance_meta(spec)
    if len(choices) != meta["H0"]:
        raise TraceMismatchError(f"need {meta['H0']} lock choices, got {len(choices)}")
    table = np.zeros((spec.horizon, spec.n_states), dtype=int)
    for m, j in enumerate(choices):
        table[2 * m, U] = int(j)
    return table


def count_distinct_prefixes(traces: Iterable[EpisodeTrajectory], spec: LinearMdpSpec) -> int:
    """Number of distinct wrong lock states visited across the traces"""
    wrong = wrong_lock_states(spec)
    seen: set = set()
    for trace in traces:
        if len(trace.actions) != spec.horizon or any(not 0 <= x < spec.n_states for x in trace.states):
            raise TraceMismatchError("trajectory does not belong to this instance")
        seen.update(x for x in trace.states if x in wrong)
    return len(seen)
