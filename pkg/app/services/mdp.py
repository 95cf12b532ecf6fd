"""
Environment construction, simulation and exact dynamic programming for
finite linear MDPs.
"""

import logging
import math
from typing import Any, Optional, Tuple, Union

import numpy as np

from app.errors import ConstructionError, InvalidParameterError, InvalidSpecError, PolicyError
from app.models.mdp import LinearMdpSpec, TabularMdpSpec, ValueTables
from app.services.retry import construct_with_retries

logger = logging.getLogger(__name__)


def embed_tabular(spec: TabularMdpSpec) -> LinearMdpSpec:
    """Canonical embedding: φ(s, a) = e_(s·A + a), d = S·A"""
    spec.validate()
    S, A, H = spec.n_states, spec.n_actions, spec.horizon
    d = S * A
    features = np.eye(d).reshape(S, A, d)
    # μ_h(x')[(s,a)] = P_h(x'|s,a)
    measures = spec.transitions.reshape(H, d, S).transpose(0, 2, 1)
    reward_vecs = spec.rewards.reshape(H, d)
    linear = LinearMdpSpec(
        d=d,
        horizon=H,
        n_states=S,
        n_actions=np.full(S, A),
        features=features,
        measures=measures,
        reward_vecs=reward_vecs,
        initial_state=spec.initial_state,
        metadata={"source": "tabular", "S": S, "A": A},
    )
    return linear.validate()


def sample_categorical(probs: np.ndarray, rng: np.random.Generator) -> int:
    """Inverse-CDF draw from one uniform"""
    u = rng.random()
    index = int(np.searchsorted(np.cumsum(probs), u, side="right"))
    return min(index, len(probs) - 1)


def _check_step(horizon: int, n_feasible: int, h: int, a: int) -> None:
    if not 0 <= h < horizon:
        raise InvalidParameterError(f"level {h} outside [0, {horizon})")
    if not 0 <= a < n_feasible:
        raise PolicyError(f"action {a} infeasible (state has {n_feasible} actions)")


def step(spec: LinearMdpSpec, h: int, x: int, a: int, rng: np.random.Generator) -> Tuple[float, int]:
    """One environment transition: returns (reward, next_state)"""
    _check_step(spec.horizon, int(spec.n_actions[x]), h, a)
    reward = float(spec.rewards[h, x, a])
    return reward, sample_categorical(spec.transitions[h, x, a], rng)


def step_tabular(spec: TabularMdpSpec, h: int, x: int, a: int, rng: np.random.Generator) -> Tuple[float, int]:
    _check_step(spec.horizon, spec.n_actions, h, a)
    reward = float(spec.rewards[h, x, a])
    return reward, sample_categorical(spec.transitions[h, x, a], rng)


def _masked_max(q: np.ndarray, mask: np.ndarray) -> Tuple[np.ndarray, np.ndarray]:
    masked = np.where(mask, q, -np.inf)
    best = np.argmax(masked, axis=1)
    return masked[np.arange(q.shape[0]), best], best


def optimal_values(spec: LinearMdpSpec) -> ValueTables:
    """Exact backward induction; ties broken by lowest action id"""
    H, S = spec.horizon, spec.n_states
    V = np.zeros((H + 1, S))
    Q = np.full((H, S, spec.max_actions), np.nan)
    for h in range(H - 1, -1, -1):
        q = spec.rewards[h] + spec.transitions[h] @ V[h + 1]
        q = np.where(spec.action_mask, q, np.nan)
        Q[h] = q
        V[h], _ = _masked_max(q, spec.action_mask)
    return ValueTables(V=V, Q=Q)


def optimal_policy(spec: LinearMdpSpec, tables: Optional[ValueTables] = None) -> np.ndarray:
    """Greedy (H, S) action table of the optimal Q"""
    if tables is None:
        tables = optimal_values(spec)
    return np.stack([_masked_max(tables.Q[h], spec.action_mask)[1] for h in range(spec.horizon)])


def reachable_states(spec: LinearMdpSpec, policy_table: Optional[np.ndarray] = None) -> np.ndarray:
    """
    (H, S) boolean reachability from the initial state. With a policy table
    only the policy's actions are followed; otherwise every feasible action.
    """
    H, S = spec.horizon, spec.n_states
    reach = np.zeros((H, S), dtype=bool)
    reach[0, spec.initial_state] = True
    for h in range(H - 1):
        for x in np.flatnonzero(reach[h]):
            if policy_table is None:
                actions = spec.feasible_actions(x)
            else:
                a = int(policy_table[h, x])
                if not 0 <= a < spec.n_actions[x]:
                    raise PolicyError(f"policy undefined at reachable (h={h}, x={x})")
                actions = [a]
            for a in actions:
                reach[h + 1] |= spec.transitions[h, x, a] > 0.0
    return reach


PolicyLike = Union[np.ndarray, Any]


def _as_table(spec: LinearMdpSpec, policy: PolicyLike) -> np.ndarray:
    if hasattr(policy, "action_table"):
        return np.asarray(policy.action_table(spec), dtype=int)
    return np.asarray(policy, dtype=int)


def policy_value(spec: LinearMdpSpec, policy: PolicyLike) -> ValueTables:
    """
    Exact evaluation of a deterministic policy, given as an (H, S) action
    table or an object exposing action_table(spec). Unreachable cells may
    hold -1.
    """
    H, S = spec.horizon, spec.n_states
    table = _as_table(spec, policy)
    if table.shape != (H, S):
        raise PolicyError(f"policy table shape {table.shape}, expected {(H, S)}")
    reach = reachable_states(spec, table)

    V = np.zeros((H + 1, S))
    Q = np.full((H, S, spec.max_actions), np.nan)
    for h in range(H - 1, -1, -1):
        q = spec.rewards[h] + spec.transitions[h] @ V[h + 1]
        Q[h] = np.where(spec.action_mask, q, np.nan)
        actions = table[h]
        defined = (actions >= 0) & (actions < spec.n_actions)
        if np.any(reach[h] & ~defined):
            bad = int(np.flatnonzero(reach[h] & ~defined)[0])
            raise PolicyError(f"policy undefined at reachable (h={h}, x={bad})")
        safe = np.where(defined, actions, 0)
        V[h] = np.where(defined, q[np.arange(S), safe], 0.0)
    return ValueTables(V=V, Q=Q)


def random_tabular(S: int, A: int, H: int, sparsity: float, seed: int) -> TabularMdpSpec:
    """Seeded random tabular MDP with Dirichlet rows on ceil(sparsity·S) successors"""
    if min(S, A, H) < 1:
        raise InvalidParameterError(f"S, A, H must be >= 1 (got {S}, {A}, {H})")
    if not 0.0 < sparsity <= 1.0:
        raise InvalidParameterError(f"sparsity must lie in (0, 1], got {sparsity!r}")
    rng = np.random.default_rng(seed)
    support = max(1, math.ceil(sparsity * S))
    transitions = np.zeros((H, S, A, S))
    for h in range(H):
        for s in range(S):
            for a in range(A):
                successors = rng.choice(S, size=support, replace=False)
                transitions[h, s, a, successors] = rng.dirichlet(np.ones(support))
    transitions /= transitions.sum(axis=-1, keepdims=True)
    rewards = rng.uniform(0.0, 1.0, size=(H, S, A))
    return TabularMdpSpec(S, A, H, transitions, rewards, initial_state=0).validate()


def random_linear(
    d: int,
    H: int,
    n_states: int,
    seed: int,
    n_actions: int = 2,
    feature_mode: str = "simplex",
) -> LinearMdpSpec:
    """
    Linear MDP as a mixture of d anchor kernels: μ_h(·)[k] is the k-th anchor
    distribution at level h and each φ(x, a) lies on the probability simplex,
    so every kernel row is a convex combination of anchors.
    """
    if min(d, H, n_states, n_actions) < 1:
        raise InvalidParameterError("d, H, n_states and n_actions must be >= 1")
    if feature_mode not in ("simplex", "corners"):
        raise InvalidParameterError(f"unknown feature_mode {feature_mode!r}")
    if feature_mode == "corners" and d != n_states * n_actions:
        raise InvalidParameterError("corners mode requires d == n_states * n_actions")
    if n_states < d:
        logger.debug(f"random_linear with n_states={n_states} < d={d}")

    rng = np.random.default_rng(seed)

    def build() -> LinearMdpSpec:
        anchors = rng.dirichlet(np.ones(n_states), size=(H, d))    # (H, d, S)
        measures = anchors.transpose(0, 2, 1)
        if feature_mode == "corners":
            features = np.eye(d).reshape(n_states, n_actions, d)
        else:
            features = rng.dirichlet(np.ones(d), size=(n_states, n_actions))
        # project onto [0, 1]^d so every simplex mixture yields a reward in [0, 1]
        reward_vecs = np.clip(rng.uniform(-0.25, 1.25, size=(H, d)), 0.0, 1.0)
        rank = np.linalg.matrix_rank(features.reshape(-1, d))
        if rank < min(d, n_states * n_actions):
            raise ConstructionError(f"feature matrix rank {rank} below {min(d, n_states * n_actions)}")
        spec = LinearMdpSpec(
            d=d,
            horizon=H,
            n_states=n_states,
            n_actions=np.full(n_states, n_actions),
            features=features,
            measures=measures,
            reward_vecs=reward_vecs,
            initial_state=0,
            metadata={"source": "linear_random", "feature_mode": feature_mode, "seed": seed},
        )
        try:
            return spec.validate()
        except InvalidSpecError as e:
            raise ConstructionError(str(e)) from e

    return construct_with_retries(build)
