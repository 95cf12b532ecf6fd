"""
Low-switching least-squares value iteration with UCB bonuses.

The agent keeps one covariance per level. At the start of every episode it
compares each level's current covariance with the covariance frozen at the
last deployment; if any level has gained enough information that
Λ_ref⁻¹ ⋠ 2·Λ_cur⁻¹, the optimistic Q estimate is recomputed from the full
history and redeployed. Otherwise the deployed greedy policy is kept.
"""

import logging
import math
import time
from dataclasses import dataclass, field
from typing import Callable, Dict, List, Optional, Sequence, Tuple

import numpy as np

from app.errors import DimensionMismatchError, InvalidParameterError, NumericalFaultError
from app.models.mdp import EpisodeTrajectory, LinearMdpSpec, ValueTables
from app.models.schemas import AgentConfig
from app.models.trace import EpisodeRecord, RunTrace
from app.services.covariance import (
    LOG_TWO,
    CovarianceState,
    new_covariance,
    switch_required,
    verify_det_growth,
)
from app.services.invariants import InvariantMonitor
from app.services.mdp import optimal_values, policy_value, step

logger = logging.getLogger(__name__)

RESIDUAL_TOLERANCE = 1e-6
DOMINATION_TOLERANCE = 1e-8
OPTIMISM_TOLERANCE = 1e-8
VALUE_TOLERANCE = 1e-10

# counted, never abort a run
SOFT_INVARIANTS = frozenset({"optimism", "fresh_agreement"})


@dataclass(eq=False)
class QEstimate:
    """
    Optimistic Q̃_h(x, a) = clip(w_hᵀφ + β·√(φᵀΛ_h⁻¹φ), 0, H) for every level,
    with the covariance inverses frozen at estimation time.
    """
    weights: np.ndarray            # (H, d)
    inverses: np.ndarray           # (H, d, d)
    beta: float
    horizon: int
    q_values: np.ndarray           # (H, S, A_max), NaN at infeasible actions
    floor: bool = True

    def values(self, h: int, phis: np.ndarray) -> np.ndarray:
        """Q̃_h for arbitrary feature rows (n, d)"""
        phis = np.atleast_2d(np.asarray(phis, dtype=float))
        quad = np.einsum("nd,de,ne->n", phis, self.inverses[h], phis)
        raw = phis @ self.weights[h] + self.beta * np.sqrt(np.maximum(quad, 0.0))
        return _clip(raw, self.horizon, self.floor)

    def to_dict(self) -> Dict:
        return {"weights": self.weights.tolist(), "beta": self.beta, "horizon": self.horizon}


def _clip(raw: np.ndarray, horizon: int, floor: bool) -> np.ndarray:
    clipped = np.minimum(raw, float(horizon))
    return np.maximum(clipped, 0.0) if floor else clipped


@dataclass(eq=False)
class PolicySnapshot:
    """Deployed greedy policy; identity is the snapshot id"""
    q: QEstimate
    origin_episode: int
    snapshot_id: int
    ref_covariances: List[CovarianceState] = field(default_factory=list)
    _table: Optional[np.ndarray] = field(default=None, repr=False)

    def __eq__(self, other) -> bool:
        return isinstance(other, PolicySnapshot) and other.snapshot_id == self.snapshot_id

    def __hash__(self) -> int:
        return hash(self.snapshot_id)

    def action_table(self, spec: Optional[LinearMdpSpec] = None) -> np.ndarray:
        """(H, S) greedy actions, lowest id on ties"""
        if self._table is None:
            self._table = greedy_table(self.q.q_values)
            self._table.setflags(write=False)
        return self._table

    def to_dict(self) -> Dict:
        return {
            "snapshot_id": self.snapshot_id,
            "origin_episode": self.origin_episode,
            "beta": self.q.beta,
            "weights": self.q.weights.tolist(),
        }


def greedy_table(q_values: np.ndarray) -> np.ndarray:
    """Argmax over actions with NaN (infeasible) cells never chosen"""
    return np.argmax(np.where(np.isnan(q_values), -np.inf, q_values), axis=2)


def _q_table(spec: LinearMdpSpec, h_weights: np.ndarray, inverse: np.ndarray, beta: float, floor: bool) -> np.ndarray:
    quad = np.einsum("sad,de,sae->sa", spec.features, inverse, spec.features)
    raw = spec.features @ h_weights + beta * np.sqrt(np.maximum(quad, 0.0))
    table = _clip(raw, spec.horizon, floor)
    return np.where(spec.action_mask, table, np.nan)


def estimate_q(
    history: Sequence[EpisodeTrajectory],
    config: AgentConfig,
    cov: Sequence[CovarianceState],
    spec: LinearMdpSpec,
    beta: Optional[float] = None,
) -> QEstimate:
    """
    Backward ridge-regression pass h = H-1..0 over the whole history, with
    regression targets r + max_a Q̃_{h+1}(x', a) and Q̃_H ≡ 0.
    """
    H, d = spec.horizon, spec.d
    if len(cov) != H:
        raise DimensionMismatchError(f"{len(cov)} covariance states for H={H}")
    for h, state in enumerate(cov):
        if state.dim != d:
            raise DimensionMismatchError(f"level {h} covariance has dim {state.dim}, spec d={d}")
        if state.count != len(history):
            raise DimensionMismatchError(
                f"level {h} covariance absorbed {state.count} features, history has {len(history)} episodes"
            )
    beta = config.resolve_beta(d, H) if beta is None else beta
    floor = not config.strict_paper

    n = len(history)
    if n:
        phis = np.array([np.stack(t.features) for t in history])        # (n, H, d)
        rewards = np.array([t.rewards for t in history])                 # (n, H)
        successors = np.array([t.states[1:] for t in history])           # (n, H)

    weights = np.zeros((H, d))
    q_values = np.full((H, spec.n_states, spec.max_actions), np.nan)
    next_values = np.zeros(spec.n_states)
    for h in range(H - 1, -1, -1):
        if n:
            targets = rewards[:, h] + (next_values[successors[:, h]] if h < H - 1 else 0.0)
            rhs = phis[:, h, :].T @ targets
            weights[h] = cov[h].inverse @ rhs
            residual = float(np.linalg.norm(cov[h].matrix @ weights[h] - rhs))
            if residual > RESIDUAL_TOLERANCE * float(np.linalg.norm(rhs)):
                raise NumericalFaultError(f"ridge residual {residual:.3e} too large at level {h}")
        q_values[h] = _q_table(spec, weights[h], cov[h].inverse, beta, floor)
        next_values = np.max(np.where(spec.action_mask, q_values[h], -np.inf), axis=1)

    inverses = np.array([state.inverse for state in cov])
    return QEstimate(weights=weights, inverses=inverses, beta=beta, horizon=H, q_values=q_values, floor=floor)


def act(snapshot: PolicySnapshot, x: int, h: int, feasible_actions: Sequence[int]) -> int:
    """Greedy action under the snapshot's Q̃_h(x, ·); lowest id wins ties"""
    ordered = sorted(int(a) for a in feasible_actions)
    if not ordered:
        raise InvalidParameterError(f"no feasible actions at state {x}")
    row = snapshot.q.q_values[h, x, ordered]
    return ordered[int(np.argmax(row))]


def maybe_switch(
    cur_cov: Sequence[CovarianceState],
    current: Optional[PolicySnapshot],
    new_q_builder: Callable[[], QEstimate],
    episode: int,
    mode: str = "low_switch",
) -> Tuple[bool, PolicySnapshot, List[int]]:
    """
    Decide whether to redeploy. The reference covariances are the ones
    frozen in the current snapshot. Returns (switched, snapshot, triggered
    levels); the first deployment reports switched=True with no levels.
    """
    if current is None:
        triggered: List[int] = []
    elif mode == "always_switch":
        triggered = []
    else:
        triggered = [
            h for h, (ref, cur) in enumerate(zip(current.ref_covariances, cur_cov))
            if switch_required(ref, cur)
        ]
        if not triggered:
            return False, current, []

    snapshot = PolicySnapshot(
        q=new_q_builder(),
        origin_episode=episode,
        snapshot_id=0 if current is None else current.snapshot_id + 1,
        ref_covariances=[state.snapshot() for state in cur_cov],
    )
    return True, snapshot, triggered


class LowSwitchAgent:
    """
    One agent run on one environment.

    Args:
        spec: Environment
        config: Agent hyperparameters (config.K must be set)
        monitor: Invariant guard (a fresh one when omitted)
    """

    def __init__(self, spec: LinearMdpSpec, config: AgentConfig, monitor: Optional[InvariantMonitor] = None):
        if config.K is None:
            raise InvalidParameterError("agent config needs the planned episode count K")
        self.spec = spec
        self.config = config
        self.beta = config.resolve_beta(spec.d, spec.horizon, config.K)
        self.monitor = monitor or InvariantMonitor(soft=set(SOFT_INVARIANTS))
        self.monitor.soft.add("fresh_agreement")
        self.covariances = [new_covariance(spec.d, config.lam) for _ in range(spec.horizon)]
        self.history: List[EpisodeTrajectory] = []
        self.snapshot: Optional[PolicySnapshot] = None
        self.optimal = optimal_values(spec)
        self.optimism_violations = 0
        self._values: Dict[int, ValueTables] = {}

    def _build_q(self) -> QEstimate:
        return estimate_q(self.history, self.config, self.covariances, self.spec, beta=self.beta)

    def _check_optimism(self, snapshot: PolicySnapshot) -> None:
        gap = snapshot.q.q_values - self.optimal.Q
        cells = int(np.sum(gap[:, self.spec.action_mask] < -OPTIMISM_TOLERANCE))
        self.optimism_violations += cells
        worst = float(np.nanmin(gap)) if np.any(self.spec.action_mask) else 0.0
        self.monitor.check("optimism", cells == 0, slack=worst,
                           detail=f"{cells} cells below Q* in snapshot {snapshot.snapshot_id}")

    def _check_equivalence(self, episode: int) -> None:
        fresh = self._build_q()
        disagreements = int(np.count_nonzero(greedy_table(fresh.q_values) != self.snapshot.action_table()))
        self.monitor.check("fresh_agreement", disagreements == 0, slack=-float(disagreements),
                           detail=f"episode {episode}: fresh greedy policy differs at {disagreements} (h, x) pairs")
        prefix = self.history[: self.snapshot.origin_episode - 1]
        replay = estimate_q(prefix, self.config, self.snapshot.ref_covariances, self.spec, beta=self.beta)
        drift = float(np.max(np.abs(replay.weights - self.snapshot.q.weights)))
        self.monitor.check("snapshot_equivalence", drift <= 1e-9, slack=-drift,
                           detail=f"replayed weights drift {drift:.3e}")

    def begin_episode(self, episode: int) -> Tuple[bool, List[int]]:
        previous = self.snapshot
        switched, self.snapshot, triggered = maybe_switch(
            self.covariances, previous, self._build_q, episode, self.config.mode
        )
        if switched:
            for h in triggered:
                ref, cur = previous.ref_covariances[h], self.covariances[h]
                gain = cur.logdet - ref.logdet
                self.monitor.check("det_growth", verify_det_growth(ref, cur), slack=gain - LOG_TWO,
                                   detail=f"level {h} log-det gain {gain:.6f} < log 2")
            if self.config.track_optimism:
                self._check_optimism(self.snapshot)
            if previous is not None:
                logger.debug(f"episode {episode}: switch to snapshot {self.snapshot.snapshot_id} "
                             f"(levels {triggered})")
        elif self.config.recompute_every_episode:
            self._check_equivalence(episode)
        return switched and previous is not None, triggered

    def deployed_value(self) -> ValueTables:
        sid = self.snapshot.snapshot_id
        if sid not in self._values:
            self._values = {sid: policy_value(self.spec, self.snapshot)}
        return self._values[sid]

    def rollout(self, x: int, rng: np.random.Generator) -> EpisodeTrajectory:
        spec = self.spec
        states, actions, rewards, features = [x], [], [], []
        for h in range(spec.horizon):
            a = act(self.snapshot, x, h, spec.feasible_actions(x))
            phi = spec.features[x, a]
            deployed = self.snapshot.ref_covariances[h].quad_form(phi)
            current = self.covariances[h].quad_form(phi)
            slack = 2.0 * current + DOMINATION_TOLERANCE - deployed
            self.monitor.check("delayed_domination", slack >= 0.0, slack=slack,
                               detail=f"level {h}: deployed bonus form {deployed:.6e} > 2x current {current:.6e}")
            reward, x = step(spec, h, x, a, rng)
            states.append(x)
            actions.append(a)
            rewards.append(reward)
            features.append(phi)
        return EpisodeTrajectory(states=states, actions=actions, rewards=rewards, features=features)

    def absorb(self, trajectory: EpisodeTrajectory) -> None:
        self.history.append(trajectory)
        for state, phi in zip(self.covariances, trajectory.features):
            state.update(phi)


def run_agent(
    spec: LinearMdpSpec,
    config: AgentConfig,
    seed: int,
    monitor: Optional[InvariantMonitor] = None,
    initial_state_schedule: Optional[Callable[[int], int]] = None,
) -> RunTrace:
    """Play config.K episodes; deterministic given (spec, config, seed)"""
    started = time.perf_counter()
    agent = LowSwitchAgent(spec, config, monitor)
    rng = np.random.default_rng(seed)
    records: List[EpisodeRecord] = []
    policies: Dict[int, np.ndarray] = {}
    cumulative = 0.0

    logger.info(f"🚀 Running {config.mode} agent: K={config.K}, d={spec.d}, H={spec.horizon}, beta={agent.beta:.4g}")
    for k in range(1, config.K + 1):
        switched, _ = agent.begin_episode(k)
        snapshot = agent.snapshot
        policies.setdefault(snapshot.snapshot_id, snapshot.action_table())

        x1 = spec.initial_state if initial_state_schedule is None else int(initial_state_schedule(k))
        trajectory = agent.rollout(x1, rng)
        agent.absorb(trajectory)

        gap = float(agent.optimal.V[0, x1] - agent.deployed_value().V[0, x1])
        agent.monitor.check("policy_below_optimal", gap >= -VALUE_TOLERANCE, slack=gap,
                            detail=f"episode {k}: policy value exceeds V* by {-gap:.3e}")
        increment = max(gap, 0.0)
        cumulative += increment
        records.append(EpisodeRecord(
            episode=k,
            ret=trajectory.total_reward,
            regret_increment=increment,
            cumulative_regret=cumulative,
            switched=switched,
            snapshot_id=snapshot.snapshot_id,
            logdets=[state.logdet for state in agent.covariances],
        ))

    echo = config.model_dump(by_alias=True)
    echo["beta_resolved"] = agent.beta
    trace = RunTrace(
        records=records,
        config=echo,
        seed=seed,
        horizon=spec.horizon,
        d=spec.d,
        wall_time=time.perf_counter() - started,
        policies=policies,
        trajectories=agent.history,
        optimism_violations=agent.optimism_violations,
        monitor=agent.monitor.get_state(),
    )
    switches = sum(r.switched for r in records)
    potential = sum(
        (state.logdet - spec.d * math.log(config.lam)) for state in agent.covariances
    ) / LOG_TWO
    if config.mode == "low_switch":
        agent.monitor.check("switch_potential", switches <= potential + 1e-6, slack=potential - switches,
                            detail=f"{switches} switches exceed potential bound {potential:.3f}")
    logger.info(f"✅ Run finished: regret={cumulative:.4f}, switches={switches}, "
                f"wall={trace.wall_time:.2f}s")
    return trace
