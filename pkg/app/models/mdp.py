"""
Episodic MDP descriptions over finite state spaces.

Levels are 0-based throughout: h ranges over [0, H). Action sets are
per-state prefixes 0..n_actions[x]-1; feature tensors are padded with zeros
beyond a state's feasible actions.
"""

from dataclasses import dataclass, field
from functools import cached_property
from typing import Any, Dict, List

import numpy as np

from app.errors import InvalidSpecError

SPEC_TOLERANCE = 1e-9


@dataclass(frozen=True, eq=False)
class LinearMdpSpec:
    """
    Generative description of a linear MDP.

    P_h(x'|x,a) = <features[x, a], measures[h, x']> and
    r_h(x, a) = <features[x, a], reward_vecs[h]>.
    """
    d: int
    horizon: int
    n_states: int
    n_actions: np.ndarray          # (S,) feasible action count per state
    features: np.ndarray           # (S, A_max, d)
    measures: np.ndarray           # (H, S, d)
    reward_vecs: np.ndarray        # (H, d)
    initial_state: int = 0
    metadata: Dict[str, Any] = field(default_factory=dict)

    def __post_init__(self):
        for name in ("n_actions", "features", "measures", "reward_vecs"):
            arr = np.array(getattr(self, name), dtype=int if name == "n_actions" else float)
            arr.setflags(write=False)
            object.__setattr__(self, name, arr)

    @property
    def max_actions(self) -> int:
        return int(self.features.shape[1])

    @cached_property
    def action_mask(self) -> np.ndarray:
        """(S, A_max) boolean mask of feasible actions"""
        return np.arange(self.max_actions)[None, :] < self.n_actions[:, None]

    @cached_property
    def transitions(self) -> np.ndarray:
        """(H, S, A_max, S) kernel tensor; infeasible actions carry zeros"""
        kernel = np.einsum("sad,htd->hsat", self.features, self.measures)
        kernel[:, ~self.action_mask, :] = 0.0
        kernel.setflags(write=False)
        return kernel

    @cached_property
    def rewards(self) -> np.ndarray:
        """(H, S, A_max) mean rewards; infeasible actions carry zeros"""
        table = np.einsum("sad,hd->hsa", self.features, self.reward_vecs)
        table[:, ~self.action_mask] = 0.0
        table.setflags(write=False)
        return table

    def feasible_actions(self, x: int) -> List[int]:
        return list(range(int(self.n_actions[x])))

    def problems(self) -> List[str]:
        """Collect every invariant violation (empty list means valid)"""
        issues: List[str] = []
        S, H, d = self.n_states, self.horizon, self.d
        if d < 1 or H < 1 or S < 1:
            return [f"d, H and n_states must be >= 1 (got d={d}, H={H}, S={S})"]
        if self.n_actions.shape != (S,) or np.any(self.n_actions < 1):
            issues.append("every state needs at least one feasible action")
            return issues
        if self.features.shape != (S, self.max_actions, d) or self.max_actions < int(self.n_actions.max()):
            issues.append(f"features shape {self.features.shape} inconsistent with S={S}, d={d}")
            return issues
        if self.measures.shape != (H, S, d):
            issues.append(f"measures shape {self.measures.shape}, expected {(H, S, d)}")
            return issues
        if self.reward_vecs.shape != (H, d):
            issues.append(f"reward_vecs shape {self.reward_vecs.shape}, expected {(H, d)}")
            return issues
        if not 0 <= self.initial_state < S:
            issues.append(f"initial_state {self.initial_state} outside [0, {S})")

        norms = np.linalg.norm(self.features, axis=2)[self.action_mask]
        if np.any(norms > 1.0 + SPEC_TOLERANCE):
            issues.append(f"feature norm up to {norms.max()!r} exceeds 1")
        bound = np.sqrt(d) + SPEC_TOLERANCE
        theta_norms = np.linalg.norm(self.reward_vecs, axis=1)
        if np.any(theta_norms > bound):
            issues.append(f"reward vector norm {theta_norms.max()!r} exceeds sqrt(d)")
        measure_norms = np.linalg.norm(np.abs(self.measures).sum(axis=1), axis=1)
        if np.any(measure_norms > bound):
            issues.append(f"measure norm {measure_norms.max()!r} exceeds sqrt(d)")

        kernel = self.transitions[:, self.action_mask, :]
        row_sums = kernel.sum(axis=-1)
        if np.any(np.abs(row_sums - 1.0) > SPEC_TOLERANCE):
            worst = float(np.max(np.abs(row_sums - 1.0)))
            issues.append(f"transition rows do not sum to 1 (worst deviation {worst:.3e})")
        if np.any(kernel < -SPEC_TOLERANCE) or np.any(kernel > 1.0 + SPEC_TOLERANCE):
            issues.append("transition probabilities outside [0, 1]")
        rewards = self.rewards[:, self.action_mask]
        if np.any(rewards < -SPEC_TOLERANCE) or np.any(rewards > 1.0 + SPEC_TOLERANCE):
            issues.append("rewards outside [0, 1]")
        return issues

    def validate(self) -> "LinearMdpSpec":
        issues = self.problems()
        if issues:
            raise InvalidSpecError(issues)
        return self


@dataclass(frozen=True, eq=False)
class TabularMdpSpec:
    n_states: int
    n_actions: int
    horizon: int
    transitions: np.ndarray        # (H, S, A, S)
    rewards: np.ndarray            # (H, S, A)
    initial_state: int = 0

    def __post_init__(self):
        for name in ("transitions", "rewards"):
            arr = np.array(getattr(self, name), dtype=float)
            arr.setflags(write=False)
            object.__setattr__(self, name, arr)

    def problems(self) -> List[str]:
        S, A, H = self.n_states, self.n_actions, self.horizon
        if min(S, A, H) < 1:
            return [f"S, A and H must be >= 1 (got S={S}, A={A}, H={H})"]
        issues: List[str] = []
        if self.transitions.shape != (H, S, A, S):
            return [f"transitions shape {self.transitions.shape}, expected {(H, S, A, S)}"]
        if self.rewards.shape != (H, S, A):
            return [f"rewards shape {self.rewards.shape}, expected {(H, S, A)}"]
        if not 0 <= self.initial_state < S:
            issues.append(f"initial_state {self.initial_state} outside [0, {S})")
        if np.any(np.abs(self.transitions.sum(axis=-1) - 1.0) > SPEC_TOLERANCE):
            issues.append("transition rows do not sum to 1")
        if np.any(self.transitions < 0.0):
            issues.append("negative transition probability")
        if np.any(self.rewards < 0.0) or np.any(self.rewards > 1.0):
            issues.append("rewards outside [0, 1]")
        return issues

    def validate(self) -> "TabularMdpSpec":
        issues = self.problems()
        if issues:
            raise InvalidSpecError(issues)
        return self


@dataclass
class EpisodeTrajectory:
    """One episode: H+1 states, H actions, rewards and features"""
    states: List[int]
    actions: List[int]
    rewards: List[float]
    features: List[np.ndarray]

    @property
    def horizon(self) -> int:
        return len(self.actions)

    @property
    def total_reward(self) -> float:
        return float(sum(self.rewards))

    def check(self, horizon: int) -> None:
        if len(self.states) != horizon + 1 or len(self.actions) != horizon:
            raise InvalidSpecError(f"trajectory lengths inconsistent with H={horizon}")
        if len(self.rewards) != horizon or len(self.features) != horizon:
            raise InvalidSpecError(f"trajectory lengths inconsistent with H={horizon}")
        if any(r < -SPEC_TOLERANCE or r > 1.0 + SPEC_TOLERANCE for r in self.rewards):
            raise InvalidSpecError("trajectory reward outside [0, 1]")


@dataclass
class ValueTables:
    """
    V has shape (H+1, S) with V[H] == 0; Q has shape (H, S, A_max) with NaN
    at infeasible actions.
    """
    V: np.ndarray
    Q: np.ndarray

    @property
    def horizon(self) -> int:
        return int(self.Q.shape[0])

    def value(self, x: int, h: int = 0) -> float:
        return float(self.V[h, x])
