"""
Run records produced by the agent and consumed by the metrics harness.
"""

from dataclasses import dataclass, field
from typing import Any, Dict, List, Optional

import numpy as np

from app.errors import InvariantViolationError
from app.models.mdp import EpisodeTrajectory

TRACE_TOLERANCE = 1e-9


@dataclass
class EpisodeRecord:
    episode: int                   # 1-based
    ret: float
    regret_increment: float
    cumulative_regret: float
    switched: bool
    snapshot_id: int
    logdets: List[float]


@dataclass
class RunTrace:
    records: List[EpisodeRecord]
    config: Dict[str, Any]
    seed: int
    horizon: int
    d: int
    wall_time: float = 0.0
    policies: Dict[int, np.ndarray] = field(default_factory=dict)
    trajectories: List[EpisodeTrajectory] = field(default_factory=list)
    optimism_violations: int = 0
    monitor: Dict[str, Any] = field(default_factory=dict)

    @property
    def episodes(self) -> int:
        return len(self.records)

    @property
    def snapshot_ids(self) -> List[int]:
        return [r.snapshot_id for r in self.records]

    @property
    def cumulative_regret(self) -> np.ndarray:
        return np.array([r.cumulative_regret for r in self.records])

    @property
    def total_regret(self) -> float:
        return self.records[-1].cumulative_regret if self.records else 0.0

    def policy_sequence(self) -> List[np.ndarray]:
        """Per-episode deployed (H, S) action tables"""
        return [self.policies[r.snapshot_id] for r in self.records]

    def check(self) -> "RunTrace":
        """Validate the RunTrace invariants before the trace is written"""
        previous: Optional[EpisodeRecord] = None
        for record in self.records:
            if len(record.logdets) != self.horizon:
                raise InvariantViolationError(f"episode {record.episode}: {len(record.logdets)} logdets for H={self.horizon}")
            if previous is None:
                if record.switched:
                    raise InvariantViolationError("the initial deployment is not a switch")
            else:
                if record.cumulative_regret < previous.cumulative_regret - TRACE_TOLERANCE:
                    raise InvariantViolationError(f"cumulative regret decreased at episode {record.episode}")
                changed = record.snapshot_id != previous.snapshot_id
                if changed != record.switched:
                    raise InvariantViolationError(f"switch flag inconsistent at episode {record.episode}")
                if any(cur < prev - TRACE_TOLERANCE for cur, prev in zip(record.logdets, previous.logdets)):
                    raise InvariantViolationError(f"log-det decreased at episode {record.episode}")
            if record.regret_increment < 0.0:
                raise InvariantViolationError(f"negative regret increment at episode {record.episode}")
            previous = record
        return self


@dataclass
class SwitchReport:
    global_switches: int
    behavioral_switches: int
    local_switches: Optional[int]          # None when the state space exceeds the cap
    indicators: List[bool]
    bound_ratio: Optional[float]           # global / (d·H·log K), None for K < 2

    def to_dict(self) -> Dict[str, Any]:
        return {
            "global_switches": self.global_switches,
            "behavioral_switches": self.behavioral_switches,
            "local_switches": "n/a" if self.local_switches is None else self.local_switches,
            "bound_ratio": self.bound_ratio,
        }


@dataclass
class FitSummary:
    kind: str                     # "switch": N = a + b·log K; "regret": log R = log c + slope·log K
    intercept: float
    slope: float
    residual: float
    n_points: int

    def to_dict(self) -> Dict[str, Any]:
        return {
            "kind": self.kind,
            "intercept": self.intercept,
            "slope": self.slope,
            "residual": self.residual,
            "n_points": self.n_points,
        }
