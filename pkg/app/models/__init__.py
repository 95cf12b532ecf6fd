"""
Data models: MDP descriptions, run traces and config schemas
"""

from .mdp import EpisodeTrajectory, LinearMdpSpec, TabularMdpSpec, ValueTables
from .schemas import AgentConfig, ExperimentConfig, HardInstanceParams
from .trace import EpisodeRecord, FitSummary, RunTrace, SwitchReport

__all__ = [
    "AgentConfig",
    "EpisodeRecord",
    "EpisodeTrajectory",
    "ExperimentConfig",
    "FitSummary",
    "HardInstanceParams",
    "LinearMdpSpec",
    "RunTrace",
    "SwitchReport",
    "TabularMdpSpec",
    "ValueTables",
]
