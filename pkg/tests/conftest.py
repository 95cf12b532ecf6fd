"""
Pytest fixtures shared across the low-switching LSVI test suite.
"""

import numpy as np
import pytest

from app.models.mdp import LinearMdpSpec, TabularMdpSpec
from app.models.schemas import AgentConfig, HardInstanceParams
from app.services.mdp import embed_tabular, random_tabular


def make_one_state_spec(reward: float = 0.6, horizon: int = 1) -> LinearMdpSpec:
    """Single state, single action, d = 1, φ = 1"""
    return LinearMdpSpec(
        d=1,
        horizon=horizon,
        n_states=1,
        n_actions=np.array([1]),
        features=np.ones((1, 1, 1)),
        measures=np.ones((horizon, 1, 1)),
        reward_vecs=np.full((horizon, 1), reward),
    ).validate()


def make_chain(S: int = 3, A: int = 2, H: int = 4, reward: float = 1.0) -> TabularMdpSpec:
    """Deterministic cycle x -> x+1 for every action with constant reward"""
    transitions = np.zeros((H, S, A, S))
    for s in range(S):
        transitions[:, s, :, (s + 1) % S] = 1.0
    rewards = np.full((H, S, A), reward)
    return TabularMdpSpec(S, A, H, transitions, rewards).validate()


@pytest.fixture
def one_state_spec():
    """d = 1 spec with reward 0.6"""
    return make_one_state_spec()


@pytest.fixture
def tiny_tabular():
    """Random 2-state, 2-action, horizon-2 tabular MDP"""
    return random_tabular(2, 2, 2, 1.0, seed=0)


@pytest.fixture
def tiny_linear(tiny_tabular):
    """Canonical embedding of tiny_tabular (d = 4)"""
    return embed_tabular(tiny_tabular)


@pytest.fixture
def small_linear():
    """Random 3-state, 2-action, horizon-3 tabular MDP embedded with d = 6"""
    return embed_tabular(random_tabular(3, 2, 3, 1.0, seed=3))


@pytest.fixture
def lock_params():
    """Combination lock with d0 = 4, H0 = 2 and a fixed two-step lock"""
    return HardInstanceParams(d0=4, H0=2, h_star=2, correct_actions=[1, 3])


@pytest.fixture
def agent_config():
    """Factory for agent configs with a planned episode count"""
    def build(K: int = 50, **overrides) -> AgentConfig:
        return AgentConfig(K=K, **overrides)
    return build


@pytest.fixture
def smoke_config_payload(tmp_path):
    """Minimal experiment config writing into a temporary directory"""
    return {
        "config_version": 1,
        "environment": {"kind": "tabular_random", "S": 2, "A": 2, "H": 2, "sparsity": 1.0},
        "K_schedule": [10],
        "seeds": [0],
        "output_dir": str(tmp_path / "out"),
    }
