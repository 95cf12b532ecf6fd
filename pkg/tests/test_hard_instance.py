"""
Tests for the combination-lock instance and the exploration-counting check.
"""

import numpy as np
import pytest
from pydantic import ValidationError

from app.errors import TraceMismatchError
from app.models.mdp import EpisodeTrajectory
from app.models.schemas import HardInstanceParams
from app.services.hard_instance import (
    RECONCILIATIONS,
    U,
    V,
    W,
    build_hard_instance,
    count_distinct_prefixes,
    lock_policy_table,
    lock_state,
    optimal_lock_value,
    wrong_lock_states,
)
from app.services.mdp import optimal_values, policy_value, step


def rollout(spec, table, rng):
    """Play one episode of a fixed (H, S) action table"""
    x = spec.initial_state
    states, actions, rewards, features = [x], [], [], []
    for h in range(spec.horizon):
        a = int(table[h, x])
        r, nxt = step(spec, h, x, a, rng)
        states.append(nxt)
        actions.append(a)
        rewards.append(r)
        features.append(spec.features[x, a])
        x = nxt
    return EpisodeTrajectory(states=states, actions=actions, rewards=rewards, features=features)


class TestConstruction:
    """Shape, dynamics and value of the lock"""

    def test_dimensions(self, lock_params):
        """d = 4·d0, H = 2·H0 and d0 actions at u"""
        spec = build_hard_instance(lock_params)
        assert spec.d == 16
        assert spec.horizon == 4
        assert spec.n_states == 3 + 2 * 4
        assert spec.n_actions[U] == 4
        assert spec.n_actions[V] == 1

    @pytest.mark.parametrize("d0", [2, 4, 8])
    @pytest.mark.parametrize("H0", [1, 2, 4])
    def test_optimal_value(self, d0, H0):
        """V_1*(u) = H − 2·h_star for every lock length"""
        for h_star in range(1, H0 + 1):
            correct = [(3 * m + 1) % d0 for m in range(h_star)]
            spec = build_hard_instance(
                HardInstanceParams(d0=d0, H0=H0, h_star=h_star, correct_actions=correct)
            )
            assert optimal_values(spec).value(U) == pytest.approx(2 * H0 - 2 * h_star, abs=1e-12)
            assert optimal_lock_value(spec) == 2 * H0 - 2 * h_star

    def test_correct_action_reaches_lock_state(self, lock_params):
        """At u, action a_{i_1} moves to s_{1, i_1}"""
        spec = build_hard_instance(lock_params)
        _, nxt = step(spec, 0, U, 1, np.random.default_rng(0))
        assert nxt == lock_state(4, 0, 1)

    def test_wrong_first_action_absorbs_in_trap(self):
        """A wrong first choice returns 0 and ends at w"""
        spec = build_hard_instance(HardInstanceParams(d0=4, H0=3, h_star=1, correct_actions=[2]))
        traj = rollout(spec, lock_policy_table(spec, [0, 0, 0]), np.random.default_rng(0))
        assert traj.total_reward == 0.0
        assert traj.states[-1] == W
        assert traj.states[2:] == [W] * (len(traj.states) - 2)

    def test_correct_path_pays_after_lock(self):
        """Opening a one-step lock earns H − 2 reward at v"""
        spec = build_hard_instance(HardInstanceParams(d0=4, H0=3, h_star=1, correct_actions=[2]))
        traj = rollout(spec, lock_policy_table(spec, [2, 0, 0]), np.random.default_rng(0))
        assert traj.total_reward == pytest.approx(4.0)
        assert traj.states[2:] == [V] * 5

    def test_always_wrong_policy_value(self, lock_params):
        """A policy that never opens the lock has value 0"""
        spec = build_hard_instance(lock_params)
        assert policy_value(spec, lock_policy_table(spec, [0, 0])).value(U) == 0.0

    def test_sinks_are_absorbing(self, lock_params):
        """v and w transition to themselves at every level"""
        spec = build_hard_instance(lock_params)
        assert np.all(spec.transitions[:, V, 0, V] == 1.0)
        assert np.all(spec.transitions[:, W, 0, W] == 1.0)

    def test_reward_only_at_v(self, lock_params):
        """Reward is 1 at v and 0 everywhere else"""
        spec = build_hard_instance(lock_params)
        rewards = spec.rewards.copy()
        assert np.all(rewards[:, V, 0] == 1.0)
        rewards[:, V, 0] = 0.0
        assert np.all(rewards == 0.0)

    def test_episode_returns_set(self):
        """Every policy returns 0 or H − 2·h for some lock length h"""
        params = HardInstanceParams(d0=2, H0=3, h_star=2, correct_actions=[1, 0])
        spec = build_hard_instance(params)
        rng = np.random.default_rng(0)
        allowed = {0.0} | {float(6 - 2 * h) for h in range(1, 4)}
        for choices in np.ndindex(2, 2, 2):
            traj = rollout(spec, lock_policy_table(spec, list(choices)), rng)
            assert traj.total_reward in allowed

    def test_invariant_sweep(self):
        """Sampled instances pass every linear MDP invariant"""
        for d0 in (2, 4, 8):
            for seed in range(50):
                spec = build_hard_instance(HardInstanceParams(d0=d0, H0=3, seed=seed))
                assert spec.problems() == []

    def test_metadata(self, lock_params):
        """Lock parameters and reconciliations are recorded"""
        meta = build_hard_instance(lock_params).metadata["hard_instance_meta"]
        assert meta["h_star"] == 2
        assert meta["correct_actions"] == [1, 3]
        assert meta["j_star"] == 1
        assert meta["reconciliations"] == RECONCILIATIONS

    def test_sampling_is_seeded(self):
        """Sampled h_star and correct actions depend only on the seed"""
        a = HardInstanceParams(d0=4, H0=4, seed=12).resolve()
        b = HardInstanceParams(d0=4, H0=4, seed=12).resolve()
        assert a == b
        h_star, correct = a
        assert 1 <= h_star <= 4
        assert len(correct) == h_star


class TestParams:
    """HardInstanceParams validation"""

    @pytest.mark.parametrize("payload", [
        {"d0": 1, "H0": 2},
        {"d0": 4, "H0": 2, "h_star": 3},
        {"d0": 4, "H0": 2, "h_star": 2, "correct_actions": [1]},
        {"d0": 4, "H0": 2, "h_star": 1, "correct_actions": [4]},
        {"d0": 4, "H0": 2, "correct_actions": [1, 2]},
        {"d0": 4, "H0": 2, "j_star": 2},
    ])
    def test_invalid(self, payload):
        """Inconsistent lock parameters are rejected"""
        with pytest.raises(ValidationError):
            HardInstanceParams(**payload)


class TestExplorationCounting:
    """Distinct wrong lock states versus policy switches"""

    def test_all_correct_traces(self, lock_params):
        """Traces on the correct path visit no wrong state"""
        spec = build_hard_instance(lock_params)
        rng = np.random.default_rng(0)
        traces = [rollout(spec, lock_policy_table(spec, [1, 3]), rng) for _ in range(5)]
        assert count_distinct_prefixes(traces, spec) == 0

    def test_fixed_wrong_policy(self, lock_params):
        """One wrong policy replayed many times visits one wrong state"""
        spec = build_hard_instance(lock_params)
        rng = np.random.default_rng(0)
        traces = [rollout(spec, lock_policy_table(spec, [1, 0]), rng) for _ in range(20)]
        assert count_distinct_prefixes(traces, spec) == 1

    def test_scripted_agents(self):
        """Scripted agents with n switches visit at most n + 1 wrong states"""
        rng = np.random.default_rng(42)
        for scenario in range(50):
            d0, H0 = (4, 8)[scenario % 2], (2, 4)[(scenario // 2) % 2]
            h_star = int(rng.integers(1, H0 + 1))
            correct = [int(i) for i in rng.integers(0, d0, size=h_star)]
            spec = build_hard_instance(
                HardInstanceParams(d0=d0, H0=H0, h_star=h_star, correct_actions=correct)
            )
            choices = [int(i) for i in rng.integers(0, d0, size=H0)]
            traces, switches = [], 0
            for _ in range(30):
                if rng.random() < 0.3:
                    choices = [int(i) for i in rng.integers(0, d0, size=H0)]
                    switches += 1
                traces.append(rollout(spec, lock_policy_table(spec, choices), rng))
            assert count_distinct_prefixes(traces, spec) <= switches + 1

    def test_wrong_states(self, lock_params):
        """Wrong lock states exclude exactly the correct path"""
        spec = build_hard_instance(lock_params)
        wrong = wrong_lock_states(spec)
        assert lock_state(4, 0, 1) not in wrong
        assert lock_state(4, 1, 3) not in wrong
        assert len(wrong) == 2 * 4 - 2

    def test_mismatched_traces(self, lock_params):
        """Traces from another instance are rejected"""
        spec = build_hard_instance(lock_params)
        alien = EpisodeTrajectory(states=[0, 99], actions=[0], rewards=[0.0], features=[np.zeros(16)])
        with pytest.raises(TraceMismatchError):
            count_distinct_prefixes([alien], spec)

    def test_lock_policy_length(self, lock_params):
        """Lock policies need one choice per lock level"""
        spec = build_hard_instance(lock_params)
        with pytest.raises(TraceMismatchError):
            lock_policy_table(spec, [1])
