"""
Tests for the low-switching LSVI-UCB agent: Q estimation, greedy action
selection, the switching rule and full runs.
"""

import math

import numpy as np
import pytest

from app.errors import DimensionMismatchError, InvalidParameterError, NumericalFaultError
from app.models.mdp import EpisodeTrajectory
from app.models.schemas import AgentConfig
from app.services.agent import (
    PolicySnapshot,
    QEstimate,
    act,
    estimate_q,
    maybe_switch,
    run_agent,
)
from app.services.covariance import LOG_TWO, new_covariance
from app.services.invariants import InvariantMonitor
from app.services.mdp import embed_tabular, optimal_values, policy_value, random_tabular
from tests.conftest import make_one_state_spec


def one_episode_history(reward: float = 0.6):
    traj = EpisodeTrajectory(states=[0, 0], actions=[0], rewards=[reward], features=[np.array([1.0])])
    cov = new_covariance(1, 1.0)
    cov.update(np.array([1.0]))
    return [traj], [cov]


def snapshot_from_table(q_values: np.ndarray, snapshot_id: int = 0) -> PolicySnapshot:
    H = q_values.shape[0]
    d = 1
    q = QEstimate(
        weights=np.zeros((H, d)),
        inverses=np.stack([np.eye(d)] * H),
        beta=1.0,
        horizon=H,
        q_values=q_values,
    )
    return PolicySnapshot(q=q, origin_episode=1, snapshot_id=snapshot_id)


class TestEstimateQ:
    """Backward ridge-regression pass"""

    def test_empty_history_clips_to_horizon(self):
        """With no data and the default β ≥ H, Q̃ ≡ H"""
        spec = embed_tabular(random_tabular(2, 2, 3, 1.0, seed=0))
        config = AgentConfig(K=100)
        beta = config.resolve_beta(4, 3)
        assert beta == pytest.approx(12 * math.sqrt(math.log(2 * 4 * 100 * 3 / 0.05)))
        assert beta >= 3
        cov = [new_covariance(4, 1.0) for _ in range(3)]
        q = estimate_q([], config, cov, spec)
        assert np.all(q.weights == 0.0)
        assert np.all(q.q_values == 3.0)

    def test_one_dimensional_ridge(self, one_state_spec):
        """(λ + 1)·w = r, value = r/2 + β/√2 below the cap"""
        history, cov = one_episode_history(0.6)
        q = estimate_q(history, AgentConfig(K=10, beta=0.5), cov, one_state_spec)
        assert q.weights[0, 0] == pytest.approx(0.3)
        assert q.q_values[0, 0, 0] == pytest.approx(0.3 + 0.5 / math.sqrt(2.0))

    def test_one_dimensional_ridge_capped(self, one_state_spec):
        """A large bonus is capped at H = 1"""
        history, cov = one_episode_history(0.6)
        q = estimate_q(history, AgentConfig(K=10), cov, one_state_spec)
        assert q.q_values[0, 0, 0] == 1.0

    def test_values_match_table(self, small_linear):
        """QEstimate.values agrees with the materialized table"""
        cov = [new_covariance(6, 1.0) for _ in range(3)]
        q = estimate_q([], AgentConfig(K=10, beta=0.7), cov, small_linear)
        values = q.values(1, small_linear.features.reshape(-1, 6))
        assert np.allclose(values, q.q_values[1].reshape(-1))

    def test_count_mismatch(self, one_state_spec):
        """Covariances must reflect exactly the history"""
        history, _ = one_episode_history()
        with pytest.raises(DimensionMismatchError):
            estimate_q(history, AgentConfig(K=10), [new_covariance(1, 1.0)], one_state_spec)

    def test_level_count_mismatch(self, tiny_linear):
        """One covariance per level is required"""
        with pytest.raises(DimensionMismatchError):
            estimate_q([], AgentConfig(K=10), [new_covariance(4, 1.0)], tiny_linear)

    def test_residual_fault(self, one_state_spec):
        """A corrupted inverse fails the residual check loudly"""
        history, cov = one_episode_history()
        cov[0].inverse = np.array([[5.0]])
        with pytest.raises(NumericalFaultError):
            estimate_q(history, AgentConfig(K=10), cov, one_state_spec)

    def test_strict_mode_disables_floor(self, one_state_spec):
        """strict_paper turns the floor at 0 off"""
        history, cov = one_episode_history()
        assert estimate_q(history, AgentConfig(K=10), cov, one_state_spec).floor
        assert not estimate_q(history, AgentConfig(K=10, strict_paper=True), cov, one_state_spec).floor


class TestAct:
    """Greedy selection on a snapshot"""

    def test_ties_pick_lowest_action(self):
        """Equal values choose action 0"""
        snap = snapshot_from_table(np.full((1, 1, 3), 2.0))
        assert act(snap, 0, 0, [0, 1, 2]) == 0

    def test_dominant_action(self):
        """The highest value wins"""
        snap = snapshot_from_table(np.array([[[0.2, 0.9]]]))
        assert act(snap, 0, 0, [0, 1]) == 1

    def test_feasible_subset(self):
        """Only feasible actions are considered"""
        snap = snapshot_from_table(np.array([[[0.2, 0.9, 0.5]]]))
        assert act(snap, 0, 0, [2, 0]) == 2

    def test_deterministic(self):
        """Repeated calls return the same action"""
        snap = snapshot_from_table(np.array([[[0.4, 0.4, 0.1]]]))
        assert {act(snap, 0, 0, [0, 1, 2]) for _ in range(10)} == {0}

    def test_no_feasible_actions(self):
        """An empty action set is rejected"""
        with pytest.raises(InvalidParameterError):
            act(snapshot_from_table(np.zeros((1, 1, 1))), 0, 0, [])

    def test_fresh_snapshot_equal_norm_features(self, tiny_linear):
        """Zero weights and equal-norm features tie at action 0"""
        cov = [new_covariance(4, 1.0) for _ in range(2)]
        q = estimate_q([], AgentConfig(K=5, beta=0.1), cov, tiny_linear)
        snap = PolicySnapshot(q=q, origin_episode=1, snapshot_id=0)
        assert act(snap, 1, 0, tiny_linear.feasible_actions(1)) == 0


class TestSnapshots:
    """Snapshot identity and the switching rule"""

    def test_equality_by_id(self):
        """Snapshots compare by snapshot_id only"""
        a = snapshot_from_table(np.zeros((1, 1, 1)), snapshot_id=3)
        b = snapshot_from_table(np.ones((1, 1, 1)), snapshot_id=3)
        c = snapshot_from_table(np.zeros((1, 1, 1)), snapshot_id=4)
        assert a == b
        assert a != c
        assert len({a, b, c}) == 2

    def test_to_dict(self):
        """Snapshot dump carries weights, β and provenance"""
        dump = snapshot_from_table(np.zeros((2, 1, 1)), snapshot_id=2).to_dict()
        assert dump["snapshot_id"] == 2
        assert dump["origin_episode"] == 1
        assert dump["weights"] == [[0.0], [0.0]]

    def test_first_deployment(self, one_state_spec):
        """The first call deploys snapshot 0"""
        cov = [new_covariance(1, 1.0)]
        switched, snap, levels = maybe_switch(
            cov, None, lambda: estimate_q([], AgentConfig(K=5), cov, one_state_spec), episode=1
        )
        assert switched
        assert snap.snapshot_id == 0
        assert levels == []
        assert snap.ref_covariances[0].frozen

    def test_no_new_data_keeps_snapshot(self, one_state_spec):
        """With no data since the reference nothing changes"""
        cov = [new_covariance(1, 1.0)]
        build = lambda: estimate_q([], AgentConfig(K=5), cov, one_state_spec)  # noqa: E731
        _, snap, _ = maybe_switch(cov, None, build, episode=1)
        switched, again, levels = maybe_switch(cov, snap, build, episode=2)
        assert not switched
        assert again is snap
        assert levels == []

    def test_always_switch_mode(self, one_state_spec):
        """always_switch redeploys even without new data"""
        cov = [new_covariance(1, 1.0)]
        build = lambda: estimate_q([], AgentConfig(K=5), cov, one_state_spec)  # noqa: E731
        _, snap, _ = maybe_switch(cov, None, build, episode=1)
        switched, fresh, _ = maybe_switch(cov, snap, build, episode=2, mode="always_switch")
        assert switched
        assert fresh.snapshot_id == 1


class TestRunAgent:
    """Full episodes"""

    def test_single_episode(self, tiny_linear, agent_config):
        """K = 1 records one episode and no switch"""
        trace = run_agent(tiny_linear, agent_config(K=1), seed=0)
        assert trace.episodes == 1
        assert not trace.records[0].switched
        optimal = optimal_values(tiny_linear).value(0)
        table = trace.policies[0]
        expected = optimal - policy_value(tiny_linear, table).value(0)
        assert trace.records[0].regret_increment == pytest.approx(max(expected, 0.0))

    def test_one_dimensional_switch_schedule(self):
        """d = 1 stream switches when the information doubles: episodes 3 and 7"""
        spec = make_one_state_spec(horizon=1)
        trace = run_agent(spec, AgentConfig(K=10), seed=0)
        switched = [r.episode for r in trace.records if r.switched]
        assert switched == [3, 7]
        assert trace.snapshot_ids == [0, 0, 1, 1, 1, 1, 2, 2, 2, 2]

    def test_requires_planned_episodes(self, tiny_linear):
        """A config without K cannot run"""
        with pytest.raises(InvalidParameterError):
            run_agent(tiny_linear, AgentConfig(), seed=0)

    def test_reproducible(self, small_linear, agent_config):
        """Same spec, config and seed give identical traces"""
        config = agent_config(K=60, c_beta=0.05)
        a = run_agent(small_linear, config, seed=4)
        b = run_agent(small_linear, config, seed=4)
        assert [vars(r) for r in a.records] == [vars(r) for r in b.records]

    def test_trace_invariants(self, small_linear, agent_config):
        """Every trace passes its own consistency checks"""
        trace = run_agent(small_linear, agent_config(K=120, c_beta=0.05), seed=1)
        trace.check()
        assert np.all(np.diff(trace.cumulative_regret) >= 0.0)
        assert trace.config["beta_resolved"] > 0

    def test_domination_checked_every_step(self, small_linear, agent_config):
        """The delayed-update bound is evaluated at every executed step without violation"""
        monitor = InvariantMonitor(soft={"optimism"})
        run_agent(small_linear, agent_config(K=80, c_beta=0.05), seed=2, monitor=monitor)
        state = monitor.get_state()
        assert state["checks"]["delayed_domination"] == 80 * 3
        assert "delayed_domination" not in state["violations"]
        assert state["state"] == "ARMED"

    def test_switch_events_gain_log_two(self, small_linear, agent_config):
        """Each switch comes with a log-det gain of at least log 2 at a triggering level"""
        trace = run_agent(small_linear, agent_config(K=200, c_beta=0.05), seed=3)
        reference = previous = [0.0] * 3
        for record in trace.records:
            if record.switched:
                gain = max(cur - ref for cur, ref in zip(previous, reference))
                assert gain >= LOG_TWO - 1e-8
                reference = previous
            previous = record.logdets
        assert trace.monitor["violations"].get("det_growth", 0) == 0

    def test_switch_potential(self, small_linear, agent_config):
        """Switches never exceed Σ_h log det Λ_h / log 2"""
        trace = run_agent(small_linear, agent_config(K=200, c_beta=0.05), seed=5)
        switches = sum(r.switched for r in trace.records)
        assert switches <= sum(trace.records[-1].logdets) / LOG_TWO + 1e-6

    def test_optimism_with_default_beta(self, agent_config):
        """Auto β keeps every fresh Q̃ above Q*"""
        spec = embed_tabular(random_tabular(3, 2, 3, 1.0, seed=17))
        trace = run_agent(spec, agent_config(K=50), seed=0)
        assert trace.optimism_violations == 0
        assert trace.monitor["checks"]["optimism"] >= 1

    def test_switch_bound_on_tiny_instance(self, tiny_linear, agent_config):
        """Global switches stay below 4·d·H·log K"""
        K = 2000
        trace = run_agent(tiny_linear, agent_config(K=K, c_beta=0.05), seed=0)
        switches = sum(r.switched for r in trace.records)
        assert switches <= 4 * 4 * 2 * math.log(K)

    def test_always_switch_mode_switches_every_episode(self, tiny_linear, agent_config):
        """The baseline redeploys at every episode after the first"""
        trace = run_agent(tiny_linear, agent_config(K=30, mode="always_switch"), seed=0)
        assert sum(r.switched for r in trace.records) == 29

    def test_equivalence_mode(self, small_linear, agent_config):
        """Replaying each deployed snapshot from its history prefix reproduces its weights"""
        monitor = InvariantMonitor(soft={"optimism"})
        run_agent(small_linear, agent_config(K=60, c_beta=0.05, recompute_every_episode=True),
                  seed=6, monitor=monitor)
        state = monitor.get_state()
        assert state["checks"]["snapshot_equivalence"] >= 1
        assert "snapshot_equivalence" not in state["violations"]

    def test_fresh_policy_agreement_counted(self, small_linear, agent_config):
        """Equivalence mode compares a fresh greedy policy with the deployed one on every kept episode"""
        monitor = InvariantMonitor(soft={"optimism"})
        trace = run_agent(small_linear, agent_config(K=60, c_beta=0.05, recompute_every_episode=True),
                          seed=6, monitor=monitor)
        kept = sum(not r.switched for r in trace.records[1:])
        state = monitor.get_state()
        assert state["checks"].get("fresh_agreement", 0) == kept
        assert state["violations"].get("fresh_agreement", 0) <= kept
        assert state["state"] == "ARMED"
        assert "fresh_agreement" in monitor.soft

    def test_fresh_policy_not_checked_by_default(self, small_linear, agent_config):
        """Without equivalence mode no fresh estimate is computed"""
        monitor = InvariantMonitor(soft={"optimism"})
        run_agent(small_linear, agent_config(K=30, c_beta=0.05), seed=6, monitor=monitor)
        assert "fresh_agreement" not in monitor.get_state()["checks"]

    def test_initial_state_schedule(self, small_linear, agent_config):
        """The schedule hook chooses each episode's starting state"""
        trace = run_agent(small_linear, agent_config(K=9), seed=0,
                          initial_state_schedule=lambda k: k % 3)
        assert [t.states[0] for t in trace.trajectories] == [k % 3 for k in range(1, 10)]
