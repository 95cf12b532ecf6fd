"""
Tests for the runtime invariant monitor.
"""

import pytest

from app.errors import InvariantViolationError
from app.services.invariants import InvariantMonitor


class TestInvariantMonitor:
    """Counting and tripping"""

    def test_passing_checks(self):
        """Passing checks are counted and keep the monitor armed"""
        monitor = InvariantMonitor()
        assert monitor.check("domination", True, slack=0.5)
        assert monitor.check("domination", True, slack=0.1)
        state = monitor.get_state()
        assert state["state"] == "ARMED"
        assert state["checks"]["domination"] == 2
        assert state["worst_slack"]["domination"] == 0.1

    def test_hard_invariant_trips(self):
        """A hard violation beyond the budget raises"""
        monitor = InvariantMonitor()
        with pytest.raises(InvariantViolationError) as exc:
            monitor.check("det_growth", False, slack=-0.2, detail="gain 0.49")
        assert "det_growth: gain 0.49" in str(exc.value)
        assert monitor.state == "TRIPPED"

    def test_violation_budget(self):
        """Violations up to the budget are tolerated"""
        monitor = InvariantMonitor(max_violations=2)
        assert not monitor.check("potential", False)
        assert not monitor.check("potential", False)
        with pytest.raises(InvariantViolationError):
            monitor.check("potential", False)

    def test_soft_invariant(self):
        """Soft invariants count violations but never trip"""
        monitor = InvariantMonitor(soft={"optimism"})
        for _ in range(5):
            assert not monitor.check("optimism", False, slack=-1e-3)
        assert monitor.violation_count("optimism") == 5
        assert monitor.state == "ARMED"
