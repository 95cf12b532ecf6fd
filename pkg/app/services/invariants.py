"""
Runtime invariant guard.
Counts checks and violations per named invariant and trips once the
violation budget of a hard invariant is exceeded.

States:
- ARMED: checks pass through, violations are counted
- TRIPPED: budget exceeded, the run is aborted with InvariantViolationError
"""

import logging
from typing import Dict, Optional

from app.errors import InvariantViolationError

logger = logging.getLogger(__name__)


class InvariantMonitor:
    """
    Invariant guard for one experiment run.

    Args:
        max_violations: Violations tolerated per hard invariant before tripping
        soft: Names of invariants that are counted but never trip
    """

    def __init__(self, max_violations: int = 0, soft: Optional[set] = None):
        self.max_violations = max_violations
        self.soft = set(soft or ())
        self.state = "ARMED"
        self.checks: Dict[str, int] = {}
        self.violations: Dict[str, int] = {}
        self.worst_slack: Dict[str, float] = {}
        self.last_violation: Optional[str] = None

    def check(self, name: str, ok: bool, slack: float = 0.0, detail: str = "") -> bool:
        """
        Record one evaluation of an invariant.

        Args:
            name: Invariant name
            ok: Whether the invariant held
            slack: Signed margin (negative when violated)
            detail: Diagnostic text used in logs and the raised error

        Raises:
            InvariantViolationError: If a hard invariant exceeds its budget
        """
        self.checks[name] = self.checks.get(name, 0) + 1
        if name not in self.worst_slack or slack < self.worst_slack[name]:
            self.worst_slack[name] = slack
        if ok:
            return True

        self.violations[name] = self.violations.get(name, 0) + 1
        self.last_violation = f"{name}: {detail}" if detail else name
        if name in self.soft:
            logger.debug(f"Soft invariant {name} violated ({self.violations[name]}x): {detail}")
            return False

        logger.warning(
            f"⚠️ Invariant {name} violated {self.violations[name]}/{self.max_violations + 1}: {detail}"
        )
        if self.violations[name] > self.max_violations:
            self._trip()
            raise InvariantViolationError(self.last_violation)
        return False

    def _trip(self) -> None:
        self.state = "TRIPPED"
        logger.error(f"🔴 Invariant monitor TRIPPED: {self.last_violation}")

    def violation_count(self, name: str) -> int:
        return self.violations.get(name, 0)

    def get_state(self) -> dict:
        """Snapshot of counters for run summaries"""
        return {
            "state": self.state,
            "checks": dict(self.checks),
            "violations": dict(self.violations),
            "worst_slack": dict(self.worst_slack),
            "last_violation": self.last_violation,
        }
